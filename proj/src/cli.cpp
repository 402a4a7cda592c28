// Copyright 2026 The iqh Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iqh/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "iqh/corpus.hpp"
#include "iqh/deteval.hpp"
#include "iqh/error.hpp"
#include "iqh/experiment.hpp"
#include "iqh/modifiers.hpp"
#include "iqh/qmetrics.hpp"
#include "iqh/runstore.hpp"
#include "iqh/sanity.hpp"
#include "iqh/stats.hpp"

namespace iqh {

namespace {

struct Common {
  std::string out;
  bool quiet = false;
  bool overwrite = false;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  auto* o = cmd->add_option("--out", c.out, "Directory for machine-readable outputs");
  if (out_required) o->required();
  cmd->add_flag("--quiet", c.quiet, "Suppress the summary on stdout");
  cmd->add_flag("--overwrite", c.overwrite, "Replace existing outputs");
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

bool is_user_error(Errc code) {
  switch (code) {
    case Errc::kParse:
    case Errc::kSchema:
    case Errc::kValidation:
    case Errc::kNoImagesDir:
    case Errc::kAmbiguousAnnotations:
    case Errc::kInvalidModifierName:
    case Errc::kUnknownField:
    case Errc::kNonNumericField:
    case Errc::kDestinationExists:
    case Errc::kMissingReference:
    case Errc::kEmptyGrid:
    case Errc::kUnknownExperiment:
    case Errc::kNonNumericY:
    case Errc::kUnknownKind:
    case Errc::kDuplicateKind:
      return true;
    default:
      return false;
  }
}

// "k=v"; v is read as JSON when it parses, otherwise kept as a string.
std::pair<std::string, json> parse_param(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(Errc::kValidation, "--param expects key=value, got '" + text + "'");
  const std::string value = text.substr(eq + 1);
  json v = json::parse(value, nullptr, false);
  if (v.is_discarded() || v.is_object() || v.is_array()) v = value;
  return {text.substr(0, eq), v};
}

fs::path prepare_out(const Common& c) {
  const fs::path out(c.out);
  fs::create_directories(out);
  return out;
}

std::string fmt_value(double v) { return std::isfinite(v) ? fmt::format("{:.4f}", v) : format_double(v); }

void write_output(const fs::path& path, const json& doc, bool overwrite) {
  if (fs::exists(path) && !overwrite)
    throw Error(Errc::kDestinationExists, path.string() + " already exists (use --overwrite)");
  write_file_atomic(path, doc.dump(2));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Image quality and dataset degradation toolkit", "iqh"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "iqh 1.0.0");

  Common common;
  std::string dataset, ref, kind, metric_name, gt, pred, plan_path, experiment, x_col, sort_by, store_root,
      annotations = "output.json";
  std::vector<std::string> params, fields, columns, ys, filters;
  std::uint64_t seed = 0;
  std::optional<double> quality, bits, sigma, scale;
  std::size_t sample = 16, thumb = 128;
  std::optional<std::size_t> limit;
  bool descending = false;
  SanityFlags flags;
  bool no_dedupe = false, no_images = false, no_integrity = false, no_dims = false, no_geojson = false,
       no_repair = false;

  auto* sanity = app.add_subcommand("sanity", "Validate and clean a dataset into a new directory");
  sanity->add_option("dataset", dataset)->required()->check(CLI::ExistingDirectory);
  add_common(sanity, common, true);
  sanity->add_flag("--no-dedupe", no_dedupe);
  sanity->add_flag("--no-image-check", no_images);
  sanity->add_flag("--no-integrity", no_integrity);
  sanity->add_flag("--no-dims-fix", no_dims);
  sanity->add_flag("--no-geojson", no_geojson);
  sanity->add_flag("--no-repair", no_repair);

  auto* stats = app.add_subcommand("stats", "Summarise images and annotations");
  stats->add_option("dataset", dataset)->required()->check(CLI::ExistingDirectory);
  add_common(stats, common, true);
  stats->add_option("--fields", fields, "GeoJSON fields to summarise")->delimiter(',');
  stats->add_option("--columns", columns, "Columns of the annotation summary page")->delimiter(',');
  stats->add_option("--sample", sample, "Thumbnails in the preview page");
  stats->add_option("--thumb-size", thumb)->check(CLI::PositiveNumber);
  stats->add_option("--seed", seed);

  auto* modify = app.add_subcommand("modify", "Create a modified copy of a dataset next to it");
  modify->add_option("dataset", dataset)->required()->check(CLI::ExistingDirectory);
  add_common(modify, common, false);
  modify->add_option("--kind", kind)->required();
  modify->add_option("--quality", quality);
  modify->add_option("--bits", bits);
  modify->add_option("--sigma", sigma);
  modify->add_option("--scale", scale);
  modify->add_option("--param", params, "Extra modifier parameter key=value");
  modify->add_option("--seed", seed);

  auto* metric = app.add_subcommand("metric", "Image quality metrics over a dataset or an experiment");
  auto* metric_ds = metric->add_option("dataset", dataset)->check(CLI::ExistingDirectory);
  add_common(metric, common, false);
  metric->add_option("--name", metric_name)->required();
  metric->add_option("--ref", ref, "Reference dataset for psnr/ssim")->check(CLI::ExistingDirectory);
  metric->add_option("--param", params, "Metric parameter key=value");
  auto* metric_exp = metric->add_option("--experiment", experiment, "Apply per run of a stored experiment");
  metric->add_option("--annotations", annotations, "File in each run's artifacts");
  metric->add_option("--store", store_root);
  metric_ds->excludes(metric_exp);

  auto* eval = app.add_subcommand("eval", "COCO-style detection evaluation");
  eval->add_option("--gt", gt)->required()->check(CLI::ExistingFile);
  eval->add_option("--pred", pred)->required()->check(CLI::ExistingFile);
  add_common(eval, common, true);

  auto* run = app.add_subcommand("run", "Execute an experiment plan");
  run->add_option("--plan", plan_path)->required()->check(CLI::ExistingFile);
  run->add_option("--store", store_root);
  add_common(run, common, false);

  auto* report = app.add_subcommand("report", "Tabulate and plot stored runs");
  report->add_option("--experiment", experiment)->required();
  report->add_option("--x", x_col)->required();
  report->add_option("--y", ys)->required()->delimiter(',');
  report->add_option("--columns", columns, "Extra table columns")->delimiter(',');
  report->add_option("--filter", filters, "field<op>value, op one of = != < <= > >= ~");
  report->add_option("--sort-by", sort_by);
  report->add_flag("--descending", descending);
  report->add_option("--limit", limit);
  report->add_option("--store", store_root);
  add_common(report, common, true);

  std::vector<std::string> argv_s = args;
  argv_s.insert(argv_s.begin(), "iqh");
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  const auto previous_level = log().level();
  if (common.quiet) log().set_level(spdlog::level::err);
  struct Restore {
    spdlog::level::level_enum level;
    ~Restore() { log().set_level(level); }
  } restore{previous_level};
  std::ostream null_stream(nullptr);
  std::ostream& summary = common.quiet ? null_stream : out;
  const fs::path store_path = store_root.empty() ? RunStore::default_root() : fs::path(store_root);

  try {
    if (sanity->parsed()) {
      flags.dedupe = !no_dedupe;
      flags.image_validity = !no_images;
      flags.annotation_integrity = !no_integrity;
      flags.dims_fix = !no_dims;
      flags.geojson_clean = !no_geojson;
      flags.geometry_repair = !no_repair;
      const auto r = run_sanity(discover(dataset), common.out, SanityOptions{flags, common.overwrite, common.jobs});
      summary << fmt::format(
          "duplicates removed: {}\ninvalid images: {}\ndims fixed: {}\nannotations dropped: {}\n"
          "geometries fixed: {}\ngeometries dropped: {}\nwarnings: {}\noutput: {}\n",
          r.duplicates_removed(), r.invalid_images.size(), r.dims_fixed_count(), r.annotations_dropped.size(),
          r.geometries_fixed_count(), r.geometries_dropped_count(), r.warnings.size(), r.output_path.string());
      return kExitOk;
    }

    if (stats->parsed()) {
      const fs::path dir = prepare_out(common);
      if (fs::exists(dir / "stats.json") && !common.overwrite)
        throw Error(Errc::kDestinationExists, (dir / "stats.json").string() + " already exists (use --overwrite)");
      const auto r = compute_stats(discover(dataset), StatsOptions{fields, common.jobs});
      export_report(r, dir, ExportOptions{sample, static_cast<int>(thumb), seed, columns});
      summary << fmt::format("images: {}\nmean size: {:.1f} x {:.1f}\ncategories: {}\nshapes: {}\n", r.image_files.size(),
                             r.mean_width, r.mean_height, r.class_histogram.size(), r.polygon_summaries.size());
      for (const auto& w : r.warnings) summary << "warning: " << w << "\n";
      return kExitOk;
    }

    if (modify->parsed()) {
      json p = json::object();
      if (quality) p["quality"] = std::lround(*quality);
      if (bits) p["bits"] = std::lround(*bits);
      if (sigma) p["sigma"] = *sigma;
      if (scale) p["scale"] = *scale;
      for (const auto& s : params) {
        auto [k, v] = parse_param(s);
        p[k] = v;
      }
      const auto registry = ModifierRegistry::with_builtins();
      const ModifierSpec spec = registry.make_spec(kind, p);
      const auto outcome =
          apply_modifier(discover(dataset), spec, seed, registry, ApplyOptions{common.overwrite, common.jobs});
      if (!common.out.empty()) write_output(prepare_out(common) / kModifierLogFile, to_json(outcome, spec, seed), common.overwrite);
      summary << fmt::format("created {}\nimages: {}\nbytes: {} -> {}\n", outcome.new_handle.data_path.string(),
                             outcome.images_processed, outcome.bytes_before, outcome.bytes_after);
      for (const auto& w : outcome.warnings) summary << "warning: " << w << "\n";
      return outcome.warnings.empty() ? kExitOk : kExitPartial;
    }

    if (metric->parsed()) {
      json p = json::object();
      for (const auto& s : params) {
        auto [k, v] = parse_param(s);
        p[k] = v;
      }
      if (!experiment.empty()) {
        RunStore store(store_path);
        const auto rep = apply_metric_per_run(store, experiment, PerRunMetric{metric_name, p}, annotations);
        json doc = {{"updated", rep.updated}, {"skipped", json::array()}, {"errors", json::array()}};
        for (const auto& [id, why] : rep.skipped) doc["skipped"].push_back({{"run_id", id}, {"reason", why}});
        for (const auto& [id, why] : rep.errors) doc["errors"].push_back({{"run_id", id}, {"message", why}});
        if (!common.out.empty())
          write_output(prepare_out(common) / ("metric_" + metric_name + "_runs.json"), doc, common.overwrite);
        summary << fmt::format("updated: {}\nskipped: {}\nerrors: {}\n", rep.updated.size(), rep.skipped.size(),
                               rep.errors.size());
        for (const auto& [id, why] : rep.errors) summary << "error: " << id << ": " << why << "\n";
        return rep.errors.empty() ? kExitOk : kExitPartial;
      }
      if (dataset.empty()) throw Error(Errc::kValidation, "metric needs a dataset or --experiment");
      if (is_full_reference(metric_name) && ref.empty())
        throw Error(Errc::kValidation, "--ref is required for " + metric_name);
      std::optional<DatasetHandle> ref_ds;
      if (!ref.empty()) ref_ds = discover(ref);
      const auto results = apply_quality_metric(discover(dataset), MetricSpec{metric_name, p}, ref_ds, common.jobs);
      bool partial = false;
      for (const auto& r : results) {
        if (!common.out.empty())
          write_output(prepare_out(common) / ("metric_" + r.metric_name + ".json"), to_json(r), common.overwrite);
        summary << fmt::format("{}: {} ({} of {} images)\n", r.metric_name, fmt_value(r.aggregate), r.count_defined,
                               r.per_image.size());
        partial = partial || !r.warnings.empty();
      }
      return partial ? kExitPartial : kExitOk;
    }

    if (eval->parsed()) {
      const auto s = evaluate(load_coco(gt), load_detections(pred));
      write_output(prepare_out(common) / "eval_summary.json", to_json(s), common.overwrite);
      summary << fmt::format("AP: {}\nAP50: {}\nAP75: {}\nAR_100: {}\n", fmt_value(s.ap), fmt_value(s.ap50),
                             fmt_value(s.ap75), fmt_value(s.ar_100));
      if (s.skipped_predictions) summary << fmt::format("skipped predictions: {}\n", s.skipped_predictions);
      return kExitOk;
    }

    if (run->parsed()) {
      const auto registry = ModifierRegistry::with_builtins();
      RunStore store(store_path);
      Experiment exp(load_plan(plan_path, registry), store, registry, ExecuteOptions{common.overwrite, common.jobs});
      const auto records = exp.execute();
      std::size_t completed = 0;
      json doc = json::array();
      for (const auto& r : records) {
        completed += r.status == RunStatus::kCompleted;
        doc.push_back({{"run_id", r.run_id}, {"status", to_string(r.status)}, {"error", r.error}});
        summary << fmt::format("{}  {}{}\n", r.run_id, to_string(r.status), r.error.empty() ? "" : "  " + r.error);
      }
      if (!common.out.empty()) write_output(prepare_out(common) / "runs.json", doc, common.overwrite);
      summary << fmt::format("{} of {} runs completed; datasets built: {}, reused: {}\n", completed, records.size(),
                             exp.materializations(), exp.cache_hits());
      return completed == records.size() ? kExitOk : kExitPartial;
    }

    if (report->parsed()) {
      RunStore store(store_path);
      RunQuery q;
      q.experiment_name = experiment;
      for (const auto& f : filters) q.filters.push_back(parse_filter(f));
      if (!sort_by.empty()) q.sort_by = sort_by;
      q.descending = descending;
      q.limit = limit;
      std::vector<std::string> cols{"run_id", x_col};
      for (const auto& c : ys) cols.push_back(c);
      for (const auto& c : columns) cols.push_back(c);
      std::vector<std::string> unique;
      for (const auto& c : cols)
        if (std::find(unique.begin(), unique.end(), c) == unique.end()) unique.push_back(c);
      const Table t = store.get_table(q, unique);
      const fs::path dir = prepare_out(common);
      const fs::path csv = dir / "runs.csv";
      if (fs::exists(csv) && !common.overwrite)
        throw Error(Errc::kDestinationExists, csv.string() + " already exists (use --overwrite)");
      write_file_atomic(csv, to_csv(t));
      const auto plots = render_plots(t, x_col, ys, dir);
      summary << fmt::format("rows: {}\ntable: {}\n", t.rows.size(), csv.string());
      for (const auto& p : plots) summary << "plot: " << p.string() << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_user_error(e.code()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace iqh
