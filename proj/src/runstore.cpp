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

#include "iqh/runstore.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <set>
#include <thread>

#include "iqh/deteval.hpp"
#include "iqh/error.hpp"
#include "iqh/svg.hpp"

namespace iqh {

std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::kCompleted: return "completed";
    case RunStatus::kFailed: return "failed";
    case RunStatus::kTimeout: return "timeout";
  }
  return "failed";
}

RunStatus run_status_from_string(std::string_view s) {
  if (s == "completed") return RunStatus::kCompleted;
  if (s == "failed") return RunStatus::kFailed;
  if (s == "timeout") return RunStatus::kTimeout;
  throw Error(Errc::kSchema, "unknown run status: " + std::string(s));
}

namespace {

// Record-level fields resolved before any map.
const char* const kRecordFields[] = {"experiment_name", "run_id", "status", "exit_code", "started_at", "ended_at",
                                     "artifact_dir"};

std::optional<double> as_number(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s == "inf" || s == "-inf" || s == "nan") return number_from_json(v);
    double d = 0.0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, d);
    if (ec == std::errc() && p == end && !s.empty()) return d;
  }
  return std::nullopt;
}

// Numbers order before strings; numbers numerically, strings lexically.
int compare_values(const json& a, const json& b) {
  const auto na = as_number(a), nb = as_number(b);
  if (na && nb) return *na < *nb ? -1 : (*na > *nb ? 1 : 0);
  if (na) return -1;
  if (nb) return 1;
  const std::string sa = format_scalar(a), sb = format_scalar(b);
  return sa < sb ? -1 : (sa > sb ? 1 : 0);
}

}  // namespace

std::optional<json> RunRecord::field(const std::string& name) const {
  if (name == "experiment_name") return experiment_name;
  if (name == "run_id") return run_id;
  if (name == "status") return std::string(to_string(status));
  if (name == "exit_code") return exit_code ? std::optional<json>(*exit_code) : std::nullopt;
  if (name == "started_at") return started_at;
  if (name == "ended_at") return ended_at;
  if (name == "artifact_dir") return artifact_dir;
  if (auto it = tags.find(name); it != tags.end()) return json(it->second);
  if (hyperparams.contains(name)) return hyperparams.at(name);
  if (modifier_params.contains(name)) return modifier_params.at(name);
  if (params.contains(name)) return params.at(name);
  if (auto it = metrics.find(name); it != metrics.end()) return number_to_json(it->second);
  return std::nullopt;
}

std::vector<std::string> RunRecord::field_names() const {
  std::vector<std::string> out(std::begin(kRecordFields), std::end(kRecordFields));
  for (const auto& [k, v] : tags) out.push_back(k);
  for (const auto& [k, v] : hyperparams.items()) out.push_back(k);
  for (const auto& [k, v] : modifier_params.items()) out.push_back(k);
  for (const auto& [k, v] : params.items()) out.push_back(k);
  for (const auto& [k, v] : metrics) out.push_back(k);
  return out;
}

void RunRecord::set_metric(const std::string& name, double value) {
  metrics[params.contains(name) ? "metric_" + name : name] = value;
}

json to_json(const RunRecord& r) {
  json metrics = json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = number_to_json(v);
  json series = json::object();
  for (const auto& [k, v] : r.metric_series) {
    json arr = json::array();
    for (double d : v) arr.push_back(number_to_json(d));
    series[k] = arr;
  }
  return {{"experiment_name", r.experiment_name},
          {"run_id", r.run_id},
          {"status", to_string(r.status)},
          {"exit_code", r.exit_code ? json(*r.exit_code) : json(nullptr)},
          {"error", r.error},
          {"started_at", r.started_at},
          {"ended_at", r.ended_at},
          {"tags", r.tags},
          {"hyperparams", r.hyperparams},
          {"modifier_params", r.modifier_params},
          {"params", r.params},
          {"metrics", metrics},
          {"metric_series", series},
          {"artifact_dir", r.artifact_dir},
          {"artifact_digests", r.artifact_digests},
          {"metric_errors", r.metric_errors}};
}

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  try {
    r.experiment_name = j.at("experiment_name").get<std::string>();
    r.run_id = j.at("run_id").get<std::string>();
    r.status = run_status_from_string(j.at("status").get<std::string>());
    if (!j.at("exit_code").is_null()) r.exit_code = j.at("exit_code").get<int>();
    r.error = j.at("error").get<std::string>();
    r.started_at = j.at("started_at").get<std::string>();
    r.ended_at = j.at("ended_at").get<std::string>();
    r.tags = j.at("tags").get<std::map<std::string, std::string>>();
    r.hyperparams = j.at("hyperparams");
    r.modifier_params = j.at("modifier_params");
    r.params = j.at("params");
    for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = number_from_json(v);
    for (const auto& [k, v] : j.at("metric_series").items()) {
      auto& s = r.metric_series[k];
      for (const auto& d : v) s.push_back(number_from_json(d));
    }
    r.artifact_dir = j.at("artifact_dir").get<std::string>();
    r.artifact_digests = j.at("artifact_digests").get<std::map<std::string, std::string>>();
    if (j.contains("metric_errors")) r.metric_errors = j.at("metric_errors").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, std::string("malformed run record: ") + e.what());
  }
  return r;
}

Filter parse_filter(const std::string& text) {
  static const std::pair<const char*, FilterOp> kOps[] = {{"!=", FilterOp::kNe}, {"<=", FilterOp::kLe},
                                                          {">=", FilterOp::kGe}, {"=", FilterOp::kEq},
                                                          {"<", FilterOp::kLt},  {">", FilterOp::kGt},
                                                          {"~", FilterOp::kContains}};
  std::size_t best = std::string::npos;
  const char* best_op = nullptr;
  FilterOp op = FilterOp::kEq;
  for (const auto& [sym, o] : kOps) {
    const auto pos = text.find(sym);
    if (pos == std::string::npos) continue;
    if (best == std::string::npos || pos < best || (pos == best && std::strlen(sym) > std::strlen(best_op))) {
      best = pos, best_op = sym, op = o;
    }
  }
  if (best == std::string::npos || best == 0)
    throw Error(Errc::kValidation, "filter must look like <field><op><value>: '" + text + "'");
  Filter f;
  f.field = text.substr(0, best);
  f.op = op;
  const std::string value = text.substr(best + std::strlen(best_op));
  const json as_string = value;
  if (auto n = as_number(as_string); n && op != FilterOp::kContains) {
    f.value = *n;
  } else {
    f.value = value;
  }
  return f;
}

namespace {

bool matches(const RunRecord& r, const Filter& f) {
  const auto v = r.field(f.field);
  if (!v || v->is_null()) return false;
  if (f.op == FilterOp::kContains) return format_scalar(*v).find(format_scalar(f.value)) != std::string::npos;
  const int c = compare_values(*v, f.value);
  switch (f.op) {
    case FilterOp::kEq: return c == 0;
    case FilterOp::kNe: return c != 0;
    case FilterOp::kLt: return c < 0;
    case FilterOp::kLe: return c <= 0;
    case FilterOp::kGt: return c > 0;
    case FilterOp::kGe: return c >= 0;
    case FilterOp::kContains: break;
  }
  return false;
}

std::mutex g_hook_mutex;
std::function<void(SavePhase)> g_fault_hook;

void fire(SavePhase phase) {
  std::function<void(SavePhase)> hook;
  {
    std::lock_guard lock(g_hook_mutex);
    hook = g_fault_hook;
  }
  if (hook) hook(phase);
}

class IndexLock {
 public:
  explicit IndexLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(Errc::kStore, "cannot open " + path.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error(Errc::kStore, "cannot lock " + path.string());
    }
  }
  ~IndexLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  IndexLock(const IndexLock&) = delete;
  IndexLock& operator=(const IndexLock&) = delete;

 private:
  int fd_ = -1;
};

void write_then_rename(const fs::path& target, std::string_view content, SavePhase written, SavePhase renamed) {
  const fs::path tmp = target.parent_path() / (".tmp." + target.filename().string() + "." + std::to_string(::getpid()) +
                                               "." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
  write_bytes(tmp, std::span(reinterpret_cast<const std::uint8_t*>(content.data()), content.size()));
  fire(written);
  fs::rename(tmp, target);
  fire(renamed);
}

std::vector<std::string> read_index(const fs::path& index) {
  if (!fs::exists(index)) return {};
  const json j = load_json(index);
  return j.at("runs").get<std::vector<std::string>>();
}

}  // namespace

RunStore::RunStore(fs::path root) : root_(fs::absolute(std::move(root)).lexically_normal()) {}

fs::path RunStore::default_root() {
  if (const char* env = std::getenv("IQH_STORE"); env && *env) return env;
  return "iqh_store";
}

fs::path RunStore::experiment_dir(const std::string& experiment) const {
  if (experiment.empty() || experiment.find('/') != std::string::npos || experiment == "." || experiment == "..")
    throw Error(Errc::kValidation, "invalid experiment name: '" + experiment + "'");
  return root_ / experiment;
}

fs::path RunStore::run_dir(const std::string& experiment, const std::string& run_id) const {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id.starts_with("."))
    throw Error(Errc::kValidation, "invalid run id: '" + run_id + "'");
  return experiment_dir(experiment) / run_id;
}

void RunStore::set_fault_hook(std::function<void(SavePhase)> hook) {
  std::lock_guard lock(g_hook_mutex);
  g_fault_hook = std::move(hook);
}

void RunStore::save_run(const RunRecord& rec, bool replace) {
  const fs::path exp = experiment_dir(rec.experiment_name);
  const fs::path dir = run_dir(rec.experiment_name, rec.run_id);
  try {
    fs::create_directories(exp);
    IndexLock lock(exp / "index.lock");
    fire(SavePhase::kLocked);
    auto runs = read_index(exp / "index.json");
    const bool indexed = std::find(runs.begin(), runs.end(), rec.run_id) != runs.end();
    if (indexed && !replace)
      throw Error(Errc::kDuplicateRunId, "run " + rec.run_id + " already stored in " + rec.experiment_name);
    fs::create_directories(dir);
    write_then_rename(dir / "record.json", to_json(rec).dump(2), SavePhase::kRecordTempWritten,
                      SavePhase::kRecordRenamed);
    if (!indexed) {
      runs.push_back(rec.run_id);
      const json index = {{"experiment_name", rec.experiment_name}, {"runs", runs}};
      write_then_rename(exp / "index.json", index.dump(2), SavePhase::kIndexTempWritten, SavePhase::kIndexRenamed);
    }
  } catch (const fs::filesystem_error& e) {
    throw Error(Errc::kStore, e.what());
  }
}

std::vector<std::string> RunStore::run_ids(const std::string& experiment) const {
  const fs::path index = experiment_dir(experiment) / "index.json";
  if (!fs::exists(index)) throw Error(Errc::kUnknownExperiment, "unknown experiment: " + experiment);
  return read_index(index);
}

bool RunStore::has_run(const std::string& experiment, const std::string& run_id) const {
  if (!fs::exists(experiment_dir(experiment) / "index.json")) return false;
  const auto ids = run_ids(experiment);
  return std::find(ids.begin(), ids.end(), run_id) != ids.end();
}

RunRecord RunStore::load_run(const std::string& experiment, const std::string& run_id) const {
  const fs::path p = run_dir(experiment, run_id) / "record.json";
  if (!fs::exists(p)) throw Error(Errc::kStore, "missing record " + p.string());
  return run_record_from_json(load_json(p));
}

std::vector<std::string> RunStore::experiments() const {
  std::vector<std::string> out;
  if (!fs::is_directory(root_)) return out;
  for (const auto& e : fs::directory_iterator(root_))
    if (e.is_directory() && fs::exists(e.path() / "index.json")) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

void validate_fields(const std::vector<RunRecord>& records, const std::vector<std::string>& fields) {
  if (records.empty()) return;
  std::set<std::string> schema;
  for (const auto& r : records)
    for (auto& n : r.field_names()) schema.insert(std::move(n));
  for (const auto& f : fields)
    if (!schema.contains(f)) throw Error(Errc::kUnknownField, "unknown field '" + f + "'");
}

}  // namespace

std::vector<RunRecord> RunStore::query(const RunQuery& q) const {
  std::vector<RunRecord> all;
  for (const auto& id : run_ids(q.experiment_name)) all.push_back(load_run(q.experiment_name, id));
  std::vector<std::string> fields;
  for (const auto& f : q.filters) fields.push_back(f.field);
  if (q.sort_by) fields.push_back(*q.sort_by);
  validate_fields(all, fields);

  std::vector<RunRecord> out;
  for (auto& r : all) {
    if (std::all_of(q.filters.begin(), q.filters.end(), [&](const Filter& f) { return matches(r, f); }))
      out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [&](const RunRecord& a, const RunRecord& b) {
    if (q.sort_by) {
      const auto va = a.field(*q.sort_by), vb = b.field(*q.sort_by);
      const bool ma = !va || va->is_null(), mb = !vb || vb->is_null();
      if (ma != mb) return mb;  // missing values last
      if (!ma) {
        const int c = compare_values(*va, *vb);
        if (c != 0) return q.descending ? c > 0 : c < 0;
      }
    }
    return a.run_id < b.run_id;
  });
  if (q.limit && out.size() > *q.limit) out.resize(*q.limit);
  return out;
}

Table RunStore::get_table(const RunQuery& q, const std::vector<std::string>& columns) const {
  const auto records = query(q);
  if (records.empty()) {
    // Validate against the whole experiment when nothing matched.
    RunQuery all;
    all.experiment_name = q.experiment_name;
    validate_fields(query(all), columns);
  } else {
    validate_fields(records, columns);
  }
  Table t;
  t.columns = columns;
  for (const auto& r : records) {
    std::vector<std::optional<json>> row;
    for (const auto& c : columns) row.push_back(r.field(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + csv_cell(t.columns[i]);
  out += "\r\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      if (row[i] && !row[i]->is_null()) out += csv_cell(format_scalar(*row[i]));
    }
    out += "\r\n";
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(cell));
      cell.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      cell += c;
      any = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted CSV field", text.size());
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<fs::path> render_plots(const Table& table, const std::string& x, const std::vector<std::string>& ys,
                                   const fs::path& out) {
  auto col = [&](const std::string& name) {
    auto it = std::find(table.columns.begin(), table.columns.end(), name);
    if (it == table.columns.end()) throw Error(Errc::kUnknownField, "no column '" + name + "'");
    return static_cast<std::size_t>(it - table.columns.begin());
  };
  const std::size_t xi = col(x);
  std::vector<std::size_t> yi;
  for (const auto& y : ys) yi.push_back(col(y));

  bool numeric_x = true;
  for (const auto& row : table.rows)
    if (row[xi] && !row[xi]->is_null() && !as_number(*row[xi])) numeric_x = false;

  // Categorical x keeps first-appearance order.
  std::vector<std::string> categories;
  auto x_position = [&](const json& v) -> double {
    if (numeric_x) return *as_number(v);
    const std::string s = format_scalar(v);
    auto it = std::find(categories.begin(), categories.end(), s);
    if (it == categories.end()) {
      categories.push_back(s);
      return static_cast<double>(categories.size() - 1);
    }
    return static_cast<double>(it - categories.begin());
  };

  fs::create_directories(out);
  std::vector<fs::path> written;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    std::map<double, std::vector<double>> groups;
    std::map<double, std::string> labels;
    for (const auto& row : table.rows) {
      const auto& xv = row[xi];
      const auto& yv = row[yi[k]];
      if (!yv || yv->is_null()) continue;
      const auto y = as_number(*yv);
      if (!y) throw Error(Errc::kNonNumericY, "column '" + ys[k] + "' holds non-numeric value " + format_scalar(*yv));
      if (!xv || xv->is_null()) continue;
      const double pos = x_position(*xv);
      groups[pos].push_back(*y);
      labels[pos] = format_scalar(*xv);
    }
    svg::Series s;
    s.name = ys[k];
    s.connect = true;
    for (const auto& [pos, vals] : groups) {
      double sum = 0.0;
      for (double v : vals) sum += v;
      const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
      s.markers.push_back({pos, sum / static_cast<double>(vals.size()), *lo, *hi, labels[pos]});
    }
    std::optional<std::vector<std::pair<double, std::string>>> ticks;
    if (!numeric_x) {
      ticks.emplace();
      for (std::size_t i = 0; i < categories.size(); ++i) ticks->emplace_back(static_cast<double>(i), categories[i]);
    }
    std::string file = ys[k];
    for (char& c : file)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    const fs::path p = out / (file + ".svg");
    write_file_atomic(p, svg::scatter_plot(ys[k] + " vs " + x, x, ys[k], {s}, ticks));
    written.push_back(p);
  }
  return written;
}

ApplyMetricReport apply_metric_per_run(RunStore& store, const std::string& experiment, const std::string& metric_name,
                                       const RunMetricFn& fn, const std::string& annotations_name) {
  ApplyMetricReport report;
  for (const auto& id : store.run_ids(experiment)) {
    RunRecord rec = store.load_run(experiment, id);
    if (rec.status != RunStatus::kCompleted) {
      report.skipped.emplace_back(id, "status " + std::string(to_string(rec.status)));
      continue;
    }
    const fs::path annotations = fs::path(rec.artifact_dir) / annotations_name;
    if (!fs::exists(annotations)) {
      report.skipped.emplace_back(id, "missing " + annotations_name);
      log().info("{}: skipped, {} not found", id, annotations.string());
      continue;
    }
    try {
      for (const auto& [k, v] : fn(rec, annotations)) rec.set_metric(k, v);
      rec.metric_errors.erase(metric_name);
      report.updated.push_back(id);
    } catch (const std::exception& e) {
      rec.metric_errors[metric_name] = e.what();
      report.errors.emplace_back(id, e.what());
      log().warn("{}: {} failed: {}", id, metric_name, e.what());
    }
    store.save_run(rec, true);
  }
  return report;
}

namespace {

fs::path reference_dataset(const RunRecord& rec) {
  for (const char* tag : {"test_ds", "train_ds"})
    if (auto it = rec.tags.find(tag); it != rec.tags.end() && !it->second.empty()) return it->second;
  throw Error(Errc::kMissingReference, "run " + rec.run_id + " records no dataset path");
}

}  // namespace

ApplyMetricReport apply_metric_per_run(RunStore& store, const std::string& experiment, const PerRunMetric& metric,
                                       const std::string& annotations_name) {
  RunMetricFn fn;
  if (metric.name == "coco_eval") {
    fn = [&](const RunRecord& rec, const fs::path& annotations) {
      const DatasetHandle ds = discover(reference_dataset(rec));
      if (!ds.coco_annotations) throw Error(Errc::kMissingReference, ds.data_path.string() + " has no COCO ground truth");
      const EvalSummary s = evaluate(load_coco(*ds.coco_annotations), load_detections(annotations));
      write_file_atomic(store.run_dir(rec.experiment_name, rec.run_id) / "eval_summary.json", to_json(s).dump(2));
      return std::map<std::string, double>{{"AP", s.ap}, {"AP50", s.ap50}, {"AP75", s.ap75}, {"AR_100", s.ar_100}};
    };
  } else {
    metric_outputs(metric.name);  // validates the name
    fn = [&](const RunRecord& rec, const fs::path& annotations) {
      const fs::path root(rec.artifact_dir);
      const auto files = load_generated_images(root, annotations);
      std::optional<fs::path> ref;
      if (is_full_reference(metric.name)) ref = discover(reference_dataset(rec)).images_dir;
      std::map<std::string, double> out;
      for (const auto& r : evaluate_image_set(root, files, MetricSpec{metric.name, metric.params}, ref)) {
        write_file_atomic(store.run_dir(rec.experiment_name, rec.run_id) / ("metric_" + r.metric_name + ".json"),
                          to_json(r).dump(2));
        out[r.metric_name] = r.aggregate;
      }
      return out;
    };
  }
  return apply_metric_per_run(store, experiment, metric.name, fn, annotations_name);
}

}  // namespace iqh
