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

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iqh/qmetrics.hpp"
#include "iqh/util.hpp"

namespace iqh {

enum class RunStatus { kCompleted, kFailed, kTimeout };

std::string_view to_string(RunStatus s) noexcept;
RunStatus run_status_from_string(std::string_view s);

struct RunRecord {
  std::string experiment_name;
  std::string run_id;
  RunStatus status = RunStatus::kCompleted;
  std::optional<int> exit_code;
  std::string error;
  std::string started_at;
  std::string ended_at;
  std::map<std::string, std::string> tags;  // lineage: ds_name, modifier, repetition_index, ...
  json hyperparams = json::object();
  json modifier_params = json::object();
  json params = json::object();                // scalars from results.json
  std::map<std::string, double> metrics;       // includes <series>_final
  std::map<std::string, std::vector<double>> metric_series;
  std::string artifact_dir;
  std::map<std::string, std::string> artifact_digests;  // relative path -> sha256
  std::map<std::string, std::string> metric_errors;     // metric -> message from apply_metric_per_run

  /// Field lookup in resolution order: record fields (run_id, status, ...),
  /// tags, hyperparams, modifier params, params, metrics.
  std::optional<json> field(const std::string& name) const;
  /// Every name field() can resolve.
  std::vector<std::string> field_names() const;

  /// Stores a metric, renamed `metric_<name>` when a param has the same name.
  void set_metric(const std::string& name, double value);

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

json to_json(const RunRecord& r);
RunRecord run_record_from_json(const json& j);

enum class FilterOp { kEq, kNe, kLt, kLe, kGt, kGe, kContains };

struct Filter {
  std::string field;
  FilterOp op = FilterOp::kEq;
  json value;
};

/// Parses "field<op>value" with op one of = != < <= > >= ~ (contains); the
/// value is read as a number when it parses as one.
Filter parse_filter(const std::string& text);

struct RunQuery {
  std::string experiment_name;
  std::vector<Filter> filters;
  std::optional<std::string> sort_by;
  bool descending = false;
  std::optional<std::size_t> limit;
};

/// Save phases, observable through a test hook for fault injection.
enum class SavePhase { kLocked, kRecordTempWritten, kRecordRenamed, kIndexTempWritten, kIndexRenamed };

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<json>>> rows;
};

std::string to_csv(const Table& t);
/// RFC 4180 parser; returns rows of cells, header included.
std::vector<std::vector<std::string>> read_csv(std::string_view text);

/// One SVG per y column (`<out>/<y>.svg`): mean per x with min-max whiskers.
/// Throws kUnknownField, kNonNumericY.
std::vector<fs::path> render_plots(const Table& table, const std::string& x, const std::vector<std::string>& ys,
                                   const fs::path& out);

/// `store/<experiment>/index.json` lists the visible runs; each run lives in
/// `store/<experiment>/<run_id>/record.json`. Writers serialise on an flock
/// of `index.lock`; files are replaced by rename so readers never see a
/// partial state.
class RunStore {
 public:
  explicit RunStore(fs::path root);

  /// IQH_STORE or ./iqh_store.
  static fs::path default_root();

  const fs::path& root() const noexcept { return root_; }
  fs::path experiment_dir(const std::string& experiment) const;
  fs::path run_dir(const std::string& experiment, const std::string& run_id) const;

  /// Throws kDuplicateRunId unless `replace` is set.
  void save_run(const RunRecord& rec, bool replace = false);
  RunRecord load_run(const std::string& experiment, const std::string& run_id) const;
  bool has_run(const std::string& experiment, const std::string& run_id) const;
  std::vector<std::string> run_ids(const std::string& experiment) const;
  std::vector<std::string> experiments() const;

  /// Throws kUnknownExperiment, kUnknownField.
  std::vector<RunRecord> query(const RunQuery& q) const;
  Table get_table(const RunQuery& q, const std::vector<std::string>& columns) const;

  /// Test-only: invoked at each phase of save_run.
  static void set_fault_hook(std::function<void(SavePhase)> hook);

 private:
  fs::path root_;
};

/// Extracts named values from one run, given the run's annotations file.
using RunMetricFn = std::function<std::map<std::string, double>(const RunRecord&, const fs::path& annotations)>;

struct PerRunMetric {
  std::string name;  // coco_eval, or a quality metric name
  json params = json::object();
};

struct ApplyMetricReport {
  std::vector<std::string> updated;
  std::vector<std::pair<std::string, std::string>> skipped;  // run_id, reason
  std::vector<std::pair<std::string, std::string>> errors;   // run_id, message
};

/// Evaluates `fn` on every completed run whose artifact directory holds
/// `annotations_name`; values merge into the run's metrics. Failures are
/// recorded on the run (metric_errors) and do not stop other runs.
ApplyMetricReport apply_metric_per_run(RunStore& store, const std::string& experiment, const std::string& metric_name,
                                       const RunMetricFn& fn, const std::string& annotations_name);

/// Built-in metrics: coco_eval compares detections in `annotations_name`
/// with the ground truth of the run's test dataset (tag test_ds, else
/// train_ds); quality metrics run over the generated-image list in
/// `annotations_name`, full-reference ones against the same relative paths in
/// that dataset. Writes eval_summary.json / metric_<name>.json beside the record.
ApplyMetricReport apply_metric_per_run(RunStore& store, const std::string& experiment, const PerRunMetric& metric,
                                       const std::string& annotations_name);

}  // namespace iqh
