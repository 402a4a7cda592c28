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

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iqh/corpus.hpp"
#include "iqh/modifiers.hpp"
#include "iqh/runstore.hpp"

namespace iqh {

struct TaskSpec {
  fs::path executable;
  std::vector<std::string> fixed_args;
  std::optional<fs::path> working_dir;
  std::optional<double> timeout_seconds;
};

struct ExperimentPlan {
  std::string experiment_name;
  TaskSpec task;
  DatasetHandle ref_train;
  std::optional<DatasetHandle> val;
  std::optional<DatasetHandle> test;
  std::vector<ModifierSpec> modifiers;
  json hyperparams = json::object();  // name -> array of scalars
  int repetitions = 1;
  std::uint64_t seed = 0;
  int max_parallel_runs = 1;
  bool modify_eval_sets = false;
};

/// Relative paths resolve against `base_dir`. Throws kValidation, kSchema.
ExperimentPlan parse_plan(const json& doc, const fs::path& base_dir, const ModifierRegistry& registry);
ExperimentPlan load_plan(const fs::path& path, const ModifierRegistry& registry);

struct RunConfig {
  std::string run_id;
  ModifierSpec modifier;
  json hyperparam_assignment = json::object();  // keys sorted
  int repetition_index = 0;
  std::uint64_t seed = 0;
  fs::path train;
  std::optional<fs::path> val;
  std::optional<fs::path> test;
  fs::path output_dir;
};

/// Modifier order, then assignments in lexicographic key order, then
/// repetition. Throws kEmptyGrid.
std::vector<RunConfig> expand_runs(const ExperimentPlan& plan);

std::uint64_t run_seed(std::uint64_t plan_seed, const std::string& run_id);

/// Arguments after the program: fixed args, --trainds, --outputpath,
/// --valds/--testds when set, then --<name> <value> per hyperparameter.
std::vector<std::string> task_arguments(const TaskSpec& task, const RunConfig& cfg);

struct TaskOutcome {
  std::optional<int> exit_code;
  std::optional<int> signal;
  bool timed_out = false;
};

/// Runs the task with stdout/stderr captured to `stdout.log`/`stderr.log` in
/// cfg.output_dir (which must exist). IQH_RUN_ID and IQH_RUN_SEED are set in
/// the child's environment. A non-executable `.py` file runs under python3.
TaskOutcome invoke_task(const TaskSpec& task, const RunConfig& cfg);

struct ParsedResults {
  json params = json::object();
  std::map<std::string, std::vector<double>> series;
  std::map<std::string, double> metrics;  // <series>_final
  std::vector<std::string> warnings;
};

/// Reads `results.json` from the output directory. Throws kMalformedResults.
ParsedResults parse_results(const fs::path& output_dir);

struct ExecuteOptions {
  bool overwrite = false;  // rerun runs already in the store; rebuild untagged caches
  std::size_t jobs = 1;    // threads per modifier application
};

class Experiment {
 public:
  Experiment(ExperimentPlan plan, RunStore& store, const ModifierRegistry& registry, ExecuteOptions options = {});

  const ExperimentPlan& plan() const noexcept { return plan_; }

  /// Materializes the run's datasets and fills cfg.train/val/test.
  void materialize(RunConfig& cfg);
  std::vector<RunRecord> execute();

  std::size_t materializations() const noexcept { return materializations_; }
  std::size_t cache_hits() const noexcept { return cache_hits_; }

 private:
  struct CacheSlot {
    std::mutex mutex;
    std::optional<fs::path> path;
  };

  fs::path materialize_one(const DatasetHandle& ds, const ModifierSpec& spec);
  RunRecord run_one(RunConfig cfg);

  ExperimentPlan plan_;
  RunStore& store_;
  const ModifierRegistry& registry_;
  ExecuteOptions options_;
  std::mutex slots_mutex_;
  std::map<fs::path, std::unique_ptr<CacheSlot>> slots_;
  std::atomic<std::size_t> materializations_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

/// Content of the digest file a materialized dataset carries.
std::string modifier_digest(const DatasetHandle& source, const ModifierSpec& spec, std::uint64_t seed);

}  // namespace iqh
