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

#include "iqh/experiment.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "iqh/error.hpp"

extern char** environ;

namespace iqh {

namespace {

fs::path resolve_against(const fs::path& p, const fs::path& base) {
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

std::optional<fs::path> find_on_path(const std::string& name) {
  const char* path = std::getenv("PATH");
  if (!path) return std::nullopt;
  std::string_view rest(path);
  while (!rest.empty()) {
    const auto colon = rest.find(':');
    const std::string dir(rest.substr(0, colon));
    rest = colon == std::string_view::npos ? std::string_view() : rest.substr(colon + 1);
    const fs::path candidate = fs::path(dir.empty() ? "." : dir) / name;
    if (::access(candidate.c_str(), X_OK) == 0 && fs::is_regular_file(candidate)) return candidate;
  }
  return std::nullopt;
}

bool is_scalar(const json& v) { return v.is_number() || v.is_string() || v.is_boolean(); }

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
  return doc.at(key).get<T>();
}

std::string sanitize_id(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    const auto u = static_cast<unsigned char>(c);
    if (!std::isalnum(u) && c != '.' && c != '_' && c != '-' && c != '=' && c != ',' && c != '+') c = '_';
  }
  return out;
}

}  // namespace

ExperimentPlan parse_plan(const json& doc, const fs::path& base_dir, const ModifierRegistry& registry) {
  if (!doc.is_object()) throw Error(Errc::kSchema, "experiment plan must be a JSON object");
  ExperimentPlan plan;
  try {
    plan.experiment_name = doc.at("experiment_name").get<std::string>();
    const json& task = doc.at("task");
    const fs::path exe = task.at("executable").get<std::string>();
    if (exe.has_parent_path() || fs::exists(base_dir / exe)) {
      plan.task.executable = resolve_against(exe, base_dir);
    } else if (auto found = find_on_path(exe.string())) {
      plan.task.executable = *found;
    } else {
      plan.task.executable = resolve_against(exe, base_dir);
    }
    plan.task.fixed_args = get_or<std::vector<std::string>>(task, "fixed_args", {});
    if (task.contains("working_dir") && !task.at("working_dir").is_null())
      plan.task.working_dir = resolve_against(task.at("working_dir").get<std::string>(), base_dir);
    if (task.contains("timeout") && !task.at("timeout").is_null()) {
      plan.task.timeout_seconds = task.at("timeout").get<double>();
      if (!(*plan.task.timeout_seconds > 0)) throw Error(Errc::kValidation, "task.timeout must be positive");
    }

    plan.ref_train = discover(resolve_against(doc.at("ref_train").get<std::string>(), base_dir));
    if (doc.contains("val") && !doc.at("val").is_null())
      plan.val = discover(resolve_against(doc.at("val").get<std::string>(), base_dir));
    if (doc.contains("test") && !doc.at("test").is_null())
      plan.test = discover(resolve_against(doc.at("test").get<std::string>(), base_dir));

    for (const auto& m : doc.at("modifiers")) {
      const std::string kind = m.at("kind").get<std::string>();
      plan.modifiers.push_back(registry.make_spec(kind, m.contains("params") ? m.at("params") : json::object()));
    }
    if (doc.contains("hyperparams")) {
      for (const auto& [name, values] : doc.at("hyperparams").items()) {
        if (!values.is_array()) throw Error(Errc::kValidation, "hyperparameter '" + name + "' must list values");
        for (const auto& v : values)
          if (!is_scalar(v)) throw Error(Errc::kValidation, "hyperparameter '" + name + "' holds a non-scalar value");
      }
      plan.hyperparams = doc.at("hyperparams");
    }
    plan.repetitions = get_or(doc, "repetitions", 1);
    plan.seed = get_or<std::uint64_t>(doc, "seed", 0);
    plan.max_parallel_runs = get_or(doc, "max_parallel_runs", 1);
    plan.modify_eval_sets = get_or(doc, "modify_eval_sets", false);
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, std::string("malformed experiment plan: ") + e.what());
  }
  if (plan.experiment_name.empty() || plan.experiment_name.find('/') != std::string::npos)
    throw Error(Errc::kValidation, "experiment_name must be a non-empty name without '/'");
  if (plan.repetitions < 1) throw Error(Errc::kValidation, "repetitions must be at least 1");
  if (plan.max_parallel_runs < 1) throw Error(Errc::kValidation, "max_parallel_runs must be at least 1");
  if (!fs::is_regular_file(plan.task.executable))
    throw Error(Errc::kValidation, "task executable not found: " + plan.task.executable.string());
  return plan;
}

ExperimentPlan load_plan(const fs::path& path, const ModifierRegistry& registry) {
  return parse_plan(load_json(path), fs::absolute(path).parent_path(), registry);
}

std::uint64_t run_seed(std::uint64_t plan_seed, const std::string& run_id) {
  return stable_hash64(std::to_string(plan_seed) + "\n" + run_id);
}

std::vector<RunConfig> expand_runs(const ExperimentPlan& plan) {
  if (plan.modifiers.empty()) throw Error(Errc::kEmptyGrid, "plan has no modifiers");
  // ordered_json keeps file order; the grid walks names sorted.
  std::vector<std::string> names;
  for (const auto& [name, values] : plan.hyperparams.items()) {
    if (values.empty()) throw Error(Errc::kEmptyGrid, "hyperparameter '" + name + "' has no values");
    names.push_back(name);
  }
  std::sort(names.begin(), names.end());

  std::size_t total = 1;
  for (const auto& n : names) total *= plan.hyperparams.at(n).size();
  std::vector<json> assignments;
  for (std::size_t idx = 0; idx < total; ++idx) {
    // Mixed radix, last name fastest.
    json a = json::object();
    std::size_t rest = idx;
    std::vector<std::size_t> digit(names.size());
    for (std::size_t i = names.size(); i-- > 0;) {
      const std::size_t n = plan.hyperparams.at(names[i]).size();
      digit[i] = rest % n;
      rest /= n;
    }
    for (std::size_t i = 0; i < names.size(); ++i) a[names[i]] = plan.hyperparams.at(names[i]).at(digit[i]);
    assignments.push_back(std::move(a));
  }

  std::vector<RunConfig> out;
  std::set<std::string> seen;
  for (const auto& mod : plan.modifiers) {
    for (const auto& a : assignments) {
      std::string grid;
      for (const auto& [k, v] : a.items()) grid += (grid.empty() ? "" : ",") + k + "=" + format_scalar(v);
      for (int r = 0; r < plan.repetitions; ++r) {
        RunConfig cfg;
        cfg.modifier = mod;
        cfg.hyperparam_assignment = a;
        cfg.repetition_index = r;
        cfg.run_id = sanitize_id(mod.name + (grid.empty() ? "" : "__" + grid) + "__r" + std::to_string(r));
        if (!seen.insert(cfg.run_id).second)
          throw Error(Errc::kValidation, "two runs map to the same id '" + cfg.run_id + "'");
        cfg.seed = run_seed(plan.seed, cfg.run_id);
        out.push_back(std::move(cfg));
      }
    }
  }
  return out;
}

std::vector<std::string> task_arguments(const TaskSpec& task, const RunConfig& cfg) {
  std::vector<std::string> args = task.fixed_args;
  args.insert(args.end(), {"--trainds", cfg.train.string(), "--outputpath", cfg.output_dir.string()});
  if (cfg.val) args.insert(args.end(), {"--valds", cfg.val->string()});
  if (cfg.test) args.insert(args.end(), {"--testds", cfg.test->string()});
  for (const auto& [k, v] : cfg.hyperparam_assignment.items()) args.insert(args.end(), {"--" + k, format_scalar(v)});
  return args;
}

TaskOutcome invoke_task(const TaskSpec& task, const RunConfig& cfg) {
  std::vector<std::string> argv;
  const bool is_script = lower_extension(task.executable) == "py";
  if (is_script && ::access(task.executable.c_str(), X_OK) != 0) {
    auto python = find_on_path("python3");
    if (!python) throw Error(Errc::kValidation, "python3 not found on PATH for " + task.executable.string());
    argv.push_back(python->string());
  }
  argv.push_back(task.executable.string());
  for (auto& a : task_arguments(task, cfg)) argv.push_back(std::move(a));

  std::vector<std::string> env;
  for (char** e = environ; *e; ++e) {
    const std::string_view kv(*e);
    if (kv.starts_with("IQH_RUN_ID=") || kv.starts_with("IQH_RUN_SEED=")) continue;
    env.emplace_back(kv);
  }
  env.push_back("IQH_RUN_ID=" + cfg.run_id);
  env.push_back("IQH_RUN_SEED=" + std::to_string(cfg.seed));

  // Everything the child touches is prepared before fork.
  std::vector<char*> argv_c, env_c;
  for (auto& a : argv) argv_c.push_back(a.data());
  argv_c.push_back(nullptr);
  for (auto& e : env) env_c.push_back(e.data());
  env_c.push_back(nullptr);
  const std::string exe = argv.front();
  const std::string workdir = task.working_dir ? task.working_dir->string() : std::string();

  const int out_fd = ::open((cfg.output_dir / "stdout.log").c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  const int err_fd = ::open((cfg.output_dir / "stderr.log").c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  const int null_fd = ::open("/dev/null", O_RDONLY | O_CLOEXEC);
  if (out_fd < 0 || err_fd < 0 || null_fd < 0) {
    for (int fd : {out_fd, err_fd, null_fd})
      if (fd >= 0) ::close(fd);
    throw Error(Errc::kIo, "cannot open task logs in " + cfg.output_dir.string());
  }

  const pid_t pid = ::fork();
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(null_fd, 0);
    ::dup2(out_fd, 1);
    ::dup2(err_fd, 2);
    if (!workdir.empty() && ::chdir(workdir.c_str()) != 0) ::_exit(127);
    ::execve(exe.c_str(), argv_c.data(), env_c.data());
    ::_exit(127);
  }
  ::close(out_fd);
  ::close(err_fd);
  ::close(null_fd);
  if (pid < 0) throw Error(Errc::kIo, std::string("fork failed: ") + std::strerror(errno));
  ::setpgid(pid, pid);  // also from the parent, so the kill below cannot race

  using clock = std::chrono::steady_clock;
  const auto deadline =
      task.timeout_seconds
          ? std::optional(clock::now() + std::chrono::duration_cast<clock::duration>(
                                             std::chrono::duration<double>(*task.timeout_seconds)))
          : std::nullopt;
  TaskOutcome outcome;
  int status = 0;
  auto delay = std::chrono::milliseconds(1);
  while (true) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) throw Error(Errc::kIo, std::string("waitpid failed: ") + std::strerror(errno));
    if (deadline && clock::now() >= *deadline) {
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      outcome.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(delay);
    delay = std::min(delay * 2, std::chrono::milliseconds(50));
  }
  if (WIFEXITED(status)) outcome.exit_code = WEXITSTATUS(status);
  if (WIFSIGNALED(status)) outcome.signal = WTERMSIG(status);
  // Reap any grandchildren left in the group.
  if (!outcome.timed_out) ::kill(-pid, SIGKILL);
  return outcome;
}

ParsedResults parse_results(const fs::path& output_dir) {
  ParsedResults out;
  const fs::path path = output_dir / "results.json";
  if (!fs::exists(path)) {
    out.warnings.push_back("no results.json in " + output_dir.string());
    return out;
  }
  json doc;
  try {
    doc = load_json(path);
  } catch (const Error& e) {
    throw Error(Errc::kMalformedResults, e.what());
  }
  if (!doc.is_object()) throw Error(Errc::kMalformedResults, "results.json must hold an object");
  for (const auto& [k, v] : doc.items()) {
    if (v.is_array()) {
      std::vector<double> s;
      for (const auto& x : v) {
        if (!x.is_number()) throw Error(Errc::kMalformedResults, "series '" + k + "' holds a non-numeric value");
        s.push_back(x.get<double>());
      }
      if (!s.empty()) out.metrics[k + "_final"] = s.back();
      out.series[k] = std::move(s);
    } else if (is_scalar(v) || v.is_null()) {
      out.params[k] = v;
    } else {
      throw Error(Errc::kMalformedResults, "value of '" + k + "' is neither a scalar nor a list");
    }
  }
  return out;
}

std::string modifier_digest(const DatasetHandle& source, const ModifierSpec& spec, std::uint64_t seed) {
  const json key = {{"source", fs::weakly_canonical(source.data_path).string()},
                    {"kind", spec.kind},
                    {"params", spec.params},
                    {"name", spec.name},
                    {"seed", seed}};
  return sha256_hex(key.dump());
}

Experiment::Experiment(ExperimentPlan plan, RunStore& store, const ModifierRegistry& registry, ExecuteOptions options)
    : plan_(std::move(plan)), store_(store), registry_(registry), options_(options) {}

fs::path Experiment::materialize_one(const DatasetHandle& ds, const ModifierSpec& spec) {
  const fs::path dest = ds.parent_folder / derived_name(ds.name(), spec.name);
  CacheSlot* slot;
  {
    std::lock_guard lock(slots_mutex_);
    auto& p = slots_[dest];
    if (!p) p = std::make_unique<CacheSlot>();
    slot = p.get();
  }
  std::lock_guard lock(slot->mutex);
  if (slot->path) {
    ++cache_hits_;
    return *slot->path;
  }
  const std::string digest = modifier_digest(ds, spec, plan_.seed);
  const fs::path digest_file = dest / kModifierDigestFile;
  bool rebuild = true;
  if (fs::exists(dest)) {
    if (fs::exists(digest_file)) {
      if (read_file(digest_file) == digest) {
        rebuild = false;
      } else {
        log().info("{}: cached dataset is stale, rebuilding", dest.string());
      }
    } else if (!options_.overwrite) {
      throw Error(Errc::kDestinationExists, dest.string() + " exists but was not built by an experiment");
    }
  }
  if (rebuild) {
    apply_modifier(ds, spec, plan_.seed, registry_, ApplyOptions{true, options_.jobs});
    write_file_atomic(digest_file, digest);
    ++materializations_;
  } else {
    ++cache_hits_;
  }
  slot->path = dest;
  return dest;
}

void Experiment::materialize(RunConfig& cfg) {
  cfg.train = materialize_one(plan_.ref_train, cfg.modifier);
  cfg.val.reset();
  cfg.test.reset();
  if (plan_.val) cfg.val = plan_.modify_eval_sets ? materialize_one(*plan_.val, cfg.modifier) : plan_.val->data_path;
  if (plan_.test)
    cfg.test = plan_.modify_eval_sets ? materialize_one(*plan_.test, cfg.modifier) : plan_.test->data_path;
}

namespace {

std::map<std::string, std::string> digest_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::is_directory(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = sha256_file(e.path());
  return out;
}

}  // namespace

RunRecord Experiment::run_one(RunConfig cfg) {
  RunRecord rec;
  rec.experiment_name = plan_.experiment_name;
  rec.run_id = cfg.run_id;
  rec.hyperparams = cfg.hyperparam_assignment;
  rec.modifier_params = cfg.modifier.params;
  rec.tags["ds_name"] = plan_.ref_train.name();
  rec.tags["modifier"] = cfg.modifier.name;
  rec.tags["modifier_kind"] = cfg.modifier.kind;
  rec.tags["repetition_index"] = std::to_string(cfg.repetition_index);
  rec.tags["run_seed"] = std::to_string(cfg.seed);
  cfg.output_dir = store_.run_dir(plan_.experiment_name, cfg.run_id) / "artifacts";
  rec.artifact_dir = cfg.output_dir.string();
  rec.started_at = utc_timestamp();
  try {
    materialize(cfg);
    rec.tags["train_ds"] = cfg.train.string();
    if (cfg.val) rec.tags["val_ds"] = cfg.val->string();
    if (cfg.test) rec.tags["test_ds"] = cfg.test->string();

    fs::remove_all(cfg.output_dir);
    fs::create_directories(cfg.output_dir);
    const TaskOutcome outcome = invoke_task(plan_.task, cfg);
    rec.exit_code = outcome.exit_code;
    if (outcome.timed_out) {
      rec.status = RunStatus::kTimeout;
      rec.error = fmt::format("timed out after {} s", format_double(*plan_.task.timeout_seconds));
    } else if (outcome.signal) {
      rec.status = RunStatus::kFailed;
      rec.error = fmt::format("killed by signal {}", *outcome.signal);
    } else if (outcome.exit_code != 0) {
      rec.status = RunStatus::kFailed;
      rec.error = fmt::format("exit status {}", outcome.exit_code.value_or(-1));
    } else {
      ParsedResults parsed = parse_results(cfg.output_dir);
      for (const auto& w : parsed.warnings) log().warn("{}: {}", cfg.run_id, w);
      rec.params = std::move(parsed.params);
      rec.metric_series = std::move(parsed.series);
      for (const auto& [k, v] : parsed.metrics) rec.set_metric(k, v);
      rec.status = RunStatus::kCompleted;
    }
  } catch (const Error& e) {
    if (e.code() == Errc::kStore) throw;
    rec.status = RunStatus::kFailed;
    rec.error = e.what();
  } catch (const fs::filesystem_error& e) {
    rec.status = RunStatus::kFailed;
    rec.error = e.what();
  }
  rec.artifact_digests = digest_tree(cfg.output_dir);
  rec.ended_at = utc_timestamp();
  if (rec.status != RunStatus::kCompleted) log().warn("{}: {}", cfg.run_id, rec.error);
  return rec;
}

std::vector<RunRecord> Experiment::execute() {
  auto configs = expand_runs(plan_);
  std::vector<RunRecord> records(configs.size());
  parallel_for(configs.size(), static_cast<std::size_t>(plan_.max_parallel_runs), [&](std::size_t i) {
    const std::string& id = configs[i].run_id;
    const bool stored = store_.has_run(plan_.experiment_name, id);
    if (stored && !options_.overwrite) {
      RunRecord prior = store_.load_run(plan_.experiment_name, id);
      if (prior.status == RunStatus::kCompleted) {
        log().info("{}: already completed, reusing stored record", id);
        records[i] = std::move(prior);
        return;
      }
    }
    records[i] = run_one(configs[i]);
    store_.save_run(records[i], stored);
    log().info("{}: {}", id, to_string(records[i].status));
  });
  return records;
}

}  // namespace iqh
