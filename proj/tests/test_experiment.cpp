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

#include <gtest/gtest.h>

#include <chrono>

#include "iqh/error.hpp"
#include "iqh/experiment.hpp"
#include "support.hpp"

using namespace iqh;

namespace {

json plan_doc(const fs::path& train, const json& modifiers, const json& hyper, int reps = 1) {
  return {{"experiment_name", "exp"},
          {"task", {{"executable", IQH_STUB_TASK}, {"fixed_args", json::array()}, {"timeout", 60}}},
          {"ref_train", train.string()},
          {"modifiers", modifiers},
          {"hyperparams", hyper},
          {"repetitions", reps},
          {"seed", 7},
          {"max_parallel_runs", 1}};
}

json jpeg_mods(std::initializer_list<int> qs) {
  json m = json::array();
  for (int q : qs) m.push_back({{"kind", "jpeg_quality"}, {"params", {{"quality", q}}}});
  return m;
}

std::vector<std::string> run_ids(const std::vector<RunConfig>& cfgs) {
  std::vector<std::string> out;
  for (const auto& c : cfgs) out.push_back(c.run_id);
  return out;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::kIo;
}

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override { train_ = test::make_coco_dataset(tmp_.path(), "train", 3, 32, 24); }
  ExperimentPlan plan(const json& mods, const json& hyper, int reps = 1) {
    return parse_plan(plan_doc(train_, mods, hyper, reps), tmp_.path(), reg_);
  }
  test::TempDir tmp_;
  fs::path train_;
  ModifierRegistry reg_ = ModifierRegistry::with_builtins();
};

}  // namespace

TEST_F(ExperimentTest, GridCounts) {
  EXPECT_EQ(expand_runs(plan(jpeg_mods({10, 30, 50, 70, 90}), {{"lr", {1e-6}}})).size(), 5u);
  const auto p = plan(jpeg_mods({85}), {{"lr", {0.1, 0.01, 0.001}}, {"bs", {8, 16}}}, 2);
  const auto runs = expand_runs(p);
  EXPECT_EQ(runs.size(), 12u);
  EXPECT_EQ(run_ids(expand_runs(p)), run_ids(runs));
  EXPECT_EQ(runs[0].run_id, "jpg85_modifier__bs=8,lr=0.1__r0");
  EXPECT_EQ(runs[1].run_id, "jpg85_modifier__bs=8,lr=0.1__r1");
  EXPECT_EQ(runs[2].run_id, "jpg85_modifier__bs=8,lr=0.01__r0");
  EXPECT_EQ(runs[6].run_id, "jpg85_modifier__bs=16,lr=0.1__r0");
  for (const auto& r : runs) EXPECT_EQ(r.seed, run_seed(7, r.run_id));
  EXPECT_EQ(expand_runs(plan(jpeg_mods({10}), json::object()))[0].run_id, "jpg10_modifier__r0");
}

TEST_F(ExperimentTest, EmptyGrid) {
  EXPECT_EQ(code_of([&] { expand_runs(plan(jpeg_mods({10}), {{"lr", json::array()}})); }), Errc::kEmptyGrid);
  EXPECT_EQ(code_of([&] { expand_runs(plan(json::array(), json::object())); }), Errc::kEmptyGrid);
}

TEST_F(ExperimentTest, PlanValidation) {
  auto doc = plan_doc(train_, jpeg_mods({10}), json::object());
  doc["repetitions"] = 0;
  EXPECT_EQ(code_of([&] { parse_plan(doc, tmp_.path(), reg_); }), Errc::kValidation);
  doc = plan_doc(train_, jpeg_mods({10}), json::object());
  doc["task"]["executable"] = "does_not_exist.sh";
  EXPECT_EQ(code_of([&] { parse_plan(doc, tmp_.path(), reg_); }), Errc::kValidation);
  doc = plan_doc(train_, jpeg_mods({10}), json::object());
  doc["ref_train"] = "train";  // relative to the plan directory
  write_file_atomic(tmp_ / "plan.json", doc.dump());
  EXPECT_EQ(load_plan(tmp_ / "plan.json", reg_).ref_train.data_path, train_);
  doc.erase("modifiers");
  EXPECT_EQ(code_of([&] { parse_plan(doc, tmp_.path(), reg_); }), Errc::kSchema);
}

TEST_F(ExperimentTest, ArgumentConvention) {
  auto runs = expand_runs(plan(jpeg_mods({10}), {{"lr", {1e-6}}, {"opt", {"adam"}}}));
  RunConfig cfg = runs[0];
  cfg.train = "/data/train";
  cfg.output_dir = "/out";
  cfg.test = "/data/test";
  TaskSpec task;
  task.fixed_args = {"--mode", "mean"};
  const std::vector<std::string> want{"--mode",  "mean", "--trainds", "/data/train", "--outputpath", "/out",
                                      "--testds", "/data/test", "--lr", "1e-06", "--opt", "adam"};
  EXPECT_EQ(task_arguments(task, cfg), want);
}

TEST(ParseResults, Conventions) {
  test::TempDir tmp;
  write_file_atomic(tmp / "results.json",
                    R"({"learning_rate": 0.83, "num_epochs": 100, "train_focal_loss": [1.34, 1.29, 1.24, 0.01]})");
  auto r = parse_results(tmp.path());
  EXPECT_EQ(r.params, (json{{"learning_rate", 0.83}, {"num_epochs", 100}}));
  ASSERT_EQ(r.series.size(), 1u);
  EXPECT_EQ(r.series.at("train_focal_loss").size(), 4u);
  EXPECT_EQ(r.metrics.at("train_focal_loss_final"), 0.01);

  write_file_atomic(tmp / "results.json", "{}");
  r = parse_results(tmp.path());
  EXPECT_TRUE(r.params.empty());
  EXPECT_TRUE(r.series.empty());

  write_file_atomic(tmp / "results.json", R"({"x": [1, "a"]})");
  EXPECT_EQ(code_of([&] { parse_results(tmp.path()); }), Errc::kMalformedResults);

  fs::remove(tmp / "results.json");
  r = parse_results(tmp.path());
  EXPECT_TRUE(r.params.empty());
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST_F(ExperimentTest, InvokeTaskCapturesLogsAndEnvironment) {
  RunConfig cfg = expand_runs(plan(jpeg_mods({10}), {{"lr", {1e-6}}}))[0];
  cfg.train = train_;
  cfg.output_dir = tmp_ / "out";
  fs::create_directories(cfg.output_dir);
  TaskSpec task;
  task.executable = IQH_STUB_TASK;
  const auto outcome = invoke_task(task, cfg);
  ASSERT_EQ(outcome.exit_code, 0);
  const auto args = load_json(cfg.output_dir / "args.json");
  EXPECT_EQ(args.at("run_id"), cfg.run_id);
  EXPECT_EQ(args.at("run_seed"), std::to_string(cfg.seed));
  const auto argv = args.at("argv").get<std::vector<std::string>>();
  const std::vector<std::string> lr{"--lr", "1e-06"};
  EXPECT_NE(std::search(argv.begin(), argv.end(), lr.begin(), lr.end()), argv.end());
  EXPECT_NE(read_file(cfg.output_dir / "stdout.log").find("stub task mean"), std::string::npos);

  task.fixed_args = {"--mode", "fail", "--exit-code", "3"};
  const auto failed = invoke_task(task, cfg);
  EXPECT_EQ(failed.exit_code, 3);
  EXPECT_NE(read_file(cfg.output_dir / "stderr.log").find("failing on purpose"), std::string::npos);
}

TEST_F(ExperimentTest, TimeoutKillsTask) {
  RunConfig cfg = expand_runs(plan(jpeg_mods({10}), json::object()))[0];
  cfg.train = train_;
  cfg.output_dir = tmp_ / "out";
  fs::create_directories(cfg.output_dir);
  TaskSpec task;
  task.executable = IQH_STUB_TASK;
  task.fixed_args = {"--mode", "sleep", "--sleep", "20"};
  task.timeout_seconds = 0.3;
  const auto t0 = std::chrono::steady_clock::now();
  const auto outcome = invoke_task(task, cfg);
  EXPECT_TRUE(outcome.timed_out);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
}

TEST_F(ExperimentTest, PythonScriptRunsUnderInterpreter) {
  if (!fs::exists("/usr/bin/python3")) GTEST_SKIP() << "python3 not installed";
  write_file_atomic(tmp_ / "task.py",
                    "import json, sys\n"
                    "out = sys.argv[sys.argv.index('--outputpath') + 1]\n"
                    "json.dump({'loss': [3, 2, 1]}, open(out + '/results.json', 'w'))\n");
  fs::permissions(tmp_ / "task.py", fs::perms::owner_read | fs::perms::owner_write);
  RunConfig cfg = expand_runs(plan(jpeg_mods({10}), json::object()))[0];
  cfg.train = train_;
  cfg.output_dir = tmp_ / "out";
  fs::create_directories(cfg.output_dir);
  TaskSpec task;
  task.executable = tmp_ / "task.py";
  EXPECT_EQ(invoke_task(task, cfg).exit_code, 0);
  EXPECT_EQ(parse_results(cfg.output_dir).metrics.at("loss_final"), 1.0);
}

TEST_F(ExperimentTest, MaterializationCache) {
  RunStore store(tmp_ / "store");
  Experiment exp(plan(jpeg_mods({50}), {{"lr", {1, 2}}}), store, reg_);
  auto runs = expand_runs(exp.plan());
  exp.materialize(runs[0]);
  exp.materialize(runs[1]);
  EXPECT_EQ(exp.materializations(), 1u);
  EXPECT_EQ(exp.cache_hits(), 1u);
  EXPECT_EQ(runs[0].train, tmp_ / "train#jpg50_modifier");
  EXPECT_FALSE(runs[0].test);

  // A fresh experiment reuses the directory; a tampered digest forces a rebuild.
  Experiment again(exp.plan(), store, reg_);
  again.materialize(runs[0]);
  EXPECT_EQ(again.materializations(), 0u);
  EXPECT_EQ(again.cache_hits(), 1u);
  write_file_atomic(runs[0].train / ".iqh_modifier_digest", "tampered");
  Experiment stale(exp.plan(), store, reg_);
  stale.materialize(runs[0]);
  EXPECT_EQ(stale.materializations(), 1u);
  EXPECT_EQ(read_file(runs[0].train / ".iqh_modifier_digest"), modifier_digest(exp.plan().ref_train, runs[0].modifier, 7));

  // A directory not built by an experiment is never clobbered silently.
  fs::remove(runs[0].train / ".iqh_modifier_digest");
  Experiment foreign(exp.plan(), store, reg_);
  EXPECT_EQ(code_of([&] { foreign.materialize(runs[0]); }), Errc::kDestinationExists);
  Experiment forced(exp.plan(), store, reg_, ExecuteOptions{true, 1});
  EXPECT_NO_THROW(forced.materialize(runs[0]));
}

TEST_F(ExperimentTest, IdentityAndEvalSets) {
  const auto test_ds = test::make_coco_dataset(tmp_.path(), "test", 2);
  auto doc = plan_doc(train_, json::array({{{"kind", "identity"}}}), json::object());
  doc["test"] = test_ds.string();
  RunStore store(tmp_ / "store");
  Experiment exp(parse_plan(doc, tmp_.path(), reg_), store, reg_);
  auto cfg = expand_runs(exp.plan())[0];
  exp.materialize(cfg);
  EXPECT_EQ(cfg.train, tmp_ / "train#identity_modifier");
  EXPECT_EQ(cfg.test, test_ds);

  doc["modify_eval_sets"] = true;
  Experiment both(parse_plan(doc, tmp_.path(), reg_), store, reg_);
  both.materialize(cfg);
  EXPECT_EQ(cfg.test, tmp_ / "test#identity_modifier");
}

TEST_F(ExperimentTest, ExecuteJpegGrid) {
  RunStore store(tmp_ / "store");
  Experiment exp(plan(jpeg_mods({10, 30, 50, 70, 90}), {{"lr", {1e-6}}}), store, reg_);
  const auto records = exp.execute();
  ASSERT_EQ(records.size(), 5u);
  for (const auto& r : records) {
    EXPECT_EQ(r.status, RunStatus::kCompleted) << r.error;
    EXPECT_EQ(r.tags.at("modifier"), "jpg" + r.modifier_params.at("quality").dump() + "_modifier");
    EXPECT_TRUE(r.metrics.count("mean_intensity_final"));
    EXPECT_TRUE(r.artifact_digests.count("results.json"));
    EXPECT_TRUE(r.artifact_digests.count("stdout.log"));
    EXPECT_GE(r.ended_at, r.started_at);
    EXPECT_EQ(store.load_run("exp", r.run_id), r);
  }
  EXPECT_EQ(store.run_ids("exp").size(), 5u);

  // Completed runs already in the store are reused as they are.
  Experiment rerun(exp.plan(), store, reg_);
  const auto again = rerun.execute();
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(again[i], records[i]);
}

TEST_F(ExperimentTest, PartialFailureIsData) {
  RunStore store(tmp_ / "store");
  auto p = plan(jpeg_mods({50}), {{"mode", {"mean", "fail", "malformed"}}});
  p.max_parallel_runs = 3;
  Experiment exp(p, store, reg_);
  const auto records = exp.execute();
  ASSERT_EQ(records.size(), 3u);
  std::map<std::string, RunRecord> by_mode;
  for (const auto& r : records) by_mode[r.hyperparams.at("mode").get<std::string>()] = r;
  EXPECT_EQ(by_mode["mean"].status, RunStatus::kCompleted);
  EXPECT_EQ(by_mode["fail"].status, RunStatus::kFailed);
  EXPECT_EQ(by_mode["fail"].exit_code, 3);
  EXPECT_EQ(by_mode["malformed"].status, RunStatus::kFailed);
  EXPECT_EQ(store.run_ids("exp").size(), 3u);
}

TEST_F(ExperimentTest, RepetitionsDifferOnlyInSeed) {
  RunStore store(tmp_ / "store");
  Experiment exp(plan(jpeg_mods({50}), {{"mode", {"stochastic"}}}, 2), store, reg_);
  const auto r = exp.execute();
  ASSERT_EQ(r.size(), 2u);
  auto t0 = r[0].tags, t1 = r[1].tags;
  EXPECT_NE(t0.at("repetition_index"), t1.at("repetition_index"));
  for (auto* t : {&t0, &t1}) t->erase("repetition_index"), t->erase("run_seed");
  EXPECT_EQ(t0, t1);
  EXPECT_NE(r[0].metrics.at("score_final"), r[1].metrics.at("score_final"));
}

TEST_F(ExperimentTest, TimeoutRecorded) {
  RunStore store(tmp_ / "store");
  auto p = plan(jpeg_mods({50}), json::object());
  p.task.fixed_args = {"--mode", "sleep", "--sleep", "30"};
  p.task.timeout_seconds = 0.5;
  const auto r = Experiment(p, store, reg_).execute();
  EXPECT_EQ(r[0].status, RunStatus::kTimeout);
}

TEST_F(ExperimentTest, CocoEvalPerRun) {
  RunStore store(tmp_ / "store");
  auto p = plan(jpeg_mods({90}), {{"mode", {"predictions", "mean"}}});
  Experiment(p, store, reg_).execute();
  const auto rep = apply_metric_per_run(store, "exp", PerRunMetric{"coco_eval"}, "output.json");
  ASSERT_EQ(rep.updated.size(), 1u);
  EXPECT_EQ(rep.skipped.size(), 1u);  // the mean run wrote no detections
  const auto rec = store.load_run("exp", rep.updated[0]);
  EXPECT_DOUBLE_EQ(rec.metrics.at("AP"), 1.0);
  EXPECT_DOUBLE_EQ(rec.metrics.at("AP50"), 1.0);
  EXPECT_TRUE(fs::exists(store.run_dir("exp", rec.run_id) / "eval_summary.json"));
}

TEST_F(ExperimentTest, QualityMetricPerRun) {
  RunStore store(tmp_ / "store");
  auto p = plan(jpeg_mods({90}), {{"mode", {"generated"}}});
  Experiment(p, store, reg_).execute();
  const auto rep = apply_metric_per_run(store, "exp", PerRunMetric{"ssim"}, "generated.json");
  ASSERT_EQ(rep.updated.size(), 1u);
  const auto rec = store.load_run("exp", rep.updated[0]);
  // The generated images are copies of the run's training images.
  EXPECT_NEAR(rec.metrics.at("ssim"), 1.0, 1e-9);
  const auto saved = metric_result_from_json(load_json(store.run_dir("exp", rec.run_id) / "metric_ssim.json"));
  EXPECT_EQ(saved.count_defined, 3u);
}
