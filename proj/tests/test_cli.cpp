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

#include <sstream>

#include "iqh/cli.hpp"
#include "iqh/corpus.hpp"
#include "iqh/runstore.hpp"
#include "support.hpp"

using namespace iqh;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override { ds_ = test::make_coco_dataset(tmp_.path(), "ds", 3, 32, 24); }

  fs::path write_plan(const std::string& mode, std::initializer_list<int> qualities) {
    json mods = json::array();
    for (int q : qualities) mods.push_back({{"kind", "jpeg_quality"}, {"params", {{"quality", q}}}});
    const json plan = {{"experiment_name", "jpeg_sweep"},
                       {"task", {{"executable", IQH_STUB_TASK}, {"fixed_args", {"--mode", mode}}}},
                       {"ref_train", "ds"},
                       {"modifiers", mods},
                       {"hyperparams", {{"lr", {1e-6}}}},
                       {"seed", 3}};
    write_file_atomic(tmp_ / "plan.json", plan.dump(2));
    return tmp_ / "plan.json";
  }

  test::TempDir tmp_;
  fs::path ds_;
};

}  // namespace

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(cli({}).code, kExitValidation);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitValidation);
  EXPECT_EQ(cli({"run", "--plan", (tmp_ / "missing.json").string()}).code, kExitValidation);
  EXPECT_EQ(cli({"modify", ds_.string(), "--kind", "no_such_kind"}).code, kExitValidation);
  EXPECT_EQ(cli({"metric", ds_.string(), "--name", "psnr"}).code, kExitValidation);
}

TEST_F(CliTest, ModifyCreatesSiblingAndRefusesToClobber) {
  auto r = cli({"modify", ds_.string(), "--kind", "jpeg_quality", "--quality", "85", "--out", (tmp_ / "log").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const fs::path sibling = tmp_ / "ds#jpg85_modifier";
  EXPECT_EQ(discover(sibling).image_files().size(), 3u);
  EXPECT_EQ(load_json(tmp_ / "log" / "modifier_log.json").at("images_processed"), 3);
  EXPECT_NE(r.out.find("created " + sibling.string()), std::string::npos);

  r = cli({"modify", ds_.string(), "--kind", "jpeg_quality", "--quality", "85"});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("exists"), std::string::npos);
  EXPECT_EQ(cli({"modify", ds_.string(), "--kind", "jpeg_quality", "--quality", "85", "--overwrite"}).code, kExitOk);
}

TEST_F(CliTest, SanityStatsEvalMetric) {
  const auto bad = test::make_defective_dataset(tmp_.path());
  auto r = cli({"sanity", bad.string(), "--out", (tmp_ / "clean").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("duplicates removed: 1\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(tmp_ / "clean" / kSanityReportFile));

  r = cli({"stats", ds_.string(), "--out", (tmp_ / "stats").string(), "--quiet"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(r.out.empty());
  EXPECT_TRUE(fs::exists(tmp_ / "stats" / "stats.json"));

  // Ground truth scored against itself.
  const auto gt = load_coco(ds_ / "annotations.json");
  json dets = json::array();
  for (const auto& a : gt.annotations)
    dets.push_back({{"image_id", a.image_id}, {"category_id", a.category_id},
                    {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}}, {"score", 0.5}});
  write_file_atomic(tmp_ / "dets.json", dets.dump());
  r = cli({"eval", "--gt", (ds_ / "annotations.json").string(), "--pred", (tmp_ / "dets.json").string(), "--out",
           (tmp_ / "eval").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("AP: 1.0000\n"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(tmp_ / "eval" / "eval_summary.json"));

  r = cli({"metric", ds_.string(), "--name", "ssim", "--ref", ds_.string(), "--out", (tmp_ / "m").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out, "ssim: 1.0000 (3 of 3 images)\n");
  EXPECT_TRUE(fs::exists(tmp_ / "m" / "metric_ssim.json"));
}

TEST_F(CliTest, RunAndReportPipeline) {
  const auto plan = write_plan("mean", {10, 30, 50, 70, 90});
  const std::string store = (tmp_ / "store").string();
  auto r = cli({"run", "--plan", plan.string(), "--store", store, "--jobs", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("5 of 5 runs completed"), std::string::npos);

  const std::vector<std::string> report{"report", "--experiment", "jpeg_sweep", "--x", "quality", "--y",
                                        "mean_intensity_final", "--store", store, "--sort-by", "quality",
                                        "--out", (tmp_ / "rep").string()};
  r = cli(report);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto table = read_csv(read_file(tmp_ / "rep" / "runs.csv"));
  ASSERT_EQ(table.size(), 6u);
  EXPECT_EQ(table[0], (std::vector<std::string>{"run_id", "quality", "mean_intensity_final"}));
  EXPECT_EQ(table[1][1], "10");
  EXPECT_EQ(table[5][1], "90");
  EXPECT_TRUE(fs::exists(tmp_ / "rep" / "mean_intensity_final.svg"));

  // Without --overwrite the table is not replaced; with it the output is byte-stable.
  EXPECT_EQ(cli(report).code, kExitValidation);
  auto again = report;
  again.push_back("--overwrite");
  const auto first = cli(again), second = cli(again);
  EXPECT_EQ(first.out, second.out);
  EXPECT_EQ(line_count(first.out), 3u);

  EXPECT_EQ(cli({"report", "--experiment", "nope", "--x", "quality", "--y", "a", "--store", store, "--out",
                 (tmp_ / "rep2").string()})
                .code,
            kExitValidation);
  EXPECT_EQ(cli({"report", "--experiment", "jpeg_sweep", "--x", "quality", "--y", "no_field", "--store", store,
                 "--out", (tmp_ / "rep3").string()})
                .code,
            kExitValidation);
}

TEST_F(CliTest, FailedRunsGivePartialExit) {
  const auto plan = write_plan("fail", {50});
  const auto r = cli({"run", "--plan", plan.string(), "--store", (tmp_ / "store").string(), "--out",
                      (tmp_ / "o").string()});
  EXPECT_EQ(r.code, kExitPartial);
  EXPECT_EQ(load_json(tmp_ / "o" / "runs.json")[0].at("status"), "failed");
}
