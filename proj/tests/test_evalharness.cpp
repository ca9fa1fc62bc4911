#include <map>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "physr/evalharness.hpp"
#include "physr/mock_endpoint.hpp"
#include "physr/synthetic.hpp"
#include "test_util.hpp"

using physr::ErrorCode;
using physr::SeededRng;
using physr::Source;
using physr::ontology::Category;
namespace ev = physr::eval;
namespace ro = physr::rollout;

namespace {

struct Harness {
  std::shared_ptr<ro::MockEndpoint> endpoint;
  ro::Client client;
};

Harness rigged_harness(double p, const std::vector<physr::McqItem>& items, std::uint64_t seed = 0) {
  ro::MockBehavior b;
  b.p = p;
  b.seed = seed;
  auto ep = std::make_shared<ro::MockEndpoint>(b);
  ep->add_answer_keys(items);
  ro::EndpointConfig config;
  config.base_url = "mock://rigged/v1";
  config.backoff_base_seconds = 0;
  config.max_in_flight = 8;
  return {ep, ro::Client(config, std::make_shared<ro::MockTransport>(ep))};
}

std::vector<physr::McqItem> mixed_items(std::size_t per_source, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<physr::McqItem> out;
  for (Source s : {Source::BridgeV2, Source::RoboFail, Source::Av, Source::HoloAssist}) {
    auto items = physr::synthetic::items_for(s, per_source, rng);
    out.insert(out.end(), items.begin(), items.end());
  }
  return out;
}

// Published 56B common-sense row: space, time, fundamental physics.
const std::map<Category, double> k56B = {
    {Category::Space, 0.613}, {Category::Time, 0.655}, {Category::FundamentalPhysics, 0.539}};

// Published 8B embodied row by source.
const std::map<Source, double> k8B = {{Source::BridgeV2, 0.500}, {Source::RoboVqa, 0.845}, {Source::Agibot, 0.432},
                                      {Source::HoloAssist, 0.576}, {Source::Av, 0.625},   {Source::RoboFail, 0.620}};

}  // namespace

TEST(RunEval, PerfectModelScoresOne) {
  const auto items = mixed_items(10, 1);
  auto h = rigged_harness(1.0, items);
  ev::EvalRunSpec spec;
  spec.n_runs = 2;
  const auto r = ev::run_eval(spec, items, h.client);
  EXPECT_EQ(r.per_run.size(), 2u);
  for (const auto& run : r.per_run) {
    for (const auto& [s, v] : run) EXPECT_EQ(v, 1.0);
  }
  EXPECT_EQ(r.overall, 1.0);
  EXPECT_EQ(r.trials, 80u);
  EXPECT_EQ(r.errored, 0u);
  EXPECT_EQ(r.grouping, ev::Grouping::Source);
}

TEST(RunEval, RiggedSeventyPercentOverFiveRuns) {
  const auto items = mixed_items(25, 2);
  auto h = rigged_harness(0.7, items, 3);
  ev::EvalRunSpec spec;  // 5 runs at 0.6 / 0.95
  const auto r = ev::run_eval(spec, items, h.client);
  ASSERT_TRUE(r.overall);
  EXPECT_NEAR(*r.overall, 0.70, 0.05);
  EXPECT_EQ(h.endpoint->completions_requested(), 500u);
  EXPECT_EQ(r.config.at("temperature"), 0.6);
  EXPECT_EQ(r.config.at("top_p"), 0.95);
  EXPECT_EQ(r.config.at("n_runs"), 5);
}

TEST(RunEval, ByteIdenticalOnRepeat) {
  const auto items = mixed_items(25, 4);
  ev::EvalRunSpec spec;
  spec.shuffle = true;
  spec.base_seed = 11;
  auto h1 = rigged_harness(0.7, items, 3);
  auto h2 = rigged_harness(0.7, items, 3);
  const auto a = ev::render_report(ev::run_eval(spec, items, h1.client), ev::ReportFormat::Json);
  const auto b = ev::render_report(ev::run_eval(spec, items, h2.client), ev::ReportFormat::Json);
  EXPECT_EQ(a, b);
}

TEST(RunEval, PerRunAccuracyIsCorrectOverCount) {
  // Recount each trial by replaying the identical request against a twin mock.
  const auto items = mixed_items(15, 5);
  auto h = rigged_harness(0.6, items, 8);
  auto twin = rigged_harness(0.6, items, 8);
  ev::EvalRunSpec spec;
  spec.n_runs = 3;
  spec.base_seed = 100;
  const auto r = ev::run_eval(spec, items, h.client);
  for (int run = 0; run < 3; ++run) {
    std::map<Source, int> correct, total;
    for (const auto& item : items) {
      auto req = ro::make_mcq_request(item, "x", 1, 0.6, 0.95, 6144);
      req.seed = 100 + static_cast<std::uint64_t>(run);
      const auto text = twin.endpoint->complete(req).at(0).text;
      const auto answer = text.substr(text.find("<answer>") + 8, 1);
      correct[item.source] += answer == std::string(1, item.correct_label);
      ++total[item.source];
    }
    for (const auto& [s, n] : total) {
      EXPECT_EQ(r.per_run[static_cast<std::size_t>(run)].at(s), static_cast<double>(correct[s]) / n);
    }
  }
  for (const auto& [s, mean] : r.per_source_mean) {
    double sum = 0;
    for (const auto& run : r.per_run) sum += run.at(s);
    EXPECT_DOUBLE_EQ(mean, sum / 3);
  }
}

TEST(RunEval, ErroredItemsScoreZeroAndAreFlagged) {
  auto items = mixed_items(5, 6);
  auto h = rigged_harness(1.0, items);
  physr::McqItem stranger = items[0];
  stranger.id = "not-in-answer-key";
  items.push_back(stranger);
  ev::EvalRunSpec spec;
  spec.n_runs = 2;
  const auto r = ev::run_eval(spec, items, h.client);
  EXPECT_EQ(r.errored, 2u);
  ASSERT_EQ(r.errored_trials.size(), 2u);
  EXPECT_EQ(r.errored_trials[0].item_id, "not-in-answer-key");
  EXPECT_DOUBLE_EQ(r.per_source_mean.at(stranger.source), 5.0 / 6.0);
}

TEST(RunEval, CommonSenseGroupsByCategory) {
  auto all = physr::synthetic::benchmark_items(7);
  std::vector<physr::McqItem> cs(all.begin(), all.begin() + 604);
  auto h = rigged_harness(1.0, cs);
  ev::EvalRunSpec spec;
  spec.n_runs = 1;
  const auto r = ev::run_eval(spec, cs, h.client);
  EXPECT_EQ(r.grouping, ev::Grouping::Category);
  EXPECT_EQ(r.per_category_mean.size(), 3u);
  EXPECT_EQ(r.overall, 1.0);
}

TEST(RunEval, StrictExtractionIgnoresUntaggedLetters) {
  const auto item = physr::make_item("u", Source::Av, "Q?", {"Yes", "No"}, 0);
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture(ro::render_mcq_prompt(item), {"I pick A"});
  ro::EndpointConfig config;
  config.backoff_base_seconds = 0;
  ro::Client client(config, std::make_shared<ro::MockTransport>(ep));
  ev::EvalRunSpec spec;
  spec.n_runs = 1;
  const std::vector<physr::McqItem> items{item};
  EXPECT_EQ(ev::run_eval(spec, items, client).overall, 1.0);
  spec.extraction = physr::reward::Extraction::Strict;
  EXPECT_EQ(ev::run_eval(spec, items, client).overall, 0.0);
}

TEST(RunEval, RejectsZeroRuns) {
  const auto items = mixed_items(1, 1);
  auto h = rigged_harness(1.0, items);
  ev::EvalRunSpec spec;
  spec.n_runs = 0;
  EXPECT_EQ(code_of([&] { ev::run_eval(spec, items, h.client); }), ErrorCode::InvalidArgument);
}

TEST(Aggregate, CommonSenseRowAveragesUnweighted) {
  const auto r = ev::report_from_category_means("56B", k56B);
  ASSERT_TRUE(r.overall);
  EXPECT_EQ(ev::percent(r.overall), "60.2");
  // Weighting by question counts instead would give 60.6.
  const double weighted = (0.613 * 80 + 0.655 * 298 + 0.539 * 226) / 604;
  EXPECT_EQ(ev::percent(weighted), "60.6");
  const auto md = ev::render_report(r, ev::ReportFormat::Markdown);
  EXPECT_NE(md.find("| 56B | 61.3 | 65.5 | 53.9 | 60.2 |"), std::string::npos) << md;
  EXPECT_NE(md.find("| Model | Space | Time | Fundamental Physics | Avg. |"), std::string::npos) << md;
}

TEST(Aggregate, EmbodiedRowAveragesToSixty) {
  const auto r = ev::report_from_source_means("8B", k8B);
  EXPECT_EQ(ev::percent(r.overall), "60.0");
  const double by_hand = (0.500 + 0.845 + 0.432 + 0.576 + 0.625 + 0.620) / 6;
  EXPECT_NEAR(*r.overall, by_hand, 1e-12);
  const auto csv = ev::render_report(r, ev::ReportFormat::Csv);
  EXPECT_EQ(csv,
            "model,bridge_v2,robovqa,robofail,agibot,holoassist,av,avg,items,runs\n"
            "8B,50.0,84.5,62.0,43.2,57.6,62.5,60.0,0,1\n");
}

TEST(Render, EmptyReportRendersNa) {
  ev::EvalReport empty;
  empty.label = "none";
  ev::aggregate(empty);
  const auto md = ev::render_report(empty, ev::ReportFormat::Markdown);
  EXPECT_NE(md.find("| none | n/a | 0 | 0 |"), std::string::npos) << md;
  const auto j = nlohmann::json::parse(ev::render_report(empty, ev::ReportFormat::Json));
  EXPECT_TRUE(j.at("overall").is_null());
  EXPECT_EQ(j.at("counts").at("trials"), 0);
}

TEST(Render, MultipleReportsShareColumnsAndShowGaps) {
  const std::vector<ev::EvalReport> reports{
      ev::report_from_source_means("a", {{Source::Av, 0.5}}),
      ev::report_from_source_means("b", {{Source::Av, 0.25}, {Source::Agibot, 1.0}})};
  const auto csv = ev::render_reports(reports, ev::ReportFormat::Csv);
  EXPECT_EQ(csv, "model,agibot,av,avg,items,runs\na,n/a,50.0,50.0,0,1\nb,100.0,25.0,62.5,0,1\n");
  const auto json = nlohmann::json::parse(ev::render_reports(reports, ev::ReportFormat::Json));
  EXPECT_TRUE(json.is_array());
  EXPECT_EQ(json.size(), 2u);
}

TEST(Render, JsonRoundTrip) {
  const auto items = mixed_items(8, 9);
  auto h = rigged_harness(0.5, items, 1);
  ev::EvalRunSpec spec;
  spec.n_runs = 3;
  const auto r = ev::run_eval(spec, items, h.client);
  const auto back = ev::report_from_json(ev::to_json(r));
  EXPECT_EQ(ev::to_json(back).at("per_source_mean"), ev::to_json(r).at("per_source_mean"));
  EXPECT_EQ(back.overall, r.overall);
  EXPECT_EQ(back.items, r.items);
  EXPECT_THROW(ev::report_from_json(nlohmann::json::object()), physr::ParseError);
}

TEST(Render, FormatNames) {
  EXPECT_EQ(ev::parse_report_format("md"), ev::ReportFormat::Markdown);
  EXPECT_EQ(ev::parse_report_format("CSV"), ev::ReportFormat::Csv);
  EXPECT_EQ(code_of([] { ev::parse_report_format("html"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(ev::percent(std::nullopt), "n/a");
  EXPECT_EQ(ev::percent(0.6025), "60.2");
}
