#include <chrono>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "physr/dataset.hpp"
#include "physr/mock_endpoint.hpp"
#include "physr/reward.hpp"
#include "physr/synthetic.hpp"
#include "test_util.hpp"

using physr::ErrorCode;
using physr::SeededRng;
namespace ro = physr::rollout;

namespace {

ro::EndpointConfig fast_config(int max_in_flight = 4) {
  ro::EndpointConfig c;
  c.base_url = "mock://local/v1";
  c.backoff_base_seconds = 0.0;
  c.max_in_flight = max_in_flight;
  return c;
}

ro::Client mock_client(std::shared_ptr<ro::MockEndpoint> ep, ro::EndpointConfig config = fast_config()) {
  return ro::Client(std::move(config), std::make_shared<ro::MockTransport>(std::move(ep)));
}

ro::GenerationRequest user_request(const std::string& id, const std::string& content, int n) {
  ro::GenerationRequest r;
  r.request_id = id;
  r.messages = {{"system", "be brief"}, {"user", content}};
  r.n_samples = n;
  return r;
}

std::shared_ptr<ro::MockEndpoint> rigged(double p, const std::vector<physr::McqItem>& items, std::uint64_t seed = 0) {
  ro::MockBehavior b;
  b.p = p;
  b.seed = seed;
  auto ep = std::make_shared<ro::MockEndpoint>(b);
  ep->add_answer_keys(items);
  return ep;
}

// Returns at most `cap` choices per call, whatever n asks for.
class CappedTransport : public ro::Transport {
 public:
  CappedTransport(std::shared_ptr<ro::MockEndpoint> ep, int cap) : ep_(std::move(ep)), cap_(cap) {}
  ro::HttpResponse post(const std::string&, const std::string& body, const ro::Headers&, double) override {
    auto j = nlohmann::json::parse(body);
    ns.push_back(j.at("n").get<int>());
    j["n"] = std::min(cap_, j.at("n").get<int>());
    return ep_->handle(j.dump());
  }
  std::vector<int> ns;

 private:
  std::shared_ptr<ro::MockEndpoint> ep_;
  int cap_;
};

// Later requests (by their numeric suffix) answer sooner.
class ReversingTransport : public ro::Transport {
 public:
  explicit ReversingTransport(std::shared_ptr<ro::MockEndpoint> ep) : ep_(std::move(ep)) {}
  ro::HttpResponse post(const std::string&, const std::string& body, const ro::Headers&, double) override {
    const auto j = nlohmann::json::parse(body);
    const int k = std::stoi(j.at("metadata").at("question_id").get<std::string>().substr(3));
    std::this_thread::sleep_for(std::chrono::milliseconds(2 * (20 - k % 20)));
    {
      std::lock_guard lock(mu_);
      arrival.push_back(k);
    }
    return ep_->handle(body);
  }
  std::vector<int> arrival;

 private:
  std::mutex mu_;
  std::shared_ptr<ro::MockEndpoint> ep_;
};

}  // namespace

TEST(Client, ScriptedNineIdenticalCompletions) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture("q?", {"<think>x</think><answer>A</answer>"});
  auto client = mock_client(ep);
  const auto out = client.generate(user_request("r1", "q?", 9));
  ASSERT_EQ(out.size(), 9u);
  for (int i = 0; i < 9; ++i) {
    EXPECT_EQ(out[static_cast<std::size_t>(i)].sample_index, i);
    EXPECT_EQ(out[static_cast<std::size_t>(i)].text, "<think>x</think><answer>A</answer>");
    EXPECT_EQ(out[static_cast<std::size_t>(i)].request_id, "r1");
    EXPECT_EQ(out[static_cast<std::size_t>(i)].finish_reason, ro::FinishReason::Stop);
  }
  EXPECT_EQ(ep->requests(), 1u);
}

TEST(Client, UnknownFixtureIsA404) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  auto client = mock_client(ep);
  try {
    client.generate(user_request("r", "never seen", 1));
    FAIL();
  } catch (const physr::EndpointError& e) {
    EXPECT_EQ(e.status(), 404);
    EXPECT_EQ(e.code(), ErrorCode::EndpointError);
  }
  EXPECT_EQ(code_of([&] { ep->complete(user_request("r", "never seen", 1)); }), ErrorCode::UnknownFixtureKey);
}

TEST(Client, RetriesFiveHundredsThenSucceeds) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture("q", {"ok"});
  ep->fail_next(2, 500);
  auto client = mock_client(ep);
  EXPECT_EQ(client.generate(user_request("r", "q", 2)).size(), 2u);
  EXPECT_EQ(ep->requests(), 3u);
}

TEST(Client, GivesUpAfterMaxRetries) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture("q", {"ok"});
  ep->fail_next(4, 503);
  auto client = mock_client(ep);
  try {
    client.generate(user_request("r", "q", 1));
    FAIL();
  } catch (const physr::EndpointError& e) {
    EXPECT_EQ(e.status(), 503);
  }
  EXPECT_EQ(ep->requests(), 4u);  // one try plus three retries
}

TEST(Client, RetriesTooManyRequestsButNotClientErrors) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture("q", {"ok"});
  ep->fail_next(1, 429);
  auto client = mock_client(ep);
  EXPECT_EQ(client.generate(user_request("r", "q", 1)).size(), 1u);
  EXPECT_EQ(ep->requests(), 2u);

  ep->reset_counters();
  ep->fail_next(1, 400);
  EXPECT_EQ(code_of([&] { client.generate(user_request("r", "q", 1)); }), ErrorCode::EndpointError);
  EXPECT_EQ(ep->requests(), 1u);
}

TEST(Client, BackoffDoublesPerAttempt) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture("q", {"ok"});
  ep->fail_next(2, 502);
  auto config = fast_config();
  config.backoff_base_seconds = 0.05;  // 0.05 + 0.10
  auto client = mock_client(ep, config);
  const auto t0 = std::chrono::steady_clock::now();
  client.generate(user_request("r", "q", 1));
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GE(elapsed, 0.15);
  EXPECT_LT(elapsed, 2.0);
}

TEST(Client, ReRequestsMissingChoices) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture("q", {"a", "b", "c"});
  auto transport = std::make_shared<CappedTransport>(ep, 4);
  ro::Client client(fast_config(), transport);
  const auto out = client.generate(user_request("r", "q", 9));
  ASSERT_EQ(out.size(), 9u);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)].sample_index, i);
  EXPECT_EQ(transport->ns, (std::vector<int>{9, 5, 1}));
}

TEST(Client, EmptyChoicesIsAnEndpointError) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture("q", {"a"});
  ro::Client client(fast_config(), std::make_shared<CappedTransport>(ep, 0));
  EXPECT_EQ(code_of([&] { client.generate(user_request("r", "q", 2)); }), ErrorCode::EndpointError);
}

TEST(Client, InvalidRequestsAndConfigs) {
  auto ep = std::make_shared<ro::MockEndpoint>();
  auto client = mock_client(ep);
  auto r = user_request("r", "q", 0);
  EXPECT_EQ(code_of([&] { client.generate(r); }), ErrorCode::InvalidArgument);
  r.n_samples = 1;
  r.top_p = 0.0;
  EXPECT_EQ(code_of([&] { client.generate(r); }), ErrorCode::InvalidArgument);
  auto bad = fast_config();
  bad.max_in_flight = 0;
  EXPECT_EQ(code_of([&] { mock_client(ep, bad); }), ErrorCode::InvalidArgument);
  bad = fast_config();
  bad.timeout_seconds = 0;
  EXPECT_EQ(code_of([&] { mock_client(ep, bad); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { ro::MockEndpoint(ro::MockBehavior{ro::MockMode::Rigged, 1.5}); }),
            ErrorCode::InvalidArgument);
}

TEST(Client, AuthTokenComesFromEnvironment) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture("q", {"ok"});
  ro::MockServer server(ep);
  auto config = fast_config();
  config.base_url = server.base_url();
  config.auth_token_env = "PHYSR_TEST_TOKEN_VAR";
  auto client = ro::Client::http(config);

  ::unsetenv("PHYSR_TEST_TOKEN_VAR");
  EXPECT_EQ(code_of([&] { client.generate(user_request("r", "q", 1)); }), ErrorCode::AuthMissing);
  EXPECT_EQ(ep->requests(), 0u);

  ::setenv("PHYSR_TEST_TOKEN_VAR", "s3cret", 1);
  EXPECT_EQ(client.generate(user_request("r", "q", 1)).at(0).text, "ok");
  EXPECT_EQ(server.last_authorization(), "Bearer s3cret");
  ::unsetenv("PHYSR_TEST_TOKEN_VAR");
}

TEST(Client, HttpRoundTripAndRetryOverRealSocket) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture("q", {"<think>x</think><answer>B</answer>"});
  ep->fail_next(1, 500);
  ro::MockServer server(ep);
  auto config = fast_config();
  config.base_url = server.base_url() + "/";
  auto client = ro::Client::http(config);
  const auto out = client.generate(user_request("r", "q", 3));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[2].text, "<think>x</think><answer>B</answer>");
  EXPECT_EQ(ep->requests(), 2u);
}

TEST(Client, TimeoutWhenServerIsSlow) {
  ro::MockBehavior b{ro::MockMode::Scripted};
  b.latency = std::chrono::milliseconds(600);
  auto ep = std::make_shared<ro::MockEndpoint>(b);
  ep->add_fixture("q", {"ok"});
  ro::MockServer server(ep);
  auto config = fast_config();
  config.base_url = server.base_url();
  config.timeout_seconds = 0.15;
  config.max_retries = 1;
  auto client = ro::Client::http(config);
  EXPECT_EQ(code_of([&] { client.generate(user_request("r", "q", 1)); }), ErrorCode::Timeout);
}

TEST(Client, ConnectionRefusedIsATransportError) {
  int port = 0;
  {
    auto ep = std::make_shared<ro::MockEndpoint>();
    ro::MockServer server(ep);
    port = server.port();
  }
  auto config = fast_config();
  config.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  config.max_retries = 0;
  auto client = ro::Client::http(config);
  EXPECT_EQ(code_of([&] { client.generate(user_request("r", "q", 1)); }), ErrorCode::TransportError);
}

TEST(Rigged, PerfectAndHopelessModels) {
  SeededRng gen(1);
  const auto items = physr::synthetic::items_for(physr::Source::Av, 200, gen);  // binary
  for (double p : {1.0, 0.0}) {
    auto ep = rigged(p, items);
    for (const auto& item : items) {
      auto r = ro::make_mcq_request(item, "r", 3, 0.6, 0.95, 64);
      for (const auto& c : ep->complete(r)) {
        const auto parsed = physr::reward::parse_response(c.text);
        ASSERT_TRUE(parsed.strict_format_ok);
        const char want = p == 1.0 ? item.correct_label : (item.correct_label == 'A' ? 'B' : 'A');
        ASSERT_EQ(parsed.answer, std::string(1, want));
      }
    }
  }
}

TEST(Rigged, AccuracyMatchesPWithinThreeSigma) {
  SeededRng gen(2);
  const auto items = physr::synthetic::items_for(physr::Source::BridgeV2, 1000, gen);
  auto ep = rigged(0.7, items, 5);
  int correct = 0;
  for (const auto& item : items) {
    const auto c = ep->complete(ro::make_mcq_request(item, "r", 1, 0.6, 0.95, 64)).at(0);
    correct += physr::reward::accuracy_reward(physr::reward::parse_response(c.text), item);
  }
  EXPECT_NEAR(correct / 1000.0, 0.70, 0.045);
}

TEST(Rigged, FollowsShuffledPresentation) {
  SeededRng gen(3);
  auto items = physr::synthetic::items_for(physr::Source::RoboVqa, 50, gen);
  auto ep = rigged(1.0, items);
  SeededRng shuffle_rng(4);
  for (const auto& item : items) {
    const auto presented = physr::dataset::shuffle_options(item, shuffle_rng);
    const auto c = ep->complete(ro::make_mcq_request(presented, "r", 1, 0.6, 0.95, 64)).at(0);
    EXPECT_EQ(physr::reward::accuracy_reward(physr::reward::parse_response(c.text), presented), 1);
  }
}

TEST(Rigged, DeterministicGivenSeedQuestionAndSample) {
  SeededRng gen(4);
  const auto items = physr::synthetic::items_for(physr::Source::Agibot, 30, gen);
  auto a = rigged(0.5, items, 9), b = rigged(0.5, items, 9), c = rigged(0.5, items, 10);
  bool any_diff = false;
  for (const auto& item : items) {
    auto r = ro::make_mcq_request(item, "r", 4, 0.6, 0.95, 64);
    r.seed = 77;
    r.logprobs = true;
    const auto x = a->complete(r);
    EXPECT_EQ(x, b->complete(r));
    any_diff |= x != c->complete(r);
    ASSERT_TRUE(x[0].token_logprobs.has_value());
  }
  EXPECT_TRUE(any_diff);
}

TEST(Rigged, UnknownQuestionIsRejected) {
  auto ep = rigged(1.0, {});
  SeededRng gen(5);
  const auto item = physr::synthetic::items_for(physr::Source::Av, 1, gen)[0];
  EXPECT_EQ(code_of([&] { ep->complete(ro::make_mcq_request(item, "r", 1, 0.6, 0.95, 64)); }),
            ErrorCode::UnknownFixtureKey);
}

TEST(Batch, RespectsInFlightCapAndKeepsOrder) {
  SeededRng gen(6);
  std::vector<physr::McqItem> items = physr::synthetic::items_for(physr::Source::Aot, 60, gen);
  for (std::size_t i = 0; i < items.size(); ++i) items[i].id = "aot" + std::to_string(i);
  ro::MockBehavior b;
  b.latency = std::chrono::milliseconds(3);
  auto ep = std::make_shared<ro::MockEndpoint>(b);
  ep->add_answer_keys(items);
  auto transport = std::make_shared<ReversingTransport>(ep);
  ro::Client client(fast_config(5), transport);
  std::vector<ro::GenerationRequest> requests;
  for (std::size_t i = 0; i < items.size(); ++i) {
    requests.push_back(ro::make_mcq_request(items[i], "req" + std::to_string(i), 2, 0.6, 0.95, 64));
  }
  const auto results = client.generate_batch(requests);
  ASSERT_EQ(results.size(), requests.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    ASSERT_TRUE(results[i].ok()) << *results[i].error;
    ASSERT_EQ(results[i].completions.size(), 2u);
    EXPECT_EQ(results[i].completions[0].request_id, "req" + std::to_string(i));
  }
  EXPECT_LE(ep->max_concurrency(), 5);
  EXPECT_GE(ep->max_concurrency(), 2);
  EXPECT_FALSE(std::is_sorted(transport->arrival.begin(), transport->arrival.end()));
}

TEST(Batch, PerRequestErrorsDoNotSinkTheBatch) {
  auto ep = std::make_shared<ro::MockEndpoint>(ro::MockBehavior{ro::MockMode::Scripted});
  ep->add_fixture("known", {"ok"});
  auto client = mock_client(ep, fast_config(1));
  const std::vector<ro::GenerationRequest> requests{user_request("a", "known", 1), user_request("b", "missing", 1),
                                                    user_request("c", "known", 1)};
  const auto results = client.generate_batch(requests);
  EXPECT_TRUE(results[0].ok());
  EXPECT_FALSE(results[1].ok());
  EXPECT_EQ(results[1].error_code, ErrorCode::EndpointError);
  EXPECT_TRUE(results[2].ok());
}

TEST(Wire, RequestBodyShape) {
  auto r = user_request("r", "hello", 9);
  r.question_id = "q1";
  r.logprobs = true;
  r.seed = 3;
  const auto body = ro::build_request_body("m", r, 9);
  EXPECT_EQ(body.at("model"), "m");
  EXPECT_EQ(body.at("n"), 9);
  EXPECT_EQ(body.at("messages").size(), 2u);
  EXPECT_EQ(body.at("metadata").at("question_id"), "q1");
  EXPECT_EQ(body.at("logprobs"), true);
  EXPECT_EQ(body.at("seed"), 3);
  EXPECT_DOUBLE_EQ(body.at("temperature").get<double>(), 0.6);
  EXPECT_DOUBLE_EQ(body.at("top_p").get<double>(), 0.95);
  EXPECT_EQ(body.at("max_tokens"), 6144);
}

TEST(Wire, ParseChoicesReadsLogprobsAndFinishReason) {
  const auto body = nlohmann::json::parse(R"({"choices":[
    {"message":{"content":"x"},"finish_reason":"length","logprobs":{"content":[{"token":"x","logprob":-0.5}]}},
    {"message":{"content":null},"finish_reason":"content_filter"}]})");
  const auto c = ro::parse_choices(body, "r");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].finish_reason, ro::FinishReason::Length);
  EXPECT_EQ(c[0].token_logprobs, std::vector<double>{-0.5});
  EXPECT_EQ(c[1].text, "");
  EXPECT_EQ(c[1].finish_reason, ro::FinishReason::Error);
  EXPECT_FALSE(c[1].token_logprobs);
}

TEST(Wire, BaseUrlSplit) {
  const auto p = ro::parse_base_url("https://host:8443/api/v1/");
  EXPECT_EQ(p.origin, "https://host:8443");
  EXPECT_EQ(p.path_prefix, "/api/v1");
  EXPECT_EQ(ro::parse_base_url("http://h").path_prefix, "");
  EXPECT_EQ(code_of([] { ro::parse_base_url("localhost:80"); }), ErrorCode::InvalidArgument);
}

TEST(Wire, PromptListsOptionsForTheMock) {
  const auto item = physr::make_item("q", physr::Source::Av, "Q?", {"Yes", "No"}, 1);
  const auto prompt = ro::render_mcq_prompt(item);
  const auto opts = ro::parse_presented_options(prompt);
  EXPECT_EQ(opts, (std::map<char, std::string>{{'A', "Yes"}, {'B', "No"}}));
}

TEST(MockReference, ScoresOnlyWhenLogprobsPresent) {
  ro::MockReferenceScorer ref(1);
  ro::Completion c;
  c.request_id = "r";
  EXPECT_FALSE(ref.score(user_request("r", "q", 1), c));
  c.token_logprobs = std::vector<double>{-0.5, -1.0};
  const auto s = ref.score(user_request("r", "q", 1), c);
  ASSERT_TRUE(s);
  ASSERT_EQ(s->size(), 2u);
  for (double v : *s) EXPECT_LE(v, 0.0);
}
