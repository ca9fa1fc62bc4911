#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "physr/error.hpp"
#include "physr/mcq.hpp"
#include "physr/rng.hpp"
#include "physr/rollout.hpp"
#include "physr/text.hpp"

namespace physr::rollout {

enum class MockMode { Scripted, Rigged };

struct MockBehavior {
  MockMode mode = MockMode::Rigged;
  double p = 1.0;           // rigged: probability of answering correctly
  std::uint64_t seed = 0;
  bool emit_logprobs = true;  // when the request asks for logprobs
  std::chrono::microseconds latency{0};
};

/// Fixture key: FNV-1a of the last user message, as 16 hex digits.
inline std::string fixture_key(std::string_view last_user_message) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(last_user_message)));
  return buf;
}

/// Option lines "X: text" (X in A..F) found in a rendered prompt.
inline std::map<char, std::string> parse_presented_options(std::string_view prompt) {
  std::map<char, std::string> out;
  for (const auto& line : text::split_lines(prompt)) {
    if (line.size() >= 3 && line[0] >= 'A' && line[0] <= 'F' && line[1] == ':' && line[2] == ' ') {
      out[line[0]] = line.substr(3);
    }
  }
  return out;
}

/// Deterministic stand-in for a served model speaking the chat-completions
/// wire format. Scripted mode replays fixtures keyed by the last user
/// message; rigged mode answers MCQs correctly with probability p, with every
/// draw keyed by (seed, request seed, question id, sample index).
class MockEndpoint {
 public:
  explicit MockEndpoint(MockBehavior behavior = {}) : behavior_(behavior) {
    if (behavior_.mode == MockMode::Rigged && !(behavior_.p >= 0.0 && behavior_.p <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "rigged accuracy p must be in [0, 1]");
    }
  }

  const MockBehavior& behavior() const { return behavior_; }

  void add_fixture(std::string_view last_user_message, std::vector<std::string> responses) {
    std::lock_guard lock(mu_);
    fixtures_[fixture_key(last_user_message)] = std::move(responses);
  }

  void add_answer_key(const McqItem& item) {
    std::lock_guard lock(mu_);
    answer_key_[item.id] = item;
  }

  template <typename Range>
  void add_answer_keys(const Range& items) {
    for (const auto& item : items) add_answer_key(item);
  }

  /// The next `count` calls fail with `status` before any normal handling.
  void fail_next(int count, int status) {
    std::lock_guard lock(mu_);
    for (int i = 0; i < count; ++i) scripted_failures_.push_back(status);
  }

  /// HTTP-level entry: request body in, status + body out.
  HttpResponse handle(const std::string& body) {
    const int now = ++in_flight_;
    for (int seen = max_in_flight_.load(); now > seen && !max_in_flight_.compare_exchange_weak(seen, now);) {
    }
    struct Leave {
      std::atomic<int>& n;
      ~Leave() { --n; }
    } leave{in_flight_};
    ++requests_;
    if (behavior_.latency.count() > 0) std::this_thread::sleep_for(behavior_.latency);
    {
      std::lock_guard lock(mu_);
      if (!scripted_failures_.empty()) {
        const int status = scripted_failures_.front();
        scripted_failures_.pop_front();
        return {status, R"({"error":"scripted failure"})"};
      }
    }
    try {
      const auto request = nlohmann::json::parse(body);
      const int n = request.value("n", 1);
      completions_requested_ += n;
      return {200, respond(request, n).dump()};
    } catch (const Error& e) {
      return {e.code() == ErrorCode::UnknownFixtureKey ? 404 : 400,
              nlohmann::json{{"error", e.what()}}.dump()};
    } catch (const std::exception& e) {
      return {400, nlohmann::json{{"error", e.what()}}.dump()};
    }
  }

  /// Direct entry without HTTP; throws UnknownFixtureKey in scripted mode.
  std::vector<Completion> complete(const GenerationRequest& request) {
    const auto body = build_request_body("mock", request, request.n_samples);
    completions_requested_ += request.n_samples;
    auto choices = parse_choices(respond(body, request.n_samples), request.request_id);
    for (std::size_t i = 0; i < choices.size(); ++i) choices[i].sample_index = static_cast<int>(i);
    return choices;
  }

  std::uint64_t requests() const { return requests_; }
  std::uint64_t completions_requested() const { return completions_requested_; }
  int max_concurrency() const { return max_in_flight_; }

  void reset_counters() {
    requests_ = 0;
    completions_requested_ = 0;
    max_in_flight_ = 0;
  }

 private:
  nlohmann::json respond(const nlohmann::json& request, int n) {
    std::string last_user;
    for (const auto& m : request.at("messages")) {
      if (m.value("role", "") == "user") last_user = m.value("content", "");
    }
    const bool logprobs = request.value("logprobs", false) && behavior_.emit_logprobs;
    const std::uint64_t request_seed = request.value("seed", std::uint64_t{0});
    std::string question_id;
    if (request.contains("metadata") && request["metadata"].is_object()) {
      question_id = request["metadata"].value("question_id", "");
    }

    nlohmann::json choices = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
      const std::string content = behavior_.mode == MockMode::Scripted
                                      ? scripted(last_user, i)
                                      : rigged(question_id, last_user, request_seed, i);
      nlohmann::json choice = {{"index", i},
                               {"message", {{"role", "assistant"}, {"content", content}}},
                               {"finish_reason", "stop"}};
      if (logprobs) choice["logprobs"] = {{"content", token_logprobs(content, question_id, request_seed, i)}};
      choices.push_back(std::move(choice));
    }
    return {{"object", "chat.completion"}, {"model", request.value("model", "mock")}, {"choices", choices}};
  }

  std::string scripted(const std::string& last_user, int sample) {
    std::lock_guard lock(mu_);
    const auto it = fixtures_.find(fixture_key(last_user));
    if (it == fixtures_.end() || it->second.empty()) {
      throw Error(ErrorCode::UnknownFixtureKey, "no fixture for key " + fixture_key(last_user));
    }
    return it->second[static_cast<std::size_t>(sample) % it->second.size()];
  }

  std::string rigged(const std::string& question_id, const std::string& last_user, std::uint64_t request_seed,
                     int sample) {
    McqItem item;
    {
      std::lock_guard lock(mu_);
      const auto it = answer_key_.find(question_id);
      if (it == answer_key_.end()) throw Error(ErrorCode::UnknownFixtureKey, "no answer key for question \"" + question_id + "\"");
      item = it->second;
    }
    // Locate the correct text among the options as presented (they may be shuffled).
    const std::string& correct_text = item.correct_option().text;
    auto presented = parse_presented_options(last_user);
    if (presented.empty()) {
      for (const auto& o : item.options) presented[o.label] = o.text;
    }
    char correct = item.correct_label;
    std::vector<char> wrong;
    for (const auto& [label, txt] : presented) {
      if (txt == correct_text) correct = label;
    }
    for (const auto& [label, txt] : presented) {
      if (label != correct) wrong.push_back(label);
    }
    SeededRng rng = SeededRng::derive(behavior_.seed, {request_seed, fnv1a64(question_id), static_cast<std::uint64_t>(sample)});
    char answer = correct;
    if (!rng.bernoulli(behavior_.p) && !wrong.empty()) answer = wrong[rng.uniform_below(wrong.size())];
    // Reasoning length varies per sample so downstream latency models see a spread.
    SeededRng len_rng = SeededRng::derive(behavior_.seed ^ 0x9e3779b9ULL,
                                          {request_seed, fnv1a64(question_id), static_cast<std::uint64_t>(sample)});
    std::string think = "Weighing each option against the clip.";
    for (std::uint64_t n = len_rng.uniform_below(24); n > 0; --n) think += " Checking the motion again.";
    return "<think>" + think + "</think> <answer>" + answer + "</answer>";
  }

  nlohmann::json token_logprobs(const std::string& content, const std::string& question_id,
                                std::uint64_t request_seed, int sample) const {
    SeededRng rng = SeededRng::derive(behavior_.seed ^ 0x5bd1e995ULL,
                                      {request_seed, fnv1a64(question_id), static_cast<std::uint64_t>(sample)});
    nlohmann::json out = nlohmann::json::array();
    std::size_t start = 0;
    while (start < content.size()) {
      std::size_t end = content.find(' ', start);
      if (end == std::string::npos) end = content.size();
      out.push_back({{"token", content.substr(start, end - start)}, {"logprob", -rng.uniform(0.01, 2.0)}});
      start = end + 1;
    }
    return out;
  }

  MockBehavior behavior_;
  std::mutex mu_;
  std::unordered_map<std::string, std::vector<std::string>> fixtures_;
  std::unordered_map<std::string, McqItem> answer_key_;
  std::deque<int> scripted_failures_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> completions_requested_{0};
};

/// In-process transport routing every POST to a MockEndpoint.
class MockTransport : public Transport {
 public:
  explicit MockTransport(std::shared_ptr<MockEndpoint> endpoint) : endpoint_(std::move(endpoint)) {}

  HttpResponse post(const std::string&, const std::string& body, const Headers&, double) override {
    return endpoint_->handle(body);
  }

 private:
  std::shared_ptr<MockEndpoint> endpoint_;
};

/// Serves a MockEndpoint over real HTTP on an ephemeral localhost port.
class MockServer {
 public:
  explicit MockServer(std::shared_ptr<MockEndpoint> endpoint, std::string prefix = "/v1")
      : endpoint_(std::move(endpoint)), prefix_(std::move(prefix)) {
    server_.Post(prefix_ + "/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const auto auth = req.get_header_value("Authorization");
      if (!auth.empty()) {
        std::lock_guard lock(auth_mu_);
        last_authorization_ = auth;
      }
      auto out = endpoint_->handle(req.body);
      res.status = out.status;
      res.set_content(out.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw Error(ErrorCode::TransportError, "mock server could not bind");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  int port() const { return port_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + prefix_; }
  std::string last_authorization() const {
    std::lock_guard lock(auth_mu_);
    return last_authorization_;
  }

 private:
  std::shared_ptr<MockEndpoint> endpoint_;
  std::string prefix_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex auth_mu_;
  std::string last_authorization_;
};

/// Reference-model stand-in: perturbs the policy logprobs by a deterministic
/// amount per (seed, request, sample, token). Completions without logprobs
/// cannot be scored.
class MockReferenceScorer : public ReferenceScorer {
 public:
  explicit MockReferenceScorer(std::uint64_t seed = 0, double spread = 0.1) : seed_(seed), spread_(spread) {}

  std::optional<std::vector<double>> score(const GenerationRequest& request, const Completion& c) override {
    if (!c.token_logprobs) return std::nullopt;
    SeededRng rng = SeededRng::derive(seed_, {fnv1a64(request.request_id), static_cast<std::uint64_t>(c.sample_index)});
    std::vector<double> out = *c.token_logprobs;
    for (double& lp : out) lp = std::min(0.0, lp + rng.uniform(-spread_, spread_));
    return out;
  }

 private:
  std::uint64_t seed_;
  double spread_;
};

}  // namespace physr::rollout
