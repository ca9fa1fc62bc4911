#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "physr/error.hpp"
#include "physr/mcq.hpp"

namespace physr::rollout {

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model = "default";
  std::string auth_token_env;  // empty: no Authorization header
  double timeout_seconds = 600.0;
  int max_retries = 3;
  double backoff_base_seconds = 1.0;
  int max_in_flight = 16;
};

inline void validate(const EndpointConfig& c) {
  if (c.max_in_flight < 1) throw Error(ErrorCode::InvalidArgument, "max_in_flight must be >= 1");
  if (!(c.timeout_seconds > 0.0)) throw Error(ErrorCode::InvalidArgument, "timeout must be > 0");
  if (c.max_retries < 0) throw Error(ErrorCode::InvalidArgument, "max_retries must be >= 0");
  if (c.backoff_base_seconds < 0.0) throw Error(ErrorCode::InvalidArgument, "backoff_base must be >= 0");
}

struct Message {
  std::string role;
  std::string content;
};

struct GenerationRequest {
  std::string request_id;
  std::string question_id;  // forwarded as metadata.question_id when set
  std::vector<Message> messages;
  double temperature = 0.6;
  double top_p = 0.95;
  int max_tokens = 6144;
  int n_samples = 1;
  bool logprobs = false;
  std::optional<std::uint64_t> seed;
};

inline void validate(const GenerationRequest& r) {
  if (r.n_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 1");
  if (r.temperature < 0.0) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (!(r.top_p > 0.0 && r.top_p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "top_p must be in (0, 1]");
  if (r.max_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_tokens must be >= 1");
}

enum class FinishReason { Stop, Length, Error };

inline constexpr std::string_view machine_name(FinishReason f) {
  switch (f) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Error: return "error";
  }
  return "error";
}

struct Completion {
  std::string request_id;
  int sample_index = 0;
  std::string text;
  std::optional<std::vector<double>> token_logprobs;
  FinishReason finish_reason = FinishReason::Stop;

  friend bool operator==(const Completion&, const Completion&) = default;
};

/// "{question}\n\nA: ...\nB: ...\n\n{instruction}". The option block format is
/// what the mock endpoint parses to locate the presented correct label.
inline std::string render_mcq_prompt(const McqItem& item) {
  std::string s = item.question;
  s += "\n\n";
  for (const auto& o : item.options) {
    s += o.label;
    s += ": ";
    s += o.text;
    s += '\n';
  }
  s += "\nPut your reasoning inside <think></think> and the letter of the chosen option inside "
       "<answer></answer>.";
  return s;
}

inline GenerationRequest make_mcq_request(const McqItem& item, std::string request_id, int n_samples,
                                          double temperature, double top_p, int max_tokens) {
  GenerationRequest r;
  r.request_id = std::move(request_id);
  r.question_id = item.id;
  r.messages.push_back({"user", render_mcq_prompt(item)});
  r.n_samples = n_samples;
  r.temperature = temperature;
  r.top_p = top_p;
  r.max_tokens = max_tokens;
  return r;
}

// --- Wire format (OpenAI-style chat completions) -----------------------

inline nlohmann::json build_request_body(const std::string& model, const GenerationRequest& r, int n) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : r.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  nlohmann::json body = {{"model", model},
                         {"messages", messages},
                         {"temperature", r.temperature},
                         {"top_p", r.top_p},
                         {"max_tokens", r.max_tokens},
                         {"n", n}};
  if (r.logprobs) body["logprobs"] = true;
  if (r.seed) body["seed"] = *r.seed;
  if (!r.question_id.empty()) body["metadata"] = {{"question_id", r.question_id}};
  return body;
}

inline FinishReason parse_finish_reason(const nlohmann::json& v) {
  if (!v.is_string()) return FinishReason::Stop;
  const auto s = v.get<std::string>();
  if (s == "stop") return FinishReason::Stop;
  if (s == "length") return FinishReason::Length;
  return FinishReason::Error;
}

/// Choices in the order the server listed them; sample_index left at 0.
inline std::vector<Completion> parse_choices(const nlohmann::json& body, const std::string& request_id) {
  std::vector<Completion> out;
  for (const auto& choice : body.at("choices")) {
    Completion c;
    c.request_id = request_id;
    const auto& content = choice.at("message").at("content");
    c.text = content.is_string() ? content.get<std::string>() : std::string{};
    c.finish_reason = parse_finish_reason(choice.value("finish_reason", nlohmann::json()));
    if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
        choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
      std::vector<double> lp;
      for (const auto& tok : choice["logprobs"]["content"]) lp.push_back(tok.at("logprob").get<double>());
      c.token_logprobs = std::move(lp);
    }
    out.push_back(std::move(c));
  }
  return out;
}

// --- Transport ----------------------------------------------------------

struct HttpResponse {
  int status = 0;
  std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

/// One POST; throws Error(Timeout) or Error(TransportError) when no HTTP
/// response was received.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body, const Headers& headers,
                            double timeout_seconds) = 0;
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path_prefix;
};

inline ParsedUrl parse_base_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw Error(ErrorCode::InvalidArgument, "base_url needs a scheme: " + std::string(url));
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.origin = std::string(url.substr(0, path_start));
  if (path_start != std::string_view::npos) p.path_prefix = std::string(url.substr(path_start));
  while (!p.path_prefix.empty() && p.path_prefix.back() == '/') p.path_prefix.pop_back();
  return p;
}

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::string origin) : origin_(std::move(origin)) {}

  HttpResponse post(const std::string& path, const std::string& body, const Headers& headers,
                    double timeout_seconds) override {
    httplib::Client client(origin_);
    const auto timeout = std::chrono::duration<double>(timeout_seconds);
    const auto micro = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
    client.set_connection_timeout(micro);
    client.set_read_timeout(micro);
    client.set_write_timeout(micro);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             (err == httplib::Error::Read &&
                              std::chrono::steady_clock::now() - started >= timeout * 0.99);
      throw Error(timed_out ? ErrorCode::Timeout : ErrorCode::TransportError,
                  origin_ + path + ": " + httplib::to_string(err));
    }
    return {res->status, res->body};
  }

 private:
  std::string origin_;
};

// --- Client -------------------------------------------------------------

inline bool is_retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

inline std::string excerpt(std::string_view body, std::size_t limit = 200) {
  return std::string(body.substr(0, limit));
}

/// Per-request outcome of a batch: completions, or the error that ended it.
struct RequestResult {
  std::vector<Completion> completions;
  std::optional<std::string> error;
  std::optional<ErrorCode> error_code;

  bool ok() const { return !error.has_value(); }
};

/// Chat-completions client with retry/backoff and a process-wide cap on
/// outstanding requests. Thread-safe; one instance may serve many callers.
class Client {
 public:
  Client(EndpointConfig config, std::shared_ptr<Transport> transport)
      : config_((validate(config), std::move(config))),
        transport_(std::move(transport)),
        slots_(config_.max_in_flight) {
    path_ = parse_base_url(config_.base_url).path_prefix + "/chat/completions";
  }

  /// Client over real HTTP(S) at config.base_url.
  static Client http(EndpointConfig config) {
    auto origin = parse_base_url(config.base_url).origin;
    return Client(std::move(config), std::make_shared<HttpTransport>(std::move(origin)));
  }

  const EndpointConfig& config() const { return config_; }

  /// Exactly request.n_samples completions with sample_index 0..n-1.
  std::vector<Completion> generate(const GenerationRequest& request) {
    validate(request);
    Headers headers = auth_headers();
    std::vector<Completion> out;
    // Servers may return fewer choices than `n`; ask again for the remainder.
    for (int round = 0; static_cast<int>(out.size()) < request.n_samples; ++round) {
      const int want = request.n_samples - static_cast<int>(out.size());
      const std::string body = build_request_body(config_.model, request, want).dump();
      auto got = post_with_retries(body, headers, request.request_id);
      if (got.empty() || round > request.n_samples) {
        throw EndpointError(200, "endpoint returned no choices for " + request.request_id);
      }
      for (auto& c : got) {
        if (static_cast<int>(out.size()) == request.n_samples) break;
        c.sample_index = static_cast<int>(out.size());
        out.push_back(std::move(c));
      }
    }
    return out;
  }

  /// Runs requests concurrently (bounded by max_in_flight); results keep the
  /// order of `requests` regardless of arrival order.
  std::vector<RequestResult> generate_batch(std::span<const GenerationRequest> requests) {
    std::vector<RequestResult> results(requests.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
      for (std::size_t i = next++; i < requests.size(); i = next++) {
        try {
          results[i].completions = generate(requests[i]);
        } catch (const Error& e) {
          results[i].error = e.what();
          results[i].error_code = e.code();
        } catch (const std::exception& e) {
          results[i].error = e.what();
          results[i].error_code = ErrorCode::TransportError;
        }
      }
    };
    const std::size_t n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(config_.max_in_flight), requests.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n_workers; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    return results;
  }

 private:
  Headers auth_headers() const {
    Headers h;
    if (!config_.auth_token_env.empty()) {
      const char* token = std::getenv(config_.auth_token_env.c_str());
      if (!token || !*token) {
        throw Error(ErrorCode::AuthMissing, "environment variable " + config_.auth_token_env + " is not set");
      }
      h.emplace_back("Authorization", std::string("Bearer ") + token);
    }
    return h;
  }

  std::vector<Completion> post_with_retries(const std::string& body, const Headers& headers,
                                            const std::string& request_id) {
    for (int attempt = 0;; ++attempt) {
      const bool last = attempt >= config_.max_retries;
      HttpResponse res;
      try {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<>& s;
          ~Release() { s.release(); }
        } release{slots_};
        res = transport_->post(path_, body, headers, config_.timeout_seconds);
      } catch (const Error& e) {
        if (last || (e.code() != ErrorCode::Timeout && e.code() != ErrorCode::TransportError)) throw;
        backoff(attempt);
        continue;
      }
      if (res.status >= 200 && res.status < 300) {
        try {
          return parse_choices(nlohmann::json::parse(res.body), request_id);
        } catch (const nlohmann::json::exception& e) {
          throw EndpointError(res.status, std::string("malformed response: ") + e.what());
        }
      }
      if (last || !is_retryable_status(res.status)) throw EndpointError(res.status, excerpt(res.body));
      backoff(attempt);
    }
  }

  void backoff(int attempt) const {
    const double seconds = config_.backoff_base_seconds * std::ldexp(1.0, attempt);
    if (seconds > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  }

  EndpointConfig config_;
  std::shared_ptr<Transport> transport_;
  std::string path_;
  std::counting_semaphore<> slots_;
};

/// Log probabilities of a completion's tokens under a frozen reference model.
/// Returns nullopt when the reference pass cannot score the completion.
class ReferenceScorer {
 public:
  virtual ~ReferenceScorer() = default;
  virtual std::optional<std::vector<double>> score(const GenerationRequest& request,
                                                   const Completion& completion) = 0;
};

}  // namespace physr::rollout
