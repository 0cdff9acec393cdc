#pragma once

// HTTP chat-completion gateway and embeddings provider speaking the common
// OpenAI-style wire format.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>

#include "httplib.h"
#include "json.hpp"

#include "arquest/embedding.hpp"
#include "arquest/error.hpp"
#include "arquest/llm/types.hpp"
#include "arquest/log.hpp"

namespace arquest::llm {

inline constexpr const char* kApiKeyVariable = "ARQUEST_LLM_KEY";

struct RemoteConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";  // scheme://host[:port][/prefix]
  std::string model = "gpt-4.1";
  std::string embedding_model = "text-embedding-3-small";
  int retries = 2;
  double backoff_base_seconds = 0.5;
  double timeout_seconds = 60;
  int max_in_flight = 4;
  double temperature = 0;
};

inline RemoteConfig remote_config_from_json(const json& j) {
  RemoteConfig c;
  if (j.contains("base_url")) c.base_url = j.at("base_url").get<std::string>();
  if (j.contains("model")) c.model = j.at("model").get<std::string>();
  if (j.contains("embedding_model")) c.embedding_model = j.at("embedding_model").get<std::string>();
  if (j.contains("retries")) c.retries = j.at("retries").get<int>();
  if (j.contains("backoff_base_seconds")) c.backoff_base_seconds = j.at("backoff_base_seconds").get<double>();
  if (j.contains("timeout_seconds")) c.timeout_seconds = j.at("timeout_seconds").get<double>();
  if (j.contains("max_in_flight")) c.max_in_flight = j.at("max_in_flight").get<int>();
  if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
  if (c.retries < 0 || c.max_in_flight < 1) throw ConfigError("remote gateway: bad retry or concurrency setting");
  return c;
}

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

inline SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: '" + url + "'");
  auto path_begin = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_begin);
  out.prefix = path_begin == std::string::npos ? std::string() : url.substr(path_begin);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

// Shared HTTP plumbing: bounded concurrency plus retry with exponential backoff.
class HttpJsonClient {
 public:
  using Sleeper = std::function<void(double seconds)>;

  explicit HttpJsonClient(RemoteConfig config)
      : config_(std::move(config)),
        url_(split_url(config_.base_url)),
        slots_(std::make_unique<std::counting_semaphore<64>>(std::min(config_.max_in_flight, 64))),
        sleeper_([](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); }) {
    if (const char* key = std::getenv(kApiKeyVariable)) api_key_ = key;
  }

  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }
  void set_api_key(std::string key) { api_key_ = std::move(key); }
  const RemoteConfig& config() const { return config_; }

  // At most retries + 1 attempts; EndpointError carries the last failure.
  json post(const std::string& path, const json& body) {
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
      if (attempt > 0) sleeper_(config_.backoff_base_seconds * std::pow(2.0, attempt - 1));
      std::pair<std::optional<json>, std::string> result;
      {
        slots_->acquire();
        struct Release {
          std::counting_semaphore<64>* s;
          ~Release() { s->release(); }
        } release{slots_.get()};
        result = send(path, body);
      }
      if (result.first) return *result.first;
      last_error = result.second;
      log::warn("remote call to " + path + " failed (attempt " + std::to_string(attempt + 1) + "): " + last_error);
    }
    throw EndpointError("remote endpoint failed after " + std::to_string(config_.retries + 1) +
                        " attempts: " + last_error);
  }

 private:
  std::pair<std::optional<json>, std::string> send(const std::string& path, const json& body) {
    httplib::Client client(url_.origin);
    if (!client.is_valid()) return {std::nullopt, "cannot use base URL '" + url_.origin + "'"};
    auto secs = static_cast<time_t>(config_.timeout_seconds);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(url_.prefix + path, headers, body.dump(), "application/json");
    if (!res) return {std::nullopt, "transport error: " + httplib::to_string(res.error())};
    if (res->status < 200 || res->status >= 300) return {std::nullopt, "HTTP " + std::to_string(res->status)};
    auto parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) return {std::nullopt, "response body is not JSON"};
    return {std::move(parsed), {}};
  }

  RemoteConfig config_;
  SplitUrl url_;
  std::string api_key_;
  std::unique_ptr<std::counting_semaphore<64>> slots_;
  Sleeper sleeper_;
};

}  // namespace detail

class RemoteGateway final : public Gateway {
 public:
  explicit RemoteGateway(RemoteConfig config) : http_(std::move(config)) {}

  void set_sleeper(detail::HttpJsonClient::Sleeper s) { http_.set_sleeper(std::move(s)); }
  void set_api_key(std::string key) { http_.set_api_key(std::move(key)); }

  std::string model_name() const override { return http_.config().model; }

  ModelReply complete(const Prompt& prompt) override {
    json body{{"model", http_.config().model},
              {"temperature", http_.config().temperature},
              {"messages", json::array({{{"role", "system"}, {"content", prompt.system}},
                                        {{"role", "user"}, {"content", prompt.user}}})}};
    if (prompt.want_token_probs) body["logprobs"] = true;

    auto start = std::chrono::steady_clock::now();
    json res = http_.post("/chat/completions", body);
    ModelReply reply;
    reply.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
      const auto& choice = res.at("choices").at(0);
      const auto& content = choice.at("message").at("content");
      reply.text = content.is_string() ? content.get<std::string>() : std::string();
      if (choice.contains("logprobs") && choice.at("logprobs").is_object() &&
          choice.at("logprobs").contains("content") && choice.at("logprobs").at("content").is_array()) {
        std::vector<TokenProb> tokens;
        for (const auto& t : choice.at("logprobs").at("content")) {
          double p = std::exp(t.at("logprob").get<double>());
          tokens.push_back({t.at("token").get<std::string>(), std::clamp(p, 1e-300, 1.0)});
        }
        reply.token_probs = std::move(tokens);
      }
    } catch (const json::exception& e) {
      throw EndpointError(std::string("unexpected chat-completion response: ") + e.what());
    }
    return reply;
  }

 private:
  mutable detail::HttpJsonClient http_;
};

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteConfig config) : http_(std::make_unique<detail::HttpJsonClient>(std::move(config))) {}

  void set_sleeper(detail::HttpJsonClient::Sleeper s) { http_->set_sleeper(std::move(s)); }

  Embedding embed(std::string_view text) const override {
    json body{{"model", http_->config().embedding_model}, {"input", std::string(text)}};
    json res;
    try {
      res = http_->post("/embeddings", body);
    } catch (const EndpointError& e) {
      throw ProviderError(e.what());
    }
    Embedding v;
    try {
      for (const auto& x : res.at("data").at(0).at("embedding")) v.push_back(x.get<double>());
    } catch (const json::exception& e) {
      throw ProviderError(std::string("unexpected embeddings response: ") + e.what());
    }
    if (v.empty()) throw ProviderError("empty embedding");
    l2_normalize(v);
    return v;
  }

 private:
  std::unique_ptr<detail::HttpJsonClient> http_;
};

}  // namespace arquest::llm
