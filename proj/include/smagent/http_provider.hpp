#pragma once

// OpenAI-compatible chat-completions backend. Define CPPHTTPLIB_OPENSSL_SUPPORT
// (and link OpenSSL) to reach https endpoints.

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "smagent/error.hpp"
#include "smagent/provider.hpp"

namespace smagent {

struct HttpProviderConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini";
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
  /// Delay before each retry; retries apply to 429 and 5xx only.
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(500), std::chrono::milliseconds(2000)};

  /// Reads the bearer token from SHERPA_API_KEY when set.
  static HttpProviderConfig from_env(std::string base_url, std::string model) {
    HttpProviderConfig cfg;
    cfg.base_url = std::move(base_url);
    cfg.model = std::move(model);
    if (const char* key = std::getenv("SHERPA_API_KEY")) cfg.api_key = key;
    return cfg;
  }
};

class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config) : config_(std::move(config)) { split_url(); }

  /// Number of HTTP requests sent, retries included.
  [[nodiscard]] std::size_t requests_sent() const { return requests_.load(); }

 protected:
  std::string do_complete(const CompletionRequest& request) override {
    Json body;
    body["model"] = config_.model;
    body["messages"] = Json::array();
    if (request.system) body["messages"].push_back({{"role", "system"}, {"content", *request.system}});
    body["messages"].push_back({{"role", "user"}, {"content", request.prompt}});
    body["temperature"] = request.temperature;
    const std::string payload = body.dump(-1, ' ', false, Json::error_handler_t::replace);

    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    for (std::size_t attempt = 0;; ++attempt) {
      httplib::Client client(origin_);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      ++requests_;
      auto res = client.Post(path_ + "/chat/completions", headers, payload, "application/json");
      if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout || err == httplib::Error::Write)
          throw Error(Errc::Timeout, "no reply from " + origin_ + " (" + httplib::to_string(err) + ")");
        throw Error(Errc::ProviderError, "request to " + origin_ + " failed: " + httplib::to_string(err));
      }
      const int status = res->status;
      if (status >= 200 && status < 300) return extract_content(res->body);
      const bool retryable = status == 429 || status >= 500;
      if (!retryable || attempt >= config_.backoff.size()) throw HttpError(status, res->body.substr(0, 200));
      std::this_thread::sleep_for(config_.backoff[attempt]);
    }
  }

 private:
  void split_url() {
    const std::string& url = config_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(Errc::InvalidArgument, "base URL needs a scheme: '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
  }

  static std::string extract_content(const std::string& body) {
    Json doc = Json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw Error(Errc::ProviderError, "reply is not JSON");
    const Json* content = nullptr;
    if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
      const Json& first = doc["choices"][0];
      if (first.contains("message") && first["message"].contains("content")) content = &first["message"]["content"];
    }
    if (content == nullptr || !content->is_string())
      throw Error(Errc::ProviderError, "reply lacks choices[0].message.content");
    return content->get<std::string>();
  }

  HttpProviderConfig config_;
  std::string origin_;
  std::string path_;
  std::atomic<std::size_t> requests_{0};
};

}  // namespace smagent
