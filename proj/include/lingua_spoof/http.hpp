#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
// <resolv.h>, pulled in by httplib, defines _res as a macro; Eigen uses it as
// a parameter name.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "lingua_spoof/audio.hpp"
#include "lingua_spoof/error.hpp"
#include "lingua_spoof/oracle.hpp"
#include "lingua_spoof/stub.hpp"

namespace lingua_spoof {

// Client side of the /v1 wire protocol.
class HttpBackend : public OracleBackend {
 public:
  explicit HttpBackend(OracleConfig cfg)
      : cfg_(std::move(cfg)), slots_(cfg_.max_in_flight) {
    validate(cfg_);
    if (cfg_.endpoint.rfind("http://", 0) != 0) {
      fail(ErrorCode::InvalidArgument, "endpoint must start with http://: " + cfg_.endpoint);
    }
  }

  // Requests put on the wire, retries included.
  std::size_t attempts() const { return attempts_.load(); }

  AudioClip synthesize(std::string_view text, std::string_view voice_id) override {
    auto r = post("/v1/synthesize", {{"text", text}, {"voice_id", voice_id}});
    if (!r.contains("wav_b64") || !r.at("wav_b64").is_string()) {
      fail(ErrorCode::MalformedResponse, "synthesize: missing wav_b64");
    }
    try {
      auto clip = read_wav(base64_decode(r.at("wav_b64").get<std::string>()));
      if (r.contains("sample_rate") && r.at("sample_rate").is_number_integer() &&
          r.at("sample_rate").get<int>() != clip.sample_rate) {
        fail(ErrorCode::MalformedResponse, "synthesize: sample_rate disagrees with WAV header");
      }
      return clip;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::MalformedResponse) throw;
      fail(ErrorCode::MalformedResponse, std::string("synthesize: ") + e.what());
    }
  }

  double score(const AudioClip& clip) override {
    auto r = post("/v1/score", audio_body(clip));
    return require_number(r, "bonafide_prob", ErrorCode::MalformedResponse);
  }

  std::vector<double> embed_audio(const AudioClip& clip, std::string_view voice_id) override {
    auto body = audio_body(clip);
    body["voice_id"] = voice_id;
    return vector_from_json(post("/v1/embed_audio", body));
  }

  std::vector<double> embed_text(std::string_view text) override {
    return vector_from_json(post("/v1/embed_text", {{"text", text}}));
  }

  std::vector<MlmCandidate> mlm(const std::vector<std::string>& tokens, std::size_t mask_index,
                                std::size_t top_k) override {
    return candidates_from_json(
        post("/v1/mlm", {{"tokens", tokens}, {"mask_index", mask_index}, {"top_k", top_k}}));
  }

  Annotation annotate(std::string_view text) override {
    return annotation_from_json(post("/v1/annotate", {{"text", text}}));
  }

  bool health() override {
    try {
      auto r = send([&](httplib::Client& c) { return c.Get("/v1/health"); });
      return r.value("ok", false);
    } catch (const Error&) {
      return false;
    }
  }

  std::string identity() const override { return cfg_.endpoint; }

 private:
  static json audio_body(const AudioClip& clip) {
    return {{"wav_b64", base64_encode(write_wav(clip))}, {"sample_rate", clip.sample_rate}};
  }

  json post(const std::string& path, const json& body) {
    const std::string payload = body.dump();
    return send([&](httplib::Client& c) { return c.Post(path, payload, "application/json"); });
  }

  template <typename Call>
  json send(Call&& call) {
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      if (attempt > 0) {
        auto wait = std::chrono::duration<double>(cfg_.backoff_base_s * std::pow(2.0, attempt - 1));
        std::this_thread::sleep_for(wait);
      }
      httplib::Result res{nullptr, httplib::Error::Unknown};
      {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<1024>& s;
          ~Release() { s.release(); }
        } release{slots_};
        httplib::Client client(cfg_.endpoint);
        const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        if (!cfg_.bearer_token.empty()) client.set_bearer_token_auth(cfg_.bearer_token);
        ++attempts_;
        res = call(client);
      }
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500 || res->status == 429) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      auto j = json::parse(res->body, nullptr, false);
      if (res->status != 200) {
        std::string detail = "HTTP " + std::to_string(res->status);
        if (!j.is_discarded() && j.is_object()) {
          detail += " " + j.value("error", std::string()) + ": " + j.value("detail", std::string());
        }
        fail(ErrorCode::MalformedResponse, detail);
      }
      if (j.is_discarded() || !j.is_object()) fail(ErrorCode::MalformedResponse, "body is not a JSON object");
      return j;
    }
    fail(ErrorCode::OracleUnavailable, cfg_.endpoint + " after " +
                                           std::to_string(cfg_.retries + 1) +
                                           " attempts: " + last_error);
  }

  OracleConfig cfg_;
  std::counting_semaphore<1024> slots_;
  std::atomic<std::size_t> attempts_{0};
};

// Serves any backend over the wire protocol.
class OracleServer {
 public:
  explicit OracleServer(std::shared_ptr<OracleBackend> backend, std::string bearer_token = {})
      : backend_(std::move(backend)), token_(std::move(bearer_token)) {
    routes();
  }
  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;
  ~OracleServer() { stop(); }

  // Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else if (server_.bind_to_port(host, port)) {
      port_ = port;
    } else {
      port_ = -1;
    }
    if (port_ < 0) fail(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    return port_;
  }

  void listen_blocking() { server_.listen_after_bind(); }

  void start() {
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static AudioClip clip_from(const json& body) {
    if (!body.contains("wav_b64") || !body.at("wav_b64").is_string()) {
      fail(ErrorCode::MalformedResponse, "missing wav_b64");
    }
    return read_wav(base64_decode(body.at("wav_b64").get<std::string>()));
  }

  static std::string text_from(const json& body) {
    if (!body.contains("text") || !body.at("text").is_string()) {
      fail(ErrorCode::MalformedResponse, "missing text");
    }
    return body.at("text").get<std::string>();
  }

  template <typename Fn>
  httplib::Server::Handler wrap(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      if (!token_.empty() && req.get_header_value("Authorization") != "Bearer " + token_) {
        reply(res, 401, {{"error", "Unauthorized"}, {"detail", "bad or missing bearer token"}});
        return;
      }
      json body = json::object();
      if (!req.body.empty()) {
        body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
          reply(res, 400, {{"error", "MalformedRequest"}, {"detail", "body is not a JSON object"}});
          return;
        }
      }
      try {
        reply(res, 200, fn(body));
      } catch (const Error& e) {
        reply(res, 400, {{"error", std::string(to_string(e.code()))}, {"detail", e.detail()}});
      } catch (const std::exception& e) {
        reply(res, 400, {{"error", "MalformedRequest"}, {"detail", e.what()}});
      }
    };
  }

  void routes() {
    server_.Get("/v1/health", wrap([this](const json&) {
      return json{{"ok", backend_->health()}};
    }));
    server_.Post("/v1/synthesize", wrap([this](const json& b) {
      auto clip = backend_->synthesize(text_from(b), b.value("voice_id", std::string("default")));
      return json{{"wav_b64", base64_encode(write_wav(clip))}, {"sample_rate", clip.sample_rate}};
    }));
    server_.Post("/v1/score", wrap([this](const json& b) {
      return json{{"bonafide_prob", backend_->score(clip_from(b))}};
    }));
    server_.Post("/v1/embed_audio", wrap([this](const json& b) {
      return json{{"vector", backend_->embed_audio(clip_from(b),
                                                   b.value("voice_id", std::string("default")))}};
    }));
    server_.Post("/v1/embed_text", wrap([this](const json& b) {
      return json{{"vector", backend_->embed_text(text_from(b))}};
    }));
    server_.Post("/v1/mlm", wrap([this](const json& b) {
      auto tokens = b.at("tokens").get<std::vector<std::string>>();
      return candidates_to_json(backend_->mlm(tokens, b.at("mask_index").get<std::size_t>(),
                                              b.value("top_k", std::size_t{48})));
    }));
    server_.Post("/v1/annotate", wrap([this](const json& b) {
      return annotation_to_json(backend_->annotate(text_from(b)));
    }));
  }

  std::shared_ptr<OracleBackend> backend_;
  std::string token_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

// "stub:<seed>" or "http://host:port".
inline std::shared_ptr<OracleBackend> make_backend(const OracleConfig& cfg) {
  validate(cfg);
  if (cfg.endpoint.rfind("stub:", 0) == 0) {
    const auto digits = cfg.endpoint.substr(5);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
      fail(ErrorCode::InvalidArgument, "bad stub endpoint " + cfg.endpoint);
    }
    return std::make_shared<StubBackend>(std::stoull(digits));
  }
  return std::make_shared<HttpBackend>(cfg);
}

}  // namespace lingua_spoof
