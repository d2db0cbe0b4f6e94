/*
 * Copyright (c) 2026, the trapzbench authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "trapz/gemini.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "trapz/errors.hpp"

namespace trapz::extraction {

using nlohmann::json;

std::string base64_encode(const std::string& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < bytes.size()) {
        const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                           static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(alphabet[(v >> 18) & 0x3F]);
        out.push_back(alphabet[(v >> 12) & 0x3F]);
        out.push_back(alphabet[(v >> 6) & 0x3F]);
        out.push_back(alphabet[v & 0x3F]);
        i += 3;
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(alphabet[(v >> 18) & 0x3F]);
        out.push_back(alphabet[(v >> 12) & 0x3F]);
        out.append("==");
    } else if (rest == 2) {
        const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(alphabet[(v >> 18) & 0x3F]);
        out.push_back(alphabet[(v >> 12) & 0x3F]);
        out.push_back(alphabet[(v >> 6) & 0x3F]);
        out.push_back('=');
    }
    return out;
}

std::string GeminiWire::request_path(const std::string& model_name) {
    return "/v1beta/models/" + model_name + ":generateContent";
}

json GeminiWire::build_request(const ExtractorConfig& config, const std::string& prompt,
                               const std::string& png_bytes) {
    return json{
        {"contents",
         json::array({json{{"role", "user"},
                           {"parts", json::array({json{{"text", prompt}},
                                                  json{{"inline_data",
                                                        {{"mime_type", "image/png"},
                                                         {"data", base64_encode(png_bytes)}}}}})}}})},
        {"generationConfig",
         {{"temperature", config.temperature},
          {"topP", config.top_p},
          {"maxOutputTokens", config.max_output_tokens}}}};
}

std::string GeminiWire::parse_text(const std::string& body) {
    json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
        throw TransportError("response body is not valid JSON");
    }
    const auto candidates = j.find("candidates");
    if (candidates == j.end() || !candidates->is_array() || candidates->empty()) {
        throw TransportError("response carries no candidates");
    }
    std::string text;
    const json& content = candidates->front().value("content", json::object());
    for (const json& part : content.value("parts", json::array())) {
        if (part.contains("text") && part.at("text").is_string()) {
            text += part.at("text").get<std::string>();
        }
    }
    return text;
}

// Token bucket: refills at requests_per_minute, burst capacity of one
// minute's quota.
struct GeminiClient::RateLimiter {
    explicit RateLimiter(double per_minute)
        : rate_per_s(per_minute / 60.0), capacity(per_minute), tokens(per_minute),
          last(std::chrono::steady_clock::now()) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(mutex);
        for (;;) {
            const auto now = std::chrono::steady_clock::now();
            tokens = std::min(capacity,
                              tokens + std::chrono::duration<double>(now - last).count() * rate_per_s);
            last = now;
            if (tokens >= 1.0) {
                tokens -= 1.0;
                return;
            }
            const double wait_s = (1.0 - tokens) / rate_per_s;
            lock.unlock();
            std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
            lock.lock();
        }
    }

    double rate_per_s;
    double capacity;
    double tokens;
    std::chrono::steady_clock::time_point last;
    std::mutex mutex;
};

GeminiClient::GeminiClient(ExtractorConfig config) : config_(std::move(config)) {
    config_.validate();
    if (!config_.cache_dir.empty()) {
        cache_ = std::make_unique<ResponseCache>(config_.cache_dir);
    }
    if (config_.replay_only) {
        if (!cache_) {
            throw ConfigError("replay mode requires a cache directory");
        }
    } else {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (!key || !*key) {
            throw ConfigError("environment variable " + config_.api_key_env +
                              " is empty; set it or use a mock/replay extractor");
        }
        api_key_ = key;
    }
    limiter_ = std::make_unique<RateLimiter>(config_.requests_per_minute);
}

GeminiClient::~GeminiClient() = default;

std::string GeminiClient::http_post_with_retry(const std::string& body_json) {
    const std::string path = GeminiWire::request_path(config_.model_name);
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            const double backoff_s = std::min(30.0, 0.5 * std::pow(2.0, attempt - 1));
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff_s));
        }
        limiter_->acquire();
        network_calls_.fetch_add(1);

        httplib::Client client(config_.endpoint);
        client.set_connection_timeout(std::chrono::duration<double>(config_.request_timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(config_.request_timeout_s));
        client.set_write_timeout(std::chrono::duration<double>(config_.request_timeout_s));
        httplib::Headers headers{{"x-goog-api-key", api_key_}};

        auto res = client.Post(path, headers, body_json, "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            return res->body;
        }
        last_error = "HTTP " + std::to_string(res->status);
        if (!res->body.empty()) {
            last_error += ": " + res->body.substr(0, 300);
        }
        const bool retryable = res->status == 429 || res->status >= 500;
        if (!retryable) break;
    }
    throw TransportError(last_error.empty() ? "request failed" : last_error);
}

std::string GeminiClient::fetch_body(const std::string& prompt, const VariantImage& variant,
                                     bool& cache_hit) {
    const std::string key = request_cache_key(config_, prompt, variant.png_bytes, variant.sample);
    if (cache_) {
        if (auto hit = cache_->get(key)) {
            cache_hit = true;
            return *hit;
        }
    }
    cache_hit = false;
    if (config_.replay_only) {
        throw CacheMissError("no cached response for variant " + variant.key);
    }
    const std::string body =
        http_post_with_retry(GeminiWire::build_request(config_, prompt, variant.png_bytes).dump());
    if (cache_) cache_->put(key, body);
    return body;
}

ExtractionOutcome GeminiClient::extract_entities(const VariantImage& variant) {
    ExtractionOutcome outcome;
    const auto start = std::chrono::steady_clock::now();
    try {
        const std::string body = fetch_body(entity_prompt(), variant, outcome.cache_hit);
        outcome.raw_text = GeminiWire::parse_text(body);
        try {
            ParsedModelOutput parsed = parse_model_output(outcome.raw_text);
            outcome.prediction = std::move(parsed.record);
            outcome.status =
                parsed.recovered ? OutcomeStatus::parse_recovered : OutcomeStatus::ok;
        } catch (const ModelOutputError&) {
            outcome.status = OutcomeStatus::parse_failed;
        }
    } catch (const Error& e) {
        outcome.status = OutcomeStatus::transport_failed;
        outcome.raw_text = e.what();
    }
    outcome.latency_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return outcome;
}

std::string GeminiClient::extract_fulltext(const VariantImage& variant) {
    bool cache_hit = false;
    const std::string body = fetch_body(fulltext_prompt(), variant, cache_hit);
    return GeminiWire::parse_text(body);
}

}  // namespace trapz::extraction
