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

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include <json.hpp>

#include "trapz/extraction.hpp"

namespace trapz::extraction {

/// Wire-format adapter for the generateContent REST endpoint, kept separate
/// so other vision-model providers can slot in behind the same Extractor
/// interface.
struct GeminiWire {
    static std::string request_path(const std::string& model_name);
    static nlohmann::json build_request(const ExtractorConfig& config, const std::string& prompt,
                                        const std::string& png_bytes);
    /// Concatenated text parts of the first candidate. Throws TransportError
    /// when the body does not carry the expected envelope.
    static std::string parse_text(const std::string& body);
};

/// Remote multi-modal extractor. Consults the response cache before any
/// network activity; in replay mode a cache miss fails the entry instead of
/// reaching the network. Transport failures retry with exponential backoff
/// up to max_retries, under a token-bucket requests/minute limit.
class GeminiClient final : public Extractor {
  public:
    explicit GeminiClient(ExtractorConfig config);
    ~GeminiClient() override;

    ExtractionOutcome extract_entities(const VariantImage& variant) override;
    std::string extract_fulltext(const VariantImage& variant) override;

    /// Number of HTTP requests issued (each retry counts). Stays zero for
    /// fully cached or replay-mode runs.
    std::uint64_t network_calls() const { return network_calls_.load(); }

    const ExtractorConfig& config() const { return config_; }

  private:
    std::string fetch_body(const std::string& prompt, const VariantImage& variant,
                           bool& cache_hit);
    std::string http_post_with_retry(const std::string& body_json);

    ExtractorConfig config_;
    std::string api_key_;
    std::unique_ptr<ResponseCache> cache_;
    std::atomic<std::uint64_t> network_calls_{0};

    struct RateLimiter;
    std::unique_ptr<RateLimiter> limiter_;
};

std::string base64_encode(const std::string& bytes);

}  // namespace trapz::extraction
