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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "trapz/dataset.hpp"
#include "trapz/receipt.hpp"
#include "trapz/scoring.hpp"

namespace trapz::extraction {

/// The schema-typed entity-extraction prompt sent with every variant image.
const std::string& entity_prompt();

/// The plain-text full-transcription prompt.
const std::string& fulltext_prompt();

/// Remote extractor configuration. Defaults mirror the benchmark setup.
struct ExtractorConfig {
    std::string model_name = "gemini-1.5-pro-002";
    double temperature = 1.0;
    int max_output_tokens = 8192;
    double top_p = 0.95;
    std::string endpoint = "https://generativelanguage.googleapis.com";
    std::string api_key_env = "GEMINI_API_KEY";
    double request_timeout_s = 120.0;
    int max_retries = 3;
    double requests_per_minute = 60.0;
    int repeats = 1;
    unsigned in_flight_limit = 4;
    std::filesystem::path cache_dir;
    bool replay_only = false;  // answer from cache only; a miss fails the entry

    void validate() const;
};

enum class OutcomeStatus { ok, parse_recovered, parse_failed, transport_failed };

std::string to_string(OutcomeStatus status);
OutcomeStatus outcome_status_from_string(const std::string& s);

struct ExtractionOutcome {
    std::optional<dataset::ReceiptRecord> prediction;
    std::string raw_text;  // model text (not the wire envelope)
    OutcomeStatus status = OutcomeStatus::transport_failed;
    double latency_s = 0.0;
    bool cache_hit = false;
};

/// A variant handed to an extractor: stable key, on-disk path, encoded PNG
/// bytes, and the repeat index (affects caching when repeats > 1).
struct VariantImage {
    std::string key;
    std::filesystem::path path;
    std::string png_bytes;
    int sample = 0;
};

class Extractor {
  public:
    virtual ~Extractor() = default;
    virtual ExtractionOutcome extract_entities(const VariantImage& variant) = 0;
    /// Full-text transcription; throws TransportError when the backend fails.
    virtual std::string extract_fulltext(const VariantImage& variant) = 0;
};

struct ParsedModelOutput {
    dataset::ReceiptRecord record;
    bool recovered = false;  // true when fences or prose had to be stripped
};

/// Lenient parse of model text: tries the raw string, then the content of a
/// fenced code block, then the outermost brace span. Missing keys become
/// null; numeric strings are coerced. Throws ModelOutputError when no JSON
/// object can be recovered.
ParsedModelOutput parse_model_output(const std::string& raw);

/// On-disk response store: one file per response, named by key, bytes kept
/// verbatim. Concurrent readers, serialized writers.
class ResponseCache {
  public:
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<std::string> get(const std::string& key_hex) const;
    void put(const std::string& key_hex, const std::string& bytes);
    const std::filesystem::path& dir() const { return dir_; }

    /// SHA-256 over length-prefixed components.
    static std::string hash_components(const std::vector<std::string>& components);

  private:
    std::filesystem::path dir_;
    mutable std::mutex write_mutex_;
};

/// Cache key for one request.
std::string request_cache_key(const ExtractorConfig& config, const std::string& prompt,
                              const std::string& image_bytes, int sample);

enum class MockMode { perfect, row_shuffle, drop_items, numeric_noise };

MockMode mock_mode_from_string(const std::string& name);

/// Deterministic test double answering from the manifest's ground truth.
/// perfect echoes the truth; row_shuffle rotates the subtotal/tax/total/
/// payment values one position (a 4-cycle); drop_items removes the trailing
/// half of the items (round up); numeric_noise adds 1 to one non-null money
/// field chosen from the seed and variant key.
std::unique_ptr<Extractor> make_mock_extractor(const dataset::Manifest& manifest, MockMode mode,
                                               std::uint64_t seed,
                                               std::string fixed_transcript = {});

/// One line of the outcomes file.
struct OutcomeRecord {
    std::string source_id;
    double theta_deg{0};
    double r{1};
    int sample{0};
    ExtractionOutcome outcome;
};

struct ExtractionRunOptions {
    int repeats = 1;
    unsigned jobs = 1;
    /// Previously written outcomes; entries that already succeeded (any
    /// status except transport_failed) are not re-extracted.
    std::vector<OutcomeRecord> existing;
};

/// Runs the extractor over every manifest entry (times repeats), reading
/// variant bytes from disk, under the given in-flight limit. Failures are
/// recorded per entry; the run always completes. Output order follows the
/// manifest, samples innermost.
std::vector<OutcomeRecord> run_extraction(const dataset::Manifest& manifest, Extractor& extractor,
                                          const ExtractionRunOptions& options = {});

void save_outcomes(const std::vector<OutcomeRecord>& records, const std::filesystem::path& path);
std::vector<OutcomeRecord> load_outcomes(const std::filesystem::path& path);

/// Joins outcomes to manifest truths and produces one score record per
/// variant, averaging over repeats. A missing or failed prediction scores as
/// the all-null record.
std::vector<scoring::ScoreRecord> score_outcomes(const dataset::Manifest& manifest,
                                                 const std::vector<OutcomeRecord>& outcomes);

}  // namespace trapz::extraction
