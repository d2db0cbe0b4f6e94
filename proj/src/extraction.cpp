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

#include "trapz/extraction.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "trapz/errors.hpp"
#include "trapz/parallel.hpp"
#include "trapz/scoring.hpp"

namespace trapz::extraction {

using dataset::LineItem;
using dataset::ReceiptRecord;
using nlohmann::json;

const std::string& entity_prompt() {
    static const std::string prompt = R"PROMPT([tasks]
This image is a receipt.
A. Extract Vendor, Date, List items, Subtotal, Tax, Total, Payment and Change of the image.

[conditions]
A. Exclude items with no price or zero price.
B. The price of the item is for the entire quantity.
C. Be sure to include the quantity of the item.
D. Total is the sum of Subtotal and tax.
E. Vendor is case sensitive.

[schema]
{
  "type": "object",
  "properties": {
    "Vendor": {
      "type": "string",
      "description": "Vendor"
    },
    "Date": {
      "type": "string",
      "description": "Date"
    },
    "List items": {
      "type": "array",
      "items": {
        "type": "object",
        "properties": {
          "Item": {
            "type": "string",
            "description": "Item Name"
          },
          "Quantity": {
            "type": "number",
            "description": "number of Item"
          },
          "Price": {
            "type": "number",
            "description": "Item price"
          }
        }
      }
    },
    "Subtotal": {
      "type": "number",
      "description": "sum of List items"
    },
    "Tax": {
      "type": "number",
      "description": "subtotal tax"
    },
    "Total": {
      "type": "number",
      "description": "total price"
    },
    "Payment": {
      "type": "number",
      "description": "payment"
    },
    "Change": {
      "type": "number",
      "description": "change"
    }
  }
}

[format instruction]
Date Format: YYYY-mm-dd Output in English. Use json not markdown.
)PROMPT";
    return prompt;
}

const std::string& fulltext_prompt() {
    static const std::string prompt = R"PROMPT([tasks]
This image is a receipt.
A. Extract all text of the image.

[format instruction]
Use plain text.
)PROMPT";
    return prompt;
}

void ExtractorConfig::validate() const {
    if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
    if (max_output_tokens <= 0) throw ConfigError("max_output_tokens must be > 0");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (requests_per_minute <= 0.0) throw ConfigError("requests_per_minute must be > 0");
    if (model_name.empty()) throw ConfigError("model_name must not be empty");
}

std::string to_string(OutcomeStatus status) {
    switch (status) {
        case OutcomeStatus::ok: return "ok";
        case OutcomeStatus::parse_recovered: return "parse_recovered";
        case OutcomeStatus::parse_failed: return "parse_failed";
        case OutcomeStatus::transport_failed: return "transport_failed";
    }
    return "unknown";
}

OutcomeStatus outcome_status_from_string(const std::string& s) {
    if (s == "ok") return OutcomeStatus::ok;
    if (s == "parse_recovered") return OutcomeStatus::parse_recovered;
    if (s == "parse_failed") return OutcomeStatus::parse_failed;
    if (s == "transport_failed") return OutcomeStatus::transport_failed;
    throw Error("unknown outcome status: " + s);
}

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::optional<json> try_parse_object(const std::string& text) {
    if (text.empty()) return std::nullopt;
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

// Content of the first fenced block, tolerating a language tag after the
// opening fence.
std::optional<std::string> strip_code_fence(const std::string& text) {
    const auto open = text.find("```");
    if (open == std::string::npos) return std::nullopt;
    auto body_start = text.find('\n', open);
    if (body_start == std::string::npos) return std::nullopt;
    ++body_start;
    const auto close = text.find("```", body_start);
    if (close == std::string::npos) return std::nullopt;
    return text.substr(body_start, close - body_start);
}

std::optional<std::string> outer_brace_span(const std::string& text) {
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close <= open) {
        return std::nullopt;
    }
    return text.substr(open, close - open + 1);
}

}  // namespace

ParsedModelOutput parse_model_output(const std::string& raw) {
    const std::string text = trim(raw);
    if (auto j = try_parse_object(text)) {
        return ParsedModelOutput{dataset::record_from_model_json(*j), false};
    }
    if (auto fenced = strip_code_fence(text)) {
        if (auto j = try_parse_object(trim(*fenced))) {
            return ParsedModelOutput{dataset::record_from_model_json(*j), true};
        }
    }
    if (auto span = outer_brace_span(text)) {
        if (auto j = try_parse_object(*span)) {
            return ParsedModelOutput{dataset::record_from_model_json(*j), true};
        }
    }
    throw ModelOutputError("no JSON object recoverable from model output");
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) throw ConfigError("response cache directory must not be empty");
    std::filesystem::create_directories(dir_);
}

std::optional<std::string> ResponseCache::get(const std::string& key_hex) const {
    std::ifstream in(dir_ / (key_hex + ".bin"), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void ResponseCache::put(const std::string& key_hex, const std::string& bytes) {
    std::lock_guard<std::mutex> lock(write_mutex_);
    const std::filesystem::path final_path = dir_ / (key_hex + ".bin");
    const std::filesystem::path tmp = dir_ / (key_hex + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write cache file: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    std::filesystem::rename(tmp, final_path);
}

std::string ResponseCache::hash_components(const std::vector<std::string>& components) {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw Error("cannot allocate digest context");
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("cannot initialize SHA-256");
    }
    for (const std::string& part : components) {
        // Length prefix keeps distinct component lists from colliding.
        std::uint64_t len = part.size();
        unsigned char len_bytes[8];
        for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(len >> (8 * i));
        EVP_DigestUpdate(ctx, len_bytes, sizeof(len_bytes));
        EVP_DigestUpdate(ctx, part.data(), part.size());
    }
    EVP_DigestFinal_ex(ctx, digest, &digest_len);
    EVP_MD_CTX_free(ctx);

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(digest_len * 2);
    for (unsigned int i = 0; i < digest_len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string request_cache_key(const ExtractorConfig& config, const std::string& prompt,
                              const std::string& image_bytes, int sample) {
    char numbers[128];
    std::snprintf(numbers, sizeof(numbers), "%.17g|%.17g|%d", config.temperature, config.top_p,
                  config.max_output_tokens);
    std::vector<std::string> parts{image_bytes, prompt, config.model_name, numbers};
    if (sample > 0) parts.push_back("sample=" + std::to_string(sample));
    return ResponseCache::hash_components(parts);
}

MockMode mock_mode_from_string(const std::string& name) {
    if (name == "perfect") return MockMode::perfect;
    if (name == "row_shuffle") return MockMode::row_shuffle;
    if (name == "drop_items") return MockMode::drop_items;
    if (name == "numeric_noise") return MockMode::numeric_noise;
    throw ConfigError("unknown mock mode: " + name);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

class MockExtractor final : public Extractor {
  public:
    MockExtractor(const dataset::Manifest& manifest, MockMode mode, std::uint64_t seed,
                  std::string fixed_transcript)
        : mode_(mode), seed_(seed), transcript_(std::move(fixed_transcript)) {
        std::map<std::string, ReceiptRecord> truth_by_path;
        for (const dataset::ManifestEntry& e : manifest.entries) {
            const std::string path = e.truth_path.string();
            auto it = truth_by_path.find(path);
            if (it == truth_by_path.end()) {
                it = truth_by_path.emplace(path, dataset::load_truth(e.truth_path)).first;
            }
            truths_.emplace(dataset::variant_key(e.source_id, e.theta_deg, e.r), it->second);
        }
    }

    ExtractionOutcome extract_entities(const VariantImage& variant) override {
        const auto it = truths_.find(variant.key);
        if (it == truths_.end()) {
            throw ConfigError("mock extractor has no truth for variant " + variant.key);
        }
        ExtractionOutcome outcome;
        outcome.prediction = transform(it->second, variant.key);
        outcome.raw_text = dataset::to_json(*outcome.prediction).dump(2);
        outcome.status = OutcomeStatus::ok;
        return outcome;
    }

    std::string extract_fulltext(const VariantImage& variant) override {
        if (!transcript_.empty()) return transcript_;
        const auto it = truths_.find(variant.key);
        if (it == truths_.end()) {
            throw ConfigError("mock extractor has no truth for variant " + variant.key);
        }
        std::ostringstream out;
        const ReceiptRecord& r = it->second;
        if (r.vendor) out << *r.vendor << '\n';
        if (r.date) out << *r.date << '\n';
        for (const LineItem& li : r.list_items) {
            if (li.item) out << *li.item;
            if (li.quantity) out << ' ' << *li.quantity;
            if (li.price) out << ' ' << *li.price;
            out << '\n';
        }
        return out.str();
    }

  private:
    ReceiptRecord transform(const ReceiptRecord& truth, const std::string& key) const {
        ReceiptRecord pred = truth;
        switch (mode_) {
            case MockMode::perfect:
                break;
            case MockMode::row_shuffle:
                // 4-cycle: each of the four structured money fields takes the
                // previous one's value.
                pred.subtotal = truth.payment;
                pred.tax = truth.subtotal;
                pred.total = truth.tax;
                pred.payment = truth.total;
                break;
            case MockMode::drop_items: {
                const std::size_t n = pred.list_items.size();
                const std::size_t keep = n - (n + 1) / 2;
                pred.list_items.resize(keep);
                break;
            }
            case MockMode::numeric_noise: {
                std::optional<double> ReceiptRecord::*fields[] = {
                    &ReceiptRecord::subtotal, &ReceiptRecord::tax, &ReceiptRecord::total,
                    &ReceiptRecord::payment, &ReceiptRecord::change};
                std::vector<std::optional<double> ReceiptRecord::*> present;
                for (auto f : fields) {
                    if (truth.*f) present.push_back(f);
                }
                if (!present.empty()) {
                    const std::uint64_t h = splitmix64(seed_ ^ fnv1a(key));
                    auto field = present[h % present.size()];
                    pred.*field = *(truth.*field) + 1.0;
                }
                break;
            }
        }
        return pred;
    }

    MockMode mode_;
    std::uint64_t seed_;
    std::string transcript_;
    std::unordered_map<std::string, ReceiptRecord> truths_;
};

}  // namespace

std::unique_ptr<Extractor> make_mock_extractor(const dataset::Manifest& manifest, MockMode mode,
                                               std::uint64_t seed, std::string fixed_transcript) {
    return std::make_unique<MockExtractor>(manifest, mode, seed, std::move(fixed_transcript));
}

namespace {

std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read variant image: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

std::vector<OutcomeRecord> run_extraction(const dataset::Manifest& manifest, Extractor& extractor,
                                          const ExtractionRunOptions& options) {
    if (options.repeats < 1) throw ConfigError("repeats must be >= 1");

    std::unordered_map<std::string, const OutcomeRecord*> done;
    for (const OutcomeRecord& rec : options.existing) {
        if (rec.outcome.status == OutcomeStatus::transport_failed) continue;
        done.emplace(dataset::variant_key(rec.source_id, rec.theta_deg, rec.r) + "#" +
                         std::to_string(rec.sample),
                     &rec);
    }

    struct Task {
        const dataset::ManifestEntry* entry;
        int sample;
    };
    std::vector<Task> tasks;
    tasks.reserve(manifest.entries.size() * options.repeats);
    for (const dataset::ManifestEntry& e : manifest.entries) {
        for (int s = 0; s < options.repeats; ++s) tasks.push_back(Task{&e, s});
    }

    std::vector<OutcomeRecord> results(tasks.size());
    parallel_for(tasks.size(), options.jobs, [&](std::size_t i) {
        const Task& task = tasks[i];
        OutcomeRecord& rec = results[i];
        rec.source_id = task.entry->source_id;
        rec.theta_deg = task.entry->theta_deg;
        rec.r = task.entry->r;
        rec.sample = task.sample;

        const std::string key =
            dataset::variant_key(rec.source_id, rec.theta_deg, rec.r) + "#" +
            std::to_string(task.sample);
        if (auto it = done.find(key); it != done.end()) {
            rec.outcome = it->second->outcome;
            return;
        }

        VariantImage variant;
        variant.key = dataset::variant_key(rec.source_id, rec.theta_deg, rec.r);
        variant.path = task.entry->variant_path;
        variant.sample = task.sample;
        try {
            variant.png_bytes = read_file_bytes(task.entry->variant_path);
            rec.outcome = extractor.extract_entities(variant);
        } catch (const std::exception& e) {
            rec.outcome = ExtractionOutcome{};
            rec.outcome.status = OutcomeStatus::transport_failed;
            rec.outcome.raw_text = e.what();
        }
    });
    return results;
}

void save_outcomes(const std::vector<OutcomeRecord>& records, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write outcomes file: " + path.string());
        for (const OutcomeRecord& rec : records) {
            json j{{"source_id", rec.source_id},
                   {"theta_deg", rec.theta_deg},
                   {"r", rec.r},
                   {"sample", rec.sample},
                   {"status", to_string(rec.outcome.status)},
                   {"cache_hit", rec.outcome.cache_hit},
                   {"latency_s", rec.outcome.latency_s},
                   {"raw_text", rec.outcome.raw_text},
                   {"prediction",
                    rec.outcome.prediction ? dataset::to_json(*rec.outcome.prediction)
                                           : json(nullptr)}};
            out << j.dump() << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

std::vector<OutcomeRecord> load_outcomes(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open outcomes file: " + path.string());
    std::vector<OutcomeRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("outcomes file " + path.string() + " line " + std::to_string(lineno) +
                        ": " + e.what());
        }
        OutcomeRecord rec;
        rec.source_id = j.at("source_id").get<std::string>();
        rec.theta_deg = j.at("theta_deg").get<double>();
        rec.r = j.at("r").get<double>();
        rec.sample = j.value("sample", 0);
        rec.outcome.status = outcome_status_from_string(j.at("status").get<std::string>());
        rec.outcome.cache_hit = j.value("cache_hit", false);
        rec.outcome.latency_s = j.value("latency_s", 0.0);
        rec.outcome.raw_text = j.value("raw_text", "");
        if (j.contains("prediction") && !j.at("prediction").is_null()) {
            rec.outcome.prediction =
                dataset::record_from_truth_json(j.at("prediction"), path.string());
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<scoring::ScoreRecord> score_outcomes(const dataset::Manifest& manifest,
                                                 const std::vector<OutcomeRecord>& outcomes) {
    std::unordered_map<std::string, dataset::ReceiptRecord> truth_cache;
    auto truth_for = [&](const dataset::ManifestEntry& e) -> const dataset::ReceiptRecord& {
        const std::string path = e.truth_path.string();
        auto it = truth_cache.find(path);
        if (it == truth_cache.end()) {
            it = truth_cache.emplace(path, dataset::load_truth(e.truth_path)).first;
        }
        return it->second;
    };

    std::unordered_map<std::string, std::vector<const OutcomeRecord*>> grouped;
    for (const OutcomeRecord& rec : outcomes) {
        grouped[dataset::variant_key(rec.source_id, rec.theta_deg, rec.r)].push_back(&rec);
    }

    std::vector<scoring::ScoreRecord> out;
    out.reserve(manifest.entries.size());
    for (const dataset::ManifestEntry& entry : manifest.entries) {
        const std::string key = dataset::variant_key(entry.source_id, entry.theta_deg, entry.r);
        const auto it = grouped.find(key);
        if (it == grouped.end()) continue;  // reported by the aggregator
        const dataset::ReceiptRecord& truth = truth_for(entry);

        // Mean entity scores over repeats; a null prediction scores as the
        // empty record.
        scoring::EntityScores acc{};
        double acc_avg = 0.0;
        std::string status;
        for (const OutcomeRecord* rec : it->second) {
            const dataset::ReceiptRecord pred =
                rec->outcome.prediction ? *rec->outcome.prediction : dataset::ReceiptRecord{};
            const scoring::EntityScores s = scoring::receipt_scores(truth, pred);
            acc.vendor += s.vendor;
            acc.date += s.date;
            acc.list_items += s.list_items;
            acc.subtotal += s.subtotal;
            acc.tax += s.tax;
            acc.total += s.total;
            acc.payment += s.payment;
            acc.change += s.change;
            acc_avg += scoring::average_score(s);
            if (!status.empty()) status += "+";
            status += to_string(rec->outcome.status);
        }
        const double n = static_cast<double>(it->second.size());
        acc.vendor /= n;
        acc.date /= n;
        acc.list_items /= n;
        acc.subtotal /= n;
        acc.tax /= n;
        acc.total /= n;
        acc.payment /= n;
        acc.change /= n;

        scoring::ScoreRecord sr;
        sr.source_id = entry.source_id;
        sr.theta_deg = entry.theta_deg;
        sr.r = entry.r;
        sr.scores = acc;
        sr.average = acc_avg / n;
        sr.status = status;
        out.push_back(std::move(sr));
    }
    return out;
}

}  // namespace trapz::extraction
