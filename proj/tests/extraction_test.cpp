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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "trapz/dataset.hpp"
#include "trapz/errors.hpp"
#include "trapz/extraction.hpp"
#include "trapz/gemini.hpp"
#include "trapz/image_io.hpp"
#include "trapz/scoring.hpp"

using namespace trapz;
using namespace trapz::extraction;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "trapz_extraction_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const char* kTruthJson = R"({
  "Vendor": "COFFEE CORNER",
  "Date": "2020-05-17",
  "List items": [
    {"Item": "Latte", "Quantity": 2, "Price": 9.00},
    {"Item": "Bagel", "Quantity": 1, "Price": 3.25}
  ],
  "Subtotal": 12.25,
  "Tax": 1.10,
  "Total": 13.35,
  "Payment": 20.00,
  "Change": 6.65
})";

// Builds a tiny on-disk dataset (sources + variants + manifest) the
// extractor pipeline can run over. Four cells by default, one when
// single_cell is set.
dataset::Manifest tiny_manifest(const fs::path& dir, bool single_cell = false) {
    raster::RasterImage img(16, 20);
    for (int y = 0; y < 20; ++y) {
        for (int x = 0; x < 16; ++x) {
            img.set(x, y,
                    raster::Rgb{static_cast<std::uint8_t>(10 * x), static_cast<std::uint8_t>(12 * y),
                                128});
        }
    }
    raster::write_image(img, dir / "doc.png");
    std::ofstream(dir / "doc.json") << kTruthJson;

    dataset::SweepGrid grid;
    grid.thetas = single_cell ? std::vector<double>{0.0} : std::vector<double>{0.0, 30.0};
    grid.ratio_exponents =
        single_cell ? std::vector<double>{0.0} : std::vector<double>{0.0, 1.0};
    return dataset::synthesize_sweep({{"doc", dir / "doc.png", dir / "doc.json"}}, grid,
                                     dir / "out");
}

// Wire envelope carrying `text` the way the remote endpoint would.
std::string wire_body(const std::string& text) {
    return json{{"candidates",
                 json::array({json{{"content",
                                    {{"parts", json::array({json{{"text", text}}})}}}}})}}
        .dump();
}

ExtractorConfig local_config(const std::string& endpoint, const fs::path& cache_dir) {
    ExtractorConfig cfg;
    cfg.endpoint = endpoint;
    cfg.cache_dir = cache_dir;
    cfg.api_key_env = "TRAPZ_TEST_KEY";
    cfg.max_retries = 2;
    cfg.request_timeout_s = 5.0;
    cfg.requests_per_minute = 100000.0;  // tests should not throttle
    return cfg;
}

struct LocalServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server.Post(R"(/v1beta/models/.*)", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        thread.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("entity prompt carries the exact sections and format line") {
    const std::string& p = entity_prompt();
    CHECK(p.find("[tasks]\nThis image is a receipt.\nA. Extract Vendor, Date, List items, "
                 "Subtotal, Tax, Total, Payment and Change of the image.\n") !=
          std::string::npos);
    CHECK(p.find("[conditions]\n"
                 "A. Exclude items with no price or zero price.\n"
                 "B. The price of the item is for the entire quantity.\n"
                 "C. Be sure to include the quantity of the item.\n"
                 "D. Total is the sum of Subtotal and tax.\n"
                 "E. Vendor is case sensitive.\n") != std::string::npos);
    CHECK(p.find("[schema]") != std::string::npos);
    CHECK(p.find("\"Vendor\": {\n      \"type\": \"string\",\n      \"description\": \"Vendor\"") !=
          std::string::npos);
    CHECK(p.find("\"List items\": {\n      \"type\": \"array\"") != std::string::npos);
    CHECK(p.find("Use json not markdown") != std::string::npos);
    CHECK(p.find("Date Format: YYYY-mm-dd Output in English. Use json not markdown.") !=
          std::string::npos);

    const std::string& ft = fulltext_prompt();
    CHECK(ft.find("A. Extract all text of the image.") != std::string::npos);
    CHECK(ft.find("Use plain text.") != std::string::npos);
}

TEST_CASE("parse_model_output: clean, fenced, and prose-wrapped forms agree") {
    const std::string clean = R"({"Vendor": "SHOP", "Subtotal": 71.4})";
    const ParsedModelOutput direct = parse_model_output(clean);
    CHECK_FALSE(direct.recovered);
    CHECK(direct.record.vendor == std::string("SHOP"));
    CHECK(direct.record.subtotal == 71.4);

    const ParsedModelOutput fenced = parse_model_output("```json\n" + clean + "\n```");
    CHECK(fenced.recovered);
    CHECK(fenced.record == direct.record);

    const ParsedModelOutput prose =
        parse_model_output("Here is the receipt data you asked for:\n" + clean + "\nLet me know!");
    CHECK(prose.recovered);
    CHECK(prose.record == direct.record);
}

TEST_CASE("parse_model_output: missing keys become null, numbers coerce") {
    const ParsedModelOutput out = parse_model_output(R"({
        "Vendor": "A & B",
        "Subtotal": "$1,234.50",
        "Tax": "0.99",
        "List items": [{"Item": "x", "Quantity": "2", "Price": 3.5}, {"Item": "y"}]
    })");
    CHECK(out.record.vendor == std::string("A & B"));
    CHECK_FALSE(out.record.payment.has_value());
    CHECK_FALSE(out.record.change.has_value());
    CHECK(out.record.subtotal == 1234.50);
    CHECK(out.record.tax == 0.99);
    REQUIRE(out.record.list_items.size() == 2);
    CHECK(out.record.list_items[0].quantity == 2.0);
    CHECK(out.record.list_items[0].price == 3.5);
    CHECK_FALSE(out.record.list_items[1].price.has_value());

    // Lenient key matching.
    const ParsedModelOutput relaxed =
        parse_model_output(R"({"vendor": "shop", "list_items": [], "TOTAL": 5})");
    CHECK(relaxed.record.vendor == std::string("shop"));
    CHECK(relaxed.record.total == 5.0);
}

TEST_CASE("parse_model_output: unrecoverable input raises") {
    CHECK_THROWS_AS(parse_model_output("no json here at all"), ModelOutputError);
    CHECK_THROWS_AS(parse_model_output(""), ModelOutputError);
    CHECK_THROWS_AS(parse_model_output("[1, 2, 3]"), ModelOutputError);
    CHECK_THROWS_AS(parse_model_output("{ broken"), ModelOutputError);
}

TEST_CASE("mock extractor: perfect mode echoes the truth") {
    const fs::path dir = fresh_dir("mock_perfect");
    const dataset::Manifest manifest = tiny_manifest(dir);
    auto mock = make_mock_extractor(manifest, MockMode::perfect, 1);

    const auto outcomes = run_extraction(manifest, *mock);
    REQUIRE(outcomes.size() == manifest.entries.size());
    const dataset::ReceiptRecord truth = dataset::load_truth(dir / "doc.json");
    for (const OutcomeRecord& rec : outcomes) {
        CHECK(rec.outcome.status == OutcomeStatus::ok);
        REQUIRE(rec.outcome.prediction.has_value());
        CHECK(*rec.outcome.prediction == truth);
    }
}

TEST_CASE("mock extractor: row_shuffle zeroes the four structured fields") {
    const fs::path dir = fresh_dir("mock_shuffle");
    const dataset::Manifest manifest = tiny_manifest(dir);
    auto mock = make_mock_extractor(manifest, MockMode::row_shuffle, 1);

    const dataset::ReceiptRecord truth = dataset::load_truth(dir / "doc.json");
    const auto outcomes = run_extraction(manifest, *mock);
    for (const OutcomeRecord& rec : outcomes) {
        REQUIRE(rec.outcome.prediction.has_value());
        const scoring::EntityScores s = scoring::receipt_scores(truth, *rec.outcome.prediction);
        CHECK(s.subtotal == 0.0);
        CHECK(s.tax == 0.0);
        CHECK(s.total == 0.0);
        CHECK(s.payment == 0.0);
        CHECK(s.vendor == 1.0);
        CHECK(s.date == 1.0);
        CHECK(s.list_items == 1.0);
        CHECK(s.change == 1.0);  // untouched by the cycle
    }
}

TEST_CASE("mock extractor: drop_items removes the trailing half") {
    const fs::path dir = fresh_dir("mock_drop");
    const dataset::Manifest manifest = tiny_manifest(dir);
    auto mock = make_mock_extractor(manifest, MockMode::drop_items, 1);

    const dataset::ReceiptRecord truth = dataset::load_truth(dir / "doc.json");
    const auto outcomes = run_extraction(manifest, *mock);
    REQUIRE(!outcomes.empty());
    const auto& pred = *outcomes[0].outcome.prediction;
    REQUIRE(pred.list_items.size() == 1);  // 2 items -> 1 dropped
    CHECK(pred.list_items[0] == truth.list_items[0]);
    CHECK(scoring::list_items_score(truth.list_items, pred.list_items) == doctest::Approx(0.5));
}

TEST_CASE("mock extractor: numeric_noise perturbs exactly one money field") {
    const fs::path dir = fresh_dir("mock_noise");
    const dataset::Manifest manifest = tiny_manifest(dir);
    auto mock = make_mock_extractor(manifest, MockMode::numeric_noise, 42);

    const dataset::ReceiptRecord truth = dataset::load_truth(dir / "doc.json");
    const auto outcomes = run_extraction(manifest, *mock);
    for (const OutcomeRecord& rec : outcomes) {
        const auto& pred = *rec.outcome.prediction;
        int changed = 0;
        changed += pred.subtotal != truth.subtotal;
        changed += pred.tax != truth.tax;
        changed += pred.total != truth.total;
        changed += pred.payment != truth.payment;
        changed += pred.change != truth.change;
        CHECK(changed == 1);
        CHECK(pred.vendor == truth.vendor);
        CHECK(pred.list_items == truth.list_items);
    }

    // Deterministic under the same seed.
    auto mock2 = make_mock_extractor(manifest, MockMode::numeric_noise, 42);
    const auto again = run_extraction(manifest, *mock2);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        CHECK(*again[i].outcome.prediction == *outcomes[i].outcome.prediction);
    }

    CHECK_THROWS_AS(mock_mode_from_string("bogus"), ConfigError);
}

TEST_CASE("response cache: round trip and key separation") {
    const fs::path dir = fresh_dir("cache");
    ResponseCache cache(dir / "responses");
    const std::string key = ResponseCache::hash_components({"alpha", "beta"});
    CHECK_FALSE(cache.get(key).has_value());
    cache.put(key, "payload-bytes\x00\x01ok");
    CHECK(cache.get(key) == std::string("payload-bytes\x00\x01ok"));

    // Length prefixing keeps concatenation ambiguity out of the key space.
    CHECK(ResponseCache::hash_components({"ab", "c"}) !=
          ResponseCache::hash_components({"a", "bc"}));
    CHECK(ResponseCache::hash_components({"ab"}) != ResponseCache::hash_components({"ab", ""}));

    ExtractorConfig cfg;
    cfg.cache_dir = dir / "responses";
    const std::string k1 = request_cache_key(cfg, "prompt", "img", 0);
    ExtractorConfig cfg2 = cfg;
    cfg2.temperature = 0.5;
    CHECK(request_cache_key(cfg2, "prompt", "img", 0) != k1);
    CHECK(request_cache_key(cfg, "prompt2", "img", 0) != k1);
    CHECK(request_cache_key(cfg, "prompt", "img2", 0) != k1);
    CHECK(request_cache_key(cfg, "prompt", "img", 1) != k1);
    CHECK(request_cache_key(cfg, "prompt", "img", 0) == k1);
}

TEST_CASE("remote client: success path over a local endpoint") {
    const fs::path dir = fresh_dir("client_ok");
    const dataset::Manifest manifest = tiny_manifest(dir);

    std::atomic<int> requests{0};
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        const json body = json::parse(req.body);
        // The request must carry the prompt and the PNG payload.
        const auto& parts = body.at("contents").at(0).at("parts");
        REQUIRE(parts.size() == 2);
        CHECK(parts.at(0).at("text").get<std::string>() == entity_prompt());
        CHECK(parts.at(1).at("inline_data").at("mime_type") == "image/png");
        CHECK(body.at("generationConfig").at("temperature").get<double>() == 1.0);
        CHECK(body.at("generationConfig").at("topP").get<double>() == 0.95);
        CHECK(body.at("generationConfig").at("maxOutputTokens").get<int>() == 8192);
        res.set_content(wire_body("{\"Vendor\": \"SHOP\", \"Subtotal\": 71.4}"),
                        "application/json");
    });

    setenv("TRAPZ_TEST_KEY", "test-key", 1);
    GeminiClient client(local_config(server.endpoint(), dir / "cache"));
    const auto outcomes = run_extraction(manifest, client);
    REQUIRE(outcomes.size() == manifest.entries.size());
    for (const OutcomeRecord& rec : outcomes) {
        CHECK(rec.outcome.status == OutcomeStatus::ok);
        CHECK(rec.outcome.prediction->vendor == std::string("SHOP"));
        CHECK(rec.outcome.prediction->subtotal == 71.4);
        CHECK_FALSE(rec.outcome.cache_hit);
    }
    CHECK(requests.load() == static_cast<int>(manifest.entries.size()));
    CHECK(client.network_calls() == manifest.entries.size());

    // Warm cache: identical results, zero additional network calls.
    GeminiClient warm(local_config(server.endpoint(), dir / "cache"));
    const auto cached = run_extraction(manifest, warm);
    CHECK(warm.network_calls() == 0);
    CHECK(requests.load() == static_cast<int>(manifest.entries.size()));
    for (std::size_t i = 0; i < cached.size(); ++i) {
        CHECK(cached[i].outcome.cache_hit);
        CHECK(*cached[i].outcome.prediction == *outcomes[i].outcome.prediction);
    }
}

TEST_CASE("remote client: retries transient failures with backoff") {
    const fs::path dir = fresh_dir("client_retry");
    const dataset::Manifest manifest = tiny_manifest(dir, /*single_cell=*/true);

    std::atomic<int> requests{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        const int n = ++requests;
        if (n <= 2) {
            res.status = 503;
            res.set_content("overloaded", "text/plain");
            return;
        }
        res.set_content(wire_body("{\"Total\": 5}"), "application/json");
    });

    setenv("TRAPZ_TEST_KEY", "test-key", 1);
    ExtractorConfig cfg = local_config(server.endpoint(), dir / "cache");
    cfg.max_retries = 3;
    GeminiClient client(cfg);

    VariantImage variant;
    variant.key = "probe";
    variant.png_bytes = "not-a-real-png";  // server does not inspect it
    const ExtractionOutcome outcome = client.extract_entities(variant);
    CHECK(outcome.status == OutcomeStatus::ok);
    CHECK(outcome.prediction->total == 5.0);
    CHECK(requests.load() == 3);
}

TEST_CASE("remote client: non-retryable status fails fast, bad payload is parse_failed") {
    const fs::path dir = fresh_dir("client_fail");

    std::atomic<int> requests{0};
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        const json body = json::parse(req.body);
        const std::string text =
            body.at("contents").at(0).at("parts").at(0).at("text").get<std::string>();
        if (text == entity_prompt()) {
            res.status = 404;
            res.set_content("no such model", "text/plain");
        } else {
            res.set_content(wire_body("plain transcript, no json"), "application/json");
        }
    });

    setenv("TRAPZ_TEST_KEY", "test-key", 1);
    GeminiClient client(local_config(server.endpoint(), dir / "cache"));

    VariantImage variant;
    variant.key = "probe";
    variant.png_bytes = "bytes";
    const ExtractionOutcome outcome = client.extract_entities(variant);
    CHECK(outcome.status == OutcomeStatus::transport_failed);
    CHECK_FALSE(outcome.prediction.has_value());
    CHECK(requests.load() == 1);  // 404 does not retry

    // Full-text prompt returns plain text: extract_fulltext passes it
    // through; entity parsing of such text classifies as parse_failed.
    const std::string transcript = client.extract_fulltext(variant);
    CHECK(transcript == "plain transcript, no json");
}

TEST_CASE("remote client: parse_failed on unstructured entity text") {
    const fs::path dir = fresh_dir("client_parsefail");
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(wire_body("I cannot read this receipt, sorry."), "application/json");
    });
    setenv("TRAPZ_TEST_KEY", "test-key", 1);
    GeminiClient client(local_config(server.endpoint(), dir / "cache"));
    VariantImage variant;
    variant.key = "probe";
    variant.png_bytes = "bytes";
    const ExtractionOutcome outcome = client.extract_entities(variant);
    CHECK(outcome.status == OutcomeStatus::parse_failed);
    CHECK_FALSE(outcome.prediction.has_value());
    CHECK(outcome.raw_text == "I cannot read this receipt, sorry.");
}

TEST_CASE("replay mode: answers from cache only, misses fail the entry") {
    const fs::path dir = fresh_dir("replay");
    const dataset::Manifest manifest = tiny_manifest(dir);
    REQUIRE(manifest.entries.size() >= 2);

    // Populate the cache for all but the last entry, bypassing the network.
    ExtractorConfig cfg;
    cfg.cache_dir = dir / "cache";
    cfg.replay_only = true;
    ResponseCache cache(cfg.cache_dir);
    for (std::size_t i = 0; i + 1 < manifest.entries.size(); ++i) {
        std::ifstream in(manifest.entries[i].variant_path, std::ios::binary);
        std::ostringstream bytes;
        bytes << in.rdbuf();
        cache.put(request_cache_key(cfg, entity_prompt(), bytes.str(), 0),
                  wire_body("{\"Vendor\": \"CACHED\"}"));
    }

    GeminiClient replay(cfg);
    const auto outcomes = run_extraction(manifest, replay);
    CHECK(replay.network_calls() == 0);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (i + 1 < outcomes.size()) {
            CHECK(outcomes[i].outcome.status == OutcomeStatus::ok);
            CHECK(outcomes[i].outcome.cache_hit);
            CHECK(outcomes[i].outcome.prediction->vendor == std::string("CACHED"));
        } else {
            CHECK(outcomes[i].outcome.status == OutcomeStatus::transport_failed);
        }
    }
}

TEST_CASE("run_extraction: existing outcomes are not recomputed") {
    const fs::path dir = fresh_dir("resume");
    const dataset::Manifest manifest = tiny_manifest(dir);
    auto mock = make_mock_extractor(manifest, MockMode::perfect, 1);
    auto first = run_extraction(manifest, *mock);

    // Tag the first round, then resume: tags must survive because entries
    // are skipped, except transport failures which are retried.
    first[0].outcome.raw_text = "tagged";
    first[1].outcome.status = OutcomeStatus::transport_failed;

    ExtractionRunOptions options;
    options.existing = first;
    const auto second = run_extraction(manifest, *mock, options);
    CHECK(second[0].outcome.raw_text == "tagged");
    CHECK(second[1].outcome.status == OutcomeStatus::ok);  // re-extracted
}

TEST_CASE("outcomes: save/load round trip") {
    const fs::path dir = fresh_dir("outcomes_io");
    const dataset::Manifest manifest = tiny_manifest(dir);
    auto mock = make_mock_extractor(manifest, MockMode::perfect, 1);
    const auto outcomes = run_extraction(manifest, *mock);

    save_outcomes(outcomes, dir / "outcomes.jsonl");
    const auto loaded = load_outcomes(dir / "outcomes.jsonl");
    REQUIRE(loaded.size() == outcomes.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].source_id == outcomes[i].source_id);
        CHECK(loaded[i].theta_deg == outcomes[i].theta_deg);
        CHECK(loaded[i].r == outcomes[i].r);
        CHECK(loaded[i].outcome.status == outcomes[i].outcome.status);
        CHECK(*loaded[i].outcome.prediction == *outcomes[i].outcome.prediction);
    }
}

TEST_CASE("score_outcomes: perfect run scores all ones, repeats average") {
    const fs::path dir = fresh_dir("score_outcomes");
    const dataset::Manifest manifest = tiny_manifest(dir);
    auto mock = make_mock_extractor(manifest, MockMode::perfect, 1);

    ExtractionRunOptions options;
    options.repeats = 2;
    const auto outcomes = run_extraction(manifest, *mock, options);
    CHECK(outcomes.size() == manifest.entries.size() * 2);

    const auto scores = score_outcomes(manifest, outcomes);
    REQUIRE(scores.size() == manifest.entries.size());
    for (const auto& rec : scores) {
        CHECK(rec.average == 1.0);
        for (double v : rec.scores.values()) CHECK(v == 1.0);
    }
}

TEST_CASE("extractor config validation") {
    ExtractorConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.top_p = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ExtractorConfig{};
    cfg.temperature = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ExtractorConfig{};
    cfg.max_output_tokens = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    // Live mode requires the credential variable.
    unsetenv("TRAPZ_MISSING_KEY");
    ExtractorConfig live;
    live.api_key_env = "TRAPZ_MISSING_KEY";
    CHECK_THROWS_AS(GeminiClient{live}, ConfigError);
}
