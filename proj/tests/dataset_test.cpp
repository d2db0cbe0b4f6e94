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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "trapz/dataset.hpp"
#include "trapz/errors.hpp"
#include "trapz/image_io.hpp"
#include "trapz/receipt.hpp"

using namespace trapz;
using namespace trapz::dataset;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "trapz_dataset_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

raster::RasterImage checker_image(int w, int h, int phase) {
    raster::RasterImage img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool on = ((x / 4 + y / 4 + phase) % 2) == 0;
            img.set(x, y, on ? raster::Rgb{20, 40, 200} : raster::Rgb{250, 250, 240});
        }
    }
    return img;
}

void write_truth(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::trunc);
    out << body;
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

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// A source pair (image + truth) under the given directories.
void make_source(const fs::path& images, const fs::path& truths, const std::string& id,
                 int phase = 0) {
    raster::write_image(checker_image(24, 32, phase), images / (id + ".png"));
    write_truth(truths / (id + ".json"), kTruthJson);
}

}  // namespace

TEST_CASE("default grid: 19 x 9 cells with exact powers of two") {
    const SweepGrid grid = default_grid();
    CHECK(grid.thetas.size() == 19);
    CHECK(grid.ratio_exponents.size() == 9);
    CHECK(grid.cell_count() == 171);

    CHECK(std::count(grid.thetas.begin(), grid.thetas.end(), 0.0) == 1);
    CHECK(grid.thetas.front() == -90.0);
    CHECK(grid.thetas.back() == 90.0);

    const auto ratios = grid.ratios();
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        CHECK(ratios[i] == std::pow(2.0, grid.ratio_exponents[i]));
    }
    CHECK(std::count(ratios.begin(), ratios.end(), 1.0) == 1);
    CHECK(ratios.front() == 0.25);
    CHECK(ratios.back() == 4.0);
}

TEST_CASE("grid spec parsing") {
    const SweepGrid grid = parse_grid_spec("0,10,-20;0,1,-1.5");
    CHECK(grid.thetas == std::vector<double>{0, 10, -20});
    CHECK(grid.ratio_exponents == std::vector<double>{0, 1, -1.5});
    CHECK_THROWS_AS(parse_grid_spec("0,10"), ConfigError);
    CHECK_THROWS_AS(parse_grid_spec("0,x;1"), ConfigError);
    CHECK_THROWS_AS(parse_grid_spec(";1"), ConfigError);
}

TEST_CASE("load_truth: values, nulls, and validation") {
    const fs::path dir = fresh_dir("truth");
    write_truth(dir / "a.json", R"({"Subtotal": 71.40})");
    const ReceiptRecord a = load_truth(dir / "a.json");
    CHECK(a.subtotal == 71.40);
    CHECK_FALSE(a.change.has_value());
    CHECK_FALSE(a.vendor.has_value());
    CHECK(a.list_items.empty());

    write_truth(dir / "b.json", R"({"List items": [], "Change": null})");
    const ReceiptRecord b = load_truth(dir / "b.json");
    CHECK(b.list_items.empty());
    CHECK_FALSE(b.change.has_value());

    write_truth(dir / "bad_syntax.json", "{ not json");
    CHECK_THROWS_AS(load_truth(dir / "bad_syntax.json"), TruthParseError);

    write_truth(dir / "bad_date.json", R"({"Date": "05/17/2020"})");
    CHECK_THROWS_AS(load_truth(dir / "bad_date.json"), TruthParseError);

    write_truth(dir / "bad_date2.json", R"({"Date": "2020-02-30"})");
    CHECK_THROWS_AS(load_truth(dir / "bad_date2.json"), TruthParseError);

    write_truth(dir / "bad_qty.json", R"({"List items": [{"Item": "x", "Quantity": -1}]})");
    CHECK_THROWS_AS(load_truth(dir / "bad_qty.json"), TruthParseError);

    write_truth(dir / "bad_num.json", R"({"Total": "12"})");
    CHECK_THROWS_AS(load_truth(dir / "bad_num.json"), TruthParseError);

    CHECK_THROWS_AS(load_truth(dir / "missing.json"), TruthParseError);
}

TEST_CASE("normalize_date accepts Y-m-d variants and rejects junk") {
    CHECK(normalize_date("2023-07-04") == std::string("2023-07-04"));
    CHECK(normalize_date("2023-7-4") == std::string("2023-07-04"));
    CHECK(normalize_date("2023/7/04") == std::string("2023-07-04"));
    CHECK_FALSE(normalize_date("04-07-2023").has_value());
    CHECK_FALSE(normalize_date("2023-13-01").has_value());
    CHECK_FALSE(normalize_date("2023-02-30").has_value());
    CHECK_FALSE(normalize_date("May 17, 2020").has_value());
    CHECK_FALSE(normalize_date("").has_value());
}

TEST_CASE("synthesize_sweep: single identity cell reproduces the source") {
    const fs::path dir = fresh_dir("identity");
    make_source(dir, dir, "doc");
    SweepGrid grid;
    grid.thetas = {0.0};
    grid.ratio_exponents = {0.0};

    const Manifest manifest =
        synthesize_sweep({{"doc", dir / "doc.png", dir / "doc.json"}}, grid, dir / "out");
    REQUIRE(manifest.entries.size() == 1);
    CHECK(manifest.failures.empty());
    const ManifestEntry& e = manifest.entries[0];
    CHECK(e.source_id == "doc");
    CHECK(e.theta_deg == 0.0);
    CHECK(e.r == 1.0);
    CHECK(raster::read_image(e.variant_path) == raster::read_image(dir / "doc.png"));
    CHECK(e.variant_path.filename() == "theta_0_r_0.png");
}

TEST_CASE("synthesize_sweep: counts, uniqueness, stored homography reproduces variants") {
    const fs::path dir = fresh_dir("counts");
    make_source(dir, dir, "alpha", 0);
    make_source(dir, dir, "beta", 1);
    SweepGrid grid;
    grid.thetas = {-20.0, 35.0};
    grid.ratio_exponents = {-1.0, 0.5};

    const std::vector<SourceDoc> sources{{"alpha", dir / "alpha.png", dir / "alpha.json"},
                                         {"beta", dir / "beta.png", dir / "beta.json"}};
    const Manifest manifest = synthesize_sweep(sources, grid, dir / "out");
    REQUIRE(manifest.entries.size() == 8);
    CHECK(manifest.failures.empty());

    std::set<std::string> keys;
    for (const ManifestEntry& e : manifest.entries) {
        keys.insert(variant_key(e.source_id, e.theta_deg, e.r));
    }
    CHECK(keys.size() == 8);

    // Re-warping each source with the stored matrix must reproduce the
    // stored variant pixel for pixel.
    for (const ManifestEntry& e : manifest.entries) {
        const raster::RasterImage src = raster::read_image(dir / (e.source_id + ".png"));
        const raster::WarpResult rewarp = raster::warp_image(src, e.homography);
        CHECK(rewarp.image == raster::read_image(e.variant_path));
        CHECK(rewarp.offset.x == doctest::Approx(e.offset.x).epsilon(1e-12));
        CHECK(rewarp.offset.y == doctest::Approx(e.offset.y).epsilon(1e-12));
    }
}

TEST_CASE("synthesize_sweep: deterministic and idempotent re-runs") {
    const fs::path dir = fresh_dir("determinism");
    make_source(dir, dir, "doc");
    SweepGrid grid;
    grid.thetas = {-40.0, 0.0, 70.0};
    grid.ratio_exponents = {-0.5, 0.0, 1.0};
    const std::vector<SourceDoc> sources{{"doc", dir / "doc.png", dir / "doc.json"}};

    synthesize_sweep(sources, grid, dir / "out");
    std::map<std::string, std::string> first;
    for (const auto& f : fs::recursive_directory_iterator(dir / "out")) {
        if (f.is_regular_file()) first[f.path().string()] = read_bytes(f.path());
    }

    // Re-run over the existing tree: byte-identical everything.
    synthesize_sweep(sources, grid, dir / "out");
    for (const auto& [path, bytes] : first) {
        CHECK(read_bytes(path) == bytes);
    }

    // Fresh output directory: identical variant bytes again.
    synthesize_sweep(sources, grid, dir / "out2");
    for (const auto& f : fs::recursive_directory_iterator(dir / "out2")) {
        if (!f.is_regular_file() || f.path().extension() != ".png") continue;
        const auto rel = fs::relative(f.path(), dir / "out2");
        CHECK(read_bytes(f.path()) == first.at((dir / "out" / rel).string()));
    }
}

TEST_CASE("synthesize_sweep: unreadable source fails its cells, run continues") {
    const fs::path dir = fresh_dir("partial");
    make_source(dir, dir, "good");
    std::ofstream(dir / "broken.png") << "not a png";
    write_truth(dir / "broken.json", kTruthJson);

    SweepGrid grid;
    grid.thetas = {0.0, 10.0};
    grid.ratio_exponents = {0.0, 1.0};
    const std::vector<SourceDoc> sources{{"broken", dir / "broken.png", dir / "broken.json"},
                                         {"good", dir / "good.png", dir / "good.json"}};
    const Manifest manifest = synthesize_sweep(sources, grid, dir / "out");
    CHECK(manifest.entries.size() == 4);
    CHECK(manifest.failures.size() == 4);
    for (const ManifestFailure& f : manifest.failures) {
        CHECK(f.source_id == "broken");
        CHECK_FALSE(f.error.empty());
    }
    // Completeness: entries + failures == sources x cells.
    CHECK(manifest.entries.size() + manifest.failures.size() == 2 * grid.cell_count());
}

TEST_CASE("manifest: save/load round trip preserves the homography bit-exactly") {
    const fs::path dir = fresh_dir("roundtrip");
    make_source(dir, dir, "doc");
    SweepGrid grid;
    grid.thetas = {25.0};
    grid.ratio_exponents = {0.5};
    const Manifest manifest =
        synthesize_sweep({{"doc", dir / "doc.png", dir / "doc.json"}}, grid, dir / "out");

    const Manifest loaded = load_manifest(dir / "out" / "manifest.jsonl");
    REQUIRE(loaded.entries.size() == 1);
    const ManifestEntry& a = manifest.entries[0];
    const ManifestEntry& b = loaded.entries[0];
    CHECK(a.homography.entries() == b.homography.entries());
    CHECK(a.offset.x == b.offset.x);
    CHECK(a.offset.y == b.offset.y);
    CHECK(a.extent.w0 == b.extent.w0);
    CHECK(b.ratio_exponent == 0.5);
    CHECK(a.variant_path == b.variant_path);
}

TEST_CASE("manifest: duplicate keys are rejected") {
    Manifest manifest;
    ManifestEntry e;
    e.source_id = "dup";
    e.theta_deg = 0;
    e.r = 1;
    manifest.entries.push_back(e);
    manifest.entries.push_back(e);
    CHECK_THROWS_AS(save_manifest(manifest, fresh_dir("dup") / "manifest.jsonl"), Error);
}

TEST_CASE("discover_sources pairs stems and rejects duplicates") {
    const fs::path dir = fresh_dir("discover");
    const fs::path truths = dir / "truths";
    fs::create_directories(truths);
    make_source(dir, truths, "receipt_b");
    make_source(dir, truths, "receipt_a");
    std::ofstream(dir / "notes.txt") << "ignored";

    const auto sources = discover_sources(dir, truths);
    REQUIRE(sources.size() == 2);
    CHECK(sources[0].id == "receipt_a");  // sorted
    CHECK(sources[1].id == "receipt_b");
    CHECK(sources[0].truth_path == truths / "receipt_a.json");

    CHECK_THROWS_AS(discover_sources(dir / "nope", truths), ConfigError);
}

TEST_CASE("format_compact trims like the file names expect") {
    CHECK(format_compact(0.0) == "0");
    CHECK(format_compact(-20.0) == "-20");
    CHECK(format_compact(0.5) == "0.5");
    CHECK(format_compact(-1.5) == "-1.5");
    CHECK(format_compact(90.0) == "90");
}
