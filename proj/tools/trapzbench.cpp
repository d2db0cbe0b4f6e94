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

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <json.hpp>

#include "trapz/dataset.hpp"
#include "trapz/errors.hpp"
#include "trapz/extraction.hpp"
#include "trapz/gemini.hpp"
#include "trapz/geometry.hpp"
#include "trapz/image_io.hpp"
#include "trapz/parallel.hpp"
#include "trapz/raster.hpp"
#include "trapz/report.hpp"
#include "trapz/scoring.hpp"

namespace {

// Exit codes: 0 success, 1 usage/config, 2 partial (some entries failed),
// 3 total failure.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitPartial = 2;
constexpr int kExitFailure = 3;

using nlohmann::json;
using namespace trapz;

struct GlobalOptions {
    std::string config_path;
    std::string workdir = "work";
    unsigned jobs = default_jobs();
    std::string grid_spec;
    std::uint64_t seed = 0;
};

struct RunConfig {
    std::filesystem::path sources_dir;
    std::filesystem::path truths_dir;
    std::filesystem::path workdir;
    dataset::SweepGrid grid = dataset::default_grid();
    extraction::ExtractorConfig extractor;
    std::string extractor_kind = "perfect";
    unsigned jobs = default_jobs();
    std::uint64_t seed = 0;
    int png_compression = 6;
    int margin = 0;
};

RunConfig load_run_config(const GlobalOptions& global) {
    RunConfig cfg;
    if (!global.config_path.empty()) {
        std::ifstream in(global.config_path);
        if (!in) throw ConfigError("cannot open config file: " + global.config_path);
        json j;
        try {
            j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
        } catch (const json::parse_error& e) {
            throw ConfigError("config file " + global.config_path + ": " + e.what());
        }
        cfg.sources_dir = j.value("sources_dir", "");
        cfg.truths_dir = j.value("truths_dir", "");
        cfg.workdir = j.value("workdir", "");
        if (j.contains("grid")) {
            cfg.grid.thetas = j.at("grid").value("thetas", cfg.grid.thetas);
            cfg.grid.ratio_exponents =
                j.at("grid").value("exponents", cfg.grid.ratio_exponents);
        }
        cfg.jobs = j.value("jobs", cfg.jobs);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.png_compression = j.value("png_compression", cfg.png_compression);
        cfg.margin = j.value("margin", cfg.margin);
        if (j.contains("extractor")) {
            const json& e = j.at("extractor");
            extraction::ExtractorConfig& x = cfg.extractor;
            cfg.extractor_kind = e.value("kind", cfg.extractor_kind);
            x.model_name = e.value("model_name", x.model_name);
            x.temperature = e.value("temperature", x.temperature);
            x.max_output_tokens = e.value("max_output_tokens", x.max_output_tokens);
            x.top_p = e.value("top_p", x.top_p);
            x.endpoint = e.value("endpoint", x.endpoint);
            x.api_key_env = e.value("api_key_env", x.api_key_env);
            x.request_timeout_s = e.value("request_timeout_s", x.request_timeout_s);
            x.max_retries = e.value("max_retries", x.max_retries);
            x.requests_per_minute = e.value("requests_per_minute", x.requests_per_minute);
            x.repeats = e.value("repeats", x.repeats);
            x.in_flight_limit = e.value("in_flight", x.in_flight_limit);
            x.cache_dir = e.value("cache_dir", x.cache_dir.string());
        }
    }
    // Flags override the config file.
    if (!global.workdir.empty()) cfg.workdir = global.workdir;
    if (cfg.workdir.empty()) cfg.workdir = "work";
    if (!global.grid_spec.empty()) cfg.grid = dataset::parse_grid_spec(global.grid_spec);
    if (global.jobs > 0) cfg.jobs = global.jobs;
    if (global.seed != 0) cfg.seed = global.seed;
    return cfg;
}

std::unique_ptr<extraction::Extractor> make_extractor(const RunConfig& cfg,
                                                      const dataset::Manifest& manifest) {
    const std::string& kind = cfg.extractor_kind;
    if (kind == "gemini" || kind == "replay") {
        extraction::ExtractorConfig x = cfg.extractor;
        x.replay_only = kind == "replay";
        if (x.cache_dir.empty()) x.cache_dir = cfg.workdir / "cache";
        return std::make_unique<extraction::GeminiClient>(std::move(x));
    }
    return extraction::make_mock_extractor(manifest, extraction::mock_mode_from_string(kind),
                                           cfg.seed);
}

raster::Rgb parse_fill(const std::string& spec) {
    int r, g, b;
    if (std::sscanf(spec.c_str(), "%d,%d,%d", &r, &g, &b) != 3 || r < 0 || r > 255 || g < 0 ||
        g > 255 || b < 0 || b > 255) {
        throw ConfigError("fill must be R,G,B with components in 0..255");
    }
    return raster::Rgb{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                       static_cast<std::uint8_t>(b)};
}

void print_homography(const geometry::Homography& h) {
    const auto& m = h.canonical().entries();
    for (int row = 0; row < 3; ++row) {
        std::printf("% .12g % .12g % .12g\n", m[row * 3], m[row * 3 + 1], m[row * 3 + 2]);
    }
}

int cmd_warp(const std::string& image, double theta, double r, const std::string& out,
             const std::string& fill_spec, unsigned jobs) {
    const raster::RasterImage src = raster::read_image(image);
    const geometry::DocumentExtent extent{static_cast<double>(src.width()),
                                          static_cast<double>(src.height())};
    const geometry::Homography h =
        geometry::homography_from_params(extent, {theta, r}).canonical();
    raster::WarpOptions options;
    options.fill = parse_fill(fill_spec);
    options.jobs = jobs;
    const raster::WarpResult result = raster::warp_image(src, h, options);
    raster::write_image(result.image, out);
    print_homography(h);
    return kExitOk;
}

int cmd_rectify(const std::string& image, double theta, std::optional<double> r,
                std::optional<double> w0, std::optional<double> h0, const std::string& out,
                unsigned jobs) {
    const raster::RasterImage distorted = raster::read_image(image);
    raster::WarpOptions options;
    options.jobs = jobs;
    if (!r) {
        raster::write_image(raster::rectify_rotation(distorted, theta, options), out);
        return kExitOk;
    }
    if (!w0 || !h0) {
        throw ConfigError("full rectification needs --w0 and --h0 (the source extent)");
    }
    // Reconstruct the warp context: the canvas offset is a pure function of
    // the transformed corner bounding box.
    const geometry::DocumentExtent extent{*w0, *h0};
    const geometry::Homography h =
        geometry::homography_from_params(extent, {theta, *r}).canonical();
    const geometry::Quad corners =
        geometry::apply_homography(h, geometry::rect_corners(extent));
    double xmin = corners.v[0].x, ymin = corners.v[0].y;
    for (const geometry::Point2& p : corners.v) {
        xmin = std::min(xmin, p.x);
        ymin = std::min(ymin, p.y);
    }
    raster::WarpResult context;
    context.image = distorted;
    context.forward = h;
    context.offset = geometry::Point2{-xmin, -ymin};
    context.source_extent = extent;
    raster::write_image(raster::rectify_full(context, options), out);
    return kExitOk;
}

int cmd_sweep(const RunConfig& cfg) {
    if (cfg.sources_dir.empty() || cfg.truths_dir.empty()) {
        throw ConfigError("sweep needs --sources and --truths (or a config file)");
    }
    const auto sources = dataset::discover_sources(cfg.sources_dir, cfg.truths_dir);
    if (sources.empty()) throw ConfigError("no .png sources in " + cfg.sources_dir.string());

    dataset::SweepOptions options;
    options.jobs = cfg.jobs;
    options.png_compression = cfg.png_compression;
    options.margin = cfg.margin;
    const dataset::Manifest manifest =
        dataset::synthesize_sweep(sources, cfg.grid, cfg.workdir / "variants", options);

    std::fprintf(stderr, "sweep: %zu variants, %zu failures -> %s\n", manifest.entries.size(),
                 manifest.failures.size(),
                 (cfg.workdir / "variants" / "manifest.jsonl").string().c_str());
    for (const dataset::ManifestFailure& f : manifest.failures) {
        std::fprintf(stderr, "  failed %s: %s\n",
                     dataset::variant_key(f.source_id, f.theta_deg, f.r).c_str(),
                     f.error.c_str());
    }
    if (!manifest.failures.empty()) return manifest.entries.empty() ? kExitFailure : kExitPartial;
    return kExitOk;
}

int cmd_extract(const RunConfig& cfg, const std::string& manifest_path,
                const std::string& out_path) {
    const dataset::Manifest manifest = dataset::load_manifest(manifest_path);
    auto extractor = make_extractor(cfg, manifest);

    extraction::ExtractionRunOptions options;
    options.repeats = cfg.extractor.repeats;
    options.jobs = std::min(cfg.jobs, cfg.extractor.in_flight_limit);
    if (std::filesystem::exists(out_path)) {
        options.existing = extraction::load_outcomes(out_path);
    }
    const auto outcomes = extraction::run_extraction(manifest, *extractor, options);
    extraction::save_outcomes(outcomes, out_path);

    std::size_t failed = 0;
    for (const auto& rec : outcomes) {
        if (rec.outcome.status == extraction::OutcomeStatus::transport_failed) ++failed;
    }
    std::fprintf(stderr, "extract: %zu outcomes, %zu transport failures -> %s\n", outcomes.size(),
                 failed, out_path.c_str());
    if (failed == outcomes.size() && !outcomes.empty()) return kExitFailure;
    return failed > 0 ? kExitPartial : kExitOk;
}

int cmd_score(const std::string& manifest_path, const std::string& outcomes_path,
              const std::string& out_path) {
    const dataset::Manifest manifest = dataset::load_manifest(manifest_path);
    const auto outcomes = extraction::load_outcomes(outcomes_path);
    const auto scores = extraction::score_outcomes(manifest, outcomes);
    scoring::save_scores(scores, out_path);
    std::fprintf(stderr, "score: %zu records -> %s\n", scores.size(), out_path.c_str());
    return scores.size() < manifest.entries.size() ? kExitPartial : kExitOk;
}

int cmd_report(const std::string& manifest_path, const std::string& scores_path,
               const std::string& out_dir, int cell_px) {
    const dataset::Manifest manifest = dataset::load_manifest(manifest_path);
    const auto scores = scoring::load_scores(scores_path);
    if (scores.empty()) throw ConfigError("scores file is empty: " + scores_path);
    const report::AggregateResult result = report::aggregate(scores, manifest);
    report::write_all(result, manifest, out_dir, cell_px);
    std::fprintf(stderr, "report: %zu grids -> %s (missing records: %zu)\n", result.grids.size(),
                 out_dir.c_str(), result.missing.size());
    return result.missing.empty() && manifest.failures.empty() ? kExitOk : kExitPartial;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trapezoidal-distortion benchmark for receipt entity extraction"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--config", global.config_path, "JSON run configuration");
    app.add_option("--workdir", global.workdir, "working directory (default: work)");
    app.add_option("--jobs", global.jobs, "worker threads");
    app.add_option("--grid", global.grid_spec, "grid override: \"<theta-list>;<k-list>\"");
    app.add_option("--seed", global.seed, "seed for deterministic mock noise");

    // warp
    auto* warp = app.add_subcommand("warp", "distort one image");
    std::string warp_image_path, warp_out, warp_fill = "255,255,255";
    double warp_theta = 0.0, warp_r = 1.0;
    warp->add_option("--image,-i", warp_image_path, "input PNG")->required();
    warp->add_option("--theta", warp_theta, "rotation angle in degrees")->required();
    warp->add_option("--r", warp_r, "distortion ratio")->required();
    warp->add_option("--out,-o", warp_out, "output PNG")->required();
    warp->add_option("--fill", warp_fill, "background fill R,G,B (default white)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "synthesize the (theta, r) sweep");
    std::string sweep_sources, sweep_truths;
    sweep->add_option("--sources", sweep_sources, "directory of source PNGs");
    sweep->add_option("--truths", sweep_truths, "directory of ground-truth JSON files");

    // extract
    auto* extract = app.add_subcommand("extract", "run the extractor over a manifest");
    std::string extract_manifest, extract_out, extract_kind, extract_cache;
    extract->add_option("--manifest", extract_manifest, "manifest.jsonl path")->required();
    extract->add_option("--out", extract_out, "outcomes file (default workdir/outcomes.jsonl)");
    extract->add_option("--extractor", extract_kind,
                        "perfect|row_shuffle|drop_items|numeric_noise|gemini|replay");
    extract->add_option("--cache", extract_cache, "response cache directory");

    // score
    auto* score = app.add_subcommand("score", "score outcomes against ground truth");
    std::string score_manifest, score_outcomes, score_out;
    score->add_option("--manifest", score_manifest, "manifest.jsonl path")->required();
    score->add_option("--outcomes", score_outcomes, "outcomes file")->required();
    score->add_option("--out", score_out, "scores file (default workdir/scores.jsonl)");

    // report
    auto* rep = app.add_subcommand("report", "aggregate scores into tables and heatmaps");
    std::string report_manifest, report_scores, report_out;
    int report_cell_px = 24;
    rep->add_option("--manifest", report_manifest, "manifest.jsonl path")->required();
    rep->add_option("--scores", report_scores, "scores file")->required();
    rep->add_option("--out", report_out, "output directory (default workdir/report)");
    rep->add_option("--cell-px", report_cell_px, "heatmap cell size in pixels");

    // rectify
    auto* rectify = app.add_subcommand("rectify", "undo rotation (or the full distortion)");
    std::string rectify_image, rectify_out;
    double rectify_theta = 0.0;
    std::optional<double> rectify_r, rectify_w0, rectify_h0;
    rectify->add_option("--image,-i", rectify_image, "distorted PNG")->required();
    rectify->add_option("--theta", rectify_theta, "synthesis rotation angle")->required();
    rectify->add_option("--r", rectify_r, "synthesis ratio (enables full rectification)");
    rectify->add_option("--w0", rectify_w0, "source width (full rectification)");
    rectify->add_option("--h0", rectify_h0, "source height (full rectification)");
    rectify->add_option("--out,-o", rectify_out, "output PNG")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = load_run_config(global);
        if (sweep->parsed()) {
            if (!sweep_sources.empty()) cfg.sources_dir = sweep_sources;
            if (!sweep_truths.empty()) cfg.truths_dir = sweep_truths;
            return cmd_sweep(cfg);
        }
        if (warp->parsed()) {
            return cmd_warp(warp_image_path, warp_theta, warp_r, warp_out, warp_fill, cfg.jobs);
        }
        if (extract->parsed()) {
            if (!extract_kind.empty()) cfg.extractor_kind = extract_kind;
            if (!extract_cache.empty()) cfg.extractor.cache_dir = extract_cache;
            if (extract_out.empty())
                extract_out = (cfg.workdir / "outcomes.jsonl").string();
            return cmd_extract(cfg, extract_manifest, extract_out);
        }
        if (score->parsed()) {
            if (score_out.empty()) score_out = (cfg.workdir / "scores.jsonl").string();
            return cmd_score(score_manifest, score_outcomes, score_out);
        }
        if (rep->parsed()) {
            if (report_out.empty()) report_out = (cfg.workdir / "report").string();
            return cmd_report(report_manifest, report_scores, report_out, report_cell_px);
        }
        if (rectify->parsed()) {
            return cmd_rectify(rectify_image, rectify_theta, rectify_r, rectify_w0, rectify_h0,
                               rectify_out, cfg.jobs);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitUsage;
}
