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

#include "trapz/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "trapz/errors.hpp"
#include "trapz/image_io.hpp"
#include "trapz/raster.hpp"

namespace trapz::report {

using scoring::EntityScores;
using scoring::ScoreRecord;

bool ScoreGrid::complete() const {
    for (const auto& row : cells) {
        for (const GridCell& c : row) {
            if (c.count < c.expected) return false;
        }
    }
    return true;
}

namespace {

// Axis values are compared with a tolerance so that 2^0.5 recomputed from a
// scores file lands in the same bin as the manifest value.
constexpr double kAxisEps = 1e-9;

std::vector<double> sorted_unique(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end(),
                             [](double a, double b) { return std::abs(a - b) <= kAxisEps; }),
                 values.end());
    return values;
}

std::size_t axis_index(const std::vector<double>& axis, double v, const char* what) {
    const auto it = std::lower_bound(axis.begin(), axis.end(), v - kAxisEps);
    if (it == axis.end() || std::abs(*it - v) > kAxisEps) {
        throw Error(std::string("value ") + std::to_string(v) + " not on the " + what + " axis");
    }
    return static_cast<std::size_t>(it - axis.begin());
}

}  // namespace

AggregateResult aggregate(const std::vector<ScoreRecord>& scores,
                          const dataset::Manifest& manifest) {
    if (manifest.entries.empty()) {
        throw Error("manifest has no successful entries to aggregate over");
    }

    std::vector<double> thetas, ratios, exponents;
    for (const dataset::ManifestEntry& e : manifest.entries) {
        thetas.push_back(e.theta_deg);
        ratios.push_back(e.r);
    }
    thetas = sorted_unique(std::move(thetas));
    ratios = sorted_unique(std::move(ratios));
    exponents.reserve(ratios.size());
    for (double r : ratios) exponents.push_back(std::log2(r));
    // Prefer the exact exponents recorded in the manifest over log2 output.
    for (const dataset::ManifestEntry& e : manifest.entries) {
        const std::size_t ri = axis_index(ratios, e.r, "ratio");
        exponents[ri] = e.ratio_exponent;
    }

    const std::size_t nt = thetas.size();
    const std::size_t nr = ratios.size();

    std::vector<std::vector<int>> expected(nt, std::vector<int>(nr, 0));
    std::set<std::string> manifest_keys;
    for (const dataset::ManifestEntry& e : manifest.entries) {
        expected[axis_index(thetas, e.theta_deg, "theta")][axis_index(ratios, e.r, "ratio")]++;
        manifest_keys.insert(dataset::variant_key(e.source_id, e.theta_deg, e.r));
    }

    constexpr std::size_t kGridCount = 9;  // eight entities + average
    AggregateResult result;
    result.grids.resize(kGridCount);
    const auto entity_names = EntityScores::names();
    for (std::size_t g = 0; g < kGridCount; ++g) {
        ScoreGrid& grid = result.grids[g];
        grid.entity = g < 8 ? entity_names[g] : "average";
        grid.thetas = thetas;
        grid.ratios = ratios;
        grid.ratio_exponents = exponents;
        grid.cells.assign(nt, std::vector<GridCell>(nr));
        for (std::size_t ti = 0; ti < nt; ++ti) {
            for (std::size_t ri = 0; ri < nr; ++ri) {
                grid.cells[ti][ri].expected = expected[ti][ri];
            }
        }
    }

    std::set<std::string> seen;
    for (const ScoreRecord& rec : scores) {
        const std::string key = dataset::variant_key(rec.source_id, rec.theta_deg, rec.r);
        if (!manifest_keys.count(key)) {
            throw Error("orphan score record (no manifest entry): " + key);
        }
        if (!seen.insert(key).second) {
            throw Error("duplicate score record: " + key);
        }
        const std::size_t ti = axis_index(thetas, rec.theta_deg, "theta");
        const std::size_t ri = axis_index(ratios, rec.r, "ratio");
        const auto values = rec.scores.values();
        for (std::size_t g = 0; g < kGridCount; ++g) {
            GridCell& cell = result.grids[g].cells[ti][ri];
            const double v = g < 8 ? values[g] : rec.average;
            cell.mean += v;
            cell.count += 1;
        }
    }
    for (ScoreGrid& grid : result.grids) {
        for (auto& row : grid.cells) {
            for (GridCell& cell : row) {
                if (cell.count > 0) cell.mean /= cell.count;
            }
        }
    }

    for (const std::string& key : manifest_keys) {
        if (!seen.count(key)) result.missing.push_back(key);
    }
    std::sort(result.missing.begin(), result.missing.end());
    return result;
}

namespace {

std::string ratio_label(double exponent) {
    return "2^" + dataset::format_compact(exponent);
}

}  // namespace

void write_grid_table(const ScoreGrid& grid, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write grid table: " + path.string());

    out << "theta\\r";
    for (double k : grid.ratio_exponents) out << ',' << ratio_label(k);
    out << '\n';
    char buf[32];
    for (std::size_t ti = 0; ti < grid.thetas.size(); ++ti) {
        out << dataset::format_compact(grid.thetas[ti]);
        for (std::size_t ri = 0; ri < grid.ratios.size(); ++ri) {
            const GridCell& cell = grid.cells[ti][ri];
            std::snprintf(buf, sizeof(buf), "%.4f", cell.mean);
            out << ',' << buf;
            if (cell.count < cell.expected) out << '*';
        }
        out << '\n';
    }
}

void render_heatmap(const ScoreGrid& grid, const std::filesystem::path& path, int cell_px) {
    if (grid.thetas.empty() || grid.ratios.empty()) {
        throw Error("cannot render an empty grid");
    }
    if (cell_px < 1) throw Error("heatmap cell size must be >= 1 px");
    const int width = static_cast<int>(grid.thetas.size()) * cell_px;
    const int height = static_cast<int>(grid.ratios.size()) * cell_px;
    raster::RasterImage img(width, height);

    for (std::size_t ti = 0; ti < grid.thetas.size(); ++ti) {
        for (std::size_t ri = 0; ri < grid.ratios.size(); ++ri) {
            const GridCell& cell = grid.cells[ti][ri];
            const auto lum = static_cast<std::uint8_t>(
                std::clamp<long>(std::lround(255.0 * cell.mean), 0, 255));
            const raster::Rgb color{lum, lum, lum};
            const bool incomplete = cell.count < cell.expected;
            const int x0 = static_cast<int>(ti) * cell_px;
            const int y0 = static_cast<int>(ri) * cell_px;
            for (int dy = 0; dy < cell_px; ++dy) {
                for (int dx = 0; dx < cell_px; ++dx) {
                    const bool border =
                        dy == 0 || dx == 0 || dy == cell_px - 1 || dx == cell_px - 1;
                    const raster::Rgb px =
                        incomplete && border ? raster::Rgb{128, 128, 128} : color;
                    img.set(x0 + dx, y0 + dy, px);
                }
            }
        }
    }
    raster::write_image(img, path);
}

void write_summary(const AggregateResult& result, const dataset::Manifest& manifest,
                   const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write summary: " + path.string());

    out << "variants scored: " << manifest.entries.size() - result.missing.size() << " / "
        << manifest.entries.size() << '\n';
    out << "sweep failures: " << manifest.failures.size() << '\n';
    for (const dataset::ManifestFailure& f : manifest.failures) {
        out << "  " << dataset::variant_key(f.source_id, f.theta_deg, f.r) << ": " << f.error
            << '\n';
    }
    out << "missing score records: " << result.missing.size() << '\n';
    for (const std::string& key : result.missing) out << "  " << key << '\n';

    const ScoreGrid& avg = result.grids.back();
    out << "per-angle mean of the average grid:\n";
    char buf[32];
    for (std::size_t ti = 0; ti < avg.thetas.size(); ++ti) {
        double sum = 0.0;
        int cells = 0;
        for (std::size_t ri = 0; ri < avg.ratios.size(); ++ri) {
            if (avg.cells[ti][ri].count > 0) {
                sum += avg.cells[ti][ri].mean;
                ++cells;
            }
        }
        std::snprintf(buf, sizeof(buf), "%.4f", cells > 0 ? sum / cells : 0.0);
        out << "  theta " << dataset::format_compact(avg.thetas[ti]) << ": " << buf << '\n';
    }
}

void write_all(const AggregateResult& result, const dataset::Manifest& manifest,
               const std::filesystem::path& out_dir, int cell_px) {
    std::filesystem::create_directories(out_dir);
    for (const ScoreGrid& grid : result.grids) {
        write_grid_table(grid, out_dir / (grid.entity + ".csv"));
        render_heatmap(grid, out_dir / (grid.entity + ".png"), cell_px);
    }
    write_summary(result, manifest, out_dir / "summary.txt");
}

}  // namespace trapz::report
