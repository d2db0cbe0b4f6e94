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

#include <filesystem>
#include <string>
#include <vector>

#include "trapz/dataset.hpp"
#include "trapz/scoring.hpp"

namespace trapz::report {

struct GridCell {
    double mean = 0.0;
    int count = 0;     // score records that landed in the cell
    int expected = 0;  // manifest entries for the cell
};

/// Mean scores for one entity over the (theta, r) plane.
struct ScoreGrid {
    std::string entity;  // one of the eight entity names, or "average"
    std::vector<double> thetas;           // ascending
    std::vector<double> ratios;           // ascending
    std::vector<double> ratio_exponents;  // aligned with ratios
    std::vector<std::vector<GridCell>> cells;  // [theta index][ratio index]

    const GridCell& cell(std::size_t ti, std::size_t ri) const { return cells[ti][ri]; }
    bool complete() const;
};

struct AggregateResult {
    std::vector<ScoreGrid> grids;        // eight entities + "average", in order
    std::vector<std::string> missing;    // manifest entries without a score record
};

/// Joins score records against the manifest and produces the nine grids.
/// Score records that do not match any manifest entry (orphans) or that
/// repeat a key are an error; manifest entries without scores are collected
/// in `missing` and leave their cells short-counted.
AggregateResult aggregate(const std::vector<scoring::ScoreRecord>& scores,
                          const dataset::Manifest& manifest);

/// CSV matrix: header row of 2^k ratio labels, one row per theta, cells with
/// four decimals; incomplete cells are suffixed with '*'.
void write_grid_table(const ScoreGrid& grid, const std::filesystem::path& path);

/// Grayscale heatmap, one cell_px x cell_px block per cell, luminance
/// round(255 * mean) so darker blocks are worse scores. Theta runs
/// horizontally (ascending), r vertically (ascending downward). Incomplete
/// cells get a mid-gray one-pixel border.
void render_heatmap(const ScoreGrid& grid, const std::filesystem::path& path, int cell_px = 24);

/// Plain-text run summary: sweep/extraction failures, incomplete cells, and
/// per-angle means of the average grid.
void write_summary(const AggregateResult& result, const dataset::Manifest& manifest,
                   const std::filesystem::path& path);

/// Writes the 9 tables, 9 heatmaps, and the summary under out_dir.
void write_all(const AggregateResult& result, const dataset::Manifest& manifest,
               const std::filesystem::path& out_dir, int cell_px = 24);

}  // namespace trapz::report
