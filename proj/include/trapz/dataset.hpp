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

#include "trapz/geometry.hpp"
#include "trapz/raster.hpp"
#include "trapz/receipt.hpp"

namespace trapz::dataset {

/// The (theta, r) sweep. Ratios are carried as base-2 exponents so file
/// names and labels stay exact (2^0.5 has no finite decimal form).
struct SweepGrid {
    std::vector<double> thetas;
    std::vector<double> ratio_exponents;

    std::vector<double> ratios() const;
    std::size_t cell_count() const { return thetas.size() * ratio_exponents.size(); }
};

/// The 19 x 9 grid: theta from -90 to 90 step 10, exponents -2 to 2 step 0.5.
SweepGrid default_grid();

/// Parses "t1,t2,...;k1,k2,..." (thetas then ratio exponents).
SweepGrid parse_grid_spec(const std::string& spec);

struct ManifestEntry {
    std::string source_id;
    double theta_deg{0};
    double r{1};
    double ratio_exponent{0};
    std::filesystem::path variant_path;
    std::filesystem::path truth_path;
    geometry::DocumentExtent extent;
    geometry::Homography homography;  // canonical form
    geometry::Point2 offset;
};

struct ManifestFailure {
    std::string source_id;
    double theta_deg{0};
    double r{1};
    std::string error;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::vector<ManifestFailure> failures;
};

/// One source document: an image and its ground-truth record.
struct SourceDoc {
    std::string id;
    std::filesystem::path image_path;
    std::filesystem::path truth_path;
};

/// Lists <stem>.png files of sources_dir paired with <stem>.json truths.
std::vector<SourceDoc> discover_sources(const std::filesystem::path& sources_dir,
                                        const std::filesystem::path& truths_dir);

struct SweepOptions {
    raster::Rgb fill{255, 255, 255};
    int margin = 0;
    int png_compression = 6;
    unsigned jobs = 1;
};

/// Generates one distorted variant per (source, cell) under
/// out_dir/<source_id>/theta_<t>_r_<k>.png and writes
/// out_dir/manifest.jsonl. Existing variant files are kept as is, so
/// interrupted runs resume where they stopped. Per-entry failures are
/// recorded in the manifest and do not stop the run.
Manifest synthesize_sweep(const std::vector<SourceDoc>& sources, const SweepGrid& grid,
                          const std::filesystem::path& out_dir, const SweepOptions& options = {});

/// Deterministic variant key used across manifests, outcomes, and scores.
std::string variant_key(const std::string& source_id, double theta_deg, double r);

/// Compact decimal used in file names and keys ("-20", "0.5", "1.5").
std::string format_compact(double v);

void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace trapz::dataset
