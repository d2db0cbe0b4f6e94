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

#include "trapz/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trapz/errors.hpp"
#include "trapz/image_io.hpp"
#include "trapz/parallel.hpp"

namespace trapz::dataset {

using geometry::DistortionParams;
using geometry::DocumentExtent;
using geometry::Homography;
using geometry::Point2;
using geometry::Quad;
using nlohmann::json;

std::vector<double> SweepGrid::ratios() const {
    std::vector<double> out;
    out.reserve(ratio_exponents.size());
    for (double k : ratio_exponents) out.push_back(std::pow(2.0, k));
    return out;
}

SweepGrid default_grid() {
    SweepGrid grid;
    for (int t = -90; t <= 90; t += 10) grid.thetas.push_back(static_cast<double>(t));
    for (int i = -4; i <= 4; ++i) grid.ratio_exponents.push_back(0.5 * i);
    return grid;
}

SweepGrid parse_grid_spec(const std::string& spec) {
    const auto semi = spec.find(';');
    if (semi == std::string::npos) {
        throw ConfigError("grid spec must be \"<theta-list>;<k-list>\", got '" + spec + "'");
    }
    auto parse_list = [&](const std::string& part, const char* what) {
        std::vector<double> out;
        std::stringstream ss(part);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t used = 0;
                const double v = std::stod(tok, &used);
                if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
                out.push_back(v);
            } catch (const std::exception&) {
                throw ConfigError(std::string("bad ") + what + " value '" + tok + "' in grid spec");
            }
        }
        if (out.empty()) throw ConfigError(std::string("empty ") + what + " list in grid spec");
        return out;
    };
    SweepGrid grid;
    grid.thetas = parse_list(spec.substr(0, semi), "theta");
    grid.ratio_exponents = parse_list(spec.substr(semi + 1), "exponent");
    return grid;
}

std::string format_compact(double v) {
    if (v == 0.0) v = 0.0;  // normalize -0
    const double rounded = std::round(v);
    if (std::abs(v - rounded) < 1e-9 && std::abs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(rounded));
        return buf;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string variant_key(const std::string& source_id, double theta_deg, double r) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "|theta=%.10g|r=%.10g", theta_deg, r);
    return source_id + buf;
}

std::vector<SourceDoc> discover_sources(const std::filesystem::path& sources_dir,
                                        const std::filesystem::path& truths_dir) {
    if (!std::filesystem::is_directory(sources_dir)) {
        throw ConfigError("sources directory does not exist: " + sources_dir.string());
    }
    std::vector<SourceDoc> out;
    for (const auto& entry : std::filesystem::directory_iterator(sources_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        SourceDoc doc;
        doc.id = entry.path().stem().string();
        doc.image_path = entry.path();
        doc.truth_path = truths_dir / (doc.id + ".json");
        out.push_back(std::move(doc));
    }
    std::sort(out.begin(), out.end(),
              [](const SourceDoc& a, const SourceDoc& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].id == out[i - 1].id) {
            throw ConfigError("duplicate source id: " + out[i].id);
        }
    }
    return out;
}

namespace {

json point_to_json(const Point2& p) { return json{{"x", p.x}, {"y", p.y}}; }

Point2 point_from_json(const json& j) { return Point2{j.at("x").get<double>(), j.at("y").get<double>()}; }

json entry_to_json(const ManifestEntry& e) {
    return json{{"status", "ok"},
                {"source_id", e.source_id},
                {"theta_deg", e.theta_deg},
                {"r", e.r},
                {"k", e.ratio_exponent},
                {"variant_path", e.variant_path.generic_string()},
                {"truth_path", e.truth_path.generic_string()},
                {"extent", {{"w0", e.extent.w0}, {"h0", e.extent.h0}}},
                {"homography", e.homography.entries()},
                {"offset", point_to_json(e.offset)}};
}

ManifestEntry entry_from_json(const json& j) {
    ManifestEntry e;
    e.source_id = j.at("source_id").get<std::string>();
    e.theta_deg = j.at("theta_deg").get<double>();
    e.r = j.at("r").get<double>();
    e.ratio_exponent = j.value("k", std::log2(e.r));
    e.variant_path = j.at("variant_path").get<std::string>();
    e.truth_path = j.at("truth_path").get<std::string>();
    e.extent = DocumentExtent{j.at("extent").at("w0").get<double>(),
                              j.at("extent").at("h0").get<double>()};
    const auto h = j.at("homography").get<std::array<double, 9>>();
    e.homography = Homography(h);
    e.offset = point_from_json(j.at("offset"));
    return e;
}

void check_unique_keys(const Manifest& manifest, const std::string& what) {
    std::set<std::string> seen;
    for (const ManifestEntry& e : manifest.entries) {
        if (!seen.insert(variant_key(e.source_id, e.theta_deg, e.r)).second) {
            throw Error(what + ": duplicate manifest key " +
                        variant_key(e.source_id, e.theta_deg, e.r));
        }
    }
}

}  // namespace

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    check_unique_keys(manifest, "save_manifest");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write manifest: " + path.string());
        for (const ManifestEntry& e : manifest.entries) {
            out << entry_to_json(e).dump() << '\n';
        }
        for (const ManifestFailure& f : manifest.failures) {
            out << json{{"status", "failed"},
                        {"source_id", f.source_id},
                        {"theta_deg", f.theta_deg},
                        {"r", f.r},
                        {"error", f.error}}
                       .dump()
                << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest: " + path.string());
    Manifest manifest;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("manifest " + path.string() + " line " + std::to_string(lineno) + ": " +
                        e.what());
        }
        const std::string status = j.value("status", "ok");
        if (status == "ok") {
            manifest.entries.push_back(entry_from_json(j));
        } else {
            manifest.failures.push_back(ManifestFailure{j.at("source_id").get<std::string>(),
                                                        j.at("theta_deg").get<double>(),
                                                        j.at("r").get<double>(),
                                                        j.value("error", "unknown")});
        }
    }
    check_unique_keys(manifest, path.string());
    return manifest;
}

Manifest synthesize_sweep(const std::vector<SourceDoc>& sources, const SweepGrid& grid,
                          const std::filesystem::path& out_dir, const SweepOptions& options) {
    if (grid.thetas.empty() || grid.ratio_exponents.empty()) {
        throw ConfigError("sweep grid is empty");
    }
    std::filesystem::create_directories(out_dir);

    struct Cell {
        const SourceDoc* source;
        double theta;
        double k;
        double r;
    };
    std::vector<Cell> cells;
    cells.reserve(sources.size() * grid.cell_count());
    const std::vector<double> ratios = grid.ratios();
    for (const SourceDoc& src : sources) {
        for (double theta : grid.thetas) {
            for (std::size_t ki = 0; ki < grid.ratio_exponents.size(); ++ki) {
                cells.push_back(Cell{&src, theta, grid.ratio_exponents[ki], ratios[ki]});
            }
        }
    }

    // Sources are decoded once and shared read-only by the workers. A source
    // that cannot be decoded or whose truth does not validate fails each of
    // its cells.
    std::map<std::string, raster::RasterImage> images;
    std::map<std::string, std::string> source_errors;
    for (const SourceDoc& src : sources) {
        try {
            load_truth(src.truth_path);
            images.emplace(src.id, raster::read_image(src.image_path));
        } catch (const std::exception& e) {
            source_errors.emplace(src.id, e.what());
        }
    }

    struct Slot {
        bool ok = false;
        ManifestEntry entry;
        std::string error;
    };
    std::vector<Slot> slots(cells.size());

    parallel_for(cells.size(), options.jobs, [&](std::size_t idx) {
        const Cell& cell = cells[idx];
        Slot& slot = slots[idx];
        try {
            if (auto it = source_errors.find(cell.source->id); it != source_errors.end()) {
                throw Error("unreadable source: " + it->second);
            }
            const raster::RasterImage& img = images.at(cell.source->id);
            const DocumentExtent extent{static_cast<double>(img.width()),
                                        static_cast<double>(img.height())};
            const DistortionParams params{cell.theta, cell.r};
            const Homography h = geometry::homography_from_params(extent, params).canonical();

            const std::filesystem::path variant =
                out_dir / cell.source->id /
                ("theta_" + format_compact(cell.theta) + "_r_" + format_compact(cell.k) + ".png");

            if (!std::filesystem::exists(variant)) {
                raster::WarpOptions wo;
                wo.fill = options.fill;
                wo.margin = options.margin;
                const raster::WarpResult warped = raster::warp_image(img, h, wo);
                raster::write_image(warped.image, variant, options.png_compression);
                slot.entry.offset = warped.offset;
            } else {
                // Offsets are a pure function of the corner bounding box, so
                // resumed runs recover them without re-warping.
                const Quad corners =
                    geometry::apply_homography(h, geometry::rect_corners(extent));
                double xmin = corners.v[0].x, ymin = corners.v[0].y;
                for (const Point2& p : corners.v) {
                    xmin = std::min(xmin, p.x);
                    ymin = std::min(ymin, p.y);
                }
                slot.entry.offset = Point2{options.margin - xmin, options.margin - ymin};
            }

            slot.entry.source_id = cell.source->id;
            slot.entry.theta_deg = cell.theta;
            slot.entry.r = cell.r;
            slot.entry.ratio_exponent = cell.k;
            slot.entry.variant_path = variant;
            slot.entry.truth_path = cell.source->truth_path;
            slot.entry.extent = extent;
            slot.entry.homography = h;
            slot.ok = true;
        } catch (const std::exception& e) {
            slot.error = e.what();
        }
    });

    Manifest manifest;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (slots[i].ok) {
            manifest.entries.push_back(std::move(slots[i].entry));
        } else {
            manifest.failures.push_back(
                ManifestFailure{cells[i].source->id, cells[i].theta, cells[i].r, slots[i].error});
        }
    }
    save_manifest(manifest, out_dir / "manifest.jsonl");
    return manifest;
}

}  // namespace trapz::dataset
