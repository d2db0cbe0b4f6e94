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

#include "trapz/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "trapz/errors.hpp"
#include "trapz/parallel.hpp"

namespace trapz::raster {

using geometry::DocumentExtent;
using geometry::Homography;
using geometry::Point2;
using geometry::Quad;

RasterImage::RasterImage(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("image dimensions must be positive");
    }
    data_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) {
        data_[i] = fill.r;
        data_[i + 1] = fill.g;
        data_[i + 2] = fill.b;
    }
}

Rgb RasterImage::get(int x, int y) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
    return Rgb{data_[i], data_[i + 1], data_[i + 2]};
}

void RasterImage::set(int x, int y, Rgb value) {
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
    data_[i] = value.r;
    data_[i + 1] = value.g;
    data_[i + 2] = value.b;
}

int max_canvas_side() {
    if (const char* env = std::getenv("TRAPZ_MAX_CANVAS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<int>(v);
    }
    return 16384;
}

namespace {

// Pixel (i, j) covers [i, i+1] x [j, j+1]; samples use the pixel center
// convention, so continuous position u corresponds to array index u - 0.5.
struct Sample {
    double rr, gg, bb;
};

inline Sample bilinear(const RasterImage& im, double u, double v) {
    const double px = u - 0.5;
    const double py = v - 0.5;
    const double fx = std::floor(px);
    const double fy = std::floor(py);
    const double wx = px - fx;
    const double wy = py - fy;
    const int w = im.width();
    const int h = im.height();
    const int x0 = std::clamp(static_cast<int>(fx), 0, w - 1);
    const int x1 = std::clamp(static_cast<int>(fx) + 1, 0, w - 1);
    const int y0 = std::clamp(static_cast<int>(fy), 0, h - 1);
    const int y1 = std::clamp(static_cast<int>(fy) + 1, 0, h - 1);

    const std::uint8_t* r0 = im.row(y0);
    const std::uint8_t* r1 = im.row(y1);
    const double w00 = (1.0 - wx) * (1.0 - wy);
    const double w10 = wx * (1.0 - wy);
    const double w01 = (1.0 - wx) * wy;
    const double w11 = wx * wy;

    Sample s;
    s.rr = w00 * r0[x0 * 3] + w10 * r0[x1 * 3] + w01 * r1[x0 * 3] + w11 * r1[x1 * 3];
    s.gg = w00 * r0[x0 * 3 + 1] + w10 * r0[x1 * 3 + 1] + w01 * r1[x0 * 3 + 1] +
           w11 * r1[x1 * 3 + 1];
    s.bb = w00 * r0[x0 * 3 + 2] + w10 * r0[x1 * 3 + 2] + w01 * r1[x0 * 3 + 2] +
           w11 * r1[x1 * 3 + 2];
    return s;
}

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
}

// Snaps values a hair above an integer back down before ceil, so that
// floating-point noise in rotated corners cannot inflate the canvas by a
// full pixel (a quarter turn of a 100x200 image must yield 200x100).
int ceil_snapped(double v) {
    const double nearest = std::round(v);
    if (std::abs(v - nearest) < 1e-6) return static_cast<int>(nearest);
    return static_cast<int>(std::ceil(v));
}

struct CanvasFit {
    int width, height;
    Point2 offset;
};

CanvasFit fit_canvas(const Quad& corners, int margin, int max_side) {
    double xmin = corners.v[0].x, xmax = corners.v[0].x;
    double ymin = corners.v[0].y, ymax = corners.v[0].y;
    for (const Point2& p : corners.v) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    CanvasFit fit;
    fit.width = std::max(1, ceil_snapped(xmax - xmin)) + 2 * margin;
    fit.height = std::max(1, ceil_snapped(ymax - ymin)) + 2 * margin;
    fit.offset = Point2{margin - xmin, margin - ymin};
    if (fit.width > max_side || fit.height > max_side) {
        throw CanvasLimitError("canvas " + std::to_string(fit.width) + "x" +
                               std::to_string(fit.height) + " exceeds maximum side " +
                               std::to_string(max_side));
    }
    return fit;
}

// Shared resampling loop: `map` takes destination image coordinates and
// yields source image coordinates, or false for fill.
template <typename MapFn>
RasterImage resample(const RasterImage& src, int out_w, int out_h, Rgb fill, unsigned jobs,
                     const MapFn& map) {
    RasterImage out(out_w, out_h, fill);
    const double sw = src.width();
    const double sh = src.height();
    parallel_for(static_cast<std::size_t>(out_h), jobs, [&](std::size_t j) {
        std::uint8_t* row = out.row(static_cast<int>(j));
        const double v_dst = static_cast<double>(j) + 0.5;
        for (int i = 0; i < out_w; ++i) {
            Point2 s;
            if (!map(static_cast<double>(i) + 0.5, v_dst, s)) continue;
            if (s.x < 0.0 || s.x > sw || s.y < 0.0 || s.y > sh) continue;
            const Sample c = bilinear(src, s.x, s.y);
            row[i * 3] = to_byte(c.rr);
            row[i * 3 + 1] = to_byte(c.gg);
            row[i * 3 + 2] = to_byte(c.bb);
        }
    });
    return out;
}

}  // namespace

WarpResult warp_image(const RasterImage& src, const Homography& h, const WarpOptions& options) {
    if (src.width() <= 0 || src.height() <= 0) {
        throw std::invalid_argument("source image is empty");
    }
    const DocumentExtent extent{static_cast<double>(src.width()),
                                static_cast<double>(src.height())};
    const Homography hinv = invert_homography(h);
    const Quad warped = apply_homography(h, geometry::rect_corners(extent));
    const CanvasFit fit = fit_canvas(warped, options.margin, options.max_side);

    const double src_h = extent.h0;
    const double canvas_h = fit.height;
    const Point2 offset = fit.offset;

    WarpResult result;
    result.offset = offset;
    result.forward = h;
    result.source_extent = extent;
    result.image = resample(
        src, fit.width, fit.height, options.fill, options.jobs,
        [&](double u, double v, Point2& out) {
            // canvas image coords -> canvas document coords -> inverse map
            // -> source document coords -> source image coords
            const Point2 p{u - offset.x, (canvas_h - v) - offset.y};
            Point2 doc;
            if (!try_apply_homography(hinv, p, doc, /*require_positive_denominator=*/true)) {
                return false;
            }
            out = Point2{doc.x, src_h - doc.y};
            return true;
        });
    return result;
}

RasterImage rectify_full(const WarpResult& distorted, const WarpOptions& options) {
    distorted.source_extent.validate();
    const int out_w = static_cast<int>(std::lround(distorted.source_extent.w0));
    const int out_h = static_cast<int>(std::lround(distorted.source_extent.h0));
    const Homography& fwd = distorted.forward;
    if (std::abs(fwd.det()) < 1e-12) {
        throw SingularMatrixError("warp result carries a singular forward transform");
    }
    const double canvas_h = distorted.image.height();
    const double src_h = distorted.source_extent.h0;
    const Point2 offset = distorted.offset;

    return resample(distorted.image, out_w, out_h, options.fill, options.jobs,
                    [&](double u, double v, Point2& out) {
                        const Point2 doc{u, src_h - v};
                        Point2 warped;
                        if (!try_apply_homography(fwd, doc, warped,
                                                  /*require_positive_denominator=*/true)) {
                            return false;
                        }
                        out = Point2{warped.x + offset.x, canvas_h - (warped.y + offset.y)};
                        return true;
                    });
}

RasterImage rectify_rotation(const RasterImage& distorted, double theta_deg,
                             const WarpOptions& options) {
    if (theta_deg == 0.0) return distorted;
    return warp_image(distorted, Homography::rotation(-theta_deg), options).image;
}

RasterImage rectify_rotation(const WarpResult& distorted, double theta_deg,
                             const WarpOptions& options) {
    return rectify_rotation(distorted.image, theta_deg, options);
}

std::vector<Point2> transform_points(std::span<const Point2> points, const Homography& h,
                                     const Point2& offset, double src_height,
                                     double canvas_height) {
    std::vector<Point2> out;
    out.reserve(points.size());
    for (const Point2& p : points) {
        const Point2 doc{p.x, src_height - p.y};
        const Point2 warped = apply_homography(h, doc);
        out.push_back(Point2{warped.x + offset.x, canvas_height - (warped.y + offset.y)});
    }
    return out;
}

std::vector<Point2> transform_points(std::span<const Point2> points, const WarpResult& warp) {
    return transform_points(points, warp.forward, warp.offset, warp.source_extent.h0,
                            warp.image.height());
}

}  // namespace trapz::raster
