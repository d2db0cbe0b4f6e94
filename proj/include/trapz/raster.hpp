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
#include <span>
#include <vector>

#include "trapz/geometry.hpp"

namespace trapz::raster {

struct Rgb {
    std::uint8_t r{255};
    std::uint8_t g{255};
    std::uint8_t b{255};

    friend constexpr bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB pixel grid, rows stored top to bottom.
class RasterImage {
  public:
    RasterImage() = default;
    RasterImage(int width, int height, Rgb fill = Rgb{});

    int width() const { return width_; }
    int height() const { return height_; }

    Rgb get(int x, int y) const;
    void set(int x, int y, Rgb value);

    const std::vector<std::uint8_t>& data() const { return data_; }
    std::vector<std::uint8_t>& data() { return data_; }
    const std::uint8_t* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_ * 3; }
    std::uint8_t* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_ * 3; }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

  private:
    int width_{0};
    int height_{0};
    std::vector<std::uint8_t> data_;
};

/// A distorted variant together with everything needed to invert it: the
/// forward transform (document coordinates, y up), the translation that
/// moved the warped quad into the canvas, and the source extent.
struct WarpResult {
    RasterImage image;
    geometry::Point2 offset;
    geometry::Homography forward;
    geometry::DocumentExtent source_extent;
};

/// Maximum canvas side; reads TRAPZ_MAX_CANVAS, defaults to 16384.
int max_canvas_side();

struct WarpOptions {
    Rgb fill{255, 255, 255};
    int margin = 0;
    int max_side = max_canvas_side();
    unsigned jobs = 1;
};

/// Forward-synthesizes a distorted variant: the canvas is the ceil bounding
/// box of the four transformed corners (plus margin), every destination
/// pixel is inverse-mapped through H and bilinearly sampled from src, and
/// destinations outside src get the fill color. Throws SingularMatrixError
/// for non-invertible H and CanvasLimitError when the canvas would exceed
/// max_side.
WarpResult warp_image(const RasterImage& src, const geometry::Homography& h,
                      const WarpOptions& options = {});

/// Inverse of the synthesis path: resamples the distorted canvas back onto
/// the source extent through the stored forward transform.
RasterImage rectify_full(const WarpResult& distorted, const WarpOptions& options = {});

/// Rotation-only correction: rotates the canvas content by -theta and
/// refits the canvas. The trapezoidal component of the distortion remains.
RasterImage rectify_rotation(const RasterImage& distorted, double theta_deg,
                             const WarpOptions& options = {});
RasterImage rectify_rotation(const WarpResult& distorted, double theta_deg,
                             const WarpOptions& options = {});

/// Remaps annotation points (image convention, y down) from the source image
/// into the warped canvas: y-flip in, forward transform plus offset, y-flip
/// out. src_height and canvas_height are the pixel heights of the two
/// images. Throws HorizonError for points mapping to infinity.
std::vector<geometry::Point2> transform_points(std::span<const geometry::Point2> points,
                                               const geometry::Homography& h,
                                               const geometry::Point2& offset, double src_height,
                                               double canvas_height);

/// Convenience overload taking the context from a WarpResult.
std::vector<geometry::Point2> transform_points(std::span<const geometry::Point2> points,
                                               const WarpResult& warp);

}  // namespace trapz::raster
