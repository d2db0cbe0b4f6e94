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

#include <array>
#include <cstddef>

namespace trapz::geometry {

/// 2-D point in document coordinates (pixels, y measured upward from the
/// document origin). The raster module owns the conversion to image rows.
struct Point2 {
    double x{0.0};
    double y{0.0};

    friend constexpr bool operator==(const Point2&, const Point2&) = default;
};

/// Width and height of the undistorted source document, in pixels.
struct DocumentExtent {
    double w0{0.0};
    double h0{0.0};

    /// Throws std::invalid_argument unless both sides are finite and > 0.
    void validate() const;
};

/// The two free parameters of the trapezoidal distortion family.
///
/// theta_deg rotates the document in-plane (positive appears clockwise once
/// the image y-flip is applied); r is the ratio of the two parallel edge
/// lengths of the distorted quad. r = 1, theta = 0 is the identity.
struct DistortionParams {
    double theta_deg{0.0};
    double r{1.0};

    /// Throws std::invalid_argument unless r > 0, theta in [-180, 180],
    /// and both values are finite.
    void validate() const;
};

/// Four ordered vertices O, A, B, C: origin, top-left, top-right,
/// bottom-right of the document (y up). For distorted shapes the same slots
/// hold the transformed vertices.
struct Quad {
    std::array<Point2, 4> v{};

    Point2& o() { return v[0]; }
    Point2& a() { return v[1]; }
    Point2& b() { return v[2]; }
    Point2& c() { return v[3]; }
    const Point2& o() const { return v[0]; }
    const Point2& a() const { return v[1]; }
    const Point2& b() const { return v[2]; }
    const Point2& c() const { return v[3]; }

    /// Shoelace area; sign encodes winding.
    double signed_area() const;

    friend bool operator==(const Quad&, const Quad&) = default;
};

/// 3x3 projective transform, stored row-major, defined up to scale.
class Homography {
  public:
    /// Identity transform.
    Homography();

    explicit Homography(const std::array<double, 9>& row_major);

    /// In-plane rotation by theta degrees (same direction convention as
    /// DistortionParams).
    static Homography rotation(double theta_deg);

    double at(std::size_t row, std::size_t col) const { return m_[row * 3 + col]; }
    double& at(std::size_t row, std::size_t col) { return m_[row * 3 + col]; }
    const std::array<double, 9>& entries() const { return m_; }

    double det() const;

    /// Scale-normalized form: divides by h33 when |h33| > 1e-12, otherwise
    /// by the entry of largest magnitude. Equality of homographies is
    /// equality of canonical forms.
    Homography canonical() const;

    /// Entrywise max absolute difference of canonical forms.
    double canonical_distance(const Homography& other) const;

  private:
    std::array<double, 9> m_;
};

/// Corners O, A, B, C of the undistorted document rectangle.
Quad rect_corners(const DocumentExtent& extent);

/// Vertices O, A'', B'', C'' of the rotated trapezoid for the given
/// parameters. Area and height of the document are preserved by
/// construction; r > 1 shrinks the edge through O and C.
Quad trapezoid_vertices(const DocumentExtent& extent, const DistortionParams& params);

/// Closed-form projection matrix mapping the document rectangle onto
/// trapezoid_vertices(extent, params). Agrees with the four-point solve
/// (homography_from_correspondences) to within 1e-9 in canonical form.
Homography homography_from_params(const DocumentExtent& extent, const DistortionParams& params);

/// Solves the standard four-point problem: the homography taking each vertex
/// of src to the matching vertex of dst. Throws DegenerateQuadError when the
/// correspondences do not determine a projective map (three collinear source
/// points, repeated points, vanishing area).
Homography homography_from_correspondences(const Quad& src, const Quad& dst);

/// Perspective-divided image of p under H. Throws HorizonError when the
/// denominator magnitude is at or below 1e-12.
Point2 apply_homography(const Homography& h, const Point2& p);

/// Non-throwing variant used in per-pixel loops. Returns false when the
/// point is at the horizon; requires a strictly positive denominator when
/// require_positive_denominator is set (orientation-preserving side).
bool try_apply_homography(const Homography& h, const Point2& p, Point2& out,
                          bool require_positive_denominator = false) noexcept;

/// Maps each vertex of q through H.
Quad apply_homography(const Homography& h, const Quad& q);

/// True inverse (adjugate over determinant). Throws SingularMatrixError when
/// |det| < 1e-12.
Homography invert_homography(const Homography& h);

/// Ratio |A''B''| / |OC''| of the two parallel edges of a trapezoid quad.
/// Throws DegenerateQuadError when |OC''| < 1e-12.
double distortion_ratio_of(const Quad& q);

}  // namespace trapz::geometry
