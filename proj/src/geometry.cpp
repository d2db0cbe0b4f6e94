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

#include "trapz/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>

#include "trapz/errors.hpp"

namespace trapz::geometry {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDenEps = 1e-12;

double deg_to_rad(double deg) { return deg * kPi / 180.0; }

bool finite(const Point2& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

double cross(const Point2& o, const Point2& p, const Point2& q) {
    return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
}

double dist(const Point2& p, const Point2& q) { return std::hypot(p.x - q.x, p.y - q.y); }

}  // namespace

void DocumentExtent::validate() const {
    if (!(std::isfinite(w0) && std::isfinite(h0)) || w0 <= 0.0 || h0 <= 0.0) {
        throw std::invalid_argument("document extent must be finite and positive");
    }
}

void DistortionParams::validate() const {
    if (!(std::isfinite(theta_deg) && std::isfinite(r))) {
        throw std::invalid_argument("distortion parameters must be finite");
    }
    if (r <= 0.0) {
        throw std::invalid_argument("distortion ratio r must be > 0");
    }
    if (theta_deg < -180.0 || theta_deg > 180.0) {
        throw std::invalid_argument("rotation angle must lie in [-180, 180] degrees");
    }
}

double Quad::signed_area() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const Point2& p = v[i];
        const Point2& q = v[(i + 1) % 4];
        acc += p.x * q.y - q.x * p.y;
    }
    return 0.5 * acc;
}

Homography::Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Homography::Homography(const std::array<double, 9>& row_major) : m_(row_major) {}

Homography Homography::rotation(double theta_deg) {
    const double t = deg_to_rad(theta_deg);
    const double c = std::cos(t);
    const double s = std::sin(t);
    return Homography({c, -s, 0, s, c, 0, 0, 0, 1});
}

double Homography::det() const {
    return m_[0] * (m_[4] * m_[8] - m_[5] * m_[7]) - m_[1] * (m_[3] * m_[8] - m_[5] * m_[6]) +
           m_[2] * (m_[3] * m_[7] - m_[4] * m_[6]);
}

Homography Homography::canonical() const {
    double scale = m_[8];
    if (std::abs(scale) <= kDenEps) {
        // Fall back to the largest-magnitude entry; sign chosen so the
        // normalizing entry becomes positive, keeping the form unique.
        scale = 0.0;
        for (double e : m_) {
            if (std::abs(e) > std::abs(scale)) scale = e;
        }
        if (scale == 0.0) return *this;
    }
    std::array<double, 9> out{};
    for (std::size_t i = 0; i < 9; ++i) out[i] = m_[i] / scale;
    return Homography(out);
}

double Homography::canonical_distance(const Homography& other) const {
    const auto a = canonical().entries();
    const auto b = other.canonical().entries();
    double worst = 0.0;
    for (std::size_t i = 0; i < 9; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

Quad rect_corners(const DocumentExtent& extent) {
    extent.validate();
    return Quad{{Point2{0, 0}, Point2{0, extent.h0}, Point2{extent.w0, extent.h0},
                 Point2{extent.w0, 0}}};
}

Quad trapezoid_vertices(const DocumentExtent& extent, const DistortionParams& params) {
    extent.validate();
    params.validate();
    const double w0 = extent.w0;
    const double h0 = extent.h0;
    const double r = params.r;
    const double t = deg_to_rad(params.theta_deg);
    const double c = std::cos(t);
    const double s = std::sin(t);

    // Equal-area, equal-height trapezoid: the edge through A gets length
    // r * (edge through O), then the whole shape rotates about O.
    const double ax = (1.0 - r) * w0 / (1.0 + r);
    const double cx = 2.0 * w0 / (1.0 + r);

    Quad q;
    q.o() = Point2{0.0, 0.0};
    q.a() = Point2{ax * c - h0 * s, ax * s + h0 * c};
    q.b() = Point2{w0 * c - h0 * s, w0 * s + h0 * c};
    q.c() = Point2{cx * c, cx * s};
    return q;
}

Homography homography_from_params(const DocumentExtent& extent, const DistortionParams& params) {
    extent.validate();
    params.validate();
    const double w0 = extent.w0;
    const double h0 = extent.h0;
    const double r = params.r;
    const double t = deg_to_rad(params.theta_deg);
    const double c = std::cos(t);
    const double s = std::sin(t);

    // Closed form of the two-parameter map. The sign of the (3,2) entry is
    // the one that reproduces the vertex map above; see the geometry tests,
    // which pin it against the four-point solve over the whole grid.
    const double h12 = ((1.0 - r) * w0 * c - (1.0 + r) * h0 * s) / (2.0 * r * h0);
    const double h22 = ((1.0 - r) * w0 * s + (1.0 + r) * h0 * c) / (2.0 * r * h0);
    const double h32 = (1.0 - r) * (1.0 + r) / (2.0 * r * h0);
    const double h33 = (1.0 + r) / 2.0;

    return Homography({c, h12, 0.0, s, h22, 0.0, 0.0, h32, h33});
}

namespace {

// Similarity normalization used by the four-point solve: centroid to the
// origin, mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(const Quad& q) {
    double cx = 0.0, cy = 0.0;
    for (const Point2& p : q.v) {
        cx += p.x;
        cy += p.y;
    }
    cx /= 4.0;
    cy /= 4.0;
    double mean_dist = 0.0;
    for (const Point2& p : q.v) mean_dist += std::hypot(p.x - cx, p.y - cy);
    mean_dist /= 4.0;
    const double scale = mean_dist > kDenEps ? std::sqrt(2.0) / mean_dist : 1.0;
    Eigen::Matrix3d t;
    t << scale, 0, -scale * cx, 0, scale, -scale * cy, 0, 0, 1;
    return t;
}

}  // namespace

Homography homography_from_correspondences(const Quad& src, const Quad& dst) {
    for (const Point2& p : src.v) {
        if (!finite(p)) throw std::invalid_argument("source quad has non-finite vertex");
    }
    for (const Point2& p : dst.v) {
        if (!finite(p)) throw std::invalid_argument("destination quad has non-finite vertex");
    }
    const double src_scale = std::max({std::abs(src.a().x), std::abs(src.a().y),
                                       std::abs(src.b().x), std::abs(src.b().y),
                                       std::abs(src.c().x), std::abs(src.c().y), 1.0});
    // No three source points may be collinear.
    static constexpr int kTriples[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    for (const auto& tri : kTriples) {
        if (std::abs(cross(src.v[tri[0]], src.v[tri[1]], src.v[tri[2]])) <=
            1e-9 * src_scale * src_scale) {
            throw DegenerateQuadError("three source correspondence points are collinear");
        }
    }
    if (std::abs(src.signed_area()) <= kDenEps || std::abs(dst.signed_area()) <= kDenEps) {
        throw DegenerateQuadError("correspondence quad has vanishing area");
    }

    const Eigen::Matrix3d t_src = normalizing_transform(src);
    const Eigen::Matrix3d t_dst = normalizing_transform(dst);

    Eigen::Matrix<double, 8, 9> a = Eigen::Matrix<double, 8, 9>::Zero();
    for (int i = 0; i < 4; ++i) {
        const Eigen::Vector3d s = t_src * Eigen::Vector3d(src.v[i].x, src.v[i].y, 1.0);
        const Eigen::Vector3d d = t_dst * Eigen::Vector3d(dst.v[i].x, dst.v[i].y, 1.0);
        const double x = s.x(), y = s.y();
        const double xp = d.x(), yp = d.y();
        a.row(2 * i) << x, y, 1, 0, 0, 0, -xp * x, -xp * y, -xp;
        a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -yp * x, -yp * y, -yp;
    }

    const Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(a, Eigen::ComputeFullV);
    // A well-posed four-point problem has a one-dimensional null space; a
    // second vanishing singular value means the solution is not unique.
    const auto& sv = svd.singularValues();
    if (sv(6) <= 1e-9 * sv(0)) {
        throw DegenerateQuadError("four-point system is rank deficient");
    }
    const Eigen::Matrix<double, 9, 1> hvec = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << hvec(0), hvec(1), hvec(2), hvec(3), hvec(4), hvec(5), hvec(6), hvec(7), hvec(8);
    const Eigen::Matrix3d h = t_dst.inverse() * hn * t_src;

    Homography result({h(0, 0), h(0, 1), h(0, 2), h(1, 0), h(1, 1), h(1, 2), h(2, 0), h(2, 1),
                       h(2, 2)});
    if (std::abs(result.canonical().det()) <= kDenEps) {
        throw DegenerateQuadError("correspondences produce a singular projection");
    }
    return result.canonical();
}

Point2 apply_homography(const Homography& h, const Point2& p) {
    Point2 out;
    const double den = h.at(2, 0) * p.x + h.at(2, 1) * p.y + h.at(2, 2);
    if (std::abs(den) <= kDenEps) {
        throw HorizonError("point maps to the line at infinity");
    }
    out.x = (h.at(0, 0) * p.x + h.at(0, 1) * p.y + h.at(0, 2)) / den;
    out.y = (h.at(1, 0) * p.x + h.at(1, 1) * p.y + h.at(1, 2)) / den;
    return out;
}

bool try_apply_homography(const Homography& h, const Point2& p, Point2& out,
                          bool require_positive_denominator) noexcept {
    const double den = h.at(2, 0) * p.x + h.at(2, 1) * p.y + h.at(2, 2);
    if (require_positive_denominator ? den <= kDenEps : std::abs(den) <= kDenEps) {
        return false;
    }
    out.x = (h.at(0, 0) * p.x + h.at(0, 1) * p.y + h.at(0, 2)) / den;
    out.y = (h.at(1, 0) * p.x + h.at(1, 1) * p.y + h.at(1, 2)) / den;
    return true;
}

Quad apply_homography(const Homography& h, const Quad& q) {
    Quad out;
    for (std::size_t i = 0; i < 4; ++i) out.v[i] = apply_homography(h, q.v[i]);
    return out;
}

Homography invert_homography(const Homography& h) {
    const double d = h.det();
    if (std::abs(d) < kDenEps) {
        throw SingularMatrixError("homography is not invertible");
    }
    const auto& m = h.entries();
    std::array<double, 9> inv{};
    inv[0] = (m[4] * m[8] - m[5] * m[7]) / d;
    inv[1] = (m[2] * m[7] - m[1] * m[8]) / d;
    inv[2] = (m[1] * m[5] - m[2] * m[4]) / d;
    inv[3] = (m[5] * m[6] - m[3] * m[8]) / d;
    inv[4] = (m[0] * m[8] - m[2] * m[6]) / d;
    inv[5] = (m[2] * m[3] - m[0] * m[5]) / d;
    inv[6] = (m[3] * m[7] - m[4] * m[6]) / d;
    inv[7] = (m[1] * m[6] - m[0] * m[7]) / d;
    inv[8] = (m[0] * m[4] - m[1] * m[3]) / d;
    return Homography(inv);
}

double distortion_ratio_of(const Quad& q) {
    const double upper = dist(q.o(), q.c());
    if (upper < kDenEps) {
        throw DegenerateQuadError("edge through O and C has vanishing length");
    }
    return dist(q.a(), q.b()) / upper;
}

}  // namespace trapz::geometry
