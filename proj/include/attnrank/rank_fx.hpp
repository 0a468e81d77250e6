#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "attnrank/eval.hpp"
#include "attnrank/matrix.hpp"
#include "attnrank/rank.hpp"
#include "attnrank/rng.hpp"

namespace attnrank {

// n distinct unit vectors in r dimensions, the raw material for the
// argmax/softmax rank-distortion constructions.
struct SpherePointSet {
    Matrix points;                // n x r, rows unit norm
    double min_pairwise_gap = 0;  // smallest 1 - <v_i, v_j> over i != j
};

// Standard basis mode: n = r, Gram matrix is the identity.
inline SpherePointSet basis_point_set(int n) {
    if (n < 2) throw std::invalid_argument("basis_point_set: need n >= 2");
    SpherePointSet s;
    s.points = Matrix::identity(n);
    s.min_pairwise_gap = 1.0;
    return s;
}

// Normalized standard-normal draws, resampled until the points are
// pairwise separated by at least min_gap and span all r dimensions.
inline SpherePointSet sphere_points(int n, int r, uint64_t seed, double min_gap = 1e-3) {
    if (r < 2 || n < r) throw std::invalid_argument("sphere_points: need n >= r >= 2");
    Rng rng(seed);
    for (int attempt = 0; attempt < 200; ++attempt) {
        Matrix pts(n, r);
        bool degenerate = false;
        for (int i = 0; i < n && !degenerate; ++i) {
            double norm_sq = 0.0;
            for (int j = 0; j < r; ++j) {
                pts(i, j) = rng.normal();
                norm_sq += pts(i, j) * pts(i, j);
            }
            if (norm_sq < 1e-12) {
                degenerate = true;
                break;
            }
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (int j = 0; j < r; ++j) pts(i, j) *= inv;
        }
        if (degenerate) continue;

        double gap = 2.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                double dot = 0.0;
                for (int c = 0; c < r; ++c) dot += pts(i, c) * pts(j, c);
                gap = std::min(gap, 1.0 - dot);
            }
        if (gap < min_gap) continue;
        if (matrix_rank(pts) != r) continue;

        SpherePointSet s;
        s.points = std::move(pts);
        s.min_pairwise_gap = gap;
        return s;
    }
    throw std::runtime_error("sphere_points: failed to sample a valid point set");
}

// Gram matrix of the point set: symmetric, unit diagonal, off-diagonal
// strictly below 1, rank equal to the ambient dimension.
inline Matrix gram(const SpherePointSet& s) {
    const int n = s.points.rows, r = s.points.cols;
    Matrix g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double dot = 0.0;
            for (int c = 0; c < r; ++c) dot += s.points(i, c) * s.points(j, c);
            g(i, j) = dot;
        }
    return g;
}

// Smallest scale c (to within 1e-3) making exp(c M) strictly row
// diagonally dominant, so that softmax(c M) is invertible. Requires a
// strictly dominant diagonal. nullopt when the needed c would push
// exponents past the overflow guard (c * max|M| > 700): the construction
// needs magnitudes the hardware cannot represent, which is reported
// rather than clipped.
inline std::optional<double> dominance_scale(const Matrix& m, double resolution = 1e-3) {
    if (m.rows != m.cols || m.rows < 2)
        throw std::invalid_argument("dominance_scale: need a square matrix, n >= 2");
    if (!all_finite(m)) throw std::invalid_argument("dominance_scale: non-finite entries");
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j)
            if (j != i && !(m(i, i) > m(i, j)))
                throw std::invalid_argument("dominance_scale: diagonal is not strictly dominant");

    double max_abs = 0.0;
    for (double x : m.data) max_abs = std::max(max_abs, std::abs(x));
    const double c_guard = 700.0 / max_abs;

    // Dominance in log space: c*M_ii > logsumexp_{j != i}(c*M_ij).
    // Monotone in c because the diagonal strictly dominates.
    const auto dominant = [&](double c) {
        for (int i = 0; i < m.rows; ++i) {
            double row_max = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < m.cols; ++j)
                if (j != i) row_max = std::max(row_max, c * m(i, j));
            double sum = 0.0;
            for (int j = 0; j < m.cols; ++j)
                if (j != i) sum += std::exp(c * m(i, j) - row_max);
            if (!(c * m(i, i) > row_max + std::log(sum))) return false;
        }
        return true;
    };

    double hi = resolution;
    while (!dominant(hi)) {
        hi *= 2.0;
        if (hi > c_guard) return std::nullopt;
    }
    double lo = hi / 2.0;
    while (hi - lo > resolution) {
        const double mid = 0.5 * (lo + hi);
        if (dominant(mid))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

// One rank-distortion demonstration: a rank-r Gram matrix whose argmax
// has rank n, and a scale at which softmax recovers rank n as well.
struct RankDistortionReport {
    int n = 0, r = 0;
    uint64_t seed = 0;
    double min_pairwise_gap = 0.0;
    int rank_m = 0;
    int rank_argmax = 0;
    std::optional<double> scale;   // nullopt: numerically unreachable
    int rank_softmax_scaled = 0;   // 0 when scale is unreachable
    std::vector<std::pair<double, int>> rank_thresholded;  // per tau
};

inline RankDistortionReport rank_distortion_report(int n, int r,
                                                   const std::vector<double>& taus,
                                                   uint64_t seed, bool basis_mode = false) {
    const SpherePointSet pts = basis_mode ? basis_point_set(n) : sphere_points(n, r, seed);
    const Matrix m = gram(pts);

    RankDistortionReport rep;
    rep.n = n;
    rep.r = basis_mode ? n : r;
    rep.seed = seed;
    rep.min_pairwise_gap = pts.min_pairwise_gap;
    rep.rank_m = matrix_rank(m);
    rep.rank_argmax = matrix_rank(argmax_rows(m));
    rep.scale = dominance_scale(m);
    if (rep.scale) {
        const Matrix scaled_m = scaled(m, *rep.scale);
        rep.rank_softmax_scaled = matrix_rank(softmax_rows(scaled_m));
        for (double tau : taus)
            rep.rank_thresholded.emplace_back(tau,
                                              matrix_rank(softmax_threshold(scaled_m, tau)));
    }
    return rep;
}

}  // namespace attnrank
