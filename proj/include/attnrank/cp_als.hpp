#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "attnrank/matrix.hpp"
#include "attnrank/rank.hpp"
#include "attnrank/rng.hpp"
#include "attnrank/tensor3.hpp"

namespace attnrank {

struct CpConfig {
    int max_iters = 500;
    int restarts = 20;
    uint64_t seed = 0;
    double conv_tol = 1e-9;  // stop a restart when the residual change drops below this
    double fit_tol = 1e-6;   // a fit below this counts as "rank r suffices"
};

// A rank-r canonical polyadic decomposition: factors of shapes
// (d1 x r), (d2 x r), (d3 x r) with relative Frobenius residual.
struct CPFactors {
    int rank = 0;
    Matrix a, b, c;
    double residual = 0.0;
    std::vector<double> residual_history;  // per iteration, best restart
};

namespace detail {

inline Tensor3 cp_reconstruct(const CPFactors& f, int d1, int d2, int d3) {
    Tensor3 t(d1, d2, d3);
    for (int s = 0; s < f.rank; ++s)
        for (int i = 0; i < d1; ++i) {
            const double ai = f.a(i, s);
            if (ai == 0.0) continue;
            for (int j = 0; j < d2; ++j) {
                const double aibj = ai * f.b(j, s);
                for (int k = 0; k < d3; ++k) t.at(i, j, k) += aibj * f.c(k, s);
            }
        }
    return t;
}

inline double cp_residual(const Tensor3& target, const CPFactors& f, double target_norm) {
    if (target_norm == 0.0) return 0.0;
    const Tensor3 recon = cp_reconstruct(f, target.d1, target.d2, target.d3);
    double err = 0.0;
    for (std::size_t i = 0; i < target.data.size(); ++i) {
        const double d = target.data[i] - recon.data[i];
        err += d * d;
    }
    return std::sqrt(err) / target_norm;
}

// Moore-Penrose pseudo-inverse via Jacobi SVD of a small symmetric matrix.
inline Matrix pinv_sym(const Matrix& g) {
    const int r = g.rows;
    // Eigen-decompose via Jacobi rotations on the symmetric matrix.
    Matrix a = g;
    Matrix v = Matrix::identity(r);
    for (int sweep = 0; sweep < 80; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < r; ++p)
            for (int q = p + 1; q < r; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-28) break;
        for (int p = 0; p < r - 1; ++p)
            for (int q = p + 1; q < r; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < r; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < r; ++i) {
                    const double api = a(p, i), aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < r; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
    }
    double max_eig = 0.0;
    for (int i = 0; i < r; ++i) max_eig = std::max(max_eig, std::abs(a(i, i)));
    const double cut = std::max(max_eig * 1e-13, 1e-300);
    Matrix out(r, r);
    for (int s = 0; s < r; ++s) {
        const double eig = a(s, s);
        if (std::abs(eig) <= cut) continue;
        const double inv = 1.0 / eig;
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) out(i, j) += v(i, s) * inv * v(j, s);
    }
    return out;
}

// One least-squares update of the mode-1 factor:
// A <- X_(1) (C kr B) pinv(C'C * B'B), with arguments permuted per mode.
inline void cp_update_mode(const Tensor3& x, Matrix& a, const Matrix& b, const Matrix& c,
                           int mode) {
    const int r = a.cols;
    // Gram = (B'B) hadamard (C'C)
    Matrix gram(r, r);
    for (int s = 0; s < r; ++s)
        for (int u = 0; u < r; ++u) {
            double bb = 0.0, cc = 0.0;
            for (int i = 0; i < b.rows; ++i) bb += b(i, s) * b(i, u);
            for (int i = 0; i < c.rows; ++i) cc += c(i, s) * c(i, u);
            gram(s, u) = bb * cc;
        }
    // MTTKRP: M(i, s) = sum_{j,k} X(i,j,k) B(j,s) C(k,s), indices per mode.
    Matrix m(a.rows, r);
    for (int i = 0; i < x.d1; ++i)
        for (int j = 0; j < x.d2; ++j)
            for (int k = 0; k < x.d3; ++k) {
                const double val = x.at(i, j, k);
                if (val == 0.0) continue;
                for (int s = 0; s < r; ++s) {
                    if (mode == 1)
                        m(i, s) += val * b(j, s) * c(k, s);
                    else if (mode == 2)
                        m(j, s) += val * b(i, s) * c(k, s);
                    else
                        m(k, s) += val * b(i, s) * c(j, s);
                }
            }
    a = matmul(m, pinv_sym(gram));
}

}  // namespace detail

// Alternating least squares fit of a rank-r CP decomposition. Exact
// per-factor least-squares updates; best restart (ties broken by restart
// order) wins. Deterministic for a fixed config.
inline CPFactors cp_als(const Tensor3& t, int r, const CpConfig& cfg = {}) {
    const double norm = frobenius_norm(t);
    if (r == 0) {
        if (norm != 0.0) throw std::invalid_argument("cp_als: rank 0 cannot fit a nonzero tensor");
        CPFactors f;
        f.a = Matrix(t.d1, 0);
        f.b = Matrix(t.d2, 0);
        f.c = Matrix(t.d3, 0);
        return f;
    }
    const int64_t cap = std::min({int64_t(t.d1) * t.d2, int64_t(t.d2) * t.d3,
                                  int64_t(t.d1) * t.d3});
    if (r > cap) throw std::invalid_argument("cp_als: rank exceeds min pairwise dim product");

    CPFactors best;
    best.residual = std::numeric_limits<double>::infinity();
    const double init_scale = 1.0 / std::sqrt(double(r));
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        Rng rng(derive_seed(cfg.seed, 0x3a15ULL, uint64_t(restart)));
        CPFactors f;
        f.rank = r;
        f.a = Matrix(t.d1, r);
        f.b = Matrix(t.d2, r);
        f.c = Matrix(t.d3, r);
        for (double& x : f.a.data) x = rng.normal() * init_scale;
        for (double& x : f.b.data) x = rng.normal() * init_scale;
        for (double& x : f.c.data) x = rng.normal() * init_scale;

        std::vector<double> history;
        double prev = std::numeric_limits<double>::infinity();
        for (int iter = 0; iter < cfg.max_iters; ++iter) {
            detail::cp_update_mode(t, f.a, f.b, f.c, 1);
            detail::cp_update_mode(t, f.b, f.a, f.c, 2);
            detail::cp_update_mode(t, f.c, f.a, f.b, 3);
            const double res = detail::cp_residual(t, f, norm);
            history.push_back(res);
            if (std::abs(prev - res) < cfg.conv_tol) break;
            prev = res;
        }
        f.residual = history.empty() ? detail::cp_residual(t, f, norm) : history.back();
        f.residual_history = std::move(history);
        if (f.residual < best.residual) best = std::move(f);
    }
    return best;
}

// Smallest r <= r_max whose best CP-ALS fit has residual < cfg.fit_tol.
// A heuristic upper-bound-style estimate only: ALS can miss the optimum
// and exact tensor rank is NP-hard. nullopt means no r <= r_max fits.
inline std::optional<int> tensor_rank_estimate(const Tensor3& t, int r_max,
                                               const CpConfig& cfg = {}) {
    if (r_max < 1) throw std::invalid_argument("tensor_rank_estimate: r_max must be >= 1");
    if (frobenius_norm(t) == 0.0) return 0;
    for (int r = 1; r <= r_max; ++r) {
        const CPFactors f = cp_als(t, r, cfg);
        if (f.residual < cfg.fit_tol) return r;
    }
    return std::nullopt;
}

}  // namespace attnrank
