#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "attnrank/matrix.hpp"

namespace attnrank {

// Singular values by one-sided Jacobi (Hestenes), descending order.
// Accurate to ~1e-14 * sigma_max on the dense matrices this project sees;
// plenty for rank decisions.
inline std::vector<double> singular_values(const Matrix& input) {
    if (!all_finite(input)) throw std::invalid_argument("singular_values: non-finite entries");
    if (input.empty()) return {};

    // Work on the tall orientation so we orthogonalize the fewer columns.
    Matrix a = input.rows >= input.cols ? input : transpose(input);
    const int m = a.rows, n = a.cols;
    const double tol = 1e-14;

    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int i = 0; i < m; ++i) {
                    const double ap = a(i, p), aq = a(i, q);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if (gamma == 0.0) continue;
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < m; ++i) {
                    const double ap = a(i, p), aq = a(i, q);
                    a(i, p) = c * ap - s * aq;
                    a(i, q) = s * ap + c * aq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sv(n);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += a(i, j) * a(i, j);
        sv[j] = std::sqrt(s);
    }
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

// Numerical rank: number of singular values above tol. When tol is not
// given, tol = max(rows, cols) * eps * sigma_max (the usual SVD rule).
inline int matrix_rank(const Matrix& m, std::optional<double> tol = std::nullopt) {
    const std::vector<double> sv = singular_values(m);
    if (sv.empty()) return 0;
    const double threshold =
        tol ? *tol
            : std::max(m.rows, m.cols) * std::numeric_limits<double>::epsilon() * sv.front();
    int rank = 0;
    for (double s : sv)
        if (s > threshold) ++rank;
    return rank;
}

inline bool is_zero_one_matrix(const Matrix& m) {
    for (double x : m.data)
        if (x != 0.0 && x != 1.0) return false;
    return true;
}

// Exact rank of an integer matrix by fraction-free (Bareiss) elimination.
// Independent of the SVD path; on 0/1 matrices the two must agree.
inline int exact_integer_rank(const Matrix& m) {
    const int rows = m.rows, cols = m.cols;
    std::vector<std::vector<int64_t>> a(rows, std::vector<int64_t>(cols));
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const double x = m(i, j);
            const double r = std::round(x);
            if (!std::isfinite(x) || std::abs(x - r) > 1e-9 || std::abs(r) > 1e15)
                throw std::invalid_argument("exact_integer_rank: non-integer entry");
            a[i][j] = int64_t(r);
        }

    int rank = 0;
    int64_t prev_pivot = 1;
    for (int col = 0; col < cols && rank < rows; ++col) {
        int pivot_row = -1;
        for (int i = rank; i < rows; ++i)
            if (a[i][col] != 0) {
                pivot_row = i;
                break;
            }
        if (pivot_row < 0) continue;
        std::swap(a[rank], a[pivot_row]);
        for (int i = rank + 1; i < rows; ++i) {
            for (int j = col + 1; j < cols; ++j) {
                const __int128 num = __int128(a[rank][col]) * a[i][j] -
                                     __int128(a[i][col]) * a[rank][j];
                const __int128 quot = num / prev_pivot;  // exact by Bareiss
                if (quot > std::numeric_limits<int64_t>::max() ||
                    quot < std::numeric_limits<int64_t>::min())
                    throw std::overflow_error("exact_integer_rank: pivot growth overflow");
                a[i][j] = int64_t(quot);
            }
            a[i][col] = 0;
        }
        prev_pivot = a[rank][col];
        ++rank;
    }
    return rank;
}

}  // namespace attnrank
