#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "attnrank/attention.hpp"
#include "attnrank/database.hpp"
#include "attnrank/matrix.hpp"
#include "attnrank/tensor3.hpp"

namespace attnrank {

// Row-wise argmax indicator. Ties mark every maximum, so a constant row
// becomes all ones.
inline Matrix argmax_rows(const Matrix& m) {
    if (!all_finite(m)) throw std::invalid_argument("argmax_rows: non-finite entries");
    Matrix out(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i) {
        double row_max = m(i, 0);
        for (int j = 1; j < m.cols; ++j) row_max = std::max(row_max, m(i, j));
        for (int j = 0; j < m.cols; ++j) out(i, j) = (m(i, j) == row_max) ? 1.0 : 0.0;
    }
    return out;
}

inline std::vector<double> softmax_row(const double* row, int n) {
    double row_max = row[0];
    for (int j = 1; j < n; ++j) row_max = std::max(row_max, row[j]);
    std::vector<double> p(n);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
        p[j] = std::exp(row[j] - row_max);
        denom += p[j];
    }
    for (int j = 0; j < n; ++j) p[j] /= denom;
    return p;
}

inline Matrix softmax_rows(const Matrix& m) {
    if (!all_finite(m)) throw std::invalid_argument("softmax_rows: non-finite entries");
    Matrix out(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i) {
        const std::vector<double> p = softmax_row(m.row(i), m.cols);
        for (int j = 0; j < m.cols; ++j) out(i, j) = p[j];
    }
    return out;
}

inline void check_tau(double tau) {
    if (!(tau >= 0.5 && tau <= 1.0))
        throw std::invalid_argument("tau must lie in [0.5, 1]");
}

namespace detail {

// softmax(row)_j >= tau, tested in the exact form
// (1 - tau) e^{z_j - m} >= tau * sum_{j' != j} e^{z_j' - m}.
// Avoids the saturation of softmax to exactly 1.0 in doubles, which would
// otherwise let finite rows pass tau = 1 (a probability of 1 requires the
// other logits to be -infinity).
inline bool softmax_entry_clears(const double* row, int n, int j, double tau) {
    double row_max = row[0];
    for (int i = 1; i < n; ++i) row_max = std::max(row_max, row[i]);
    double others = 0.0;
    for (int i = 0; i < n; ++i)
        if (i != j) others += std::exp(row[i] - row_max);
    return (1.0 - tau) * std::exp(row[j] - row_max) >= tau * others;
}

}  // namespace detail

// Indicator of softmax entries >= tau. For tau > 0.5 each row has at most
// one 1; at tau = 0.5 at most two.
inline Matrix softmax_threshold(const Matrix& m, double tau) {
    check_tau(tau);
    if (!all_finite(m)) throw std::invalid_argument("softmax_threshold: non-finite entries");
    Matrix out(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j)
            out(i, j) = detail::softmax_entry_clears(m.row(i), m.cols, j, tau) ? 1.0 : 0.0;
    return out;
}

namespace detail {

inline void check_alignment(const Tensor3& l, const Database& db) {
    if (l.d1 != db.n_subjects() || l.d2 != db.n_predicates() || l.d3 != db.n_objects())
        throw std::invalid_argument("tensor axes are not aligned to the database index sets");
}

}  // namespace detail

// Fraction of facts whose object clears the softmax threshold tau along
// the object axis of its (k, q) fiber.
inline double tau_accuracy(const Tensor3& l, const Database& db, double tau) {
    check_tau(tau);
    detail::check_alignment(l, db);
    int hits = 0;
    std::vector<double> logits(l.d3);
    for (const Triple& t : db.triples) {
        const int ki = db.subject_pos[t.k];
        const int qi = db.predicate_pos[t.q];
        for (int vi = 0; vi < l.d3; ++vi) logits[vi] = l.at(ki, qi, vi);
        if (detail::softmax_entry_clears(logits.data(), l.d3, db.object_pos[t.v], tau)) ++hits;
    }
    return double(hits) / double(db.n_triples());
}

inline bool memorizes(const Tensor3& l, const Database& db, double tau) {
    return tau_accuracy(l, db, tau) == 1.0;
}

// Fraction of facts whose object is the unique row maximum of its fiber.
// Tied maxima count as incorrect: a tied prediction is not a recall.
inline double argmax_accuracy(const Tensor3& l, const Database& db) {
    detail::check_alignment(l, db);
    int hits = 0;
    for (const Triple& t : db.triples) {
        const int ki = db.subject_pos[t.k];
        const int qi = db.predicate_pos[t.q];
        const double target = l.at(ki, qi, db.object_pos[t.v]);
        bool unique_max = true;
        for (int vi = 0; vi < l.d3 && unique_max; ++vi) {
            if (vi == db.object_pos[t.v]) continue;
            if (l.at(ki, qi, vi) >= target) unique_max = false;
        }
        if (unique_max) ++hits;
    }
    return double(hits) / double(db.n_triples());
}

// Same threshold test but against the full-vocabulary logits of the
// forward pass, for probing behavior beyond the object columns. Not used
// in headline metrics.
inline double tau_accuracy_full_vocab(const LayerWeights& w, const Database& db, double tau) {
    check_tau(tau);
    int hits = 0;
    for (const Triple& t : db.triples) {
        const Matrix z = forward(w, {t.k, t.q});
        if (detail::softmax_entry_clears(z.row(1), z.cols, t.v, tau)) ++hits;
    }
    return double(hits) / double(db.n_triples());
}

}  // namespace attnrank
