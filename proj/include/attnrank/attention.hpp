#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnrank/database.hpp"
#include "attnrank/matrix.hpp"
#include "attnrank/rng.hpp"
#include "attnrank/tensor3.hpp"

namespace attnrank {

// Single-layer attention-only decoder: no biases, no layer norm, no
// positional encodings. The query-key and value-output head dimensions are
// independent of each other.
struct LayerConfig {
    int n_vocab = 0;
    int n_heads = 0;
    int d_model = 0;
    int d_head_qk = 0;
    int d_head_vo = 0;
};

inline void validate(const LayerConfig& cfg) {
    if (cfg.n_vocab < 1 || cfg.n_heads < 1 || cfg.d_model < 1 || cfg.d_head_qk < 1 ||
        cfg.d_head_vo < 1)
        throw std::invalid_argument("LayerConfig: all dimensions must be positive");
    if (cfg.d_model > cfg.n_vocab)
        throw std::invalid_argument("LayerConfig: d_model must not exceed n_vocab");
    if (cfg.d_head_qk > cfg.d_model || cfg.d_head_vo > cfg.d_model)
        throw std::invalid_argument("LayerConfig: head dims must not exceed d_model");
}

struct HeadWeights {
    Matrix w_q;  // d_model x d_head_qk
    Matrix w_k;  // d_head_qk x d_model
    Matrix w_v;  // d_model x d_head_vo
    Matrix w_o;  // d_head_vo x d_model
};

struct LayerWeights {
    LayerConfig config;
    Matrix w_e;  // n_vocab x d_model
    Matrix w_u;  // d_model x n_vocab
    std::vector<HeadWeights> heads;
};

// i.i.d. N(0, 1/d_model) entries, deterministic per seed.
inline LayerWeights init_weights(const LayerConfig& cfg, uint64_t seed) {
    validate(cfg);
    Rng rng(seed);
    const double std_dev = 1.0 / std::sqrt(double(cfg.d_model));
    const auto fill = [&](Matrix& m) {
        for (double& x : m.data) x = rng.normal() * std_dev;
    };
    LayerWeights w;
    w.config = cfg;
    w.w_e = Matrix(cfg.n_vocab, cfg.d_model);
    w.w_u = Matrix(cfg.d_model, cfg.n_vocab);
    fill(w.w_e);
    fill(w.w_u);
    w.heads.resize(cfg.n_heads);
    for (HeadWeights& h : w.heads) {
        h.w_q = Matrix(cfg.d_model, cfg.d_head_qk);
        h.w_k = Matrix(cfg.d_head_qk, cfg.d_model);
        h.w_v = Matrix(cfg.d_model, cfg.d_head_vo);
        h.w_o = Matrix(cfg.d_head_vo, cfg.d_model);
        fill(h.w_q);
        fill(h.w_k);
        fill(h.w_v);
        fill(h.w_o);
    }
    return w;
}

// Vocabulary-to-vocabulary circuits. rank(W_EU) <= d_model,
// rank(W_QK^h) <= d_head_qk, rank(W_VO^h) <= d_head_vo by construction.
struct CircuitSet {
    Matrix w_eu;                // W_E W_U
    std::vector<Matrix> w_qk;   // W_E W_Q^h W_K^h W_E^T per head
    std::vector<Matrix> w_vo;   // W_E W_V^h W_O^h W_U per head
};

inline CircuitSet circuits(const LayerWeights& w) {
    CircuitSet cs;
    cs.w_eu = matmul(w.w_e, w.w_u);
    const Matrix w_e_t = transpose(w.w_e);
    for (const HeadWeights& h : w.heads) {
        cs.w_qk.push_back(matmul(matmul(w.w_e, h.w_q), matmul(h.w_k, w_e_t)));
        cs.w_vo.push_back(matmul(matmul(w.w_e, h.w_v), matmul(h.w_o, w.w_u)));
    }
    return cs;
}

// Full forward pass: n x n_vocab logits for a token sequence, per
// Z = X W_EU + sum_h mask(X W_QK^h X^T) X W_VO^h with mask the
// auto-regressive row-wise softmax. Row-max subtraction keeps the softmax
// overflow-safe without changing its value.
inline Matrix forward(const LayerWeights& w, std::span<const int> tokens) {
    const LayerConfig& cfg = w.config;
    const int n = int(tokens.size());
    if (n < 1) throw std::invalid_argument("forward: empty token sequence");
    for (int t : tokens)
        if (t < 0 || t >= cfg.n_vocab) throw std::out_of_range("forward: token id out of range");

    const int d = cfg.d_model;
    Matrix embedded(n, d);  // X W_E
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) embedded(i, j) = w.w_e(tokens[i], j);

    Matrix residual = embedded;
    for (const HeadWeights& h : w.heads) {
        const Matrix queries = matmul(embedded, h.w_q);          // n x d_qk
        const Matrix keys_t = matmul(h.w_k, transpose(embedded));  // d_qk x n
        Matrix scores = matmul(queries, keys_t);                 // n x n

        // Masked row-wise softmax over each row's prefix.
        Matrix attn(n, n);
        for (int i = 0; i < n; ++i) {
            double row_max = scores(i, 0);
            for (int j = 1; j <= i; ++j) row_max = std::max(row_max, scores(i, j));
            double denom = 0.0;
            for (int j = 0; j <= i; ++j) denom += std::exp(scores(i, j) - row_max);
            for (int j = 0; j <= i; ++j) attn(i, j) = std::exp(scores(i, j) - row_max) / denom;
        }

        const Matrix mixed = matmul(attn, embedded);             // n x d
        const Matrix head_out = matmul(matmul(mixed, h.w_v), h.w_o);
        for (std::size_t i = 0; i < residual.data.size(); ++i)
            residual.data[i] += head_out.data[i];
    }
    return matmul(residual, w.w_u);  // n x n_vocab
}

inline Matrix forward(const LayerWeights& w, std::initializer_list<int> tokens) {
    return forward(w, std::span<const int>(tokens.begin(), tokens.size()));
}

// The masked softmax rows mask(X W_QK^h X^T) of one head: each row is a
// probability distribution over its prefix, zero above the diagonal.
inline Matrix attention_matrix(const LayerWeights& w, std::span<const int> tokens, int head) {
    const LayerConfig& cfg = w.config;
    if (head < 0 || head >= cfg.n_heads) throw std::out_of_range("attention_matrix: bad head");
    const int n = int(tokens.size());
    if (n < 1) throw std::invalid_argument("attention_matrix: empty token sequence");
    for (int t : tokens)
        if (t < 0 || t >= cfg.n_vocab)
            throw std::out_of_range("attention_matrix: token id out of range");

    Matrix embedded(n, cfg.d_model);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < cfg.d_model; ++j) embedded(i, j) = w.w_e(tokens[i], j);
    const HeadWeights& h = w.heads[head];
    const Matrix scores = matmul(matmul(embedded, h.w_q), matmul(h.w_k, transpose(embedded)));

    Matrix attn(n, n);
    for (int i = 0; i < n; ++i) {
        double row_max = scores(i, 0);
        for (int j = 1; j <= i; ++j) row_max = std::max(row_max, scores(i, j));
        double denom = 0.0;
        for (int j = 0; j <= i; ++j) denom += std::exp(scores(i, j) - row_max);
        for (int j = 0; j <= i; ++j) attn(i, j) = std::exp(scores(i, j) - row_max) / denom;
    }
    return attn;
}

inline Matrix attention_matrix(const LayerWeights& w, std::initializer_list<int> tokens,
                               int head) {
    return attention_matrix(w, std::span<const int>(tokens.begin(), tokens.size()), head);
}

struct LayerRankBounds {
    int lower_estimate = 0;  // d_model + n_heads * d_head_vo
    int upper_bound = 0;     // d_model + n_heads * d_head_vo * |Q|
};

inline LayerRankBounds layer_rank_bounds(const LayerConfig& cfg, const Database& db) {
    validate(cfg);
    LayerRankBounds b;
    b.lower_estimate = cfg.d_model + cfg.n_heads * cfg.d_head_vo;
    b.upper_bound = cfg.d_model + cfg.n_heads * cfg.d_head_vo * db.n_predicates();
    return b;
}

// Sufficient-capacity test: database rank upper bound within the layer
// rank lower estimate.
inline bool memorization_condition(const LayerConfig& cfg, const Database& db) {
    return db_rank_upper_bound(db) <= layer_rank_bounds(cfg, db).lower_estimate;
}

inline int non_embedding_params(const LayerConfig& cfg) {
    return 2 * cfg.n_heads * cfg.d_model * (cfg.d_head_vo + cfg.d_head_qk);
}

// The tensors A^h, V^h, E and their combination L = E + sum_h A^h V^h,
// axis-aligned to a database's subject/predicate/object orders. The third
// A axis and first V axis run over K union Q (subjects first, then
// predicates not already seen).
struct LayerTensorBundle {
    std::vector<int> k_tokens;   // vocab ids per subject-axis index
    std::vector<int> q_tokens;   // per predicate-axis index
    std::vector<int> v_tokens;   // per object-axis index
    std::vector<int> kq_tokens;  // per K-union-Q axis index

    Tensor3 e;               // |K| x |Q| x |V|
    std::vector<Tensor3> a;  // per head, |K| x |Q| x |KuQ|
    std::vector<Tensor3> v;  // per head, |KuQ| x |Q| x |V|
    Tensor3 l;               // |K| x |Q| x |V|
};

inline LayerTensorBundle bundle_from_circuits(const CircuitSet& cs, const Database& db) {
    const int n_vocab = cs.w_eu.rows;
    for (const Token& tok : db.vocab)
        if (tok.id >= n_vocab)
            throw std::invalid_argument("bundle_from_circuits: database token outside layer vocabulary");

    LayerTensorBundle b;
    b.k_tokens = db.subjects;
    b.q_tokens = db.predicates;
    b.v_tokens = db.objects;
    b.kq_tokens = db.subjects;
    for (int q : db.predicates)
        if (db.subject_pos[q] < 0) b.kq_tokens.push_back(q);

    std::vector<int> kq_pos(db.vocab.size(), -1);
    for (std::size_t i = 0; i < b.kq_tokens.size(); ++i) kq_pos[b.kq_tokens[i]] = int(i);

    const int nk = int(b.k_tokens.size());
    const int nq = int(b.q_tokens.size());
    const int nv = int(b.v_tokens.size());
    const int nkq = int(b.kq_tokens.size());
    const int n_heads = int(cs.w_qk.size());

    b.e = Tensor3(nk, nq, nv);
    for (int ki = 0; ki < nk; ++ki)
        for (int qi = 0; qi < nq; ++qi)
            for (int vi = 0; vi < nv; ++vi)
                b.e.at(ki, qi, vi) = cs.w_eu(b.q_tokens[qi], b.v_tokens[vi]);

    b.a.assign(n_heads, Tensor3(nk, nq, nkq));
    b.v.assign(n_heads, Tensor3(nkq, nq, nv));
    for (int h = 0; h < n_heads; ++h) {
        for (int ti = 0; ti < nkq; ++ti)
            for (int qi = 0; qi < nq; ++qi)
                for (int vi = 0; vi < nv; ++vi)
                    b.v[h].at(ti, qi, vi) = cs.w_vo[h](b.kq_tokens[ti], b.v_tokens[vi]);

        for (const Triple& t : db.triples) {
            const int ki = db.subject_pos[t.k];
            const int qi = db.predicate_pos[t.q];
            if (t.k == t.q) {
                // Both attended positions carry the same token; softmax
                // mass sums to 1 on it.
                b.a[h].at(ki, qi, kq_pos[t.k]) = 1.0;
                continue;
            }
            const double score_k = cs.w_qk[h](t.q, t.k);
            const double score_q = cs.w_qk[h](t.q, t.q);
            const double m = std::max(score_k, score_q);
            const double ek = std::exp(score_k - m), eq = std::exp(score_q - m);
            b.a[h].at(ki, qi, kq_pos[t.k]) = ek / (ek + eq);
            b.a[h].at(ki, qi, kq_pos[t.q]) = eq / (ek + eq);
        }
    }

    // L = E + sum_h A^h V^h, where the q-slice of A^h V^h is the matrix
    // product of the q-slices. A is zero outside fact pairs, so only the
    // t in {k, q} terms contribute.
    b.l = b.e;
    for (int h = 0; h < n_heads; ++h)
        for (const Triple& t : db.triples) {
            const int ki = db.subject_pos[t.k];
            const int qi = db.predicate_pos[t.q];
            for (int ti : {kq_pos[t.k], kq_pos[t.q]}) {
                const double weight = b.a[h].at(ki, qi, ti);
                if (weight == 0.0) continue;
                for (int vi = 0; vi < nv; ++vi)
                    b.l.at(ki, qi, vi) += weight * b.v[h].at(ti, qi, vi);
                if (kq_pos[t.k] == kq_pos[t.q]) break;
            }
        }
    return b;
}

inline LayerTensorBundle build_bundle(const LayerWeights& w, const Database& db) {
    return bundle_from_circuits(circuits(w), db);
}

// --- model file format -----------------------------------------------

inline nlohmann::json weights_to_json(const LayerWeights& w) {
    nlohmann::json heads = nlohmann::json::array();
    for (const HeadWeights& h : w.heads)
        heads.push_back({{"W_Q", h.w_q.data},
                         {"W_K", h.w_k.data},
                         {"W_V", h.w_v.data},
                         {"W_O", h.w_o.data}});
    return nlohmann::json{
        {"config",
         {{"n_vocab", w.config.n_vocab},
          {"n_heads", w.config.n_heads},
          {"d_model", w.config.d_model},
          {"d_head_qk", w.config.d_head_qk},
          {"d_head_vo", w.config.d_head_vo}}},
        {"weights", {{"W_E", w.w_e.data}, {"W_U", w.w_u.data}, {"heads", heads}}}};
}

inline LayerWeights weights_from_json(const nlohmann::json& j) {
    const auto& cfg_json = j.at("config");
    LayerConfig cfg;
    cfg.n_vocab = cfg_json.at("n_vocab").get<int>();
    cfg.n_heads = cfg_json.at("n_heads").get<int>();
    cfg.d_model = cfg_json.at("d_model").get<int>();
    cfg.d_head_qk = cfg_json.at("d_head_qk").get<int>();
    cfg.d_head_vo = cfg_json.at("d_head_vo").get<int>();
    validate(cfg);

    const auto read = [](const nlohmann::json& arr, int rows, int cols) {
        Matrix m(rows, cols);
        if (arr.size() != m.data.size())
            throw std::invalid_argument("weights_from_json: array length mismatch");
        m.data = arr.get<std::vector<double>>();
        return m;
    };

    LayerWeights w;
    w.config = cfg;
    const auto& weights = j.at("weights");
    w.w_e = read(weights.at("W_E"), cfg.n_vocab, cfg.d_model);
    w.w_u = read(weights.at("W_U"), cfg.d_model, cfg.n_vocab);
    const auto& heads = weights.at("heads");
    if (int(heads.size()) != cfg.n_heads)
        throw std::invalid_argument("weights_from_json: head count mismatch");
    for (const auto& hj : heads) {
        HeadWeights h;
        h.w_q = read(hj.at("W_Q"), cfg.d_model, cfg.d_head_qk);
        h.w_k = read(hj.at("W_K"), cfg.d_head_qk, cfg.d_model);
        h.w_v = read(hj.at("W_V"), cfg.d_model, cfg.d_head_vo);
        h.w_o = read(hj.at("W_O"), cfg.d_head_vo, cfg.d_model);
        w.heads.push_back(std::move(h));
    }
    return w;
}

inline void save_model(const LayerWeights& w, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out << weights_to_json(w).dump(2) << '\n';
}

inline LayerWeights load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return weights_from_json(j);
}

}  // namespace attnrank
