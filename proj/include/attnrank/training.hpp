#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnrank/attention.hpp"
#include "attnrank/database.hpp"
#include "attnrank/eval.hpp"

namespace attnrank {

enum class Optimizer { adam, sgd };

struct TrainConfig {
    int max_epochs = 2000;
    double learning_rate = 1e-2;
    Optimizer optimizer = Optimizer::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;     // recorded with results; the loop itself is deterministic
    int record_every = 100;
    bool stop_when_tau99_memorized = false;
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double acc_argmax = 0.0;
    double acc_075 = 0.0;
    double acc_095 = 0.0;
    double acc_099 = 0.0;
};

struct TrainReport {
    LayerWeights weights;
    std::vector<EpochRecord> history;
    int epochs_run = 0;
    double final_loss = 0.0;
};

struct TrainingDivergence : std::runtime_error {
    TrainingDivergence(int epoch_, double loss_)
        : std::runtime_error("training diverged at epoch " + std::to_string(epoch_) +
                             " (loss = " + std::to_string(loss_) + ")"),
          epoch(epoch_),
          loss(loss_) {}
    int epoch;
    double loss;
};

namespace detail {

// Per-head forward caches for one (k, q, v) sequence.
struct HeadScratch {
    std::vector<double> a1, b0, b1;        // query/key projections
    std::vector<double> s1;                // attention-mixed row 1
    std::vector<double> c0, c1;            // value projections
    double p10 = 0.0, p11 = 0.0;           // attention weights of row 1
};

struct TrainScratch {
    std::vector<HeadScratch> heads;
    std::vector<double> r0, r1, z0, z1, p0, p1;
    std::vector<double> dr0, dr1, de0, de1, dc, ds, da1, db0, db1;

    void resize(const LayerConfig& cfg) {
        heads.resize(cfg.n_heads);
        for (HeadScratch& h : heads) {
            h.a1.resize(cfg.d_head_qk);
            h.b0.resize(cfg.d_head_qk);
            h.b1.resize(cfg.d_head_qk);
            h.s1.resize(cfg.d_model);
            h.c0.resize(cfg.d_head_vo);
            h.c1.resize(cfg.d_head_vo);
        }
        r0.resize(cfg.d_model);
        r1.resize(cfg.d_model);
        z0.resize(cfg.n_vocab);
        z1.resize(cfg.n_vocab);
        p0.resize(cfg.n_vocab);
        p1.resize(cfg.n_vocab);
        dr0.resize(cfg.d_model);
        dr1.resize(cfg.d_model);
        de0.resize(cfg.d_model);
        de1.resize(cfg.d_model);
        dc.resize(cfg.d_head_vo);
        ds.resize(cfg.d_model);
        da1.resize(cfg.d_head_qk);
        db0.resize(cfg.d_head_qk);
        db1.resize(cfg.d_head_qk);
    }
};

inline void softmax_inplace(std::vector<double>& p, const std::vector<double>& z) {
    double z_max = z[0];
    for (double x : z) z_max = std::max(z_max, x);
    double denom = 0.0;
    for (std::size_t t = 0; t < z.size(); ++t) {
        p[t] = std::exp(z[t] - z_max);
        denom += p[t];
    }
    for (double& x : p) x /= denom;
}

// Full-batch loss and, when grads != nullptr, its exact reverse-mode
// gradients. The per-triple sequence is (k, q, v); row 0 predicts q and
// row 1 predicts v; the row-2 prediction has no target and is skipped.
inline double loss_and_gradients(const LayerWeights& w, const Database& db,
                                 LayerWeights* grads, TrainScratch& scratch) {
    const LayerConfig& cfg = w.config;
    for (const Token& tok : db.vocab)
        if (tok.id >= cfg.n_vocab)
            throw std::invalid_argument("loss: database token outside layer vocabulary");

    scratch.resize(cfg);
    const int d = cfg.d_model;
    const int dqk = cfg.d_head_qk;
    const int dvo = cfg.d_head_vo;
    const int n_vocab = cfg.n_vocab;
    const double inv_n = 1.0 / double(db.n_triples());

    double total = 0.0;
    for (const Triple& t : db.triples) {
        const double* e0 = w.w_e.row(t.k);
        const double* e1 = w.w_e.row(t.q);

        // forward
        for (int i = 0; i < d; ++i) {
            scratch.r0[i] = e0[i];
            scratch.r1[i] = e1[i];
        }
        for (int h = 0; h < cfg.n_heads; ++h) {
            HeadScratch& hs = scratch.heads[h];
            const HeadWeights& hw = w.heads[h];
            for (int s = 0; s < dqk; ++s) {
                double a1 = 0.0;
                for (int i = 0; i < d; ++i) a1 += e1[i] * hw.w_q(i, s);
                hs.a1[s] = a1;
                double b0 = 0.0, b1 = 0.0;
                const double* krow = hw.w_k.row(s);
                for (int i = 0; i < d; ++i) {
                    b0 += krow[i] * e0[i];
                    b1 += krow[i] * e1[i];
                }
                hs.b0[s] = b0;
                hs.b1[s] = b1;
            }
            double m10 = 0.0, m11 = 0.0;
            for (int s = 0; s < dqk; ++s) {
                m10 += hs.a1[s] * hs.b0[s];
                m11 += hs.a1[s] * hs.b1[s];
            }
            const double m_max = std::max(m10, m11);
            const double ek = std::exp(m10 - m_max), eq = std::exp(m11 - m_max);
            hs.p10 = ek / (ek + eq);
            hs.p11 = eq / (ek + eq);
            for (int i = 0; i < d; ++i) hs.s1[i] = hs.p10 * e0[i] + hs.p11 * e1[i];
            for (int a = 0; a < dvo; ++a) {
                double c0 = 0.0, c1 = 0.0;
                for (int i = 0; i < d; ++i) {
                    c0 += e0[i] * hw.w_v(i, a);
                    c1 += hs.s1[i] * hw.w_v(i, a);
                }
                hs.c0[a] = c0;
                hs.c1[a] = c1;
            }
            for (int i = 0; i < d; ++i) {
                double g0 = 0.0, g1 = 0.0;
                for (int a = 0; a < dvo; ++a) {
                    g0 += hs.c0[a] * hw.w_o(a, i);
                    g1 += hs.c1[a] * hw.w_o(a, i);
                }
                scratch.r0[i] += g0;
                scratch.r1[i] += g1;
            }
        }
        for (int tok = 0; tok < n_vocab; ++tok) {
            double z0 = 0.0, z1 = 0.0;
            for (int i = 0; i < d; ++i) {
                z0 += scratch.r0[i] * w.w_u(i, tok);
                z1 += scratch.r1[i] * w.w_u(i, tok);
            }
            scratch.z0[tok] = z0;
            scratch.z1[tok] = z1;
        }
        softmax_inplace(scratch.p0, scratch.z0);
        softmax_inplace(scratch.p1, scratch.z1);
        total += -std::log(scratch.p0[t.q]) - std::log(scratch.p1[t.v]);

        if (!grads) continue;

        // backward; p0/p1 become the logit gradients dz0/dz1 in place
        for (int tok = 0; tok < n_vocab; ++tok) {
            scratch.p0[tok] *= inv_n;
            scratch.p1[tok] *= inv_n;
        }
        scratch.p0[t.q] -= inv_n;
        scratch.p1[t.v] -= inv_n;

        for (int i = 0; i < d; ++i) {
            double* gu = grads->w_u.row(i);
            const double r0i = scratch.r0[i], r1i = scratch.r1[i];
            double dr0 = 0.0, dr1 = 0.0;
            const double* wu = w.w_u.row(i);
            for (int tok = 0; tok < n_vocab; ++tok) {
                gu[tok] += r0i * scratch.p0[tok] + r1i * scratch.p1[tok];
                dr0 += wu[tok] * scratch.p0[tok];
                dr1 += wu[tok] * scratch.p1[tok];
            }
            scratch.dr0[i] = dr0;
            scratch.dr1[i] = dr1;
            scratch.de0[i] = dr0;
            scratch.de1[i] = dr1;
        }

        for (int h = 0; h < cfg.n_heads; ++h) {
            HeadScratch& hs = scratch.heads[h];
            const HeadWeights& hw = w.heads[h];
            HeadWeights& hg = grads->heads[h];

            // value-output path, row 0 (attention is the identity there)
            for (int a = 0; a < dvo; ++a) {
                double dc = 0.0;
                const double* orow = hw.w_o.row(a);
                double* go = hg.w_o.row(a);
                for (int i = 0; i < d; ++i) {
                    go[i] += hs.c0[a] * scratch.dr0[i] + hs.c1[a] * scratch.dr1[i];
                    dc += orow[i] * scratch.dr0[i];
                }
                scratch.dc[a] = dc;
            }
            for (int i = 0; i < d; ++i) {
                double ds = 0.0;
                const double* vrow = hw.w_v.row(i);
                double* gv = hg.w_v.row(i);
                for (int a = 0; a < dvo; ++a) {
                    gv[a] += e0[i] * scratch.dc[a];
                    ds += vrow[a] * scratch.dc[a];
                }
                scratch.de0[i] += ds;
            }

            // value-output path, row 1
            for (int a = 0; a < dvo; ++a) {
                double dc = 0.0;
                const double* orow = hw.w_o.row(a);
                for (int i = 0; i < d; ++i) dc += orow[i] * scratch.dr1[i];
                scratch.dc[a] = dc;
            }
            double dp10 = 0.0, dp11 = 0.0;
            for (int i = 0; i < d; ++i) {
                double ds = 0.0;
                const double* vrow = hw.w_v.row(i);
                double* gv = hg.w_v.row(i);
                for (int a = 0; a < dvo; ++a) {
                    gv[a] += hs.s1[i] * scratch.dc[a];
                    ds += vrow[a] * scratch.dc[a];
                }
                scratch.ds[i] = ds;
                dp10 += ds * e0[i];
                dp11 += ds * e1[i];
                scratch.de0[i] += hs.p10 * ds;
                scratch.de1[i] += hs.p11 * ds;
            }

            // attention softmax and score path
            const double sigma = hs.p10 * dp10 + hs.p11 * dp11;
            const double dm10 = hs.p10 * (dp10 - sigma);
            const double dm11 = hs.p11 * (dp11 - sigma);
            for (int s = 0; s < dqk; ++s) {
                scratch.da1[s] = dm10 * hs.b0[s] + dm11 * hs.b1[s];
                scratch.db0[s] = dm10 * hs.a1[s];
                scratch.db1[s] = dm11 * hs.a1[s];
            }
            for (int i = 0; i < d; ++i) {
                double de1_q = 0.0;
                const double* qrow = hw.w_q.row(i);
                double* gq = hg.w_q.row(i);
                for (int s = 0; s < dqk; ++s) {
                    gq[s] += e1[i] * scratch.da1[s];
                    de1_q += qrow[s] * scratch.da1[s];
                }
                scratch.de1[i] += de1_q;
            }
            for (int s = 0; s < dqk; ++s) {
                const double* krow = hw.w_k.row(s);
                double* gk = hg.w_k.row(s);
                for (int i = 0; i < d; ++i) {
                    gk[i] += scratch.db0[s] * e0[i] + scratch.db1[s] * e1[i];
                    scratch.de0[i] += krow[i] * scratch.db0[s];
                    scratch.de1[i] += krow[i] * scratch.db1[s];
                }
            }
        }

        double* ge0 = grads->w_e.row(t.k);
        double* ge1 = grads->w_e.row(t.q);
        for (int i = 0; i < d; ++i) {
            ge0[i] += scratch.de0[i];
            ge1[i] += scratch.de1[i];
        }
    }
    return total * inv_n;
}

inline LayerWeights zeros_like(const LayerWeights& w) {
    LayerWeights z;
    z.config = w.config;
    z.w_e = Matrix(w.w_e.rows, w.w_e.cols);
    z.w_u = Matrix(w.w_u.rows, w.w_u.cols);
    z.heads.resize(w.heads.size());
    for (std::size_t h = 0; h < w.heads.size(); ++h) {
        z.heads[h].w_q = Matrix(w.heads[h].w_q.rows, w.heads[h].w_q.cols);
        z.heads[h].w_k = Matrix(w.heads[h].w_k.rows, w.heads[h].w_k.cols);
        z.heads[h].w_v = Matrix(w.heads[h].w_v.rows, w.heads[h].w_v.cols);
        z.heads[h].w_o = Matrix(w.heads[h].w_o.rows, w.heads[h].w_o.cols);
    }
    return z;
}

inline std::vector<Matrix*> param_matrices(LayerWeights& w) {
    std::vector<Matrix*> out{&w.w_e, &w.w_u};
    for (HeadWeights& h : w.heads) {
        out.push_back(&h.w_q);
        out.push_back(&h.w_k);
        out.push_back(&h.w_v);
        out.push_back(&h.w_o);
    }
    return out;
}

}  // namespace detail

// Mean over triples of the next-token cross entropies at the two
// predictable positions of the sequence (k, q, v). Full batch.
inline double loss(const LayerWeights& w, const Database& db) {
    detail::TrainScratch scratch;
    return detail::loss_and_gradients(w, db, nullptr, scratch);
}

// Exact analytic gradient of loss() with respect to every weight matrix.
inline LayerWeights gradients(const LayerWeights& w, const Database& db) {
    detail::TrainScratch scratch;
    LayerWeights grads = detail::zeros_like(w);
    detail::loss_and_gradients(w, db, &grads, scratch);
    return grads;
}

namespace detail {

inline EpochRecord evaluate_epoch(const LayerWeights& w, const Database& db, int epoch,
                                  TrainScratch& scratch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_and_gradients(w, db, nullptr, scratch);
    const LayerTensorBundle bundle = build_bundle(w, db);
    rec.acc_argmax = argmax_accuracy(bundle.l, db);
    rec.acc_075 = tau_accuracy(bundle.l, db, 0.75);
    rec.acc_095 = tau_accuracy(bundle.l, db, 0.95);
    rec.acc_099 = tau_accuracy(bundle.l, db, 0.99);
    return rec;
}

}  // namespace detail

// Deterministic full-batch training loop. No early stop by default; set
// stop_when_tau99_memorized to halt once tau = 0.99 accuracy reaches 1
// (checked at recording epochs). Throws TrainingDivergence when the loss
// turns non-finite.
inline TrainReport train(LayerWeights w, const Database& db, const TrainConfig& cfg) {
    if (cfg.max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");

    detail::TrainScratch scratch;
    LayerWeights grads = detail::zeros_like(w);
    LayerWeights adam_m = detail::zeros_like(w);
    LayerWeights adam_v = detail::zeros_like(w);
    const std::vector<Matrix*> params = detail::param_matrices(w);
    const std::vector<Matrix*> grad_mats = detail::param_matrices(grads);
    const std::vector<Matrix*> m_mats = detail::param_matrices(adam_m);
    const std::vector<Matrix*> v_mats = detail::param_matrices(adam_v);

    TrainReport report;
    report.history.push_back(detail::evaluate_epoch(w, db, 0, scratch));

    int epoch = 0;
    for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (Matrix* g : grad_mats)
            std::fill(g->data.begin(), g->data.end(), 0.0);
        const double epoch_loss = detail::loss_and_gradients(w, db, &grads, scratch);
        if (!std::isfinite(epoch_loss)) throw TrainingDivergence(epoch, epoch_loss);

        if (cfg.optimizer == Optimizer::adam) {
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, double(epoch));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, double(epoch));
            for (std::size_t p = 0; p < params.size(); ++p) {
                double* wp = params[p]->data.data();
                const double* gp = grad_mats[p]->data.data();
                double* mp = m_mats[p]->data.data();
                double* vp = v_mats[p]->data.data();
                const std::size_t count = params[p]->data.size();
                for (std::size_t i = 0; i < count; ++i) {
                    mp[i] = cfg.adam_beta1 * mp[i] + (1.0 - cfg.adam_beta1) * gp[i];
                    vp[i] = cfg.adam_beta2 * vp[i] + (1.0 - cfg.adam_beta2) * gp[i] * gp[i];
                    wp[i] -= cfg.learning_rate * (mp[i] / bc1) /
                             (std::sqrt(vp[i] / bc2) + cfg.adam_eps);
                }
            }
        } else {
            for (std::size_t p = 0; p < params.size(); ++p) {
                double* wp = params[p]->data.data();
                const double* gp = grad_mats[p]->data.data();
                const std::size_t count = params[p]->data.size();
                for (std::size_t i = 0; i < count; ++i) wp[i] -= cfg.learning_rate * gp[i];
            }
        }

        const bool record = (cfg.record_every > 0 && epoch % cfg.record_every == 0) ||
                            epoch == cfg.max_epochs;
        if (record) {
            report.history.push_back(detail::evaluate_epoch(w, db, epoch, scratch));
            if (cfg.stop_when_tau99_memorized && report.history.back().acc_099 == 1.0) break;
        }
    }

    report.epochs_run = std::min(epoch, cfg.max_epochs);
    if (report.history.back().epoch != report.epochs_run)
        report.history.push_back(detail::evaluate_epoch(w, db, report.epochs_run, scratch));
    report.final_loss = report.history.back().loss;
    report.weights = std::move(w);
    return report;
}

// Training history CSV: epoch, loss, acc_argmax, acc_075, acc_095, acc_099.
inline void write_history_csv(const TrainReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_history_csv: cannot open " + path);
    out << "epoch,loss,acc_argmax,acc_075,acc_095,acc_099\n";
    char line[256];
    for (const EpochRecord& r : report.history) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.loss,
                      r.acc_argmax, r.acc_075, r.acc_095, r.acc_099);
        out << line;
    }
}

}  // namespace attnrank
