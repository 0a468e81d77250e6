// Acceptance suite: one pass/fail line per criterion, exit code nonzero if
// any hard criterion fails. Soft gates report SOFT-PASS/SOFT-FAIL without
// affecting the exit code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "attnrank/attention.hpp"
#include "attnrank/cp_als.hpp"
#include "attnrank/db_tensor.hpp"
#include "attnrank/eval.hpp"
#include "attnrank/experiments.hpp"
#include "attnrank/heatmap.hpp"
#include "attnrank/rank.hpp"
#include "attnrank/rank_fx.hpp"
#include "attnrank/training.hpp"

using namespace attnrank;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    bool soft = false;  // soft gates never fail the suite
    std::string detail;
};

int g_hard_failures = 0;

void run_criterion(int number, const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
        outcome = fn();
    } catch (const std::exception& e) {
        outcome.pass = false;
        outcome.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* verdict = outcome.soft ? (outcome.pass ? "SOFT-PASS" : "SOFT-FAIL")
                                       : (outcome.pass ? "PASS" : "FAIL");
    std::printf("C%-2d [%s] %s (%.1f s) %s\n", number, verdict, name, secs,
                outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass && !outcome.soft) ++g_hard_failures;
}

Database countries_db() {
    return parse_triples(
        "a be s\nb be s\nc be m\na li m\nb li s\nc li m\nm cu r\ns cu d\n");
}

Database countries_sub_db() {
    return parse_triples("a be s\nb be s\nc be m\na li m\nb li s\nc li m\n");
}

CircuitSet worked_example_circuits(const Database& db) {
    const int n_vocab = int(db.vocab.size());
    CircuitSet cs;
    cs.w_eu = Matrix(n_vocab, n_vocab);
    cs.w_qk.push_back(Matrix(n_vocab, n_vocab, 1.0));
    Matrix vo(n_vocab, n_vocab);
    const auto id = [&](const char* text) {
        for (const Token& tok : db.vocab)
            if (tok.text == text) return tok.id;
        return -1;
    };
    vo(id("b"), id("s")) = 4.0;
    vo(id("c"), id("m")) = 4.0;
    vo(id("be"), id("s")) = 2.0;
    vo(id("li"), id("m")) = 2.0;
    cs.w_vo.push_back(vo);
    return cs;
}

Database random_db_for(uint64_t seed, int max_side = 8) {
    Rng rng(derive_seed(0xACC, 1, seed));
    const int n_k = rng.uniform_int(2, max_side);
    const int n_q = rng.uniform_int(2, 6);
    const int n_v = rng.uniform_int(2, 6);
    const int n_triples = rng.uniform_int(2, n_k * n_q);
    return random_database({n_k, n_q, n_v, n_triples, seed % 3 == 0}, seed);
}

// --- criteria ----------------------------------------------------------

Outcome criterion1_worked_example() {
    const Database db = countries_sub_db();
    const LayerTensorBundle b = bundle_from_circuits(worked_example_circuits(db), db);
    const int be = db.predicate_index("be"), li = db.predicate_index("li");
    const int m = db.object_index("m"), s = db.object_index("s");

    double worst = 0.0;
    // A^1 slices: one half on the subject column, one half on the predicate.
    for (int ki = 0; ki < 3; ++ki)
        for (int ti = 0; ti < 5; ++ti) {
            const double want_be = (ti == ki || ti == 3) ? 0.5 : 0.0;
            const double want_li = (ti == ki || ti == 4) ? 0.5 : 0.0;
            worst = std::max(worst, std::abs(b.a[0].at(ki, be, ti) - want_be));
            worst = std::max(worst, std::abs(b.a[0].at(ki, li, ti) - want_li));
        }
    // (A^1 V^1) slices on columns (m, s); W_EU = 0 so L = A^1 V^1.
    const double want_be[3][2] = {{0, 1}, {0, 3}, {2, 1}};
    const double want_li[3][2] = {{1, 0}, {1, 2}, {3, 0}};
    for (int ki = 0; ki < 3; ++ki) {
        worst = std::max(worst, std::abs(b.l.at(ki, be, m) - want_be[ki][0]));
        worst = std::max(worst, std::abs(b.l.at(ki, be, s) - want_be[ki][1]));
        worst = std::max(worst, std::abs(b.l.at(ki, li, m) - want_li[ki][0]));
        worst = std::max(worst, std::abs(b.l.at(ki, li, s) - want_li[ki][1]));
    }
    // argmax of the product slices equals the database slices.
    const Tensor3 d = db_tensor(db);
    bool argmax_ok = true;
    for (int qi : {be, li}) {
        const Matrix am = argmax_rows(slice(b.l, 2, qi));
        argmax_ok = argmax_ok && max_abs_diff(am, slice(d, 2, qi)) == 0.0;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "max slice deviation %.2e, argmax matches: %s", worst,
                  argmax_ok ? "yes" : "no");
    return {worst < 1e-9 && argmax_ok, false, buf};
}

Outcome criterion2_fiber_logit_identity() {
    double worst = 0.0;
    for (uint64_t draw = 0; draw < 100; ++draw) {
        const Database db = random_db_for(draw);
        Rng rng(derive_seed(0xACC, 2, draw));
        const int n_vocab = int(db.vocab.size());
        const int d_model = rng.uniform_int(1, std::min(5, n_vocab));
        const LayerConfig cfg{n_vocab, rng.uniform_int(1, 4), d_model,
                              rng.uniform_int(1, d_model), rng.uniform_int(1, d_model)};
        const LayerWeights w = init_weights(cfg, derive_seed(0xACC, 3, draw));
        const LayerTensorBundle b = build_bundle(w, db);
        for (const Triple& t : db.triples) {
            const Matrix z = forward(w, {t.k, t.q});
            const int ki = db.subject_pos[t.k];
            const int qi = db.predicate_pos[t.q];
            for (int vi = 0; vi < db.n_objects(); ++vi)
                worst = std::max(worst,
                                 std::abs(b.l.at(ki, qi, vi) - z(1, b.v_tokens[vi])));
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max |L_kq - forward| = %.2e over 100 draws", worst);
    return {worst < 1e-9, false, buf};
}

Outcome criterion3_rank_bound_suite() {
    int slice_mismatches = 0, bound_violations = 0;
    for (uint64_t seed = 0; seed < 200; ++seed) {
        const Database db = random_db_for(seed + 1000, 10);
        if (db_rank_upper_bound(db) > db.n_triples()) ++bound_violations;
        const Tensor3 d = db_tensor(db);
        for (int ki = 0; ki < db.n_subjects(); ++ki)
            if (matrix_rank(slice(d, 1, ki)) != int(db.subject_values[ki].size()))
                ++slice_mismatches;
        for (int qi = 0; qi < db.n_predicates(); ++qi)
            if (matrix_rank(slice(d, 2, qi)) != int(db.predicate_values[qi].size()))
                ++slice_mismatches;
    }

    const Database fig = countries_db();
    const bool fixture_ok = db_rank_upper_bound(fig) == 6 && fig.n_triples() == 8;
    const Tensor3 d = db_tensor(fig);
    const CPFactors fit5 = cp_als(d, 5, {});
    const CPFactors fit4 = cp_als(d, 4, {});
    const bool r5_ok = fit5.residual < 1e-6;
    const bool r4_soft_ok = fit4.residual > 1e-3;

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "200 dbs: %d bound violations, %d slice-rank mismatches; fixture bound 6/|D| 8:"
                  " %s; r5 residual %.1e; r4 residual %.1e (soft %s)",
                  bound_violations, slice_mismatches, fixture_ok ? "yes" : "no", fit5.residual,
                  fit4.residual, r4_soft_ok ? "ok" : "NOT bounded away");
    return {bound_violations == 0 && slice_mismatches == 0 && fixture_ok && r5_ok, false, buf};
}

Outcome criterion4_gradient_check() {
    double worst_rel = 0.0;
    int checked = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(0xACC, 4, seed));
        const Database db = random_db_for(seed + 2000, 5);
        const int n_vocab = int(db.vocab.size());
        const int d_model = rng.uniform_int(2, std::min(5, n_vocab));
        const LayerConfig cfg{n_vocab, int(seed % 4) + 1, d_model,
                              rng.uniform_int(1, d_model), rng.uniform_int(1, d_model)};
        LayerWeights w = init_weights(cfg, derive_seed(0xACC, 5, seed));
        LayerWeights grads = gradients(w, db);

        std::vector<Matrix*> wm = detail::param_matrices(w);
        std::vector<Matrix*> gm = detail::param_matrices(grads);
        double analytic = 0.0;
        std::vector<std::vector<double>> direction(wm.size());
        double norm = 0.0;
        for (std::size_t p = 0; p < wm.size(); ++p) {
            direction[p].resize(wm[p]->data.size());
            for (double& x : direction[p]) {
                x = rng.normal();
                norm += x * x;
            }
        }
        norm = std::sqrt(norm);
        for (std::size_t p = 0; p < wm.size(); ++p)
            for (std::size_t i = 0; i < direction[p].size(); ++i) {
                direction[p][i] /= norm;
                analytic += gm[p]->data[i] * direction[p][i];
            }

        const double step = 1e-5;
        LayerWeights plus = w, minus = w;
        std::vector<Matrix*> pm = detail::param_matrices(plus);
        std::vector<Matrix*> mm = detail::param_matrices(minus);
        for (std::size_t p = 0; p < wm.size(); ++p)
            for (std::size_t i = 0; i < direction[p].size(); ++i) {
                pm[p]->data[i] += step * direction[p][i];
                mm[p]->data[i] -= step * direction[p][i];
            }
        const double numeric = (loss(plus, db) - loss(minus, db)) / (2.0 * step);
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        worst_rel = std::max(worst_rel, std::abs(analytic - numeric) / scale);
        ++checked;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "worst relative error %.2e over %d configs", worst_rel,
                  checked);
    return {worst_rel < 1e-4 && checked >= 20, false, buf};
}

Outcome criterion5_rank_distortion() {
    std::string detail;
    bool ok = true;
    for (const auto& [n, r] : std::vector<std::pair<int, int>>{{6, 2}, {6, 3}, {8, 4}}) {
        const RankDistortionReport rep = rank_distortion_report(n, r, {}, 42 + n + r);
        const bool case_ok = rep.rank_m == r && rep.rank_argmax == n && rep.scale.has_value() &&
                             rep.rank_softmax_scaled == n;
        ok = ok && case_ok;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "(%d,%d): M %d argmax %d softmax %d c %.3f; ", n, r,
                      rep.rank_m, rep.rank_argmax, rep.rank_softmax_scaled,
                      rep.scale.value_or(-1.0));
        detail += buf;
    }
    return {ok, false, detail};
}

Outcome criterion6_circuit_rank_caps() {
    int violations = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(derive_seed(0xACC, 6, seed));
        const int n_vocab = rng.uniform_int(8, 14);
        const int d_model = rng.uniform_int(1, 6);
        const LayerConfig cfg{n_vocab, rng.uniform_int(1, 4), d_model,
                              rng.uniform_int(1, d_model), rng.uniform_int(1, d_model)};
        const CircuitSet cs = circuits(init_weights(cfg, derive_seed(0xACC, 7, seed)));
        if (matrix_rank(cs.w_eu) > cfg.d_model) ++violations;
        for (const Matrix& qk : cs.w_qk)
            if (matrix_rank(qk) > cfg.d_head_qk) ++violations;
        for (const Matrix& vo : cs.w_vo)
            if (matrix_rank(vo) > cfg.d_head_vo) ++violations;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%d violations over 100 draws", violations);
    return {violations == 0, false, buf};
}

// Shared sweep state: C7 runs it, C9 reuses the corpus.
struct SweepState {
    Corpus corpus;
    std::vector<ResultRecord> results;
};
SweepState g_sweep;

Outcome criterion7_sweep_trends() {
    g_sweep.corpus = generate_corpus(CorpusConfig{});  // desk-scale defaults, seed 0
    SweepOptions opts;
    opts.workers = std::max(1u, std::thread::hardware_concurrency());
    g_sweep.results = run_sweep(g_sweep.corpus, opts);

    int mono_violations = 0, diverged = 0;
    double b_sum = 0, c1_sum = 0, c2_sum = 0, d_sum = 0;
    int b_n = 0, c1_n = 0, c2_n = 0, d_n = 0;
    int eq12_soft_violations = 0;
    for (const ResultRecord& r : g_sweep.results) {
        if (r.status != "ok") {
            ++diverged;
            continue;
        }
        const bool chain = r.acc_argmax >= r.acc_050 - 1e-12 && r.acc_050 >= r.acc_075 &&
                           r.acc_075 >= r.acc_095 && r.acc_095 >= r.acc_099;
        if (!chain) ++mono_violations;
        if (r.layer_lb <= 10 && r.db_rank_ub <= 80) {
            b_sum += r.acc_argmax;
            ++b_n;
        }
        if (r.db_rank_ub <= r.layer_lb) {
            c1_sum += r.acc_095;
            ++c1_n;
        }
        if (r.db_rank_ub >= 4 * r.layer_lb) {
            c2_sum += r.acc_095;
            ++c2_n;
        }
        if (r.db_rank_ub >= r.layer_lb) {
            d_sum += r.acc_099;
            ++d_n;
        }
        // Soft finding: sufficient-capacity pairs that converged should
        // memorize at tau = 0.95.
        if (r.db_rank_ub <= r.layer_lb && r.loss < 0.01 && r.acc_095 < 0.95)
            ++eq12_soft_violations;
    }
    const double b_mean = b_n ? b_sum / b_n : 0.0;
    const double c1_mean = c1_n ? c1_sum / c1_n : 0.0;
    const double c2_mean = c2_n ? c2_sum / c2_n : 1.0;
    const double d_mean = d_n ? d_sum / d_n : 1.0;
    const bool pass = mono_violations == 0 && b_mean > 0.9 && c1_mean >= 0.9 &&
                      c2_mean <= 0.5 && d_mean < 0.5;
    char buf[384];
    std::snprintf(buf, sizeof(buf),
                  "(a) chain violations %d; (b) argmax mean %.3f (n=%d, need >0.9); "
                  "(c) acc095 %.3f at <=1x (n=%d, need >=0.9) / %.3f at >=4x (n=%d, need <=0.5);"
                  " (d) acc099 %.3f at ub>=lb (n=%d, need <0.5); diverged rows %d;"
                  " eq-12 soft findings %d",
                  mono_violations, b_mean, b_n, c1_mean, c1_n, c2_mean, c2_n, d_mean, d_n,
                  diverged, eq12_soft_violations);
    return {pass, false, buf};
}

Outcome criterion8_vo_qk_trend() {
    VoQkGridConfig cfg;  // d_model 4, heads 2, 10 runs/cell, seed 0
    cfg.workers = std::max(1u, std::thread::hardware_concurrency());
    const std::vector<VoQkCell> cells = vo_qk_grid(cfg);
    double grid[5][5] = {};
    for (const VoQkCell& c : cells) grid[c.d_vo][c.d_qk] = c.mean_acc_095;

    const bool corner = grid[4][1] > grid[1][4];
    const double diag[4] = {grid[1][4], grid[2][3], grid[3][2], grid[4][1]};
    int inversions = 0;
    double worst = 0.0;
    for (int i = 1; i < 4; ++i)
        if (diag[i] < diag[i - 1]) {
            ++inversions;
            worst = std::max(worst, diag[i - 1] - diag[i]);
        }
    const bool diagonal_ok = inversions == 0 || (inversions == 1 && worst <= 0.02);
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "acc095 (vo4,qk1) %.3f vs (vo1,qk4) %.3f; anti-diagonal %.3f/%.3f/%.3f/%.3f "
                  "(%d inversion(s), worst %.3f)",
                  grid[4][1], grid[1][4], diag[0], diag[1], diag[2], diag[3], inversions, worst);
    return {corner && diagonal_ok, false, buf};
}

Outcome criterion9_scatter_slope() {
    const Corpus& corpus =
        g_sweep.corpus.databases.empty() ? (g_sweep.corpus = generate_corpus(CorpusConfig{}))
                                         : g_sweep.corpus;
    const ScatterTables tables = scatter_tables(corpus);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "triples ~ %.3f x rank bound (indicative band [1.5, 2.1])",
                  tables.slope);
    return {tables.slope >= 1.5 && tables.slope <= 2.1, true, buf};  // soft gate
}

Outcome criterion10_determinism() {
    const fs::path dir = fs::temp_directory_path() / "attnrank_acceptance_c10";
    fs::remove_all(dir);
    fs::create_directories(dir);

    CorpusConfig cfg;
    cfg.n_databases = 8;
    cfg.n_layer_configs = 8;
    cfg.n_pairs = 16;
    cfg.min_triples = 8;
    cfg.max_triples = 40;
    cfg.seed = 0xD5;
    const Corpus corpus = generate_corpus(cfg);

    const auto run_with = [&](int workers, const std::string& name) {
        SweepOptions opts;
        opts.workers = workers;
        write_results_csv(run_sweep(corpus, opts), (dir / name).string());
        std::ifstream in(dir / name, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    const std::string w1 = run_with(1, "w1.csv");
    const std::string w2 = run_with(2, "w2.csv");
    const std::string w3 = run_with(3, "w3.csv");
    const std::string rerun = run_with(2, "rerun.csv");
    fs::remove_all(dir);

    const bool identical = w1 == w2 && w2 == w3 && w2 == rerun;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "16-pair sweep x {1,2,3} workers + rerun: %s",
                  identical ? "byte-identical" : "MISMATCH");
    return {identical, false, buf};
}

}  // namespace

int main() {
    std::printf("acceptance suite (tolerances pinned in code)\n");
    run_criterion(1, "worked-example exactness", criterion1_worked_example);
    run_criterion(2, "fiber-logit identity (100 draws, 1e-9)", criterion2_fiber_logit_identity);
    run_criterion(3, "database rank-bound suite (200 dbs + CP fixture)",
                  criterion3_rank_bound_suite);
    run_criterion(4, "analytic vs finite-difference gradients (20 configs, 1e-4)",
                  criterion4_gradient_check);
    run_criterion(5, "argmax/softmax rank distortion {(6,2),(6,3),(8,4)}",
                  criterion5_rank_distortion);
    run_criterion(6, "circuit rank caps (100 draws)", criterion6_circuit_rank_caps);
    run_criterion(7, "desk-scale sweep trends (300 pairs, 2000 epochs)",
                  criterion7_sweep_trends);
    run_criterion(8, "d_vo vs d_qk grid trend (>=10 runs/cell)", criterion8_vo_qk_trend);
    run_criterion(9, "triples-vs-rank slope (soft gate)", criterion9_scatter_slope);
    run_criterion(10, "sweep determinism across worker counts", criterion10_determinism);

    if (g_hard_failures == 0) {
        std::printf("acceptance: all hard criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d hard criterion(s) failed\n", g_hard_failures);
    return 1;
}
