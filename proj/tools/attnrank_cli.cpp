// attnrank: workbench for database tensors, attention-layer tensors, rank
// bounds, toy training runs, and the experiment sweeps built on them.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attnrank/attention.hpp"
#include "attnrank/cp_als.hpp"
#include "attnrank/db_tensor.hpp"
#include "attnrank/eval.hpp"
#include "attnrank/experiments.hpp"
#include "attnrank/heatmap.hpp"
#include "attnrank/kvconfig.hpp"
#include "attnrank/rank.hpp"
#include "attnrank/rank_fx.hpp"
#include "attnrank/training.hpp"

using namespace attnrank;

namespace {

Database load_db_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open database file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_triples(buf.str());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << text;
}

struct GenDbArgs {
    int n_k = 5, n_q = 3, n_v = 4, n_triples = 8;
    bool shared_tokens = false;
    uint64_t seed = 0;
    std::string out;
};

void cmd_gen_db(const GenDbArgs& args) {
    const Database db =
        random_database({args.n_k, args.n_q, args.n_v, args.n_triples, args.shared_tokens},
                        args.seed);
    const std::string text = serialize(db);
    if (args.out.empty())
        std::cout << text;
    else
        write_text(args.out, text);
    const DatabaseStats s = stats(db);
    std::fprintf(stderr, "generated %d triples (|K|=%d, |Q|=%d, |V|=%d, rank bound %d)\n",
                 s.n_triples, s.n_k, s.n_q, s.n_v, db_rank_upper_bound(db));
}

struct GenCorpusArgs {
    std::string out;
    std::string config_file;
    std::optional<int> databases, layers, pairs, min_triples, max_triples;
    std::optional<uint64_t> seed;
    bool shared_tokens = false;
};

void cmd_gen_corpus(const GenCorpusArgs& args) {
    CorpusConfig cfg;
    if (!args.config_file.empty()) {
        const KVConfig kv = KVConfig::parse_file(args.config_file);
        cfg.n_databases = int(kv.get_int("n_databases", cfg.n_databases));
        cfg.n_layer_configs = int(kv.get_int("n_layer_configs", cfg.n_layer_configs));
        cfg.n_pairs = int(kv.get_int("n_pairs", cfg.n_pairs));
        cfg.min_triples = int(kv.get_int("min_triples", cfg.min_triples));
        cfg.max_triples = int(kv.get_int("max_triples", cfg.max_triples));
        cfg.d_model_max = int(kv.get_int("d_model_max", cfg.d_model_max));
        cfg.n_heads_max = int(kv.get_int("n_heads_max", cfg.n_heads_max));
        cfg.shared_tokens = kv.get_bool("shared_tokens", cfg.shared_tokens);
        cfg.seed = uint64_t(kv.get_int("seed", int64_t(cfg.seed)));
    }
    if (args.databases) cfg.n_databases = *args.databases;
    if (args.layers) cfg.n_layer_configs = *args.layers;
    if (args.pairs) cfg.n_pairs = *args.pairs;
    if (args.min_triples) cfg.min_triples = *args.min_triples;
    if (args.max_triples) cfg.max_triples = *args.max_triples;
    if (args.seed) cfg.seed = *args.seed;
    if (args.shared_tokens) cfg.shared_tokens = true;

    const Corpus corpus = generate_corpus(cfg);
    save_corpus(corpus, args.out);
    std::printf("corpus written to %s (%d databases, %d layer configs, %d pairs)\n",
                args.out.c_str(), cfg.n_databases, cfg.n_layer_configs, cfg.n_pairs);
}

struct TrainArgs {
    std::string db_file;
    int d_model = 4, n_heads = 2, d_vo = 0, d_qk = 0;
    int epochs = 2000;
    double learning_rate = 1e-2;
    uint64_t seed = 0;
    int record_every = 100;
    bool early_stop = false;
    bool sgd = false;
    bool full_vocab = false;
    std::string model_out, history_out;
    std::vector<double> taus;
};

void cmd_train(const TrainArgs& args) {
    const Database db = load_db_file(args.db_file);
    LayerConfig cfg;
    cfg.n_vocab = int(db.vocab.size());
    cfg.d_model = args.d_model;
    cfg.n_heads = args.n_heads;
    cfg.d_head_vo = args.d_vo > 0 ? args.d_vo : args.d_model;
    cfg.d_head_qk = args.d_qk > 0 ? args.d_qk : args.d_model;
    validate(cfg);

    TrainConfig tc;
    tc.max_epochs = args.epochs;
    tc.learning_rate = args.learning_rate;
    tc.record_every = args.record_every;
    tc.stop_when_tau99_memorized = args.early_stop;
    tc.optimizer = args.sgd ? Optimizer::sgd : Optimizer::adam;
    tc.seed = args.seed;

    const TrainReport report = train(init_weights(cfg, args.seed), db, tc);
    const LayerTensorBundle bundle = build_bundle(report.weights, db);

    std::printf("epochs          %d\n", report.epochs_run);
    std::printf("final loss      %.6g\n", report.final_loss);
    std::printf("acc(argmax)     %.4f\n", argmax_accuracy(bundle.l, db));
    std::vector<double> taus = args.taus;
    if (taus.empty()) taus = {0.5, 0.75, 0.95, 0.99};
    for (double tau : taus)
        std::printf("acc(tau=%.2f)   %.4f\n", tau, tau_accuracy(bundle.l, db, tau));
    if (args.full_vocab)
        for (double tau : taus)
            std::printf("acc_full(%.2f)  %.4f\n", tau, tau_accuracy_full_vocab(report.weights, db, tau));
    const LayerRankBounds bounds = layer_rank_bounds(cfg, db);
    std::printf("db rank bound   %d\n", db_rank_upper_bound(db));
    std::printf("layer lb/ub     %d/%d\n", bounds.lower_estimate, bounds.upper_bound);

    if (!args.model_out.empty()) save_model(report.weights, args.model_out);
    if (!args.history_out.empty()) write_history_csv(report, args.history_out);
}

struct SweepArgs {
    std::string corpus_dir, out;
    std::string journal;
    bool no_journal = false;
    int workers = 1;
    int epochs = 2000;
    double learning_rate = 1e-2;
};

void cmd_sweep(const SweepArgs& args) {
    const Corpus corpus = load_corpus(args.corpus_dir);
    SweepOptions opts;
    opts.workers = args.workers;
    opts.max_epochs = args.epochs;
    opts.learning_rate = args.learning_rate;
    if (!args.no_journal)
        opts.journal_path = args.journal.empty() ? args.out + ".journal" : args.journal;
    const std::vector<ResultRecord> results = run_sweep(corpus, opts);
    write_results_csv(results, args.out);

    int ok = 0;
    for (const ResultRecord& r : results) ok += r.status == "ok" ? 1 : 0;
    std::printf("%zu pairs -> %s (%d ok, %zu failed)\n", results.size(), args.out.c_str(), ok,
                results.size() - ok);
}

struct HeatmapArgs {
    std::string results_file, column = "acc_argmax", out, grid_csv;
};

void cmd_heatmap(const HeatmapArgs& args) {
    const std::vector<ResultRecord> records = read_results_csv(args.results_file);
    const HeatmapGrid grid = bin_heatmap(records, args.column);
    render_heatmap(grid, args.out);
    if (!args.grid_csv.empty()) write_heatmap_csv(grid, args.grid_csv);
    std::printf("heatmap (%s) -> %s [%zu x %zu cells]\n", args.column.c_str(),
                args.out.c_str(), grid.layer_bins.size(), grid.db_bins.size());
}

struct ScatterArgs {
    std::string corpus_dir, out_prefix;
};

void cmd_scatter(const ScatterArgs& args) {
    const Corpus corpus = load_corpus(args.corpus_dir);
    const ScatterTables tables = scatter_tables(corpus);
    write_scatter_tables(tables, args.out_prefix);
    std::printf("triples ~ %.3f x database rank bound (through-origin fit, %zu databases)\n",
                tables.slope, tables.triples_vs_rank.size());
    std::printf("tables -> %s_triples_vs_db_rank.csv, %s_params_vs_layer_rank.csv\n",
                args.out_prefix.c_str(), args.out_prefix.c_str());
}

struct VoQkArgs {
    VoQkGridConfig cfg;
    std::string out;
};

void cmd_vo_qk(const VoQkArgs& args) {
    const std::vector<VoQkCell> cells = vo_qk_grid(args.cfg);
    write_vo_qk_csv(cells, args.out);
    std::printf("       d_qk:");
    for (int qk = 1; qk <= args.cfg.d_qk_max; ++qk) std::printf(" %6d", qk);
    std::printf("\n");
    for (int vo = args.cfg.d_vo_max; vo >= 1; --vo) {
        std::printf("d_vo %2d     ", vo);
        for (const VoQkCell& c : cells)
            if (c.d_vo == vo) std::printf(" %6.3f", c.mean_acc_095);
        std::printf("\n");
    }
}

struct RankDemoArgs {
    int n = 6, r = 3;
    std::vector<double> taus;
    uint64_t seed = 0;
    bool basis = false;
    std::string out;
};

void cmd_rank_demo(const RankDemoArgs& args) {
    std::vector<double> taus = args.taus;
    if (taus.empty()) taus = {0.5, 0.75, 0.95};
    const RankDistortionReport rep = rank_distortion_report(args.n, args.r, taus, args.seed,
                                                            args.basis);
    std::printf("n=%d r=%d seed=%llu  min pairwise gap %.3g\n", rep.n, rep.r,
                static_cast<unsigned long long>(rep.seed), rep.min_pairwise_gap);
    std::printf("rank(M)              = %d\n", rep.rank_m);
    std::printf("rank(argmax(M))      = %d\n", rep.rank_argmax);
    if (rep.scale) {
        std::printf("dominance scale c    = %.4f\n", *rep.scale);
        std::printf("rank(softmax(cM))    = %d\n", rep.rank_softmax_scaled);
        for (const auto& [tau, rank] : rep.rank_thresholded)
            std::printf("rank(softmax_%.2f)   = %d\n", tau, rank);
    } else {
        std::printf("dominance scale c    = numerically unreachable (exponent guard)\n");
    }

    if (!args.out.empty()) {
        std::ostringstream csv;
        csv << "n,r,seed,rank_m,rank_argmax,scale,rank_softmax,tau,rank_thresholded\n";
        char buf[192];
        if (rep.scale) {
            for (const auto& [tau, rank] : rep.rank_thresholded) {
                std::snprintf(buf, sizeof(buf), "%d,%d,%llu,%d,%d,%.4f,%d,%.2f,%d\n", rep.n,
                              rep.r, static_cast<unsigned long long>(rep.seed), rep.rank_m,
                              rep.rank_argmax, *rep.scale, rep.rank_softmax_scaled, tau, rank);
                csv << buf;
            }
        } else {
            std::snprintf(buf, sizeof(buf), "%d,%d,%llu,%d,%d,unreachable,,,\n", rep.n, rep.r,
                          static_cast<unsigned long long>(rep.seed), rep.rank_m,
                          rep.rank_argmax);
            csv << buf;
        }
        write_text(args.out, csv.str());
    }
}

struct BoundsArgs {
    std::string db_file;
    int d_model = 0, n_heads = 1, d_vo = 0, d_qk = 0;
    bool estimate_rank = false;
    uint64_t seed = 0;
};

void cmd_bounds(const BoundsArgs& args) {
    const Database db = load_db_file(args.db_file);
    const DatabaseStats s = stats(db);
    std::printf("triples         %d\n", s.n_triples);
    std::printf("|K| |Q| |V|     %d %d %d\n", s.n_k, s.n_q, s.n_v);
    std::printf("sum|V_k|        %d\n", s.sum_vk);
    std::printf("sum|V_q|        %d\n", s.sum_vq);
    std::printf("db rank bound   %d\n", db_rank_upper_bound(db));
    if (args.estimate_rank) {
        const Tensor3 d = db_tensor(db);
        const auto estimate = tensor_rank_estimate(d, db_rank_upper_bound(db), {});
        if (estimate)
            std::printf("cp-als estimate %d (heuristic)\n", *estimate);
        else
            std::printf("cp-als estimate > %d (no fit below tolerance)\n",
                        db_rank_upper_bound(db));
    }
    if (args.d_model > 0) {
        LayerConfig cfg;
        cfg.n_vocab = int(db.vocab.size());
        cfg.d_model = args.d_model;
        cfg.n_heads = args.n_heads;
        cfg.d_head_vo = args.d_vo > 0 ? args.d_vo : args.d_model;
        cfg.d_head_qk = args.d_qk > 0 ? args.d_qk : args.d_model;
        validate(cfg);
        const LayerRankBounds b = layer_rank_bounds(cfg, db);
        std::printf("layer lower     %d\n", b.lower_estimate);
        std::printf("layer upper     %d\n", b.upper_bound);
        std::printf("condition holds %s\n", memorization_condition(cfg, db) ? "yes" : "no");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tensor-rank workbench for attention-layer factual recall"};
    app.require_subcommand(1);

    GenDbArgs gen_db;
    auto* c_gen_db = app.add_subcommand("gen-db", "generate a random triple database");
    c_gen_db->add_option("--n-k", gen_db.n_k, "subject pool size");
    c_gen_db->add_option("--n-q", gen_db.n_q, "predicate pool size");
    c_gen_db->add_option("--n-v", gen_db.n_v, "object pool size");
    c_gen_db->add_option("--n-triples", gen_db.n_triples, "number of facts");
    c_gen_db->add_flag("--shared-tokens", gen_db.shared_tokens, "draw all pools from one pool");
    c_gen_db->add_option("--seed", gen_db.seed, "random seed");
    c_gen_db->add_option("--out", gen_db.out, "output file (default stdout)");
    c_gen_db->callback([&] { cmd_gen_db(gen_db); });

    GenCorpusArgs gen_corpus;
    auto* c_gen_corpus = app.add_subcommand("gen-corpus", "generate a database/layer corpus");
    c_gen_corpus->add_option("--out", gen_corpus.out, "corpus directory")->required();
    c_gen_corpus->add_option("--config", gen_corpus.config_file, "key = value config file");
    c_gen_corpus->add_option("--databases", gen_corpus.databases, "number of databases");
    c_gen_corpus->add_option("--layers", gen_corpus.layers, "number of layer configs");
    c_gen_corpus->add_option("--pairs", gen_corpus.pairs, "number of (db, layer) pairs");
    c_gen_corpus->add_option("--min-triples", gen_corpus.min_triples, "smallest database");
    c_gen_corpus->add_option("--max-triples", gen_corpus.max_triples, "largest database");
    c_gen_corpus->add_option("--seed", gen_corpus.seed, "master seed");
    c_gen_corpus->add_flag("--shared-tokens", gen_corpus.shared_tokens,
                           "overlap token pools in generated databases");
    c_gen_corpus->callback([&] { cmd_gen_corpus(gen_corpus); });

    TrainArgs train_args;
    auto* c_train = app.add_subcommand("train", "train one layer on one database");
    c_train->add_option("--db", train_args.db_file, "triple file")->required();
    c_train->add_option("--d-model", train_args.d_model, "embedding dimension");
    c_train->add_option("--heads", train_args.n_heads, "attention heads");
    c_train->add_option("--d-vo", train_args.d_vo, "value-output head dim (default d_model)");
    c_train->add_option("--d-qk", train_args.d_qk, "query-key head dim (default d_model)");
    c_train->add_option("--epochs", train_args.epochs, "max epochs");
    c_train->add_option("--lr", train_args.learning_rate, "learning rate");
    c_train->add_option("--seed", train_args.seed, "weight init seed");
    c_train->add_option("--record-every", train_args.record_every, "history stride");
    c_train->add_flag("--early-stop", train_args.early_stop, "stop when tau=0.99 memorized");
    c_train->add_flag("--sgd", train_args.sgd, "plain SGD instead of Adam");
    c_train->add_flag("--full-vocab", train_args.full_vocab,
                      "also report accuracy over the full vocabulary");
    c_train->add_option("--out", train_args.model_out, "model JSON output");
    c_train->add_option("--history", train_args.history_out, "history CSV output");
    c_train->add_option("--tau", train_args.taus, "accuracy threshold (repeatable)");
    c_train->callback([&] { cmd_train(train_args); });

    SweepArgs sweep_args;
    auto* c_sweep = app.add_subcommand("sweep", "train every pair of a corpus");
    c_sweep->add_option("--corpus", sweep_args.corpus_dir, "corpus directory")->required();
    c_sweep->add_option("--out", sweep_args.out, "results CSV")->required();
    c_sweep->add_option("--workers", sweep_args.workers, "worker threads");
    c_sweep->add_option("--epochs", sweep_args.epochs, "max epochs per pair");
    c_sweep->add_option("--lr", sweep_args.learning_rate, "learning rate");
    c_sweep->add_option("--journal", sweep_args.journal,
                        "resume journal (default <out>.journal)");
    c_sweep->add_flag("--no-journal", sweep_args.no_journal, "disable the resume journal");
    c_sweep->callback([&] { cmd_sweep(sweep_args); });

    HeatmapArgs heatmap_args;
    auto* c_heatmap = app.add_subcommand("heatmap", "bin results and render an SVG heatmap");
    c_heatmap->add_option("--results", heatmap_args.results_file, "results CSV")->required();
    c_heatmap->add_option("--column", heatmap_args.column,
                          "acc_argmax|acc_050|acc_075|acc_095|acc_099");
    c_heatmap->add_option("--out", heatmap_args.out, "SVG output")->required();
    c_heatmap->add_option("--grid-csv", heatmap_args.grid_csv, "also write the binned grid");
    c_heatmap->callback([&] { cmd_heatmap(heatmap_args); });

    ScatterArgs scatter_args;
    auto* c_scatter = app.add_subcommand("scatter", "size-vs-rank scatter tables");
    c_scatter->add_option("--corpus", scatter_args.corpus_dir, "corpus directory")->required();
    c_scatter->add_option("--out-prefix", scatter_args.out_prefix, "output prefix")->required();
    c_scatter->callback([&] { cmd_scatter(scatter_args); });

    VoQkArgs voqk_args;
    auto* c_voqk = app.add_subcommand("vo-qk-grid",
                                      "mean tau=0.95 accuracy as head dims vary");
    c_voqk->add_option("--d-model", voqk_args.cfg.d_model, "embedding dimension");
    c_voqk->add_option("--heads", voqk_args.cfg.n_heads, "attention heads");
    c_voqk->add_option("--d-vo-max", voqk_args.cfg.d_vo_max, "value-output range 1..max");
    c_voqk->add_option("--d-qk-max", voqk_args.cfg.d_qk_max, "query-key range 1..max");
    c_voqk->add_option("--seeds", voqk_args.cfg.runs_per_cell, "training runs per cell");
    c_voqk->add_option("--databases", voqk_args.cfg.n_databases, "shared database count");
    c_voqk->add_option("--triples", voqk_args.cfg.db_triples, "triples per database");
    c_voqk->add_option("--epochs", voqk_args.cfg.max_epochs, "max epochs per run");
    c_voqk->add_option("--lr", voqk_args.cfg.learning_rate, "learning rate");
    c_voqk->add_option("--seed", voqk_args.cfg.seed, "master seed");
    c_voqk->add_option("--workers", voqk_args.cfg.workers, "worker threads");
    c_voqk->add_option("--out", voqk_args.out, "grid CSV")->required();
    c_voqk->callback([&] { cmd_vo_qk(voqk_args); });

    RankDemoArgs demo_args;
    auto* c_demo = app.add_subcommand("rank-demo",
                                      "argmax/softmax rank distortion on a Gram matrix");
    c_demo->add_option("--n", demo_args.n, "matrix size");
    c_demo->add_option("--r", demo_args.r, "Gram rank");
    c_demo->add_option("--tau", demo_args.taus, "threshold (repeatable)");
    c_demo->add_option("--seed", demo_args.seed, "point sampling seed");
    c_demo->add_flag("--basis", demo_args.basis, "standard-basis points (n = r)");
    c_demo->add_option("--out", demo_args.out, "CSV output");
    c_demo->callback([&] { cmd_rank_demo(demo_args); });

    BoundsArgs bounds_args;
    auto* c_bounds = app.add_subcommand("bounds", "print rank bounds for a database");
    c_bounds->add_option("--db", bounds_args.db_file, "triple file")->required();
    c_bounds->add_option("--d-model", bounds_args.d_model, "layer embedding dimension");
    c_bounds->add_option("--heads", bounds_args.n_heads, "attention heads");
    c_bounds->add_option("--d-vo", bounds_args.d_vo, "value-output head dim");
    c_bounds->add_option("--d-qk", bounds_args.d_qk, "query-key head dim");
    c_bounds->add_flag("--estimate-rank", bounds_args.estimate_rank,
                       "also run the CP-ALS rank estimate");
    c_bounds->callback([&] { cmd_bounds(bounds_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
