#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "attnrank/attention.hpp"
#include "attnrank/database.hpp"
#include "attnrank/eval.hpp"
#include "attnrank/kvconfig.hpp"
#include "attnrank/results.hpp"
#include "attnrank/rng.hpp"
#include "attnrank/training.hpp"

namespace attnrank {

// Seed-stream tags for counter-based derivation; resuming or changing the
// worker count cannot shift any stream.
namespace seed_stream {
constexpr uint64_t database = 1;
constexpr uint64_t layer = 2;
constexpr uint64_t pairing = 3;
constexpr uint64_t pair_weights = 4;
constexpr uint64_t grid_run = 5;
}  // namespace seed_stream

struct CorpusConfig {
    int n_databases = 50;
    int n_layer_configs = 40;
    int n_pairs = 300;
    int min_triples = 8;
    int max_triples = 200;
    int d_model_max = 6;
    int n_heads_max = 4;
    bool shared_tokens = false;
    uint64_t seed = 0;
};

struct LayerSpecRow {
    int layer_id = 0;
    int n_heads = 0, d_model = 0, d_vo = 0, d_qk = 0;
};

struct PairRow {
    int pair_id = 0;
    int db_id = 0;
    int layer_id = 0;
};

struct Corpus {
    CorpusConfig config;
    std::vector<Database> databases;
    std::vector<LayerSpecRow> layers;
    std::vector<PairRow> pairs;
};

namespace detail {

// Expected number of distinct values among `draws` uniform draws from a
// pool of `pool` objects.
inline double expected_distinct(double draws, int pool) {
    return pool * (1.0 - std::pow(1.0 - 1.0 / pool, draws));
}

// Database shape for a requested triple count. The object pool is sized so
// the predicate-side rank bound lands near triples / target_ratio, keeping
// the triples-to-bound ratio in the calibrated band; the subject load
// (triples per subject) stays above 2 so facts genuinely share tokens and
// memorization cannot collapse into a per-subject embedding lookup.
inline RandomDbConfig sample_db_shape(int n_triples, bool shared_tokens, Rng& rng) {
    RandomDbConfig cfg;
    cfg.n_triples = n_triples;
    cfg.shared_tokens = shared_tokens;
    // Large databases share tokens more densely (more predicates, higher
    // subject load); without that, memorization collapses into a
    // per-subject embedding lookup and rank bounds stop binding.
    const bool large = n_triples >= 100;
    cfg.n_q = std::min(large ? rng.uniform_int(4, 6) : rng.uniform_int(3, 5), n_triples);

    const double target_ratio = rng.uniform(1.55, 1.95);
    const double target_bound = n_triples / target_ratio;
    const double load = double(n_triples) / cfg.n_q;
    int best_nv = 2;
    double best_err = std::numeric_limits<double>::infinity();
    for (int n_v = 2; n_v <= 3 * n_triples; ++n_v) {
        const double err = std::abs(cfg.n_q * expected_distinct(load, n_v) - target_bound);
        if (err < best_err) {
            best_err = err;
            best_nv = n_v;
        }
        if (cfg.n_q * double(n_v) > 2.0 * target_bound && n_v > 4) break;
    }
    cfg.n_v = best_nv;

    const double load_floor = large ? 2.8 : 2.6;
    const double load_cap = large ? 4.5 : 3.6;
    const double max_load = std::min(load_cap, (large ? 0.9 : 0.95) * cfg.n_q);
    const double subject_load = rng.uniform(std::min(load_floor, max_load), max_load);
    cfg.n_k = std::max(int(std::ceil(n_triples / subject_load)),
                       (n_triples + cfg.n_q - 1) / cfg.n_q);
    return cfg;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace detail

// Deterministic corpus. Database sizes are stratified into a small mode
// (near-capacity regime) and a large mode (over-capacity regime) with a
// fixed small/large split; layer configs are a d_model-stratified sample
// of the full enumeration of valid tuples; pairs are sampled uniformly
// without replacement (skipping pairings whose d_model exceeds the
// database vocabulary). Stratification keeps the corpus composition
// stable across master seeds at desk scale.
inline Corpus generate_corpus(const CorpusConfig& cfg) {
    if (cfg.n_databases < 1 || cfg.n_layer_configs < 1 || cfg.n_pairs < 1)
        throw std::invalid_argument("generate_corpus: counts must be positive");
    if (int64_t(cfg.n_pairs) > int64_t(cfg.n_databases) * cfg.n_layer_configs)
        throw std::invalid_argument("generate_corpus: more pairs than (db, layer) combinations");
    if (cfg.min_triples < 1 || cfg.max_triples < cfg.min_triples)
        throw std::invalid_argument("generate_corpus: bad triple range");

    Corpus corpus;
    corpus.config = cfg;
    // Ranges too narrow for both modes fall back to one log-uniform draw.
    const int small_hi = std::min(40, cfg.max_triples);
    const int large_lo = std::max(165, cfg.min_triples);
    const bool bimodal = cfg.min_triples <= small_hi && large_lo <= cfg.max_triples &&
                         small_hi < large_lo;
    const int n_large = bimodal ? (cfg.n_databases * 14) / 25 : 0;
    for (int i = 0; i < cfg.n_databases; ++i) {
        Rng rng(derive_seed(cfg.seed, seed_stream::database, uint64_t(i)));
        int n_triples = 0;
        if (bimodal && i < n_large) {
            n_triples = rng.uniform_int(large_lo, cfg.max_triples);
        } else {
            const double log_lo = std::log(double(cfg.min_triples));
            const double log_hi = std::log(double(bimodal ? small_hi : cfg.max_triples));
            n_triples = int(std::lround(std::exp(rng.uniform(log_lo, log_hi))));
        }
        n_triples = std::clamp(n_triples, cfg.min_triples, cfg.max_triples);
        const RandomDbConfig shape = detail::sample_db_shape(n_triples, cfg.shared_tokens, rng);
        corpus.databases.push_back(random_database(shape, rng.next_u64()));
    }
    // The layer pool is the full enumeration of valid configurations
    // (n_heads_max * sum_d d^2 tuples; 364 at the reference ranges). A
    // partial sample is apportioned across d_model buckets by size
    // (largest remainder), then drawn uniformly within each bucket.
    std::vector<std::vector<LayerSpecRow>> buckets(cfg.d_model_max);
    int pool_size = 0;
    for (int n_heads = 1; n_heads <= cfg.n_heads_max; ++n_heads)
        for (int d_model = 1; d_model <= cfg.d_model_max; ++d_model)
            for (int d_vo = 1; d_vo <= d_model; ++d_vo)
                for (int d_qk = 1; d_qk <= d_model; ++d_qk) {
                    buckets[d_model - 1].push_back(LayerSpecRow{0, n_heads, d_model, d_vo, d_qk});
                    ++pool_size;
                }
    if (cfg.n_layer_configs > pool_size)
        throw std::invalid_argument("generate_corpus: n_layer_configs exceeds the " +
                                    std::to_string(pool_size) +
                                    " valid configurations in range");
    std::vector<int> quota(buckets.size());
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        const double exact = double(cfg.n_layer_configs) * buckets[b].size() / pool_size;
        quota[b] = int(exact);
        assigned += quota[b];
        remainders.push_back({exact - quota[b], int(b)});
    }
    std::sort(remainders.begin(), remainders.end(),
              [](const auto& x, const auto& y) { return x.first > y.first; });
    for (int extra = 0; extra < cfg.n_layer_configs - assigned; ++extra)
        quota[remainders[extra % remainders.size()].second] += 1;

    Rng layer_rng(derive_seed(cfg.seed, seed_stream::layer, 0));
    int layer_id = 0;
    std::vector<LayerSpecRow> leftovers;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        std::vector<LayerSpecRow>& bucket = buckets[b];
        const int take = std::min(quota[b], int(bucket.size()));
        for (int i = 0; i < take; ++i) {
            const int j = i + layer_rng.uniform_int(0, int(bucket.size()) - 1 - i);
            std::swap(bucket[i], bucket[j]);
            bucket[i].layer_id = layer_id++;
            corpus.layers.push_back(bucket[i]);
        }
        leftovers.insert(leftovers.end(), bucket.begin() + take, bucket.end());
    }
    // Rounding shortfall (tiny configs only): top up from the rest.
    while (int(corpus.layers.size()) < cfg.n_layer_configs) {
        const int j = layer_rng.uniform_int(0, int(leftovers.size()) - 1);
        std::swap(leftovers[j], leftovers.back());
        leftovers.back().layer_id = layer_id++;
        corpus.layers.push_back(leftovers.back());
        leftovers.pop_back();
    }

    Rng pair_rng(derive_seed(cfg.seed, seed_stream::pairing, 0));
    std::vector<bool> used(std::size_t(cfg.n_databases) * cfg.n_layer_configs, false);
    int made = 0;
    int64_t attempts = 0;
    const int64_t attempt_cap = 200 + 50 * int64_t(used.size());
    while (made < cfg.n_pairs) {
        if (++attempts > attempt_cap)
            throw std::runtime_error(
                "generate_corpus: not enough valid (db, layer) pairings for n_pairs");
        const int db_id = pair_rng.uniform_int(0, cfg.n_databases - 1);
        const int layer_id = pair_rng.uniform_int(0, cfg.n_layer_configs - 1);
        const std::size_t slot = std::size_t(db_id) * cfg.n_layer_configs + layer_id;
        if (used[slot]) continue;
        if (corpus.layers[layer_id].d_model > int(corpus.databases[db_id].vocab.size()))
            continue;  // layer cannot embed this vocabulary
        used[slot] = true;
        corpus.pairs.push_back(PairRow{made, db_id, layer_id});
        ++made;
    }
    return corpus;
}

inline uint64_t corpus_hash(const Corpus& corpus) {
    uint64_t h = 1469598103934665603ULL;
    for (const Database& db : corpus.databases) h = detail::fnv1a(serialize(db), h);
    for (const LayerSpecRow& l : corpus.layers) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%d\n", l.layer_id, l.n_heads, l.d_model,
                      l.d_vo, l.d_qk);
        h = detail::fnv1a(buf, h);
    }
    for (const PairRow& p : corpus.pairs) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%d,%d,%d\n", p.pair_id, p.db_id, p.layer_id);
        h = detail::fnv1a(buf, h);
    }
    return h;
}

inline void save_corpus(const Corpus& corpus, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "databases");

    for (std::size_t i = 0; i < corpus.databases.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "db_%04zu.triples", i);
        std::ofstream out(fs::path(dir) / "databases" / name, std::ios::binary);
        if (!out) throw std::runtime_error("save_corpus: cannot write database file");
        out << serialize(corpus.databases[i]);
    }
    {
        std::ofstream out(fs::path(dir) / "layers.csv", std::ios::binary);
        out << "layer_id,n_heads,d_model,d_vo,d_qk\n";
        for (const LayerSpecRow& l : corpus.layers)
            out << l.layer_id << ',' << l.n_heads << ',' << l.d_model << ',' << l.d_vo << ','
                << l.d_qk << '\n';
    }
    {
        std::ofstream out(fs::path(dir) / "pairs.csv", std::ios::binary);
        out << "pair_id,db_id,layer_id\n";
        for (const PairRow& p : corpus.pairs)
            out << p.pair_id << ',' << p.db_id << ',' << p.layer_id << '\n';
    }
    {
        const CorpusConfig& cfg = corpus.config;
        char hash_hex[32];
        std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                      static_cast<unsigned long long>(corpus_hash(corpus)));
        std::ofstream out(fs::path(dir) / "manifest.txt", std::ios::binary);
        out << "format = attnrank-corpus-v1\n"
            << "seed = " << cfg.seed << '\n'
            << "n_databases = " << cfg.n_databases << '\n'
            << "n_layer_configs = " << cfg.n_layer_configs << '\n'
            << "n_pairs = " << cfg.n_pairs << '\n'
            << "min_triples = " << cfg.min_triples << '\n'
            << "max_triples = " << cfg.max_triples << '\n'
            << "d_model_max = " << cfg.d_model_max << '\n'
            << "n_heads_max = " << cfg.n_heads_max << '\n'
            << "shared_tokens = " << (cfg.shared_tokens ? "true" : "false") << '\n'
            << "db_generator = kq-pairs-uniform-no-replacement;objects-iid-uniform;"
               "sizes-bimodal-56pct-large-165-200-else-log-uniform;"
               "bound-ratio-target-1.55-1.95;subject-load-2.6-3.6-small-2.8-4.5-large\n"
            << "layer_pool = full-enumeration-stratified-by-d_model\n"
            << "argmax_rule = unique-maximum-ties-score-incorrect\n"
            << "content_hash = " << hash_hex << '\n';
    }
}

inline Corpus load_corpus(const std::string& dir) {
    namespace fs = std::filesystem;
    const KVConfig manifest = KVConfig::parse_file((fs::path(dir) / "manifest.txt").string());
    if (manifest.get_string("format") != "attnrank-corpus-v1")
        throw std::runtime_error("load_corpus: unrecognized corpus format");

    Corpus corpus;
    corpus.config.seed = uint64_t(manifest.get_int("seed", 0));
    corpus.config.n_databases = int(manifest.get_int("n_databases", 0));
    corpus.config.n_layer_configs = int(manifest.get_int("n_layer_configs", 0));
    corpus.config.n_pairs = int(manifest.get_int("n_pairs", 0));
    corpus.config.min_triples = int(manifest.get_int("min_triples", 1));
    corpus.config.max_triples = int(manifest.get_int("max_triples", 1));
    corpus.config.d_model_max = int(manifest.get_int("d_model_max", 6));
    corpus.config.n_heads_max = int(manifest.get_int("n_heads_max", 4));
    corpus.config.shared_tokens = manifest.get_bool("shared_tokens", false);

    for (int i = 0; i < corpus.config.n_databases; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "db_%04d.triples", i);
        std::ifstream in(fs::path(dir) / "databases" / name);
        if (!in) throw std::runtime_error("load_corpus: missing database file");
        std::ostringstream buf;
        buf << in.rdbuf();
        corpus.databases.push_back(parse_triples(buf.str()));
    }
    {
        std::ifstream in(fs::path(dir) / "layers.csv");
        if (!in) throw std::runtime_error("load_corpus: missing layers.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            LayerSpecRow l;
            if (std::sscanf(line.c_str(), "%d,%d,%d,%d,%d", &l.layer_id, &l.n_heads, &l.d_model,
                            &l.d_vo, &l.d_qk) != 5)
                throw std::runtime_error("load_corpus: bad layers.csv row");
            corpus.layers.push_back(l);
        }
    }
    {
        std::ifstream in(fs::path(dir) / "pairs.csv");
        if (!in) throw std::runtime_error("load_corpus: missing pairs.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            PairRow p;
            if (std::sscanf(line.c_str(), "%d,%d,%d", &p.pair_id, &p.db_id, &p.layer_id) != 3)
                throw std::runtime_error("load_corpus: bad pairs.csv row");
            corpus.pairs.push_back(p);
        }
    }

    char hash_hex[32];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(corpus_hash(corpus)));
    const std::string recorded = manifest.get_string("content_hash");
    if (!recorded.empty() && recorded != hash_hex)
        throw std::runtime_error("load_corpus: content hash mismatch (corpus modified?)");
    return corpus;
}

struct SweepOptions {
    int workers = 1;
    int max_epochs = 2000;
    double learning_rate = 1e-2;
    std::string journal_path;  // empty: no resume journal
};

namespace detail {

inline ResultRecord evaluate_pair(const Corpus& corpus, int pair_id,
                                  const SweepOptions& opts) {
    const PairRow& pair = corpus.pairs[pair_id];
    const Database& db = corpus.databases[pair.db_id];
    const LayerSpecRow& spec = corpus.layers[pair.layer_id];
    const LayerConfig cfg{int(db.vocab.size()), spec.n_heads, spec.d_model, spec.d_qk,
                          spec.d_vo};

    ResultRecord rec;
    rec.pair_id = pair.pair_id;
    rec.db_id = pair.db_id;
    rec.n_triples = db.n_triples();
    rec.db_rank_ub = db_rank_upper_bound(db);
    rec.n_heads = spec.n_heads;
    rec.d_model = spec.d_model;
    rec.d_vo = spec.d_vo;
    rec.d_qk = spec.d_qk;
    rec.n_params = non_embedding_params(cfg);
    const LayerRankBounds bounds = layer_rank_bounds(cfg, db);
    rec.layer_lb = bounds.lower_estimate;
    rec.layer_ub = bounds.upper_bound;
    rec.seed = derive_seed(corpus.config.seed, seed_stream::pair_weights, uint64_t(pair_id));

    TrainConfig tc;
    tc.max_epochs = opts.max_epochs;
    tc.learning_rate = opts.learning_rate;
    tc.record_every = 0;
    tc.seed = rec.seed;
    try {
        const TrainReport report = train(init_weights(cfg, rec.seed), db, tc);
        const LayerTensorBundle bundle = build_bundle(report.weights, db);
        rec.loss = report.final_loss;
        rec.acc_argmax = argmax_accuracy(bundle.l, db);
        rec.acc_050 = tau_accuracy(bundle.l, db, 0.50);
        rec.acc_075 = tau_accuracy(bundle.l, db, 0.75);
        rec.acc_095 = tau_accuracy(bundle.l, db, 0.95);
        rec.acc_099 = tau_accuracy(bundle.l, db, 0.99);
        rec.epochs = report.epochs_run;
        rec.status = "ok";
    } catch (const TrainingDivergence& diverged) {
        rec.loss = std::numeric_limits<double>::quiet_NaN();
        rec.acc_argmax = rec.acc_050 = rec.acc_075 = rec.acc_095 = rec.acc_099 =
            std::numeric_limits<double>::quiet_NaN();
        rec.epochs = diverged.epoch;
        rec.status = "diverged";
    }
    return rec;
}

}  // namespace detail

// Train every pair of the corpus. Pairs run independently (and possibly
// concurrently); output order is by pair index regardless of completion
// order, so the results are invariant to the worker count. When a journal
// path is set, completed pairs are appended there and skipped on rerun.
inline std::vector<ResultRecord> run_sweep(const Corpus& corpus, const SweepOptions& opts) {
    const int n_pairs = int(corpus.pairs.size());
    std::vector<std::optional<ResultRecord>> slots(n_pairs);

    if (!opts.journal_path.empty() && std::filesystem::exists(opts.journal_path)) {
        std::ifstream in(opts.journal_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const ResultRecord rec = parse_result_row(line);
            if (rec.pair_id >= 0 && rec.pair_id < n_pairs) slots[rec.pair_id] = rec;
        }
    }

    std::ofstream journal;
    if (!opts.journal_path.empty()) {
        journal.open(opts.journal_path, std::ios::binary | std::ios::app);
        if (!journal) throw std::runtime_error("run_sweep: cannot open journal");
    }

    std::atomic<int> next{0};
    std::mutex sink_mutex;
    std::vector<std::string> errors;
    const auto worker = [&] {
        while (true) {
            const int pair_id = next.fetch_add(1);
            if (pair_id >= n_pairs) return;
            if (slots[pair_id].has_value()) continue;  // journaled
            try {
                ResultRecord rec = detail::evaluate_pair(corpus, pair_id, opts);
                std::lock_guard<std::mutex> lock(sink_mutex);
                if (journal.is_open()) journal << format_result_row(rec) << '\n' << std::flush;
                slots[pair_id] = std::move(rec);
            } catch (const std::exception& err) {
                std::lock_guard<std::mutex> lock(sink_mutex);
                errors.push_back("pair " + std::to_string(pair_id) + ": " + err.what());
                return;
            }
        }
    };

    const int n_workers = std::max(1, opts.workers);
    std::vector<std::thread> threads;
    for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
    if (!errors.empty()) throw std::runtime_error("run_sweep: " + errors.front());

    std::vector<ResultRecord> results;
    results.reserve(n_pairs);
    for (auto& slot : slots) {
        if (!slot.has_value()) throw std::runtime_error("run_sweep: missing pair result");
        results.push_back(std::move(*slot));
    }
    return results;
}

// --- scatter tables ----------------------------------------------------

struct ScatterTables {
    std::vector<std::array<int, 3>> triples_vs_rank;  // db_id, n_triples, db_rank_ub
    std::vector<std::array<int, 3>> params_vs_rank;   // layer_id, n_params, lower_estimate
    double slope = 0.0;  // least-squares through origin: triples ~ slope * bound
};

inline ScatterTables scatter_tables(const Corpus& corpus) {
    ScatterTables t;
    double xy = 0.0, xx = 0.0;
    for (std::size_t i = 0; i < corpus.databases.size(); ++i) {
        const Database& db = corpus.databases[i];
        const int bound = db_rank_upper_bound(db);
        t.triples_vs_rank.push_back({int(i), db.n_triples(), bound});
        xy += double(bound) * db.n_triples();
        xx += double(bound) * bound;
    }
    t.slope = xx > 0.0 ? xy / xx : 0.0;
    for (const LayerSpecRow& l : corpus.layers) {
        const int n_params = 2 * l.n_heads * l.d_model * (l.d_vo + l.d_qk);
        const int lower = l.d_model + l.n_heads * l.d_vo;
        t.params_vs_rank.push_back({l.layer_id, n_params, lower});
    }
    return t;
}

inline void write_scatter_tables(const ScatterTables& tables, const std::string& out_prefix) {
    {
        std::ofstream out(out_prefix + "_triples_vs_db_rank.csv", std::ios::binary);
        if (!out) throw std::runtime_error("write_scatter_tables: cannot open output");
        out << "db_id,n_triples,db_rank_ub\n";
        for (const auto& row : tables.triples_vs_rank)
            out << row[0] << ',' << row[1] << ',' << row[2] << '\n';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "# slope_through_origin = %.4f\n", tables.slope);
        out << buf;
    }
    {
        std::ofstream out(out_prefix + "_params_vs_layer_rank.csv", std::ios::binary);
        if (!out) throw std::runtime_error("write_scatter_tables: cannot open output");
        out << "layer_id,n_params,layer_lower_estimate\n";
        for (const auto& row : tables.params_vs_rank)
            out << row[0] << ',' << row[1] << ',' << row[2] << '\n';
    }
}

// --- d_head_vo vs d_head_qk grid ----------------------------------------

struct VoQkGridConfig {
    int d_model = 4;
    int n_heads = 2;
    int d_vo_max = 4;
    int d_qk_max = 4;
    int runs_per_cell = 10;
    int n_databases = 5;   // shared across all cells
    int db_triples = 36;   // sized so the rank bound is ~2x the mid lower estimate
    int max_epochs = 2000;
    double learning_rate = 1e-2;
    uint64_t seed = 0;
    int workers = 1;
};

struct VoQkCell {
    int d_vo = 0, d_qk = 0;
    double mean_acc_095 = 0.0;
    int runs = 0;
};

inline std::vector<VoQkCell> vo_qk_grid(const VoQkGridConfig& cfg) {
    if (cfg.runs_per_cell < 1 || cfg.n_databases < 1)
        throw std::invalid_argument("vo_qk_grid: counts must be positive");
    if (cfg.d_vo_max > cfg.d_model || cfg.d_qk_max > cfg.d_model)
        throw std::invalid_argument("vo_qk_grid: head dims exceed d_model");

    // Shared database set.
    std::vector<Database> dbs;
    for (int i = 0; i < cfg.n_databases; ++i) {
        Rng rng(derive_seed(cfg.seed, seed_stream::database, 0x900 + uint64_t(i)));
        RandomDbConfig shape = detail::sample_db_shape(cfg.db_triples, false, rng);
        dbs.push_back(random_database(shape, rng.next_u64()));
    }

    struct Task {
        int cell = 0, run = 0;
    };
    std::vector<Task> tasks;
    const int n_cells = cfg.d_vo_max * cfg.d_qk_max;
    for (int cell = 0; cell < n_cells; ++cell)
        for (int run = 0; run < cfg.runs_per_cell; ++run) tasks.push_back({cell, run});

    // Per-task slots keep the reduction order fixed, so the cell means are
    // bit-identical for any worker count.
    std::vector<double> task_acc(tasks.size(), std::numeric_limits<double>::quiet_NaN());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::vector<std::string> errors;

    const auto worker = [&] {
        while (true) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= tasks.size()) return;
            const Task task = tasks[idx];
            const int d_vo = task.cell / cfg.d_qk_max + 1;
            const int d_qk = task.cell % cfg.d_qk_max + 1;
            const Database& db = dbs[task.run % cfg.n_databases];
            const LayerConfig layer_cfg{int(db.vocab.size()), cfg.n_heads, cfg.d_model, d_qk,
                                        d_vo};
            TrainConfig tc;
            tc.max_epochs = cfg.max_epochs;
            tc.learning_rate = cfg.learning_rate;
            tc.record_every = 0;
            tc.seed = derive_seed(cfg.seed, seed_stream::grid_run,
                                  uint64_t(task.cell) * 1000003ULL + task.run);
            try {
                const TrainReport report = train(init_weights(layer_cfg, tc.seed), db, tc);
                const LayerTensorBundle bundle = build_bundle(report.weights, db);
                task_acc[idx] = tau_accuracy(bundle.l, db, 0.95);
            } catch (const TrainingDivergence&) {
                // diverged run stays NaN and is dropped from its cell mean
            } catch (const std::exception& err) {
                std::lock_guard<std::mutex> lock(error_mutex);
                errors.push_back(err.what());
                return;
            }
        }
    };

    std::vector<std::thread> threads;
    for (int i = 0; i < std::max(1, cfg.workers); ++i) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
    if (!errors.empty()) throw std::runtime_error("vo_qk_grid: " + errors.front());

    std::vector<double> sums(n_cells, 0.0);
    std::vector<int> counts(n_cells, 0);
    for (std::size_t idx = 0; idx < tasks.size(); ++idx) {
        if (std::isnan(task_acc[idx])) continue;
        sums[tasks[idx].cell] += task_acc[idx];
        counts[tasks[idx].cell] += 1;
    }
    std::vector<VoQkCell> cells;
    for (int cell = 0; cell < n_cells; ++cell) {
        VoQkCell out;
        out.d_vo = cell / cfg.d_qk_max + 1;
        out.d_qk = cell % cfg.d_qk_max + 1;
        out.runs = counts[cell];
        out.mean_acc_095 = counts[cell] > 0 ? sums[cell] / counts[cell] : 0.0;
        cells.push_back(out);
    }
    return cells;
}

inline void write_vo_qk_csv(const std::vector<VoQkCell>& cells, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_vo_qk_csv: cannot open " + path);
    out << "d_vo,d_qk,mean_acc_095,runs\n";
    char buf[96];
    for (const VoQkCell& c : cells) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%d\n", c.d_vo, c.d_qk, c.mean_acc_095,
                      c.runs);
        out << buf;
    }
}

}  // namespace attnrank
