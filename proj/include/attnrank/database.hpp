#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "attnrank/rng.hpp"

namespace attnrank {

struct Token {
    int id = 0;
    std::string text;
};

// Vocabulary ids of (subject, predicate, object).
struct Triple {
    int k = 0, q = 0, v = 0;
};

// A database of subject-predicate-object facts: a partial function from
// (subject, predicate) pairs to objects, stored as a deduplicated triple
// list. Immutable after construction; safe to share across threads.
//
// Axis orders (subjects/predicates/objects) follow first appearance in the
// triple list, so tensor indexing is deterministic.
struct Database {
    std::vector<Token> vocab;  // ids are dense 0..|vocab|-1
    std::vector<Triple> triples;

    std::vector<int> subjects;    // K: vocab ids in first-appearance order
    std::vector<int> predicates;  // Q
    std::vector<int> objects;     // V

    // vocab id -> axis position, or -1
    std::vector<int> subject_pos, predicate_pos, object_pos;

    // Derived per-token sets, as vocab ids in first-appearance order.
    std::vector<std::vector<int>> subject_values;      // V_k, indexed by subject axis
    std::vector<std::vector<int>> predicate_values;    // V_q, indexed by predicate axis
    std::vector<std::vector<int>> subject_predicates;  // Q_k
    std::vector<std::vector<int>> predicate_subjects;  // K_q

    std::map<std::pair<int, int>, int> fact;  // (k, q) -> v

    int n_triples() const { return int(triples.size()); }
    int n_subjects() const { return int(subjects.size()); }
    int n_predicates() const { return int(predicates.size()); }
    int n_objects() const { return int(objects.size()); }

    const std::string& text_of(int vocab_id) const { return vocab.at(vocab_id).text; }

    std::optional<int> lookup(int k_id, int q_id) const {
        const auto it = fact.find({k_id, q_id});
        if (it == fact.end()) return std::nullopt;
        return it->second;
    }

    // Axis position of a token by text; -1 if absent from that axis.
    int subject_index(const std::string& text) const { return axis_index(subjects, text); }
    int predicate_index(const std::string& text) const { return axis_index(predicates, text); }
    int object_index(const std::string& text) const { return axis_index(objects, text); }

private:
    int axis_index(const std::vector<int>& axis, const std::string& text) const {
        for (std::size_t i = 0; i < axis.size(); ++i)
            if (vocab[axis[i]].text == text) return int(i);
        return -1;
    }
};

struct DatabaseStats {
    int n_triples = 0;
    int n_k = 0, n_q = 0, n_v = 0;
    int sum_vk = 0;  // sum over subjects of |V_k|
    int sum_vq = 0;  // sum over predicates of |V_q|
};

namespace detail {

inline int intern_token(std::vector<Token>& vocab, std::map<std::string, int>& index,
                        const std::string& text) {
    const auto it = index.find(text);
    if (it != index.end()) return it->second;
    const int id = int(vocab.size());
    vocab.push_back(Token{id, text});
    index.emplace(text, id);
    return id;
}

inline void push_unique(std::vector<int>& list, int id) {
    if (std::find(list.begin(), list.end(), id) == list.end()) list.push_back(id);
}

}  // namespace detail

// Build a Database from (subject, predicate, object) text rows, enforcing
// functionality: no two rows may share a (subject, predicate) pair.
inline Database make_database(const std::vector<std::array<std::string, 3>>& rows) {
    Database db;
    std::map<std::string, int> index;
    for (const auto& row : rows) {
        for (const auto& field : row) {
            if (field.empty()) throw std::invalid_argument("make_database: empty token");
            for (char ch : field)
                if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r')
                    throw std::invalid_argument("make_database: token contains whitespace");
        }
        Triple t;
        t.k = detail::intern_token(db.vocab, index, row[0]);
        t.q = detail::intern_token(db.vocab, index, row[1]);
        t.v = detail::intern_token(db.vocab, index, row[2]);

        const auto existing = db.fact.find({t.k, t.q});
        if (existing != db.fact.end()) {
            if (existing->second == t.v)
                throw std::invalid_argument("make_database: duplicate triple '" + row[0] + " " +
                                            row[1] + " " + row[2] + "'");
            throw std::invalid_argument("make_database: conflicting object for (" + row[0] +
                                        ", " + row[1] + ")");
        }
        db.fact.emplace(std::make_pair(t.k, t.q), t.v);
        db.triples.push_back(t);

        detail::push_unique(db.subjects, t.k);
        detail::push_unique(db.predicates, t.q);
        detail::push_unique(db.objects, t.v);
    }
    if (db.triples.empty()) throw std::invalid_argument("make_database: empty database");

    const int n_vocab = int(db.vocab.size());
    db.subject_pos.assign(n_vocab, -1);
    db.predicate_pos.assign(n_vocab, -1);
    db.object_pos.assign(n_vocab, -1);
    for (std::size_t i = 0; i < db.subjects.size(); ++i) db.subject_pos[db.subjects[i]] = int(i);
    for (std::size_t i = 0; i < db.predicates.size(); ++i)
        db.predicate_pos[db.predicates[i]] = int(i);
    for (std::size_t i = 0; i < db.objects.size(); ++i) db.object_pos[db.objects[i]] = int(i);

    db.subject_values.resize(db.subjects.size());
    db.subject_predicates.resize(db.subjects.size());
    db.predicate_values.resize(db.predicates.size());
    db.predicate_subjects.resize(db.predicates.size());
    for (const Triple& t : db.triples) {
        const int ki = db.subject_pos[t.k];
        const int qi = db.predicate_pos[t.q];
        detail::push_unique(db.subject_values[ki], t.v);
        detail::push_unique(db.subject_predicates[ki], t.q);
        detail::push_unique(db.predicate_values[qi], t.v);
        detail::push_unique(db.predicate_subjects[qi], t.k);
    }
    return db;
}

// Parse the triple text format: one triple per line, three whitespace
// separated tokens; blank lines and lines starting with '#' are skipped.
inline Database parse_triples(const std::string& text) {
    std::vector<std::array<std::string, 3>> rows;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::vector<std::string> parts;
        std::string part;
        while (fields >> part) parts.push_back(part);
        if (parts.empty()) continue;
        if (parts[0][0] == '#') continue;
        if (parts.size() != 3)
            throw std::invalid_argument("parse_triples: line " + std::to_string(line_no) +
                                        ": expected 3 fields, got " +
                                        std::to_string(parts.size()));
        rows.push_back({parts[0], parts[1], parts[2]});
    }
    if (rows.empty()) throw std::invalid_argument("parse_triples: no triples in input");
    return make_database(rows);
}

inline std::string serialize(const Database& db) {
    std::string out;
    for (const Triple& t : db.triples) {
        out += db.text_of(t.k);
        out += ' ';
        out += db.text_of(t.q);
        out += ' ';
        out += db.text_of(t.v);
        out += '\n';
    }
    return out;
}

inline DatabaseStats stats(const Database& db) {
    DatabaseStats s;
    s.n_triples = db.n_triples();
    s.n_k = db.n_subjects();
    s.n_q = db.n_predicates();
    s.n_v = db.n_objects();
    for (const auto& values : db.subject_values) s.sum_vk += int(values.size());
    for (const auto& values : db.predicate_values) s.sum_vq += int(values.size());
    return s;
}

// Upper bound on the rank of the database tensor:
// min(sum_k |V_k|, sum_q |V_q|), itself at most |D|.
inline int db_rank_upper_bound(const Database& db) {
    const DatabaseStats s = stats(db);
    return std::min(s.sum_vk, s.sum_vq);
}

struct RandomDbConfig {
    int n_k = 0, n_q = 0, n_v = 0;
    int n_triples = 0;
    bool shared_tokens = false;  // overlap the subject/predicate/object pools
};

// Deterministic random database: (k, q) pairs sampled uniformly without
// replacement, objects i.i.d. uniform over the object pool.
inline Database random_database(const RandomDbConfig& cfg, uint64_t seed) {
    if (cfg.n_k < 1 || cfg.n_q < 1 || cfg.n_v < 1 || cfg.n_triples < 1)
        throw std::invalid_argument("random_database: all sizes must be positive");
    const int64_t cells = int64_t(cfg.n_k) * cfg.n_q;
    if (cfg.n_triples > cells)
        throw std::invalid_argument("random_database: n_triples exceeds n_k * n_q");

    const auto name = [&](const char* prefix, int i) {
        return cfg.shared_tokens ? "t" + std::to_string(i)
                                 : std::string(prefix) + std::to_string(i);
    };

    Rng rng(seed);
    // Partial Fisher-Yates over the (k, q) grid.
    std::vector<int64_t> grid(cells);
    for (int64_t i = 0; i < cells; ++i) grid[i] = i;
    std::vector<std::array<std::string, 3>> rows;
    rows.reserve(cfg.n_triples);
    for (int i = 0; i < cfg.n_triples; ++i) {
        const int j = i + rng.uniform_int(0, int(cells - 1 - i));
        std::swap(grid[i], grid[j]);
        const int k = int(grid[i] / cfg.n_q);
        const int q = int(grid[i] % cfg.n_q);
        const int v = rng.uniform_int(0, cfg.n_v - 1);
        rows.push_back({name("k", k), name("q", q), name("v", v)});
    }
    return make_database(rows);
}

}  // namespace attnrank
