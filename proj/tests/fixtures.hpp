#pragma once

// Shared test fixtures: the small country/currency database used across
// the suites, its born_in/lives_in sub-database, the five-facts-one-object
// database, and hand-built weights whose circuits match the worked
// attention example (all-ones QK circuit, the 5x2 VO block, zero EU).

#include <string>

#include "attnrank/attention.hpp"
#include "attnrank/database.hpp"

namespace fixtures {

// 8 facts, 5 subjects, 3 predicates, 4 objects. m and s appear as both
// subjects and objects.
inline std::string countries_text() {
    return "a be s\n"
           "b be s\n"
           "c be m\n"
           "a li m\n"
           "b li s\n"
           "c li m\n"
           "m cu r\n"
           "s cu d\n";
}

inline attnrank::Database countries_db() { return attnrank::parse_triples(countries_text()); }

// The born_in / lives_in facts only: 3 subjects, 2 predicates, 2 objects.
inline attnrank::Database countries_sub_db() {
    return attnrank::parse_triples(
        "a be s\n"
        "b be s\n"
        "c be m\n"
        "a li m\n"
        "b li s\n"
        "c li m\n");
}

// Five subject-predicate pairs all mapping to one object: the database
// tensor has a single v-slice equal to the 5x5 identity.
inline attnrank::Database single_object_db() {
    return attnrank::parse_triples(
        "a f v\n"
        "b g v\n"
        "c h v\n"
        "d i v\n"
        "e j v\n");
}

// Circuits of the worked example, aligned to countries_sub_db(): W_EU = 0,
// one head with an all-ones QK circuit and the VO circuit holding
//   rows (a, b, c, be, li) x cols (m, s) = [[0,0],[0,4],[4,0],[0,2],[2,0]].
inline attnrank::CircuitSet worked_example_circuits(const attnrank::Database& db) {
    const int n_vocab = int(db.vocab.size());
    attnrank::CircuitSet cs;
    cs.w_eu = attnrank::Matrix(n_vocab, n_vocab);
    cs.w_qk.push_back(attnrank::Matrix(n_vocab, n_vocab, 1.0));
    attnrank::Matrix vo(n_vocab, n_vocab);
    const auto id = [&](const char* text) {
        for (const attnrank::Token& tok : db.vocab)
            if (tok.text == text) return tok.id;
        throw std::logic_error("fixture token missing");
    };
    const int m = id("m"), s = id("s");
    vo(id("b"), s) = 4.0;
    vo(id("c"), m) = 4.0;
    vo(id("be"), s) = 2.0;
    vo(id("li"), m) = 2.0;
    cs.w_vo.push_back(vo);
    return cs;
}

// Weights realizing those circuits exactly: the embedding writes into the
// first two model dimensions, the unembedding reads from the last two, so
// W_EU vanishes while W_VO = (embedding block) x (unembedding block).
inline attnrank::LayerWeights worked_example_weights(const attnrank::Database& db) {
    const int n_vocab = int(db.vocab.size());
    attnrank::LayerConfig cfg{n_vocab, 1, 4, 1, 2};
    attnrank::LayerWeights w;
    w.config = cfg;
    w.w_e = attnrank::Matrix(n_vocab, 4);
    w.w_u = attnrank::Matrix(4, n_vocab);

    const auto id = [&](const char* text) {
        for (const attnrank::Token& tok : db.vocab)
            if (tok.text == text) return tok.id;
        throw std::logic_error("fixture token missing");
    };
    // Embedding rows carry the VO columns (m, s) of each token.
    w.w_e(id("b"), 1) = 4.0;
    w.w_e(id("c"), 0) = 4.0;
    w.w_e(id("be"), 1) = 2.0;
    w.w_e(id("li"), 0) = 2.0;
    // Unembedding reads dims 2 and 3 into the m and s columns.
    w.w_u(2, id("m")) = 1.0;
    w.w_u(3, id("s")) = 1.0;

    attnrank::HeadWeights h;
    h.w_q = attnrank::Matrix(4, 1);
    h.w_k = attnrank::Matrix(1, 4);
    h.w_v = attnrank::Matrix(4, 2);
    h.w_o = attnrank::Matrix(2, 4);
    h.w_v(0, 0) = 1.0;
    h.w_v(1, 1) = 1.0;
    h.w_o(0, 2) = 1.0;
    h.w_o(1, 3) = 1.0;
    w.heads.push_back(std::move(h));
    return w;
}

}  // namespace fixtures
