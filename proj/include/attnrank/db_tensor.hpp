#pragma once

#include "attnrank/database.hpp"
#include "attnrank/tensor3.hpp"

namespace attnrank {

// The 0/1 database tensor: D_{kqv} = 1 iff (k, q, v) is a fact, with axes
// following the database's subject/predicate/object orders.
inline Tensor3 db_tensor(const Database& db) {
    Tensor3 t(db.n_subjects(), db.n_predicates(), db.n_objects());
    for (const Triple& triple : db.triples)
        t.at(db.subject_pos[triple.k], db.predicate_pos[triple.q], db.object_pos[triple.v]) = 1.0;
    return t;
}

}  // namespace attnrank
