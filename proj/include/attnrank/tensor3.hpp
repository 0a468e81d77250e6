#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnrank/matrix.hpp"

namespace attnrank {

// Dense real 3-tensor, row-major with the last index fastest.
struct Tensor3 {
    int d1 = 0, d2 = 0, d3 = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int a, int b, int c, double fill = 0.0)
        : d1(a), d2(b), d3(c), data(std::size_t(a) * b * c, fill) {
        if (a < 0 || b < 0 || c < 0) throw std::invalid_argument("Tensor3: negative dimension");
    }

    double& at(int i, int j, int k) {
        return data[(std::size_t(i) * d2 + j) * d3 + k];
    }
    double at(int i, int j, int k) const {
        return data[(std::size_t(i) * d2 + j) * d3 + k];
    }

    std::size_t size() const { return data.size(); }
};

inline void check_index(int idx, int dim, const char* what) {
    if (idx < 0 || idx >= dim) throw std::out_of_range(std::string(what) + ": index out of range");
}

// slice(t, 1, k) = T_{k::} (d2 x d3); axis 2 gives T_{:q:} (d1 x d3);
// axis 3 gives T_{::v} (d1 x d2).
inline Matrix slice(const Tensor3& t, int axis, int index) {
    switch (axis) {
        case 1: {
            check_index(index, t.d1, "slice axis 1");
            Matrix m(t.d2, t.d3);
            for (int j = 0; j < t.d2; ++j)
                for (int k = 0; k < t.d3; ++k) m(j, k) = t.at(index, j, k);
            return m;
        }
        case 2: {
            check_index(index, t.d2, "slice axis 2");
            Matrix m(t.d1, t.d3);
            for (int i = 0; i < t.d1; ++i)
                for (int k = 0; k < t.d3; ++k) m(i, k) = t.at(i, index, k);
            return m;
        }
        case 3: {
            check_index(index, t.d3, "slice axis 3");
            Matrix m(t.d1, t.d2);
            for (int i = 0; i < t.d1; ++i)
                for (int j = 0; j < t.d2; ++j) m(i, j) = t.at(i, j, index);
            return m;
        }
        default:
            throw std::invalid_argument("slice: axis must be 1, 2 or 3");
    }
}

// fiber(t, 3, i, j) = T_{ij:}; fiber(t, 2, i, k) = T_{i:k};
// fiber(t, 1, j, k) = T_{:jk}. free_axis names the axis left varying.
inline std::vector<double> fiber(const Tensor3& t, int free_axis, int a, int b) {
    std::vector<double> v;
    switch (free_axis) {
        case 3:
            check_index(a, t.d1, "fiber");
            check_index(b, t.d2, "fiber");
            v.resize(t.d3);
            for (int k = 0; k < t.d3; ++k) v[k] = t.at(a, b, k);
            return v;
        case 2:
            check_index(a, t.d1, "fiber");
            check_index(b, t.d3, "fiber");
            v.resize(t.d2);
            for (int j = 0; j < t.d2; ++j) v[j] = t.at(a, j, b);
            return v;
        case 1:
            check_index(a, t.d2, "fiber");
            check_index(b, t.d3, "fiber");
            v.resize(t.d1);
            for (int i = 0; i < t.d1; ++i) v[i] = t.at(i, a, b);
            return v;
        default:
            throw std::invalid_argument("fiber: free_axis must be 1, 2 or 3");
    }
}

inline double frobenius_norm(const Tensor3& t) {
    double s = 0.0;
    for (double x : t.data) s += x * x;
    return std::sqrt(s);
}

inline nlohmann::json tensor_to_json(const Tensor3& t) {
    return nlohmann::json{{"dims", {t.d1, t.d2, t.d3}}, {"data", t.data}};
}

inline Tensor3 tensor_from_json(const nlohmann::json& j) {
    const auto dims = j.at("dims");
    if (!dims.is_array() || dims.size() != 3)
        throw std::invalid_argument("tensor_from_json: dims must have 3 entries");
    Tensor3 t(dims[0].get<int>(), dims[1].get<int>(), dims[2].get<int>());
    const auto& data = j.at("data");
    if (data.size() != t.size())
        throw std::invalid_argument("tensor_from_json: data length does not match dims");
    t.data = data.get<std::vector<double>>();
    return t;
}

}  // namespace attnrank
