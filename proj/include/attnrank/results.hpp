#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnrank {

// One (database, layer, seed) training outcome.
struct ResultRecord {
    int pair_id = 0;
    int db_id = 0;
    int n_triples = 0;
    int db_rank_ub = 0;
    int n_heads = 0, d_model = 0, d_vo = 0, d_qk = 0;
    int n_params = 0;
    int layer_lb = 0, layer_ub = 0;
    double loss = 0.0;
    double acc_argmax = 0.0;
    double acc_050 = 0.0, acc_075 = 0.0, acc_095 = 0.0, acc_099 = 0.0;
    int epochs = 0;
    uint64_t seed = 0;
    std::string status = "ok";
};

inline const char* results_csv_header() {
    return "pair_id,db_id,n_triples,db_rank_ub,n_heads,d_model,d_vo,d_qk,n_params,"
           "layer_lb,layer_ub,loss,acc_argmax,acc_050,acc_075,acc_095,acc_099,epochs,"
           "seed,status";
}

inline std::string format_result_row(const ResultRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%d,%d,%d,%d,%d,%d,%d,%d,%d,%d,%d,%.9g,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%llu,%s",
                  r.pair_id, r.db_id, r.n_triples, r.db_rank_ub, r.n_heads, r.d_model, r.d_vo,
                  r.d_qk, r.n_params, r.layer_lb, r.layer_ub, r.loss, r.acc_argmax, r.acc_050,
                  r.acc_075, r.acc_095, r.acc_099, r.epochs,
                  static_cast<unsigned long long>(r.seed), r.status.c_str());
    return buf;
}

inline ResultRecord parse_result_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (fields.size() != 20)
        throw std::invalid_argument("results row: expected 20 fields, got " +
                                    std::to_string(fields.size()));
    ResultRecord r;
    int i = 0;
    r.pair_id = std::stoi(fields[i++]);
    r.db_id = std::stoi(fields[i++]);
    r.n_triples = std::stoi(fields[i++]);
    r.db_rank_ub = std::stoi(fields[i++]);
    r.n_heads = std::stoi(fields[i++]);
    r.d_model = std::stoi(fields[i++]);
    r.d_vo = std::stoi(fields[i++]);
    r.d_qk = std::stoi(fields[i++]);
    r.n_params = std::stoi(fields[i++]);
    r.layer_lb = std::stoi(fields[i++]);
    r.layer_ub = std::stoi(fields[i++]);
    r.loss = std::strtod(fields[i++].c_str(), nullptr);
    r.acc_argmax = std::strtod(fields[i++].c_str(), nullptr);
    r.acc_050 = std::strtod(fields[i++].c_str(), nullptr);
    r.acc_075 = std::strtod(fields[i++].c_str(), nullptr);
    r.acc_095 = std::strtod(fields[i++].c_str(), nullptr);
    r.acc_099 = std::strtod(fields[i++].c_str(), nullptr);
    r.epochs = std::stoi(fields[i++]);
    r.seed = std::strtoull(fields[i++].c_str(), nullptr, 10);
    r.status = fields[i++];
    return r;
}

inline void write_results_csv(const std::vector<ResultRecord>& records,
                              const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // no platform newline translation
    if (!out) throw std::runtime_error("write_results_csv: cannot open " + path);
    out << results_csv_header() << '\n';
    for (const ResultRecord& r : records) out << format_result_row(r) << '\n';
}

inline std::vector<ResultRecord> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_results_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_results_csv: empty file");
    if (line != results_csv_header())
        throw std::runtime_error("read_results_csv: unexpected header");
    std::vector<ResultRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(parse_result_row(line));
    }
    return records;
}

// Accuracy column selector used by the binning and plotting paths.
inline double result_accuracy(const ResultRecord& r, const std::string& column) {
    if (column == "acc_argmax") return r.acc_argmax;
    if (column == "acc_050") return r.acc_050;
    if (column == "acc_075") return r.acc_075;
    if (column == "acc_095") return r.acc_095;
    if (column == "acc_099") return r.acc_099;
    throw std::invalid_argument("unknown accuracy column: " + column);
}

}  // namespace attnrank
