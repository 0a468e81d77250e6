#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnrank/results.hpp"

namespace attnrank {

struct HeatmapCell {
    double mean = 0.0;
    int count = 0;
};

// Accuracies averaged over rank-bound bins: a record lands in cell (i, j)
// when its layer rank bound lies in (i-5, i] and its database rank bound
// in (j-10, j]. Cells with count 0 are empty, distinct from mean 0.
struct HeatmapGrid {
    std::string column;
    int layer_bin_width = 5;
    int db_bin_width = 10;
    std::vector<int> layer_bins;  // ascending upper edges (multiples of width)
    std::vector<int> db_bins;
    std::vector<HeatmapCell> cells;  // layer-major

    HeatmapCell& at(std::size_t li, std::size_t dj) { return cells[li * db_bins.size() + dj]; }
    const HeatmapCell& at(std::size_t li, std::size_t dj) const {
        return cells[li * db_bins.size() + dj];
    }
};

inline int bin_upper_edge(int value, int width) {
    return ((value + width - 1) / width) * width;
}

inline HeatmapGrid bin_heatmap(const std::vector<ResultRecord>& records,
                               const std::string& accuracy_column) {
    HeatmapGrid grid;
    grid.column = accuracy_column;
    std::vector<const ResultRecord*> usable;
    for (const ResultRecord& r : records) {
        result_accuracy(r, accuracy_column);  // validates the column name
        if (r.status == "ok") usable.push_back(&r);
    }
    if (usable.empty()) throw std::invalid_argument("bin_heatmap: no usable records");

    int layer_max = 0, db_max = 0;
    for (const ResultRecord* r : usable) {
        layer_max = std::max(layer_max, bin_upper_edge(r->layer_lb, grid.layer_bin_width));
        db_max = std::max(db_max, bin_upper_edge(r->db_rank_ub, grid.db_bin_width));
    }
    for (int edge = grid.layer_bin_width; edge <= layer_max; edge += grid.layer_bin_width)
        grid.layer_bins.push_back(edge);
    for (int edge = grid.db_bin_width; edge <= db_max; edge += grid.db_bin_width)
        grid.db_bins.push_back(edge);
    grid.cells.assign(grid.layer_bins.size() * grid.db_bins.size(), HeatmapCell{});

    for (const ResultRecord* r : usable) {
        const std::size_t li = bin_upper_edge(r->layer_lb, grid.layer_bin_width) /
                                   grid.layer_bin_width - 1;
        const std::size_t dj = bin_upper_edge(r->db_rank_ub, grid.db_bin_width) /
                                   grid.db_bin_width - 1;
        HeatmapCell& cell = grid.at(li, dj);
        cell.mean += result_accuracy(*r, accuracy_column);
        cell.count += 1;
    }
    for (HeatmapCell& cell : grid.cells)
        if (cell.count > 0) cell.mean /= cell.count;
    return grid;
}

inline void write_heatmap_csv(const HeatmapGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_heatmap_csv: cannot open " + path);
    out << "layer_bin,db_bin,mean_" << grid.column << ",count\n";
    char buf[128];
    for (std::size_t li = 0; li < grid.layer_bins.size(); ++li)
        for (std::size_t dj = 0; dj < grid.db_bins.size(); ++dj) {
            const HeatmapCell& cell = grid.at(li, dj);
            if (cell.count > 0)
                std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%d\n", grid.layer_bins[li],
                              grid.db_bins[dj], cell.mean, cell.count);
            else
                std::snprintf(buf, sizeof(buf), "%d,%d,,0\n", grid.layer_bins[li],
                              grid.db_bins[dj]);
            out << buf;
        }
}

namespace detail {

// Five-stop dark-violet-to-yellow ramp over [0, 1].
inline void accuracy_color(double v, int& red, int& green, int& blue) {
    static const int stops[5][3] = {
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    v = std::clamp(v, 0.0, 1.0);
    const double pos = v * 4.0;
    const int lo = std::min(3, int(pos));
    const double frac = pos - lo;
    red = int(std::lround(stops[lo][0] + frac * (stops[lo + 1][0] - stops[lo][0])));
    green = int(std::lround(stops[lo][1] + frac * (stops[lo + 1][1] - stops[lo][1])));
    blue = int(std::lround(stops[lo][2] + frac * (stops[lo + 1][2] - stops[lo][2])));
}

}  // namespace detail

// Self-contained SVG: one rect per cell on a linear 0-to-1 color scale,
// hatched empty cells, axis labels and a legend. Byte-deterministic for a
// fixed grid.
inline std::string heatmap_svg(const HeatmapGrid& grid) {
    bool any = false;
    for (const HeatmapCell& cell : grid.cells) any = any || cell.count > 0;
    if (!any) throw std::invalid_argument("heatmap_svg: nothing to render");

    const int cell_px = 34;
    const int left = 80, top = 40, bottom = 58, right = 120;
    const int n_rows = int(grid.layer_bins.size());
    const int n_cols = int(grid.db_bins.size());
    const int width = left + n_cols * cell_px + right;
    const int height = top + n_rows * cell_px + bottom;

    std::string svg;
    char buf[512];
    const auto append = [&](const char* fmt, auto... args) {
        std::snprintf(buf, sizeof(buf), fmt, args...);
        svg += buf;
    };

    append("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
           "viewBox=\"0 0 %d %d\">\n",
           width, height, width, height);
    svg += "<defs>\n"
           "<pattern id=\"empty\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
           "patternTransform=\"rotate(45)\">\n"
           "<rect width=\"6\" height=\"6\" fill=\"#f4f4f4\"/>\n"
           "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#c8c8c8\" stroke-width=\"2\"/>\n"
           "</pattern>\n"
           "<linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">\n";
    for (int stop = 0; stop <= 10; ++stop) {
        int red, green, blue;
        detail::accuracy_color(stop / 10.0, red, green, blue);
        append("<stop offset=\"%d%%\" stop-color=\"rgb(%d,%d,%d)\"/>\n", stop * 10, red, green,
               blue);
    }
    svg += "</linearGradient>\n</defs>\n";
    append("<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n", width, height);
    append("<text x=\"%d\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" "
           "text-anchor=\"middle\">mean %s</text>\n",
           left + n_cols * cell_px / 2, grid.column.c_str());

    // Cells: layer bins increase upward.
    for (int li = 0; li < n_rows; ++li)
        for (int dj = 0; dj < n_cols; ++dj) {
            const HeatmapCell& cell = grid.at(li, dj);
            const int x = left + dj * cell_px;
            const int y = top + (n_rows - 1 - li) * cell_px;
            if (cell.count == 0) {
                append("<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                       "fill=\"url(#empty)\" stroke=\"#999\" stroke-width=\"0.5\"/>\n",
                       x, y, cell_px, cell_px);
            } else {
                int red, green, blue;
                detail::accuracy_color(cell.mean, red, green, blue);
                append("<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                       "fill=\"rgb(%d,%d,%d)\" stroke=\"#999\" stroke-width=\"0.5\">"
                       "<title>layer (%d,%d], db (%d,%d]: %.4f (n=%d)</title></rect>\n",
                       x, y, cell_px, cell_px, red, green, blue,
                       grid.layer_bins[li] - grid.layer_bin_width, grid.layer_bins[li],
                       grid.db_bins[dj] - grid.db_bin_width, grid.db_bins[dj], cell.mean,
                       cell.count);
            }
        }

    // Axis labels.
    for (int dj = 0; dj < n_cols; ++dj)
        append("<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\" "
               "text-anchor=\"middle\">%d</text>\n",
               left + dj * cell_px + cell_px / 2, top + n_rows * cell_px + 16,
               grid.db_bins[dj]);
    for (int li = 0; li < n_rows; ++li)
        append("<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\" "
               "text-anchor=\"end\">%d</text>\n",
               left - 8, top + (n_rows - 1 - li) * cell_px + cell_px / 2 + 4,
               grid.layer_bins[li]);
    append("<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"13\" "
           "text-anchor=\"middle\">database rank bound</text>\n",
           left + n_cols * cell_px / 2, top + n_rows * cell_px + 40);
    append("<text x=\"22\" y=\"%d\" font-family=\"sans-serif\" font-size=\"13\" "
           "text-anchor=\"middle\" transform=\"rotate(-90 22 %d)\">layer rank bound</text>\n",
           top + n_rows * cell_px / 2, top + n_rows * cell_px / 2);

    // Legend.
    const int legend_x = left + n_cols * cell_px + 30;
    const int legend_h = std::max(80, n_rows * cell_px - 20);
    append("<rect x=\"%d\" y=\"%d\" width=\"16\" height=\"%d\" fill=\"url(#scale)\" "
           "stroke=\"#999\" stroke-width=\"0.5\"/>\n",
           legend_x, top + 10, legend_h);
    for (int tick = 0; tick <= 4; ++tick) {
        const double value = tick / 4.0;
        const int y = top + 10 + int(std::lround((1.0 - value) * legend_h));
        append("<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"10\">%.2f"
               "</text>\n",
               legend_x + 22, y + 3, value);
    }
    svg += "</svg>\n";
    return svg;
}

inline void render_heatmap(const HeatmapGrid& grid, const std::string& path) {
    const std::string svg = heatmap_svg(grid);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("render_heatmap: cannot open " + path);
    out << svg;
}

}  // namespace attnrank
