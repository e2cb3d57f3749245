#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "coresolve/common.hpp"
#include "coresolve/kernel.hpp"
#include "coresolve/trainer.hpp"

namespace cores {

// Minimal CSV table: comma-separated, UTF-8, LF line endings, no quoting
// (none of our fields contain commas).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot open for writing: " + path);
        for (std::size_t i = 0; i < header.size(); ++i)
            out << header[i] << (i + 1 < header.size() ? "," : "");
        out << '\n';
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                out << row[i] << (i + 1 < row.size() ? "," : "");
            out << '\n';
        }
        if (!out) throw Error("failed writing " + path);
    }

    static CsvTable read(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open: " + path);
        CsvTable t;
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (line.back() == ',') cells.push_back("");
            if (first) {
                t.header = std::move(cells);
                first = false;
            } else {
                t.rows.push_back(std::move(cells));
            }
        }
        return t;
    }

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw Error("csv column not found: " + name);
    }
};

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- boundary dataset CSV: x1..xd, output, value, tag --------------------------

inline void write_dataset_csv(const std::string& path,
                              const std::vector<BoundaryDataset>& data,
                              const std::vector<std::string>& output_names) {
    if (data.empty()) throw Error("write_dataset_csv: no datasets");
    const int d = data[0].d;
    CsvTable t;
    for (int k = 0; k < d; ++k) t.header.push_back("x" + std::to_string(k + 1));
    t.header.push_back("output");
    t.header.push_back("value");
    t.header.push_back("tag");
    for (std::size_t o = 0; o < data.size(); ++o) {
        for (std::size_t i = 0; i < data[o].size(); ++i) {
            std::vector<std::string> row;
            for (int k = 0; k < d; ++k) row.push_back(fmt_double(data[o].x[i * d + k]));
            row.push_back(output_names[o]);
            row.push_back(fmt_double(data[o].u[i]));
            row.push_back(to_string(data[o].tag[i]));
            t.rows.push_back(std::move(row));
        }
    }
    t.write(path);
}

inline std::vector<BoundaryDataset> read_dataset_csv(const std::string& path,
                                                     const std::vector<std::string>& output_names) {
    const CsvTable t = CsvTable::read(path);
    int d = 0;
    while (d < static_cast<int>(t.header.size()) && t.header[d] == "x" + std::to_string(d + 1)) ++d;
    if (d == 0) throw Error("dataset csv has no coordinate columns: " + path);
    const int c_out = t.column("output"), c_val = t.column("value"), c_tag = t.column("tag");
    std::vector<BoundaryDataset> data(output_names.size());
    for (auto& ds : data) ds.d = d;
    for (const auto& row : t.rows) {
        std::size_t o = 0;
        while (o < output_names.size() && output_names[o] != row[c_out]) ++o;
        if (o == output_names.size()) throw Error("dataset csv: unknown output " + row[c_out]);
        std::vector<double> x(d);
        for (int k = 0; k < d; ++k) x[k] = std::stod(row[k]);
        data[o].append(x.data(), std::stod(row[c_val]), row_tag_from_string(row[c_tag]));
    }
    return data;
}

// ---- loss report CSV ------------------------------------------------------------

inline void write_loss_report_csv(const std::string& path, const LossReport& report) {
    CsvTable t;
    t.header = {"epoch",      "loss_total",  "loss_pde",      "loss_bc",     "loss_ic",
                "l2e_domain", "l2e_boundary", "l2e_mean_only", "wall_seconds"};
    for (const auto& r : report.rows) {
        t.rows.push_back({std::to_string(r.epoch), fmt_double(r.loss_total),
                          fmt_double(r.loss_pde), fmt_double(r.loss_bc), fmt_double(r.loss_ic),
                          fmt_double(r.l2e_domain), fmt_double(r.l2e_boundary),
                          fmt_double(r.l2e_mean_only), fmt_double(r.wall_seconds)});
    }
    t.write(path);
}

// ---- reference / prediction grids -------------------------------------------------

inline void write_reference_grid_csv(const std::string& path, const ReferenceGrid& grid,
                                     const std::string& ax0 = "x", const std::string& ax1 = "y") {
    CsvTable t;
    t.header = {ax0, ax1, "value"};
    for (std::size_t i = 0; i < grid.ax0.size(); ++i)
        for (std::size_t j = 0; j < grid.ax1.size(); ++j)
            t.rows.push_back({fmt_double(grid.ax0[i]), fmt_double(grid.ax1[j]),
                              fmt_double(grid.at(i, j))});
    t.write(path);
}

inline void write_histogram_csv(const std::string& path, const Histogram& h) {
    CsvTable t;
    t.header = {"bin_lo", "bin_hi", "count"};
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        t.rows.push_back({fmt_double(h.edges[b]), fmt_double(h.edges[b + 1]),
                          std::to_string(h.counts[b])});
    t.write(path);
}

} // namespace cores
