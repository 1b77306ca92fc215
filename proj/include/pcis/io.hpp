#pragma once

#include "pcis/lattice.hpp"
#include "pcis/operator.hpp"
#include "pcis/oracle.hpp"
#include "pcis/shield.hpp"
#include "pcis/types.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcis {

/// Every artifact starts with two comment lines: the schema version and the
/// (config hash, seed) provenance pair. Readers reject unknown schemas.
struct FileMeta {
    std::string schema;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_meta(std::ostream& os, const std::string& schema, const FileMeta& meta) {
    os << "# schema=" << schema << "\n";
    os << "# config_hash=" << meta.config_hash << " seed=" << meta.seed << "\n";
}

inline FileMeta read_meta(std::istream& is, const std::string& expected_schema) {
    FileMeta meta;
    std::string line;
    if (!std::getline(is, line) || line.rfind("# schema=", 0) != 0)
        throw std::runtime_error("missing schema line");
    meta.schema = line.substr(9);
    if (meta.schema != expected_schema)
        throw std::runtime_error("unsupported schema '" + meta.schema + "', expected '" +
                                 expected_schema + "'");
    if (!std::getline(is, line) || line.rfind("# config_hash=", 0) != 0)
        throw std::runtime_error("missing provenance line");
    std::istringstream ss(line.substr(14));
    ss >> meta.config_hash;
    std::string seed_field;
    ss >> seed_field;
    if (seed_field.rfind("seed=", 0) == 0) meta.seed = std::stoull(seed_field.substr(5));
    return meta;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    return is;
}

// ---- masks ------------------------------------------------------------------

inline void write_mask(const std::string& path, const LatticeGrid& grid, const LatticeMask& mask,
                       const FileMeta& meta) {
    auto os = open_out(path);
    write_meta(os, "pcis.mask.v1", meta);
    os << "index";
    for (int i = 0; i < grid.dim(); ++i) os << ",x" << i;
    os << ",bit\n";
    for (std::int64_t k = 0; k < grid.total; ++k) {
        const Vec p = grid.point(k);
        os << k;
        for (int i = 0; i < grid.dim(); ++i) os << "," << fmt_double(p[i]);
        os << "," << (mask.get(k) ? 1 : 0) << "\n";
    }
}

inline LatticeMask read_mask(const std::string& path, std::int64_t expected_total) {
    auto is = open_in(path);
    read_meta(is, "pcis.mask.v1");
    std::string line;
    std::getline(is, line); // header row
    LatticeMask mask(expected_total);
    std::int64_t rows = 0;
    std::size_t line_no = 3;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto first_comma = line.find(',');
        const auto last_comma = line.rfind(',');
        if (first_comma == std::string::npos || last_comma == first_comma)
            throw std::runtime_error("malformed mask row at line " + std::to_string(line_no));
        const std::int64_t idx = std::stoll(line.substr(0, first_comma));
        const int bit = std::stoi(line.substr(last_comma + 1));
        if (idx < 0 || idx >= expected_total)
            throw std::runtime_error("mask index out of range at line " + std::to_string(line_no));
        mask.set(idx, bit != 0);
        ++rows;
    }
    if (rows != expected_total)
        throw std::runtime_error("mask row count does not match the configured grid");
    return mask;
}

// ---- value tables and action maps -------------------------------------------

inline void write_value_table(const std::string& path, const LatticeGrid& grid,
                              const SafetyValueTable& table, const FileMeta& meta) {
    auto os = open_out(path);
    write_meta(os, "pcis.table.v1", meta);
    os << "stage,index";
    for (int i = 0; i < grid.dim(); ++i) os << ",x" << i;
    os << ",value\n";
    for (int j = 0; j < table.stages(); ++j) {
        for (std::int64_t k = 0; k < grid.total; ++k) {
            const Vec p = grid.point(k);
            os << j << "," << k;
            for (int i = 0; i < grid.dim(); ++i) os << "," << fmt_double(p[i]);
            os << "," << fmt_double(table.value(j, k)) << "\n";
        }
    }
}

inline void write_action_maps(const std::string& path, const LatticeGrid& grid,
                              const std::vector<StageActionMap>& maps, const FileMeta& meta) {
    auto os = open_out(path);
    write_meta(os, "pcis.actions.v1", meta);
    os << "stage,index,action_bitmask,continuation\n";
    for (std::size_t j = 0; j < maps.size(); ++j)
        for (std::int64_t k = 0; k < grid.total; ++k)
            os << j << "," << k << "," << maps[j].safe_sets[static_cast<std::size_t>(k)] << ","
               << maps[j].continuation[static_cast<std::size_t>(k)] << "\n";
}

inline SafetyValueTable read_value_table(const std::string& path, std::int64_t expected_total) {
    auto is = open_in(path);
    read_meta(is, "pcis.table.v1");
    std::string line;
    std::getline(is, line); // header
    SafetyValueTable table;
    std::size_t line_no = 3;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string f;
        std::vector<std::string> fields;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() < 3)
            throw std::runtime_error("malformed table row at line " + std::to_string(line_no));
        const int stage = std::stoi(fields[0]);
        const std::int64_t idx = std::stoll(fields[1]);
        const double value = std::stod(fields.back());
        if (stage < 0 || idx < 0 || idx >= expected_total)
            throw std::runtime_error("table row out of range at line " + std::to_string(line_no));
        if (stage >= table.stages())
            table.stage_values.resize(static_cast<std::size_t>(stage) + 1,
                                      Vec::Zero(expected_total));
        table.stage_values[static_cast<std::size_t>(stage)][idx] = value;
    }
    return table;
}

inline std::vector<StageActionMap> read_action_maps(const std::string& path,
                                                    std::int64_t expected_total) {
    auto is = open_in(path);
    read_meta(is, "pcis.actions.v1");
    std::string line;
    std::getline(is, line); // header
    std::vector<StageActionMap> maps;
    std::size_t line_no = 3;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string f;
        std::vector<std::string> fields;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() != 4)
            throw std::runtime_error("malformed action row at line " + std::to_string(line_no));
        const int stage = std::stoi(fields[0]);
        const std::int64_t idx = std::stoll(fields[1]);
        if (stage < 0 || idx < 0 || idx >= expected_total)
            throw std::runtime_error("action row out of range at line " + std::to_string(line_no));
        if (stage >= static_cast<int>(maps.size()))
            maps.resize(static_cast<std::size_t>(stage) + 1,
                        StageActionMap{std::vector<std::uint32_t>(
                                           static_cast<std::size_t>(expected_total), 0u),
                                       std::vector<std::int32_t>(
                                           static_cast<std::size_t>(expected_total), -1)});
        maps[static_cast<std::size_t>(stage)].safe_sets[static_cast<std::size_t>(idx)] =
            static_cast<std::uint32_t>(std::stoul(fields[2]));
        maps[static_cast<std::size_t>(stage)].continuation[static_cast<std::size_t>(idx)] =
            std::stoi(fields[3]);
    }
    return maps;
}

// ---- transition datasets -----------------------------------------------------

inline void write_dataset(const std::string& path, const TransitionDataset& data, int state_dim,
                          const FileMeta& meta) {
    auto os = open_out(path);
    write_meta(os, "pcis.dataset.v1", meta);
    for (int i = 0; i < state_dim; ++i) os << "x" << i << ",";
    os << "action";
    for (int i = 0; i < state_dim; ++i) os << ",y" << i;
    os << ",tag\n";
    for (const Transition& t : data.rows) {
        for (int i = 0; i < state_dim; ++i) os << fmt_double(t.state[i]) << ",";
        os << t.action;
        for (int i = 0; i < state_dim; ++i) os << "," << fmt_double(t.next_state[i]);
        os << "," << (t.tag == DataTag::Certification ? "cert" : "grow") << "\n";
    }
}

inline TransitionDataset read_dataset(const std::string& path, int state_dim) {
    auto is = open_in(path);
    read_meta(is, "pcis.dataset.v1");
    std::string line;
    std::getline(is, line); // header
    TransitionDataset data;
    std::size_t line_no = 3;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (static_cast<int>(fields.size()) != 2 * state_dim + 2)
            throw std::runtime_error("malformed dataset row at line " + std::to_string(line_no));
        Transition t;
        t.state = Vec(state_dim);
        t.next_state = Vec(state_dim);
        try {
            for (int i = 0; i < state_dim; ++i) t.state[i] = std::stod(fields[i]);
            t.action = std::stoi(fields[state_dim]);
            for (int i = 0; i < state_dim; ++i)
                t.next_state[i] = std::stod(fields[state_dim + 1 + i]);
        } catch (const std::exception&) {
            throw std::runtime_error("malformed dataset row at line " + std::to_string(line_no));
        }
        t.tag = (fields.back() == "cert") ? DataTag::Certification : DataTag::Grow;
        data.rows.push_back(std::move(t));
    }
    return data;
}

// ---- run records and trajectories --------------------------------------------

inline void write_run_record(const std::string& path, const RunRecord& rec, const FileMeta& meta) {
    auto os = open_out(path);
    write_meta(os, "pcis.run.v1", meta);
    os << "interval,interval_return,cumulative_return,unsafe_steps,goal_events,tentative_size,"
          "omega_size,cert_accepted\n";
    for (const IntervalRecord& r : rec.intervals)
        os << r.interval << "," << fmt_double(r.interval_return) << ","
           << fmt_double(r.cumulative_return) << "," << r.unsafe_steps << "," << r.goal_events
           << "," << r.tentative_size << "," << r.omega_size << "," << (r.cert_accepted ? 1 : 0)
           << "\n";
}

inline void write_trajectory(const std::string& path, const RunRecord& rec, const FileMeta& meta) {
    auto os = open_out(path);
    write_meta(os, "pcis.trajectory.v1", meta);
    os << "step";
    const int dim = rec.trajectory.empty() ? 2 : static_cast<int>(rec.trajectory.front().state.size());
    for (int i = 0; i < dim; ++i) os << ",x" << i;
    os << ",action_proposed,action_executed,reward,in_omega,unsafe_exit\n";
    for (const TrajectoryRow& r : rec.trajectory) {
        os << r.step;
        for (int i = 0; i < dim; ++i) os << "," << fmt_double(r.state[i]);
        os << "," << r.action_proposed << "," << r.action_executed << "," << fmt_double(r.reward)
           << "," << (r.in_omega ? 1 : 0) << "," << (r.unsafe_exit ? 1 : 0) << "\n";
    }
}

// ---- kernels and weights ------------------------------------------------------

inline void write_kernel(const std::string& path, const FiniteMdpModel& model,
                         const FileMeta& meta) {
    auto os = open_out(path);
    write_meta(os, "pcis.kernel.v1", meta);
    os << "state,action,next,prob\n";
    for (int x = 0; x < model.state_count; ++x)
        for (int u = 0; u < model.action_count; ++u)
            for (int y = 0; y <= model.state_count; ++y)
                os << x << "," << u << "," << y << "," << fmt_double(model.prob(x, u, y)) << "\n";
}

inline void write_weights(const std::string& path, const Mat& weights, const FileMeta& meta) {
    auto os = open_out(path);
    write_meta(os, "pcis.weights.v1", meta);
    os << "row,col,value\n";
    for (Eigen::Index r = 0; r < weights.rows(); ++r)
        for (Eigen::Index c = 0; c < weights.cols(); ++c)
            os << r << "," << c << "," << fmt_double(weights(r, c)) << "\n";
}

} // namespace pcis
