#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "weakcal/calibration_map.hpp"
#include "weakcal/decon.hpp"
#include "weakcal/metrics.hpp"
#include "weakcal/postproc.hpp"
#include "weakcal/record.hpp"
#include "weakcal/residual.hpp"

namespace weakcal {

using ordered_json = nlohmann::ordered_json;

// Thrown for malformed input files; the CLI maps it to the data exit code.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Write-temp-then-rename so partial output never lands under the final name.
inline void write_atomic(const std::filesystem::path& path,
                         const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp.string());
        out << content;
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline double parse_double(const std::string& cell, std::size_t row,
                           const std::string& column) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw DataError("row " + std::to_string(row) + ", column " + column +
                        ": cannot parse number '" + cell + "'");
    }
}

}  // namespace detail

struct RecordsFile {
    std::vector<ScoredRecord> records;
    int m = 0;  // group flag count from the header
};

// Flat record schema: id, score, label, conf, source, g0..g{m-1}.
// Empty cells mean absent optional fields.
inline RecordsFile read_records_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open records file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = detail::split_csv_line(line);
    const std::vector<std::string> fixed = {"id", "score", "label", "conf",
                                            "source"};
    if (header.size() < fixed.size())
        throw DataError("header must start with id,score,label,conf,source");
    for (std::size_t i = 0; i < fixed.size(); ++i)
        if (header[i] != fixed[i])
            throw DataError("header column " + std::to_string(i) +
                            ": expected '" + fixed[i] + "', got '" + header[i] +
                            "'");
    RecordsFile out;
    out.m = static_cast<int>(header.size() - fixed.size());
    for (int g = 0; g < out.m; ++g)
        if (header[fixed.size() + static_cast<std::size_t>(g)] !=
            "g" + std::to_string(g))
            throw DataError("group columns must be named g0..g" +
                            std::to_string(out.m - 1));

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
        ScoredRecord rec;
        if (!cells[0].empty())
            rec.id = static_cast<std::int64_t>(
                detail::parse_double(cells[0], row, "id"));
        rec.score = detail::parse_double(cells[1], row, "score");
        if (!(rec.score >= 0.0 && rec.score <= 1.0))
            throw DataError("row " + std::to_string(row) +
                            ", column score: value outside [0,1]");
        if (!cells[2].empty())
            rec.label = static_cast<int>(detail::parse_double(cells[2], row, "label"));
        if (!cells[3].empty())
            rec.confidence = detail::parse_double(cells[3], row, "conf");
        rec.source = source_from_string(cells[4]);
        rec.groups.resize(static_cast<std::size_t>(out.m), 0);
        for (int g = 0; g < out.m; ++g) {
            const auto& cell = cells[5 + static_cast<std::size_t>(g)];
            rec.groups[static_cast<std::size_t>(g)] =
                detail::parse_double(cell, row, "g" + std::to_string(g)) != 0.0;
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

inline std::string format_records_csv(std::span<const ScoredRecord> records,
                                      int m) {
    std::ostringstream out;
    out.precision(17);
    out << "id,score,label,conf,source";
    for (int g = 0; g < m; ++g) out << ",g" << g;
    out << "\n";
    for (const ScoredRecord& rec : records) {
        if (rec.id) out << *rec.id;
        out << "," << rec.score << ",";
        if (rec.label) out << *rec.label;
        out << ",";
        if (rec.confidence) out << *rec.confidence;
        out << "," << to_string(rec.source);
        for (int g = 0; g < m; ++g)
            out << "," << static_cast<int>(
                       rec.groups[static_cast<std::size_t>(g)]);
        out << "\n";
    }
    return out.str();
}

inline std::string format_table_csv(const ResidualTable& table) {
    std::ostringstream out;
    out.precision(17);
    out << "group,bin,bin_lo,bin_hi,moment,active_mass\n";
    const WitnessFamily family(table.m, table.K);
    for (int g = 0; g <= table.m; ++g)
        for (int b = 1; b <= table.K; ++b)
            out << g << "," << b << "," << family.bin_lo(b) << ","
                << family.bin_hi(b) << "," << table.moment(g, b) << ","
                << table.mass(g, b) << "\n";
    return out.str();
}

inline std::string format_trace_csv(std::span<const WlmcRound> trace) {
    std::ostringstream out;
    out.precision(17);
    out << "round,group,bin_lo,bin_hi,signed_violation,step_applied\n";
    for (const WlmcRound& r : trace)
        out << r.round << "," << r.group << "," << r.bin_lo << "," << r.bin_hi
            << "," << r.violation << "," << r.step << "\n";
    return out.str();
}

inline ordered_json report_json(const MetricReport& report,
                                const std::string& mass_source) {
    ordered_json j;
    j["regime"] = report.regime;
    j["ece"] = report.ece;
    j["max_ece"] = report.max_ece.value;
    j["max_ece_group"] = report.max_ece.group;
    j["mc"] = report.mc.value;
    j["mc_group"] = report.mc.group;
    j["mc_bin"] = report.mc.bin;
    j["mu_min"] = report.mu_min;
    j["mass_source"] = mass_source;
    return j;
}

inline ordered_json map_json(const CalibrationMap& map) {
    ordered_json steps = ordered_json::array();
    for (const MapStep& step : map.steps) {
        ordered_json j;
        if (const auto* add = std::get_if<CellAdd>(&step)) {
            j["type"] = "cell_add";
            j["group"] = add->group;
            j["lo"] = add->lo;
            j["hi"] = add->hi;
            j["delta"] = add->delta;
        } else if (const auto* temp = std::get_if<Temperature>(&step)) {
            j["type"] = "temperature";
            j["beta"] = temp->beta;
        } else {
            const auto& aff = std::get<AffineLogit>(step);
            j["type"] = "affine_logit";
            j["a"] = aff.a;
            j["b"] = aff.b;
        }
        steps.push_back(std::move(j));
    }
    ordered_json j;
    j["steps"] = std::move(steps);
    return j;
}

inline CalibrationMap map_from_json(const nlohmann::json& j) {
    CalibrationMap map;
    for (const auto& step : j.at("steps")) {
        const std::string type = step.at("type");
        if (type == "cell_add")
            map.steps.push_back(CellAdd{step.at("group"), step.at("lo"),
                                        step.at("hi"), step.at("delta")});
        else if (type == "temperature")
            map.steps.push_back(Temperature{step.at("beta")});
        else if (type == "affine_logit")
            map.steps.push_back(AffineLogit{step.at("a"), step.at("b")});
        else
            throw DataError("unknown map step type: " + type);
    }
    return map;
}

}  // namespace weakcal
