#pragma once

// ScoreTable CSV persistence. Layout:
//
//   method,source,<subset 1>,...,<subset n>
//   AVG,internal,0.85,...
//
// `source` is internal or external. Empty cells are missing (median tables only). Values use the
// shortest round-trip decimal form, so identical tables give identical bytes.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "deforma/common/error.hpp"
#include "deforma/common/text.hpp"
#include "deforma/harness/schulze.hpp"

namespace deforma {

enum class ScoreKind { Mean, Median };

inline void write_score_table(const ScoreTable& t, ScoreKind kind, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "method,source";
    for (const auto& s : t.subsets) out << ',' << s;
    out << '\n';
    for (std::size_t m = 0; m < t.n_methods(); ++m) {
        out << t.methods[m] << ',' << (t.external[m] ? "external" : "internal");
        for (std::size_t s = 0; s < t.n_subsets(); ++s) {
            out << ',';
            if (kind == ScoreKind::Mean) out << text::exact(t.mean_owa[m][s]);
            else if (t.median_owa[m][s]) out << text::exact(*t.median_owa[m][s]);
        }
        out << '\n';
    }
}

// Reads a mean table, and optionally merges a median table with the same layout into it.
inline ScoreTable read_score_table(const std::filesystem::path& mean_path,
                                   const std::optional<std::filesystem::path>& median_path = std::nullopt)
{
    auto read_rows = [](const std::filesystem::path& path, std::vector<std::string>& subsets) {
        std::ifstream in(path);
        if (!in) throw LoadError("cannot open " + path.string());
        std::string line;
        if (!std::getline(in, line)) throw ParseError(path.string() + ": empty score table");
        const auto header = text::split_csv(line);
        if (header.size() < 3 || header[0] != "method" || header[1] != "source")
            throw ParseError(path.string() + ": expected header method,source,<subsets>");
        subsets.clear();
        for (std::size_t i = 2; i < header.size(); ++i) subsets.emplace_back(header[i]);
        std::vector<std::tuple<std::string, bool, std::vector<std::optional<double>>>> rows;
        while (std::getline(in, line)) {
            if (text::trim(line).empty()) continue;
            const auto cells = text::split_csv(line);
            if (cells.size() != header.size()) throw ParseError(path.string() + ": ragged row for " + std::string(cells[0]));
            if (cells[1] != "internal" && cells[1] != "external")
                throw ParseError(path.string() + ": source must be internal or external");
            std::vector<std::optional<double>> vals;
            for (std::size_t i = 2; i < cells.size(); ++i) {
                if (cells[i].empty()) {
                    vals.push_back(std::nullopt);
                    continue;
                }
                const auto v = text::parse_double(cells[i]);
                if (!v) throw ParseError(path.string() + ": bad value for " + std::string(cells[0]));
                vals.push_back(*v);
            }
            rows.emplace_back(std::string(cells[0]), cells[1] == "external", std::move(vals));
        }
        return rows;
    };

    ScoreTable t;
    for (auto& [name, ext, vals] : read_rows(mean_path, t.subsets)) {
        std::vector<double> mean;
        for (const auto& v : vals) {
            if (!v) throw ParseError(mean_path.string() + ": missing mean OWA for " + name);
            mean.push_back(*v);
        }
        t.add_method(name, std::move(mean), {}, ext);
    }
    if (median_path) {
        std::vector<std::string> subsets;
        for (auto& [name, ext, vals] : read_rows(*median_path, subsets)) {
            if (subsets != t.subsets) throw ParseError(median_path->string() + ": subsets differ from the mean table");
            t.median_owa[t.method_index(name)] = std::move(vals);
        }
    }
    t.validate();
    return t;
}

// Columns of `t` restricted to and ordered by `subsets`.
inline ScoreTable select_subsets(const ScoreTable& t, const std::vector<std::string>& subsets)
{
    ScoreTable out;
    out.subsets = subsets;
    std::vector<std::size_t> cols;
    for (const auto& s : subsets) {
        const auto it = std::find(t.subsets.begin(), t.subsets.end(), s);
        if (it == t.subsets.end()) throw ArgumentError("score table has no subset " + s);
        cols.push_back(static_cast<std::size_t>(it - t.subsets.begin()));
    }
    for (std::size_t m = 0; m < t.n_methods(); ++m) {
        std::vector<double> mean;
        std::vector<std::optional<double>> med;
        for (auto c : cols) {
            mean.push_back(t.mean_owa[m][c]);
            med.push_back(t.median_owa[m][c]);
        }
        out.add_method(t.methods[m], std::move(mean), std::move(med), t.external[m]);
    }
    return out;
}

} // namespace deforma
