#pragma once

// Aligned-text and long-form CSV renderings of ScoreTables with per-subset best/second-best markers
// and a Schulze rank column.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/common/text.hpp"
#include "deforma/harness/experiment.hpp"
#include "deforma/harness/schulze.hpp"
#include "deforma/harness/score_table.hpp"

namespace deforma {

enum class Marker { None, Best, Second };

inline char marker_char(Marker m) { return m == Marker::Best ? '*' : m == Marker::Second ? '+' : ' '; }

// markers[m][s]: Best on the smallest cell of each subset, Second on the next distinct value. Ties
// share the marker. Missing cells get none.
inline std::vector<std::vector<Marker>> score_markers(const std::vector<std::vector<std::optional<double>>>& cells)
{
    std::vector<std::vector<Marker>> out(cells.size());
    if (cells.empty()) return out;
    const std::size_t n_sub = cells[0].size();
    for (auto& row : out) row.assign(n_sub, Marker::None);
    for (std::size_t s = 0; s < n_sub; ++s) {
        std::vector<double> vals;
        for (const auto& row : cells)
            if (row[s]) vals.push_back(*row[s]);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t m = 0; m < cells.size(); ++m) {
            if (!cells[m][s]) continue;
            if (!vals.empty() && *cells[m][s] == vals[0]) out[m][s] = Marker::Best;
            else if (vals.size() > 1 && *cells[m][s] == vals[1]) out[m][s] = Marker::Second;
        }
    }
    return out;
}

struct ReportTable {
    std::string title;
    const ScoreTable* table = nullptr;
    ScoreKind kind = ScoreKind::Mean;
    bool with_rank = true;
};

inline std::vector<std::vector<std::optional<double>>> table_cells(const ScoreTable& t, ScoreKind kind)
{
    std::vector<std::vector<std::optional<double>>> cells;
    for (std::size_t m = 0; m < t.n_methods(); ++m) {
        if (kind == ScoreKind::Median) {
            cells.push_back(t.median_owa[m]);
            continue;
        }
        std::vector<std::optional<double>> row;
        for (double v : t.mean_owa[m]) row.emplace_back(v);
        cells.push_back(std::move(row));
    }
    return cells;
}

inline std::string render_text(const ReportTable& rt)
{
    const auto& t = *rt.table;
    const auto cells = table_cells(t, rt.kind);
    const auto marks = score_markers(cells);
    const auto ranks = rt.with_rank ? Experiment::ranks_of(t) : std::vector<int>{};

    std::size_t name_w = 6;
    for (std::size_t m = 0; m < t.n_methods(); ++m) name_w = std::max(name_w, t.methods[m].size() + (t.external[m] ? 4 : 0));
    auto pad = [](std::string s, std::size_t w, bool right) {
        if (s.size() >= w) return s;
        return right ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
    };

    std::ostringstream out;
    out << rt.title << '\n';
    std::string header = pad("Method", name_w, false);
    for (const auto& s : t.subsets) header += "  " + pad(s, 7, true) + " ";
    if (rt.with_rank) header += "  Schulze";
    out << header << '\n' << std::string(header.size(), '-') << '\n';
    for (std::size_t m = 0; m < t.n_methods(); ++m) {
        std::string line = pad(t.methods[m] + (t.external[m] ? " [x]" : ""), name_w, false);
        for (std::size_t s = 0; s < t.n_subsets(); ++s) {
            const std::string v = cells[m][s] ? text::fixed(*cells[m][s], 3) : "-";
            line += "  " + pad(v, 7, true) + marker_char(marks[m][s]);
        }
        if (rt.with_rank) line += "  " + pad(std::to_string(ranks[m]), 7, true);
        out << line << '\n';
    }
    return out.str();
}

// Long form: table,method,source,subset,owa,marker,rank.
inline std::string render_csv(const std::vector<ReportTable>& tables)
{
    std::ostringstream out;
    out << "table,method,source,subset,owa,marker,rank\n";
    for (const auto& rt : tables) {
        const auto& t = *rt.table;
        const auto cells = table_cells(t, rt.kind);
        const auto marks = score_markers(cells);
        const auto ranks = rt.with_rank ? Experiment::ranks_of(t) : std::vector<int>{};
        for (std::size_t m = 0; m < t.n_methods(); ++m)
            for (std::size_t s = 0; s < t.n_subsets(); ++s) {
                out << rt.title << ',' << t.methods[m] << ',' << (t.external[m] ? "external" : "internal") << ','
                    << t.subsets[s] << ',';
                if (cells[m][s]) out << text::exact(*cells[m][s]);
                out << ',' << (marks[m][s] == Marker::Best ? "best" : marks[m][s] == Marker::Second ? "second" : "") << ',';
                if (rt.with_rank) out << ranks[m];
                out << '\n';
            }
    }
    return out.str();
}

// Renders a completed run and writes report.txt and report.csv next to it. Throws StateError listing
// the missing stages when the run is incomplete.
inline std::string report_run(const Experiment& exp)
{
    const auto missing = exp.missing_stages();
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw StateError("run in " + exp.dir().string() + " is incomplete; missing stages: " + list);
    }
    const auto& dir = exp.dir();
    const auto test = read_score_table(dir / "scores_mean_test.csv", dir / "scores_median_test.csv");
    std::optional<ScoreTable> cv;
    if (std::filesystem::exists(dir / "scores_mean_cv.csv"))
        cv = read_score_table(dir / "scores_mean_cv.csv", dir / "scores_median_cv.csv");

    std::vector<ReportTable> tables{{"mean_owa_test", &test, ScoreKind::Mean, true},
                                    {"median_owa_test", &test, ScoreKind::Median, false}};
    if (cv) {
        tables.push_back({"mean_owa_cv", &*cv, ScoreKind::Mean, true});
        tables.push_back({"median_owa_cv", &*cv, ScoreKind::Median, false});
    }

    std::ostringstream out;
    for (const auto& t : tables) out << render_text(t) << '\n';
    out << "* best, + second best per subset. [x] marks published scores injected from "
           "report.external_scores; they are ranked but were not computed in this run.\n";
    out << "test: official test split.";
    if (cv)
        out << " cv: holdout-window cross-validation, averaged over " << exp.config().str("cv.repeats") << " repeats of "
            << exp.config().str("cv.folds") << " folds.";
    out << '\n';
    if (exp.config().list("learners.external").empty())
        out << "Learner pool is internal only (" << exp.config().str("learners.pool")
            << "). Absolute OWA values are not comparable to published results whose pools include "
               "ES-RNN and Auto-ARIMA forecasts.\n";

    const std::string text = out.str();
    std::ofstream(dir / "report.txt", std::ios::binary) << text;
    std::ofstream(dir / "report.csv", std::ios::binary) << render_csv(tables);
    return text;
}

} // namespace deforma
