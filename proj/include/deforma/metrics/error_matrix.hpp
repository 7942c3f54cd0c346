#pragma once

// Per-series error contributions F_i (per-series OWA of each learner against Naive2).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/common/log.hpp"
#include "deforma/common/text.hpp"
#include "deforma/learners/forecast_matrix.hpp"
#include "deforma/metrics/metrics.hpp"

namespace deforma {

struct ErrorMatrix {
    std::vector<std::string> learner_ids;
    std::vector<std::string> series_ids;
    std::vector<std::vector<double>> rows;
    // Series dropped because their reference errors were degenerate.
    std::vector<std::string> excluded;

    std::size_t n_learners() const { return learner_ids.size(); }
    std::size_t n_series() const { return series_ids.size(); }

    const std::vector<double>& row(const std::string& series_id) const
    {
        const auto it = std::find(series_ids.begin(), series_ids.end(), series_id);
        if (it == series_ids.end()) throw ArgumentError("error matrix: no row for series " + series_id);
        return rows[static_cast<std::size_t>(it - series_ids.begin())];
    }

    void validate() const
    {
        if (rows.size() != series_ids.size()) throw ValidationError("error matrix: row count mismatch");
        for (std::size_t s = 0; s < rows.size(); ++s) {
            if (rows[s].size() != learner_ids.size())
                throw ValidationError("error matrix: series " + series_ids[s] + " has wrong learner count");
            for (double v : rows[s])
                if (!std::isfinite(v) || v < 0.0)
                    throw ValidationError("error matrix: series " + series_ids[s] + " has an invalid entry");
        }
    }
};

struct SeriesTruth {
    std::span<const double> train;
    std::span<const double> actual;
};

// Entry (s, l) = owa_per_series(learner l, Naive2) on series s. Series with a degenerate
// reference are excluded and listed in `excluded`.
inline ErrorMatrix build_error_matrix(const ForecastMatrix& forecasts, std::span<const SeriesTruth> truths,
                                      int seasonal_period)
{
    if (truths.size() != forecasts.n_series()) throw ArgumentError("build_error_matrix: series count mismatch");
    ErrorMatrix out;
    out.learner_ids = forecasts.learner_ids;
    for (std::size_t s = 0; s < truths.size(); ++s) {
        const auto& sid = forecasts.series_ids[s];
        const auto& actual = truths[s].actual;
        const auto& row = forecasts.rows[s];
        for (std::size_t l = 0; l < forecasts.n_learners(); ++l) {
            if (l >= row.size() || row[l].size() != actual.size())
                throw ArgumentError("build_error_matrix: series " + sid + " is missing a forecast for learner " +
                                    forecasts.learner_ids[l]);
        }
        const auto ref_fc = naive2_forecast(truths[s].train, seasonal_period, static_cast<int>(actual.size()));
        std::vector<double> errors(forecasts.n_learners());
        try {
            const auto ref = evaluate_forecast(truths[s].train, actual, ref_fc, seasonal_period);
            for (std::size_t l = 0; l < forecasts.n_learners(); ++l)
                errors[l] = owa_per_series(evaluate_forecast(truths[s].train, actual, row[l], seasonal_period), ref);
        } catch (const DegenerateMetric&) {
            out.excluded.push_back(sid);
            continue;
        }
        out.series_ids.push_back(sid);
        out.rows.push_back(std::move(errors));
    }
    if (!out.excluded.empty())
        log::warn("build_error_matrix: excluded " + std::to_string(out.excluded.size()) + " degenerate series");
    return out;
}

inline void write_error_matrix(const ErrorMatrix& m, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "series_id";
    for (const auto& l : m.learner_ids) out << ',' << l;
    out << '\n';
    for (std::size_t s = 0; s < m.n_series(); ++s) {
        out << m.series_ids[s];
        for (double v : m.rows[s]) out << ',' << text::exact(v);
        out << '\n';
    }
}

inline ErrorMatrix read_error_matrix(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    ErrorMatrix m;
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    const auto header = text::split_csv(line);
    for (std::size_t i = 1; i < header.size(); ++i) m.learner_ids.emplace_back(header[i]);
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        const auto cells = text::split_csv(line);
        if (cells.size() != header.size()) throw ParseError(path.string() + ": ragged row " + std::string(cells[0]));
        std::vector<double> row;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            const auto v = text::parse_double(cells[i]);
            if (!v) throw ParseError(path.string() + ": bad value in row " + std::string(cells[0]));
            row.push_back(*v);
        }
        m.series_ids.emplace_back(cells[0]);
        m.rows.push_back(std::move(row));
    }
    m.validate();
    return m;
}

} // namespace deforma
