#pragma once

// Base-learner registry, precomputed forecast files and pooling into a ForecastMatrix.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/common/log.hpp"
#include "deforma/common/text.hpp"
#include "deforma/data/series.hpp"
#include "deforma/learners/forecast_matrix.hpp"
#include "deforma/learners/smoothing.hpp"
#include "deforma/learners/theta.hpp"
#include "deforma/metrics/metrics.hpp"

namespace deforma {

inline const std::vector<std::string>& internal_learners()
{
    static const std::vector<std::string> names{"naive", "naive2", "ses", "holt", "damped", "comb", "theta"};
    return names;
}

inline std::size_t min_train_length(const std::string& learner)
{
    if (learner == "naive" || learner == "naive2") return 1;
    if (learner == "ses") return 2;
    if (learner == "holt" || learner == "damped" || learner == "comb") return 3;
    if (learner == "theta") return 4;
    throw ConfigError("unknown internal learner '" + learner + "'");
}

inline std::vector<double> internal_forecast(const std::string& learner, std::span<const double> train,
                                             int seasonal_period, int horizon)
{
    if (learner == "naive") return std::vector<double>(static_cast<std::size_t>(horizon), train.back());
    if (learner == "naive2") return naive2_forecast(train, seasonal_period, horizon);
    if (learner == "ses") return ses_forecast(train, horizon);
    if (learner == "holt") return holt_forecast(train, horizon, false);
    if (learner == "damped") return holt_forecast(train, horizon, true);
    if (learner == "comb") return comb_forecast(train, horizon, seasonal_period);
    if (learner == "theta") return theta_forecast(train, horizon, seasonal_period);
    throw ConfigError("unknown internal learner '" + learner + "'");
}

using ForecastMap = std::map<std::string, std::vector<double>>;

// Reads an (id, f1..fh) file and checks it covers `dataset` with horizon-length rows.
// Ids not in the dataset are ignored.
inline ForecastMap load_precomputed(const std::string& learner_id, const std::filesystem::path& csv_path,
                                    std::span<const TimeSeries> dataset)
{
    ForecastMap all;
    for (auto& row : detail::read_value_rows(csv_path)) all[row.id] = std::move(row.values);
    ForecastMap out;
    for (const auto& s : dataset) {
        auto it = all.find(s.id);
        if (it == all.end()) throw LoadError(learner_id + ": no forecast for series " + s.id + " in " + csv_path.string());
        if (static_cast<int>(it->second.size()) != s.horizon())
            throw LoadError(learner_id + ": forecast for series " + s.id + " has length " +
                            std::to_string(it->second.size()) + ", expected " + std::to_string(s.horizon()));
        out.emplace(s.id, std::move(it->second));
    }
    if (all.size() > out.size())
        log::info(learner_id + ": ignored " + std::to_string(all.size() - out.size()) + " extra ids in " +
                  csv_path.string());
    return out;
}

// Writes forecasts in the same (id, f1..fh) layout load_precomputed reads.
inline void write_forecasts(const ForecastMap& forecasts, std::span<const TimeSeries> order,
                            const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path.string());
    for (const auto& s : order) {
        const auto& f = forecasts.at(s.id);
        out << s.id;
        for (double v : f) out << ',' << text::exact(v);
        out << '\n';
    }
}

struct LearnerSpec {
    std::string id;
    // Either an internal learner name, or empty when `csv_path` supplies precomputed forecasts.
    std::string internal;
    std::filesystem::path csv_path;
};

// Learner order in the result follows `config`.
inline ForecastMatrix pool_forecasts(std::span<const TimeSeries> dataset, std::span<const LearnerSpec> config)
{
    if (config.size() < 2) throw ConfigError("pool: need at least 2 learners");
    std::set<std::string> seen;
    for (const auto& spec : config)
        if (!seen.insert(spec.id).second) throw ConfigError("pool: duplicate learner id '" + spec.id + "'");

    ForecastMatrix m;
    for (const auto& spec : config) m.learner_ids.push_back(spec.id);
    for (const auto& s : dataset) m.series_ids.push_back(s.id);
    m.rows.assign(dataset.size(), std::vector<std::vector<double>>(config.size()));

    for (std::size_t l = 0; l < config.size(); ++l) {
        const auto& spec = config[l];
        if (spec.internal.empty()) {
            auto loaded = load_precomputed(spec.id, spec.csv_path, dataset);
            for (std::size_t s = 0; s < dataset.size(); ++s) m.rows[s][l] = std::move(loaded.at(dataset[s].id));
        } else {
            for (std::size_t s = 0; s < dataset.size(); ++s)
                m.rows[s][l] = internal_forecast(spec.internal, dataset[s].train, dataset[s].period(), dataset[s].horizon());
        }
    }
    return m;
}

} // namespace deforma
