#pragma once

// sMAPE, MASE, the Naive2 reference forecaster and OWA.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/common/log.hpp"

namespace deforma {

// Autocorrelation at `lag` with the full-sample mean and variance. Zero-variance input gives 0.
inline double autocorrelation(std::span<const double> x, std::size_t lag)
{
    const std::size_t n = x.size();
    if (n == 0 || lag >= n) return 0.0;
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) den += (x[i] - mean) * (x[i] - mean);
    if (den == 0.0) return 0.0;
    for (std::size_t i = lag; i < n; ++i) num += (x[i] - mean) * (x[i - lag] - mean);
    return num / den;
}

// 90% significance test on the autocorrelation at the seasonal lag.
inline bool seasonality_test(std::span<const double> x, int period)
{
    if (period <= 1 || x.size() < 3 * static_cast<std::size_t>(period)) return false;
    double s = 0.0;
    for (int i = 1; i < period; ++i) {
        const double r = autocorrelation(x, static_cast<std::size_t>(i));
        s += r * r;
    }
    const double limit = 1.645 * std::sqrt((1.0 + 2.0 * s) / static_cast<double>(x.size()));
    return std::abs(autocorrelation(x, static_cast<std::size_t>(period))) > limit;
}

// Centered moving average of window `period` (2 x period for even periods). Entries without a full
// window are NaN.
inline std::vector<double> centered_moving_average(std::span<const double> x, int period)
{
    const std::size_t n = x.size();
    std::vector<double> trend(n, std::nan(""));
    const std::size_t m = static_cast<std::size_t>(period);
    const std::size_t half = m / 2;
    if (n < m + (m % 2 == 0 ? 1 : 0)) return trend;
    // Weighted filter form (1/m inside, 1/(2m) at both ends for even m), summed forward in time.
    const double inner = 1.0 / static_cast<double>(m), edge = 0.5 / static_cast<double>(m);
    for (std::size_t t = half; t + half < n; ++t) {
        double acc = 0.0;
        for (std::size_t j = t - half; j <= t + half; ++j)
            acc += (m % 2 == 0 && (j == t - half || j == t + half) ? edge : inner) * x[j];
        trend[t] = acc;
    }
    return trend;
}

// Classical multiplicative seasonal adjustment used by Naive2, Comb and Theta.
class SeasonalAdjustment {
public:
    SeasonalAdjustment() = default;

    // Fits seasonal indices when `period` > 1, the seasonality test passes, and every value is positive.
    static SeasonalAdjustment fit(std::span<const double> x, int period)
    {
        SeasonalAdjustment adj;
        adj.period_ = std::max(period, 1);
        adj.length_ = x.size();
        if (!seasonality_test(x, period)) return adj;
        if (std::any_of(x.begin(), x.end(), [](double v) { return v <= 0.0; })) {
            log::info("seasonal adjustment: nonpositive values, falling back to non-seasonal");
            return adj;
        }
        const auto trend = centered_moving_average(x, period);
        std::vector<double> sums(period, 0.0);
        std::vector<int> counts(period, 0);
        for (std::size_t t = 0; t < x.size(); ++t) {
            if (std::isnan(trend[t])) continue;
            sums[t % period] += x[t] / trend[t];
            ++counts[t % period];
        }
        std::vector<double> idx(period);
        for (int j = 0; j < period; ++j) {
            if (counts[j] == 0) return adj;
            idx[j] = sums[j] / counts[j];
        }
        const double mean = std::accumulate(idx.begin(), idx.end(), 0.0) / period;
        for (double& v : idx) v /= mean;
        adj.indices_ = std::move(idx);
        return adj;
    }

    bool seasonal() const { return !indices_.empty(); }
    const std::vector<double>& indices() const { return indices_; }

    // Index for in-sample position t (0-based); positions >= length continue the cycle.
    double index_at(std::size_t t) const { return seasonal() ? indices_[t % period_] : 1.0; }

    std::vector<double> adjust(std::span<const double> x) const
    {
        std::vector<double> out(x.begin(), x.end());
        for (std::size_t t = 0; t < out.size(); ++t) out[t] /= index_at(t);
        return out;
    }

    // Multiplies an h-step forecast starting right after the fitted sample by the seasonal indices.
    std::vector<double> reseasonalize(std::vector<double> forecast) const
    {
        for (std::size_t h = 0; h < forecast.size(); ++h) forecast[h] *= index_at(length_ + h);
        return forecast;
    }

private:
    int period_ = 1;
    std::size_t length_ = 0;
    std::vector<double> indices_;
};

inline std::vector<double> naive2_forecast(std::span<const double> train, int seasonal_period, int horizon)
{
    if (horizon <= 0) return {};
    if (train.empty()) throw ArgumentError("naive2: empty training series");
    const auto adj = SeasonalAdjustment::fit(train, seasonal_period);
    const auto adjusted = adj.adjust(train);
    return adj.reseasonalize(std::vector<double>(static_cast<std::size_t>(horizon), adjusted.back()));
}

// Mean absolute error of the in-sample one-step-ahead Naive2 predictions.
inline double naive2_insample_mae(std::span<const double> train, int seasonal_period)
{
    if (train.size() < 2) throw ArgumentError("mase: training series needs at least 2 points");
    const auto adj = SeasonalAdjustment::fit(train, seasonal_period);
    const auto adjusted = adj.adjust(train);
    double acc = 0.0;
    for (std::size_t t = 1; t < train.size(); ++t) acc += std::abs(train[t] - adjusted[t - 1] * adj.index_at(t));
    return acc / static_cast<double>(train.size() - 1);
}

// Symmetric MAPE in percent; terms with |a| + |f| = 0 contribute 0.
inline double smape(std::span<const double> actual, std::span<const double> forecast)
{
    if (actual.size() != forecast.size() || actual.empty())
        throw ArgumentError("smape: length mismatch or empty input");
    double acc = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        const double den = std::abs(actual[t]) + std::abs(forecast[t]);
        if (den > 0.0) acc += 200.0 * std::abs(actual[t] - forecast[t]) / den;
    }
    return acc / static_cast<double>(actual.size());
}

inline double mase(std::span<const double> train, std::span<const double> actual, std::span<const double> forecast,
                   int seasonal_period)
{
    if (actual.size() != forecast.size() || actual.empty())
        throw ArgumentError("mase: length mismatch or empty input");
    const double scale = naive2_insample_mae(train, seasonal_period);
    if (!(scale > 0.0)) throw DegenerateMetric("mase: zero in-sample Naive2 error");
    double acc = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) acc += std::abs(actual[t] - forecast[t]);
    return acc / static_cast<double>(actual.size()) / scale;
}

struct SeriesErrors {
    double smape = 0.0;
    double mase = 0.0;
};

inline SeriesErrors evaluate_forecast(std::span<const double> train, std::span<const double> actual,
                                      std::span<const double> forecast, int seasonal_period)
{
    return {smape(actual, forecast), mase(train, actual, forecast, seasonal_period)};
}

// OWA = (sMAPE / sMAPE_ref + MASE / MASE_ref) / 2.
inline double owa_per_series(const SeriesErrors& method, const SeriesErrors& ref)
{
    if (!(ref.smape > 0.0) || !(ref.mase > 0.0)) throw DegenerateMetric("owa: zero reference error");
    return 0.5 * (method.smape / ref.smape + method.mase / ref.mase);
}

struct OwaSummary {
    double mean_owa = 0.0;
    double median_owa = 0.0;
    std::size_t used = 0;
    std::size_t excluded = 0;
};

inline double median(std::vector<double> v)
{
    if (v.empty()) throw ArgumentError("median of empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

// Mean OWA is the M4 aggregate (ratios of means); median OWA is the median of per-series OWA.
// Series whose reference errors vanish are excluded from both and counted.
inline OwaSummary aggregate_owa(std::span<const SeriesErrors> method, std::span<const SeriesErrors> ref)
{
    if (method.size() != ref.size()) throw ArgumentError("aggregate_owa: length mismatch");
    if (method.empty()) throw ArgumentError("aggregate_owa: empty input");
    OwaSummary out;
    double ms = 0.0, mm = 0.0, rs = 0.0, rm = 0.0;
    std::vector<double> per_series;
    per_series.reserve(method.size());
    for (std::size_t i = 0; i < method.size(); ++i) {
        if (!(ref[i].smape > 0.0) || !(ref[i].mase > 0.0)) {
            ++out.excluded;
            continue;
        }
        ms += method[i].smape;
        mm += method[i].mase;
        rs += ref[i].smape;
        rm += ref[i].mase;
        per_series.push_back(owa_per_series(method[i], ref[i]));
    }
    if (per_series.empty()) throw DegenerateMetric("aggregate_owa: every series is degenerate");
    if (out.excluded > 0) log::warn("aggregate_owa: excluded " + std::to_string(out.excluded) + " degenerate series");
    out.used = per_series.size();
    out.mean_owa = 0.5 * (ms / rs + mm / rm);
    out.median_owa = median(std::move(per_series));
    return out;
}

} // namespace deforma
