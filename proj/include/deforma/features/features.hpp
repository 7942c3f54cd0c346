#pragma once

// A fixed 16-feature description of a series, used by the FFORMA-N baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/common/log.hpp"
#include "deforma/common/text.hpp"
#include "deforma/data/series.hpp"
#include "deforma/metrics/metrics.hpp"

namespace deforma {

inline constexpr std::size_t kFeatureCount = 16;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "length",    "log_length",    "trend_strength",    "seasonal_strength",
    "acf1",      "acf1_diff",     "acf1_diff2",        "seasonal_acf",
    "spectral_entropy", "coefficient_of_variation", "linearity", "curvature",
    "stability", "lumpiness",     "crossing_rate",     "flat_spot_fraction"};

struct FeatureVector {
    std::array<double, kFeatureCount> values{};
};

namespace detail {

inline double mean_of(std::span<const double> x)
{
    return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance_of(std::span<const double> x)
{
    if (x.size() < 2) return 0.0;
    const double m = mean_of(x);
    double acc = 0.0;
    for (double v : x) acc += (v - m) * (v - m);
    return acc / static_cast<double>(x.size() - 1);
}

inline std::vector<double> diff(std::span<const double> x)
{
    std::vector<double> d;
    for (std::size_t i = 1; i < x.size(); ++i) d.push_back(x[i] - x[i - 1]);
    return d;
}

// 1 - Var(a) / Var(b) clipped to [0, 1]; zero-variance denominators give 0.
inline double strength(double var_remainder, double var_total)
{
    if (!(var_total > 0.0)) return 0.0;
    return std::clamp(1.0 - var_remainder / var_total, 0.0, 1.0);
}

// Normalized Shannon entropy of the periodogram of the demeaned series.
inline double spectral_entropy(std::span<const double> x)
{
    const std::size_t n = x.size();
    const double m = mean_of(x);
    const std::size_t k_max = n / 2;
    if (k_max < 2) return 0.0;
    std::vector<double> power(k_max);
    double total = 0.0;
    for (std::size_t k = 1; k <= k_max; ++k) {
        double re = 0.0, im = 0.0;
        const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        for (std::size_t t = 0; t < n; ++t) {
            re += (x[t] - m) * std::cos(w * static_cast<double>(t));
            im -= (x[t] - m) * std::sin(w * static_cast<double>(t));
        }
        power[k - 1] = re * re + im * im;
        total += power[k - 1];
    }
    if (!(total > 0.0)) return 0.0;
    double h = 0.0;
    for (double p : power) {
        const double q = p / total;
        if (q > 0.0) h -= q * std::log(q);
    }
    return std::clamp(h / std::log(static_cast<double>(k_max)), 0.0, 1.0);
}

// Variance across non-overlapping windows of the window means (stability) or variances (lumpiness).
inline std::pair<double, double> tiled_moments(std::span<const double> z, std::size_t width)
{
    std::vector<double> means, vars;
    for (std::size_t start = 0; start + width <= z.size(); start += width) {
        const auto w = z.subspan(start, width);
        means.push_back(mean_of(w));
        vars.push_back(variance_of(w));
    }
    return {variance_of(means), variance_of(vars)};
}

} // namespace detail

inline FeatureVector extract_features(std::span<const double> x, int seasonal_period)
{
    using namespace detail;
    const std::size_t n = x.size();
    if (n < 3) throw ArgumentError("features: series needs at least 3 points");
    FeatureVector out;
    auto& f = out.values;

    f[0] = static_cast<double>(n);
    f[1] = std::log(static_cast<double>(n));

    // Additive classical decomposition. Period 1 uses a centered window of 3 for the trend.
    const int period = std::max(seasonal_period, 1);
    const int window = period > 1 ? period : 3;
    const auto trend = centered_moving_average(x, window);
    std::vector<double> detrended(n, std::nan(""));
    for (std::size_t t = 0; t < n; ++t)
        if (!std::isnan(trend[t])) detrended[t] = x[t] - trend[t];

    std::vector<double> seasonal(n, 0.0);
    if (period > 1) {
        std::vector<double> sums(period, 0.0);
        std::vector<int> counts(period, 0);
        for (std::size_t t = 0; t < n; ++t) {
            if (std::isnan(detrended[t])) continue;
            sums[t % period] += detrended[t];
            ++counts[t % period];
        }
        double mean_idx = 0.0;
        for (int j = 0; j < period; ++j) {
            sums[j] = counts[j] ? sums[j] / counts[j] : 0.0;
            mean_idx += sums[j];
        }
        mean_idx /= period;
        for (std::size_t t = 0; t < n; ++t) seasonal[t] = sums[t % period] - mean_idx;
    }

    std::vector<double> remainder, deseasonalized, detrended_only, trend_values;
    for (std::size_t t = 0; t < n; ++t) {
        if (std::isnan(trend[t])) continue;
        remainder.push_back(x[t] - trend[t] - seasonal[t]);
        deseasonalized.push_back(x[t] - seasonal[t]);
        detrended_only.push_back(x[t] - trend[t]);
        trend_values.push_back(trend[t]);
    }
    const double var_r = variance_of(remainder);
    f[2] = strength(var_r, variance_of(deseasonalized));
    f[3] = period > 1 ? strength(var_r, variance_of(detrended_only)) : 0.0;

    const auto d1 = diff(x);
    const auto d2 = diff(d1);
    f[4] = autocorrelation(x, 1);
    f[5] = autocorrelation(d1, 1);
    f[6] = autocorrelation(d2, 1);
    f[7] = period > 1 ? autocorrelation(x, static_cast<std::size_t>(period)) : 0.0;
    f[8] = spectral_entropy(x);

    const double m = mean_of(x);
    const double sd = std::sqrt(variance_of(x));
    f[9] = m != 0.0 ? sd / std::abs(m) : 0.0;

    // Linearity and curvature: coefficients of orthogonal linear and quadratic terms fitted to the
    // trend, on the standardized scale.
    if (trend_values.size() >= 3 && sd > 0.0) {
        const std::size_t k = trend_values.size();
        std::vector<double> p1(k), p2(k), y(k);
        for (std::size_t i = 0; i < k; ++i) {
            p1[i] = static_cast<double>(i) - (static_cast<double>(k) - 1.0) / 2.0;
            p2[i] = p1[i] * p1[i];
            y[i] = (trend_values[i] - m) / sd;
        }
        const double p2m = mean_of(p2);
        for (double& v : p2) v -= p2m;
        auto project = [&](const std::vector<double>& basis) {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                num += basis[i] * y[i];
                den += basis[i] * basis[i];
            }
            return den > 0.0 ? num / std::sqrt(den) : 0.0;
        };
        f[10] = project(p1);
        f[11] = project(p2);
    }

    if (sd > 0.0) {
        std::vector<double> z(n);
        for (std::size_t t = 0; t < n; ++t) z[t] = (x[t] - m) / sd;
        const std::size_t width = period > 1 ? static_cast<std::size_t>(period) : 10;
        if (n >= 2 * width) {
            const auto [stability, lumpiness] = tiled_moments(z, width);
            f[12] = stability;
            f[13] = lumpiness;
        }
    }

    std::vector<double> sorted(x.begin(), x.end());
    const double med = median(sorted);
    std::size_t crossings = 0;
    for (std::size_t t = 1; t < n; ++t)
        if ((x[t - 1] <= med) != (x[t] <= med)) ++crossings;
    f[14] = static_cast<double>(crossings) / static_cast<double>(n - 1);

    // Longest run inside one of ten equal-width bins, as a fraction of the length.
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (*hi > *lo) {
        auto bin = [&](double v) { return std::min(9, static_cast<int>(10.0 * (v - *lo) / (*hi - *lo))); };
        std::size_t run = 1, longest = 1;
        for (std::size_t t = 1; t < n; ++t) {
            run = bin(x[t]) == bin(x[t - 1]) ? run + 1 : 1;
            longest = std::max(longest, run);
        }
        f[15] = static_cast<double>(longest) / static_cast<double>(n);
    } else {
        f[15] = 1.0;
    }

    for (double& v : f)
        if (!std::isfinite(v)) v = 0.0;
    return out;
}

inline FeatureVector extract_features(const TimeSeries& s) { return extract_features(s.train, s.period()); }

// Per-feature z-score fitted on training rows. Zero-variance features pass through unscaled.
struct FeatureScaler {
    std::array<double, kFeatureCount> mean{};
    std::array<double, kFeatureCount> scale{};

    static FeatureScaler fit(std::span<const FeatureVector> rows)
    {
        if (rows.size() < 2) throw ArgumentError("feature scaler: need at least 2 series");
        FeatureScaler sc;
        std::size_t passthrough = 0;
        for (std::size_t j = 0; j < kFeatureCount; ++j) {
            std::vector<double> col;
            for (const auto& r : rows) col.push_back(r.values[j]);
            const double m = detail::mean_of(col);
            double var = 0.0;
            for (double v : col) var += (v - m) * (v - m);
            var /= static_cast<double>(col.size());
            if (var > 0.0) {
                sc.mean[j] = m;
                sc.scale[j] = std::sqrt(var);
            } else {
                sc.mean[j] = 0.0;
                sc.scale[j] = 1.0;
                ++passthrough;
            }
        }
        if (passthrough > 0) log::info("feature scaler: " + std::to_string(passthrough) + " constant features passed through");
        return sc;
    }

    FeatureVector apply(const FeatureVector& v) const
    {
        FeatureVector out;
        for (std::size_t j = 0; j < kFeatureCount; ++j) out.values[j] = (v.values[j] - mean[j]) / scale[j];
        return out;
    }

    std::vector<FeatureVector> apply(std::span<const FeatureVector> rows) const
    {
        std::vector<FeatureVector> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(apply(r));
        return out;
    }
};

inline void write_features(std::span<const std::string> ids, std::span<const FeatureVector> rows,
                           const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "series_id";
    for (auto name : kFeatureNames) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << ids[i];
        for (double v : rows[i].values) out << ',' << text::exact(v);
        out << '\n';
    }
}

} // namespace deforma
