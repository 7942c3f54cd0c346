#pragma once

// Exponential smoothing forecasters: SES, Holt (optionally damped) and Comb S-H-D.

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/metrics/metrics.hpp"

namespace deforma {

struct SmoothingParams {
    double alpha = 0.0;
    std::optional<double> beta;
    std::optional<double> phi;
    std::optional<std::vector<double>> seasonal_indices;
};

namespace detail {

// Parameters are searched on a grid of hundredths: a coarse pass with step 0.05 over [lo, hi],
// then a 0.01 pass within +-0.05 of the coarse optimum. Ties keep the first (smallest) point.
struct GridRange {
    int lo;
    int hi;
};

template <std::size_t N, typename Objective>
std::array<double, N> grid_minimize(const std::array<GridRange, N>& ranges, Objective&& objective)
{
    std::array<int, N> best{};
    double best_value = std::numeric_limits<double>::infinity();
    std::array<double, N> point{};

    auto sweep = [&](const std::array<GridRange, N>& r, int step) {
        std::array<int, N> cur{};
        for (std::size_t d = 0; d < N; ++d) cur[d] = r[d].lo;
        while (true) {
            for (std::size_t d = 0; d < N; ++d) point[d] = cur[d] / 100.0;
            const double v = objective(point);
            if (v < best_value) {
                best_value = v;
                best = cur;
            }
            std::size_t d = 0;
            for (; d < N; ++d) {
                if (cur[d] == r[d].hi) {
                    cur[d] = r[d].lo;
                    continue;
                }
                cur[d] = std::min(cur[d] + step, r[d].hi);
                break;
            }
            if (d == N) break;
        }
    };

    sweep(ranges, 5);
    std::array<GridRange, N> fine{};
    for (std::size_t d = 0; d < N; ++d)
        fine[d] = {std::max(ranges[d].lo, best[d] - 5), std::min(ranges[d].hi, best[d] + 5)};
    sweep(fine, 1);

    std::array<double, N> out{};
    for (std::size_t d = 0; d < N; ++d) out[d] = best[d] / 100.0;
    return out;
}

// One-step in-sample SSE of SES; returns the final level through `level`.
inline double ses_pass(std::span<const double> x, double alpha, double* level = nullptr)
{
    double l = x[0];
    double sse = 0.0;
    for (std::size_t t = 1; t < x.size(); ++t) {
        const double e = x[t] - l;
        sse += e * e;
        l += alpha * e;
    }
    if (level) *level = l;
    return sse;
}

inline double initial_trend(std::span<const double> x)
{
    const std::size_t k = std::min<std::size_t>(4, x.size() - 1);
    return (x[k] - x[0]) / static_cast<double>(k);
}

struct HoltState {
    double level;
    double trend;
};

inline double holt_pass(std::span<const double> x, double alpha, double beta, double phi, HoltState* state = nullptr)
{
    double l = x[0];
    double b = initial_trend(x);
    double sse = 0.0;
    for (std::size_t t = 1; t < x.size(); ++t) {
        const double pred = l + phi * b;
        const double e = x[t] - pred;
        sse += e * e;
        const double next = alpha * x[t] + (1.0 - alpha) * pred;
        b = beta * (next - l) + (1.0 - beta) * phi * b;
        l = next;
    }
    if (state) *state = {l, b};
    return sse;
}

} // namespace detail

inline SmoothingParams fit_ses(std::span<const double> train)
{
    if (train.size() < 2) throw ArgumentError("ses: series needs at least 2 points");
    const auto best = detail::grid_minimize<1>({{{0, 100}}}, [&](const auto& p) { return detail::ses_pass(train, p[0]); });
    return {best[0], std::nullopt, std::nullopt, std::nullopt};
}

inline std::vector<double> ses_forecast(std::span<const double> train, int horizon, const SmoothingParams& params)
{
    if (train.size() < 2) throw ArgumentError("ses: series needs at least 2 points");
    double level = 0.0;
    detail::ses_pass(train, params.alpha, &level);
    return std::vector<double>(static_cast<std::size_t>(std::max(horizon, 0)), level);
}

inline std::vector<double> ses_forecast(std::span<const double> train, int horizon)
{
    return ses_forecast(train, horizon, fit_ses(train));
}

// Damped fits search phi over [0.80, 0.98]; undamped fits fix phi = 1.
inline SmoothingParams fit_holt(std::span<const double> train, bool damped)
{
    if (train.size() < 3) throw ArgumentError("holt: series needs at least 3 points");
    if (!damped) {
        const auto best = detail::grid_minimize<2>(
            {{{0, 100}, {0, 100}}}, [&](const auto& p) { return detail::holt_pass(train, p[0], p[1], 1.0); });
        return {best[0], best[1], std::nullopt, std::nullopt};
    }
    const auto best = detail::grid_minimize<3>(
        {{{0, 100}, {0, 100}, {80, 98}}}, [&](const auto& p) { return detail::holt_pass(train, p[0], p[1], p[2]); });
    return {best[0], best[1], best[2], std::nullopt};
}

// Level plus (phi + phi^2 + ... + phi^h) times the trend; phi = 1 when params.phi is unset.
inline std::vector<double> holt_forecast(std::span<const double> train, int horizon, const SmoothingParams& params)
{
    if (train.size() < 3) throw ArgumentError("holt: series needs at least 3 points");
    const double phi = params.phi.value_or(1.0);
    detail::HoltState st{};
    detail::holt_pass(train, params.alpha, params.beta.value_or(0.0), phi, &st);
    std::vector<double> out(static_cast<std::size_t>(std::max(horizon, 0)));
    double damp = 0.0, power = 1.0;
    for (auto& v : out) {
        power *= phi;
        damp += power;
        v = st.level + damp * st.trend;
    }
    return out;
}

inline std::vector<double> holt_forecast(std::span<const double> train, int horizon, bool damped)
{
    return holt_forecast(train, horizon, fit_holt(train, damped));
}

// Mean of SES, Holt and damped Holt on the seasonally adjusted series, re-seasonalized.
inline std::vector<double> comb_forecast(std::span<const double> train, int horizon, int seasonal_period)
{
    const auto adj = SeasonalAdjustment::fit(train, seasonal_period);
    const auto x = adj.adjust(train);
    const auto a = ses_forecast(x, horizon);
    const auto b = holt_forecast(x, horizon, false);
    const auto c = holt_forecast(x, horizon, true);
    std::vector<double> out(a.size());
    for (std::size_t h = 0; h < out.size(); ++h) out[h] = (a[h] + b[h] + c[h]) / 3.0;
    return adj.reseasonalize(std::move(out));
}

} // namespace deforma
