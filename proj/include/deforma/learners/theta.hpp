#pragma once

#include <span>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/learners/smoothing.hpp"
#include "deforma/metrics/metrics.hpp"

namespace deforma {

struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
};

// Least-squares line through (t, x_t), t = 0..n-1.
inline LinearFit fit_line(std::span<const double> x)
{
    const std::size_t n = x.size();
    if (n < 2) throw ArgumentError("linear regression needs at least 2 points");
    const double tm = (static_cast<double>(n) - 1.0) / 2.0;
    double xm = 0.0;
    for (double v : x) xm += v;
    xm /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double dt = static_cast<double>(t) - tm;
        sxy += dt * (x[t] - xm);
        sxx += dt * dt;
    }
    const double slope = sxy / sxx;
    return {xm - slope * tm, slope};
}

// Theta(0, 2): average of the extrapolated regression line and SES on the theta = 2 line,
// computed on the seasonally adjusted series.
inline std::vector<double> theta_forecast(std::span<const double> train, int horizon, int seasonal_period)
{
    if (train.size() < 4) throw ArgumentError("theta: series needs at least 4 points");
    const auto adj = SeasonalAdjustment::fit(train, seasonal_period);
    const auto x = adj.adjust(train);
    const auto line = fit_line(x);
    const std::size_t n = x.size();

    std::vector<double> theta2(n);
    for (std::size_t t = 0; t < n; ++t) theta2[t] = 2.0 * x[t] - (line.intercept + line.slope * static_cast<double>(t));
    const auto ses = ses_forecast(theta2, horizon);

    std::vector<double> out(ses.size());
    for (std::size_t h = 0; h < out.size(); ++h) {
        const double trend = line.intercept + line.slope * static_cast<double>(n - 1 + h + 1);
        out[h] = 0.5 * (trend + ses[h]);
    }
    return adj.reseasonalize(std::move(out));
}

} // namespace deforma
