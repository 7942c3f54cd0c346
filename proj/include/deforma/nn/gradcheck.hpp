#pragma once

// Central finite-difference gradient checking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "deforma/nn/graph.hpp"
#include "deforma/nn/tensor.hpp"

namespace deforma::nn {

struct GradCheckTarget {
    Tensor* value;          // perturbed in place during the check
    const Tensor* analytic; // gradient computed by backward()
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    // Coordinates whose +-step perturbation changed a ReLU/max-pool branch decision.
    std::size_t skipped_kinks = 0;
};

struct GradCheckOptions {
    double step = 1e-4;
    // Relative error is |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
    // When nonzero, checks this many randomly chosen coordinates per target instead of all.
    std::size_t max_coords_per_target = 0;
    std::uint64_t seed = 1;
};

// `loss` builds a fresh graph with pattern tracking on, evaluates the forward pass and returns the
// scalar loss together with the graph's pattern hash.
struct Evaluation {
    double loss;
    std::uint64_t pattern;
};

inline GradCheckResult check_gradients(std::vector<GradCheckTarget> targets, const std::function<Evaluation()>& loss,
                                       const GradCheckOptions& opt = {})
{
    GradCheckResult res;
    std::mt19937_64 rng(opt.seed);
    const std::uint64_t base_pattern = loss().pattern;
    for (auto& t : targets) {
        std::vector<std::size_t> coords(t.value->size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (opt.max_coords_per_target && coords.size() > opt.max_coords_per_target) {
            for (std::size_t i = 0; i < opt.max_coords_per_target; ++i) {
                const std::size_t j = i + rng() % (coords.size() - i);
                std::swap(coords[i], coords[j]);
            }
            coords.resize(opt.max_coords_per_target);
        }
        for (std::size_t i : coords) {
            const double orig = (*t.value)[i];
            (*t.value)[i] = orig + opt.step;
            const auto up = loss();
            (*t.value)[i] = orig - opt.step;
            const auto down = loss();
            (*t.value)[i] = orig;
            if (up.pattern != base_pattern || down.pattern != base_pattern) {
                ++res.skipped_kinks;
                continue;
            }
            const double numeric = (up.loss - down.loss) / (2.0 * opt.step);
            const double analytic = (*t.analytic)[i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), opt.floor});
            res.max_relative_error = std::max(res.max_relative_error, std::abs(numeric - analytic) / denom);
            ++res.checked;
        }
    }
    return res;
}

} // namespace deforma::nn
