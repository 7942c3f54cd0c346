#pragma once

#include <cmath>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/nn/tensor.hpp"

namespace deforma::nn {

// Adam with bias correction. Constrained parameters are projected back onto their constraint set
// after every update.
class Adam {
public:
    struct Moments {
        Tensor m;
        Tensor v;
    };

    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : learning_rate(learning_rate), beta1(beta1), beta2(beta2), epsilon(epsilon)
    {
    }

    double learning_rate;
    double beta1;
    double beta2;
    double epsilon;

    long step_count() const { return step_; }
    const std::vector<Moments>& moments() const { return moments_; }

    void step(std::vector<Parameter>& params)
    {
        if (moments_.empty()) {
            for (const auto& p : params) moments_.push_back({Tensor(p.value.shape()), Tensor(p.value.shape())});
        }
        if (moments_.size() != params.size()) throw StateError("adam: parameter list changed between steps");
        ++step_;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            auto& st = moments_[i];
            if (st.m.shape() != p.value.shape()) throw ShapeError("adam: moment shape mismatch for " + p.name);
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad[j];
                st.m[j] = beta1 * st.m[j] + (1.0 - beta1) * g;
                st.v[j] = beta2 * st.v[j] + (1.0 - beta2) * g * g;
                p.value[j] -= learning_rate * (st.m[j] / c1) / (std::sqrt(st.v[j] / c2) + epsilon);
            }
            apply_constraints(p);
        }
    }

private:
    long step_ = 0;
    std::vector<Moments> moments_;
};

} // namespace deforma::nn
