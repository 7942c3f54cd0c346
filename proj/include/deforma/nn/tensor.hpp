#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "deforma/common/error.hpp"

namespace deforma::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
    return s + "]";
}

// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(shape_size(shape_), fill)
    {
        check_shape();
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        check_shape();
        if (data_.size() != shape_size(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
    }

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double* raw() { return data_.data(); }
    const double* raw() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return data_[(i * shape_[1] + j) * shape_[2] + k]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    Tensor& operator+=(const Tensor& other)
    {
        if (other.shape_ != shape_) throw ShapeError("tensor add: " + shape_string(shape_) + " vs " + shape_string(other.shape_));
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    void check_shape() const
    {
        for (auto d : shape_)
            if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

enum class Constraint { None, SumToZero, SumToOne };

inline std::string_view constraint_name(Constraint c)
{
    switch (c) {
    case Constraint::None: return "none";
    case Constraint::SumToZero: return "sum_to_zero";
    case Constraint::SumToOne: return "sum_to_one";
    }
    return "none";
}

inline Constraint parse_constraint(std::string_view s)
{
    if (s == "none") return Constraint::None;
    if (s == "sum_to_zero") return Constraint::SumToZero;
    if (s == "sum_to_one") return Constraint::SumToOne;
    throw ParseError("unknown constraint '" + std::string(s) + "'");
}

// A trainable tensor with its gradient accumulator. For constrained parameters the leading
// dimension indexes filters and every filter is constrained independently.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Constraint constraint = Constraint::None;

    Parameter() = default;
    Parameter(std::string n, Tensor v, Constraint c = Constraint::None)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), constraint(c)
    {
    }

    void zero_grad() { grad.fill(0.0); }

    std::size_t filters() const { return value.dim(0); }
    std::size_t filter_size() const { return value.size() / value.dim(0); }
};

// Euclidean projection of every filter onto {sum w = 0} or {sum w = 1}: shift all weights equally.
inline void apply_constraints(Parameter& p)
{
    if (p.constraint == Constraint::None) return;
    const double target = p.constraint == Constraint::SumToOne ? 1.0 : 0.0;
    const std::size_t n = p.filter_size();
    for (std::size_t f = 0; f < p.filters(); ++f) {
        auto w = p.value.data().subspan(f * n, n);
        const double sum = std::accumulate(w.begin(), w.end(), 0.0);
        const double shift = (target - sum) / static_cast<double>(n);
        for (double& v : w) v += shift;
    }
}

// Largest per-filter violation |sum w - target|.
inline double constraint_violation(const Parameter& p)
{
    if (p.constraint == Constraint::None) return 0.0;
    const double target = p.constraint == Constraint::SumToOne ? 1.0 : 0.0;
    const std::size_t n = p.filter_size();
    double worst = 0.0;
    for (std::size_t f = 0; f < p.filters(); ++f) {
        const auto w = p.value.data().subspan(f * n, n);
        worst = std::max(worst, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - target));
    }
    return worst;
}

} // namespace deforma::nn
