#pragma once

// The DeFORMA network: two constrained temporal heads on the raw input, a 1D ResNet-18 backbone
// with a capped number of stride-2 reductions, and a softmax weighting output over base learners.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/common/text.hpp"
#include "deforma/data/series.hpp"
#include "deforma/nn/checkpoint.hpp"
#include "deforma/nn/graph.hpp"
#include "deforma/nn/ops.hpp"
#include "deforma/nn/tensor.hpp"

namespace deforma {

enum class HeadKind { Differencing, MovingAverage };

struct TemporalHeadSpec {
    HeadKind kind;
    int filters;
    int kernel;
    nn::Constraint constraint;

    // Differencing: kernel S + 1, weights sum to zero. Moving average: kernel S, weights sum to one.
    static TemporalHeadSpec make(HeadKind kind, int filters, int seasonal_period)
    {
        if (seasonal_period < 1) throw ArgumentError("temporal head: seasonal period must be >= 1");
        if (kind == HeadKind::Differencing) return {kind, filters, seasonal_period + 1, nn::Constraint::SumToZero};
        return {kind, filters, seasonal_period, nn::Constraint::SumToOne};
    }
};

struct ArchitectureConfig {
    int halvings = 5;
    int conv_filters = 64;
    int meta_features = 40;
    int max_length = 32;
    double dropout_rate = 0.1;
    int n_learners = 2;

    static constexpr int kHalvingsGrid[] = {1, 2, 3, 4, 5};
    static constexpr int kMetaFeaturesGrid[] = {32, 40, 64, 96, 128};
    static constexpr int kMaxLengthGrid[] = {32, 64, 96, 128, 160, 192, 224, 256, 288, 320, 352, 384, 416};

    void validate() const
    {
        if (halvings < 1 || halvings > 5) throw ConfigError("architecture: halvings must lie in [1, 5]");
        if (conv_filters < 1) throw ConfigError("architecture: conv_filters must be positive");
        if (meta_features < 1) throw ConfigError("architecture: meta_features must be positive");
        if (max_length < 1) throw ConfigError("architecture: max_length must be positive");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("architecture: dropout_rate must lie in [0, 1)");
        if (n_learners < 2) throw ConfigError("architecture: need at least 2 learners");
    }
};

struct WeightVector {
    std::vector<double> weights;

    std::size_t size() const { return weights.size(); }
    double operator[](std::size_t i) const { return weights[i]; }

    void validate(double tol = 1e-6) const
    {
        double s = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("weight vector: entry outside [0, 1]");
            s += w;
        }
        if (std::abs(s - 1.0) > tol) throw ValidationError("weight vector: weights do not sum to 1");
    }

    static WeightVector uniform(std::size_t k) { return {std::vector<double>(k, 1.0 / static_cast<double>(k))}; }
};

// Stride-2 sites in network order: stem conv, stem pool, then the first block of stages 2, 3, 4.
inline constexpr int kStrideSites = 5;

class DeformaModel {
public:
    DeformaModel() = default;

    static DeformaModel build(const ArchitectureConfig& arch, int seasonal_period, std::uint64_t seed)
    {
        arch.validate();
        DeformaModel m;
        m.arch_ = arch;
        m.period_ = seasonal_period;
        m.seed_ = seed;
        m.diff_spec_ = TemporalHeadSpec::make(HeadKind::Differencing, arch.conv_filters, seasonal_period);
        m.ma_spec_ = TemporalHeadSpec::make(HeadKind::MovingAverage, arch.conv_filters, seasonal_period);
        if (arch.max_length < m.diff_spec_.kernel)
            throw ConfigError("architecture: max_length " + std::to_string(arch.max_length) +
                              " is shorter than the differencing kernel " + std::to_string(m.diff_spec_.kernel));
        for (std::size_t len : m.feature_map_lengths())
            if (len < 1) throw ConfigError("architecture: a feature map would have length < 1");
        m.init_parameters(seed);
        return m;
    }

    const ArchitectureConfig& architecture() const { return arch_; }
    int seasonal_period() const { return period_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t n_learners() const { return static_cast<std::size_t>(arch_.n_learners); }

    std::vector<nn::Parameter>& parameters() { return params_; }
    const std::vector<nn::Parameter>& parameters() const { return params_; }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    const nn::Parameter& parameter(const std::string& name) const
    {
        for (const auto& p : params_)
            if (p.name == name) return p;
        throw ArgumentError("model has no parameter " + name);
    }
    nn::Parameter& parameter(const std::string& name)
    {
        return const_cast<nn::Parameter&>(std::as_const(*this).parameter(name));
    }

    int stride_at(int site) const { return site < arch_.halvings ? 2 : 1; }

    // Temporal length after each stage of the network: heads, stem conv, stem pool, stages 1..4.
    std::vector<std::size_t> feature_map_lengths() const
    {
        std::vector<std::size_t> lens;
        std::size_t len = static_cast<std::size_t>(arch_.max_length);
        lens.push_back(len); // heads keep the length (Same padding)
        auto reduce = [&](int site) {
            const std::size_t s = static_cast<std::size_t>(stride_at(site));
            len = (len + s - 1) / s;
            lens.push_back(len);
        };
        reduce(0);
        reduce(1);
        lens.push_back(len); // stage 1
        reduce(2);
        reduce(3);
        reduce(4);
        return lens;
    }

    std::vector<std::string> layer_descriptions() const
    {
        std::vector<std::string> out;
        const auto F = std::to_string(arch_.conv_filters);
        out.push_back("diff_head conv " + F + "x1x" + std::to_string(diff_spec_.kernel) + " sum_to_zero, layer_norm, spatial_dropout");
        out.push_back("ma_head conv " + F + "x1x" + std::to_string(ma_spec_.kernel) + " sum_to_one, layer_norm, spatial_dropout");
        out.push_back("concat channels");
        out.push_back("stem conv k7 stride " + std::to_string(stride_at(0)) + ", layer_norm, relu");
        out.push_back("stem max_pool k3 stride " + std::to_string(stride_at(1)));
        for (int stage = 1; stage <= 4; ++stage)
            for (int block = 1; block <= 2; ++block) {
                const int s = block == 1 && stage > 1 ? stride_at(stage) : 1;
                out.push_back("stage" + std::to_string(stage) + ".block" + std::to_string(block) + " basic stride " +
                              std::to_string(s));
            }
        out.push_back("global_max_pool");
        out.push_back("dropout");
        out.push_back("dense " + std::to_string(arch_.meta_features) + " relu");
        out.push_back("dense " + std::to_string(arch_.n_learners) + " softmax");
        return out;
    }

    // Trainable forward pass: parameters join the graph and receive gradients on backward().
    nn::Var forward(nn::Graph& g, const nn::Tensor& input)
    {
        return run(g, input, [&g](nn::Parameter& p) { return g.parameter(p); });
    }

    // Frozen forward pass: parameters enter as constants, the model is not touched.
    nn::Var forward(nn::Graph& g, const nn::Tensor& input) const
    {
        return run(g, input, [&g](const nn::Parameter& p) { return g.input(p.value); });
    }

    // Assembles [B x 1 x max_length] from padded inputs.
    nn::Tensor make_batch(std::span<const PaddedInput* const> inputs) const
    {
        const std::size_t L = static_cast<std::size_t>(arch_.max_length);
        nn::Tensor x({inputs.size(), 1, L});
        for (std::size_t b = 0; b < inputs.size(); ++b) {
            if (inputs[b]->values.size() != L)
                throw ShapeError("deforma: input length " + std::to_string(inputs[b]->values.size()) +
                                 " != max_length " + std::to_string(L));
            std::copy(inputs[b]->values.begin(), inputs[b]->values.end(), x.raw() + b * L);
        }
        return x;
    }

    WeightVector predict_weights(const PaddedInput& input) const
    {
        const PaddedInput* one[] = {&input};
        return predict_weights(std::span<const PaddedInput* const>(one))[0];
    }

    std::vector<WeightVector> predict_weights(std::span<const PaddedInput* const> inputs) const
    {
        nn::Graph g(false);
        const auto out = forward(g, make_batch(inputs));
        const auto& v = out.value();
        std::vector<WeightVector> res(inputs.size());
        for (std::size_t b = 0; b < inputs.size(); ++b)
            res[b].weights.assign(v.raw() + b * n_learners(), v.raw() + (b + 1) * n_learners());
        return res;
    }

    nn::Checkpoint to_checkpoint() const
    {
        nn::Checkpoint ck;
        ck.seed = seed_;
        ck.meta = {{"model", "deforma"},
                   {"seasonal_period", std::to_string(period_)},
                   {"halvings", std::to_string(arch_.halvings)},
                   {"conv_filters", std::to_string(arch_.conv_filters)},
                   {"meta_features", std::to_string(arch_.meta_features)},
                   {"max_length", std::to_string(arch_.max_length)},
                   {"dropout_rate", text::exact(arch_.dropout_rate)},
                   {"n_learners", std::to_string(arch_.n_learners)}};
        ck.layers = layer_descriptions();
        ck.params = params_;
        return ck;
    }

    static DeformaModel from_checkpoint(const nn::Checkpoint& ck)
    {
        if (ck.meta_value("model") != "deforma") throw ParseError("checkpoint is not a DeFORMA model");
        auto num = [&](const char* key) { return std::stoi(ck.meta_value(key)); };
        ArchitectureConfig arch;
        arch.halvings = num("halvings");
        arch.conv_filters = num("conv_filters");
        arch.meta_features = num("meta_features");
        arch.max_length = num("max_length");
        arch.dropout_rate = std::stod(ck.meta_value("dropout_rate"));
        arch.n_learners = num("n_learners");
        auto m = build(arch, num("seasonal_period"), ck.seed);
        if (ck.params.size() != m.params_.size()) throw ParseError("checkpoint: parameter count mismatch");
        for (std::size_t i = 0; i < ck.params.size(); ++i) {
            if (ck.params[i].name != m.params_[i].name || ck.params[i].value.shape() != m.params_[i].value.shape())
                throw ParseError("checkpoint: parameter " + ck.params[i].name + " does not match the architecture");
            m.params_[i].value = ck.params[i].value;
        }
        return m;
    }

    void zero_grad()
    {
        for (auto& p : params_) p.zero_grad();
    }

private:
    std::size_t add(std::string name, nn::Tensor value, nn::Constraint c = nn::Constraint::None)
    {
        params_.emplace_back(std::move(name), std::move(value), c);
        return params_.size() - 1;
    }

    static nn::Tensor normal(nn::Shape shape, double stddev, std::mt19937_64& rng)
    {
        nn::Tensor t(std::move(shape));
        std::normal_distribution<double> dist(0.0, stddev);
        for (double& v : t.data()) v = dist(rng);
        return t;
    }

    void add_norm(const std::string& prefix, std::size_t channels)
    {
        add(prefix + ".gain", nn::Tensor({channels}, 1.0));
        add(prefix + ".offset", nn::Tensor({channels}, 0.0));
    }

    void init_parameters(std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        const std::size_t F = static_cast<std::size_t>(arch_.conv_filters);
        const std::size_t kd = static_cast<std::size_t>(diff_spec_.kernel);
        const std::size_t km = static_cast<std::size_t>(ma_spec_.kernel);

        add("diff_head.conv", normal({F, 1, kd}, std::sqrt(1.0 / static_cast<double>(kd)), rng), nn::Constraint::SumToZero);
        add_norm("diff_head.norm", F);
        {
            auto w = normal({F, 1, km}, 0.1 / static_cast<double>(km), rng);
            for (double& v : w.data()) v += 1.0 / static_cast<double>(km);
            add("ma_head.conv", std::move(w), nn::Constraint::SumToOne);
        }
        add_norm("ma_head.norm", F);
        for (auto& p : params_) nn::apply_constraints(p);

        auto he = [&](std::size_t out, std::size_t in, std::size_t k) {
            return normal({out, in, k}, std::sqrt(2.0 / static_cast<double>(in * k)), rng);
        };
        add("stem.conv", he(F, 2 * F, 7));
        add_norm("stem.norm", F);
        for (int stage = 1; stage <= 4; ++stage)
            for (int block = 1; block <= 2; ++block) {
                const std::string p = "stage" + std::to_string(stage) + ".block" + std::to_string(block);
                add(p + ".conv1", he(F, F, 3));
                add_norm(p + ".norm1", F);
                add(p + ".conv2", he(F, F, 3));
                add_norm(p + ".norm2", F);
                if (block == 1 && stage > 1 && stride_at(stage) == 2) {
                    add(p + ".down", he(F, F, 1));
                    add_norm(p + ".down_norm", F);
                }
            }
        const std::size_t M = static_cast<std::size_t>(arch_.meta_features);
        const std::size_t K = n_learners();
        add("meta.dense", normal({M, F}, std::sqrt(2.0 / static_cast<double>(F)), rng));
        add("meta.bias", nn::Tensor({M}, 0.0));
        add("out.dense", normal({K, M}, std::sqrt(1.0 / static_cast<double>(M)), rng));
        add("out.bias", nn::Tensor({K}, 0.0));
    }

    template <typename Bind>
    nn::Var run(nn::Graph& g, const nn::Tensor& input, Bind bind) const
    {
        return run_impl(*this, g, input, bind);
    }

    template <typename Bind>
    nn::Var run(nn::Graph& g, const nn::Tensor& input, Bind bind)
    {
        return run_impl(*this, g, input, bind);
    }

    template <typename Self, typename Bind>
    static nn::Var run_impl(Self& self, nn::Graph& g, const nn::Tensor& input, Bind bind)
    {
        using namespace nn;
        if (input.rank() != 3 || input.dim(1) != 1 || input.dim(2) != static_cast<std::size_t>(self.arch_.max_length))
            throw ShapeError("deforma: expected input [B x 1 x " + std::to_string(self.arch_.max_length) + "], got " +
                             shape_string(input.shape()));
        std::size_t next = 0;
        auto take = [&]() { return bind(self.params_[next++]); };
        const double rate = self.arch_.dropout_rate;

        const Var x = g.input(input);
        auto head = [&]() {
            const Var w = take();
            const Var gain = take();
            const Var offset = take();
            return spatial_dropout(layer_norm(conv1d(x, w, std::nullopt, 1, Padding::Same), gain, offset), rate);
        };
        const Var diff = head();
        const Var ma = head();
        Var h = concat_channels(diff, ma);

        auto conv_norm = [&](Var in, std::size_t kernel_stride) {
            const Var w = take();
            const Var gain = take();
            const Var offset = take();
            return layer_norm(conv1d(in, w, std::nullopt, kernel_stride, Padding::Same), gain, offset);
        };
        h = relu(conv_norm(h, static_cast<std::size_t>(self.stride_at(0))));
        h = max_pool1d(h, 3, static_cast<std::size_t>(self.stride_at(1)));

        for (int stage = 1; stage <= 4; ++stage)
            for (int block = 1; block <= 2; ++block) {
                const std::size_t s = block == 1 && stage > 1 ? static_cast<std::size_t>(self.stride_at(stage)) : 1;
                Var y = relu(conv_norm(h, s));
                y = conv_norm(y, 1);
                const Var shortcut = s == 2 ? conv_norm(h, 2) : h;
                h = relu(nn::add(y, shortcut));
            }

        Var z = global_max_pool(h);
        z = spatial_dropout(z, rate);
        {
            const Var w = take();
            const Var b = take();
            z = relu(dense(z, w, b));
        }
        const Var w = take();
        const Var b = take();
        return softmax(dense(z, w, b));
    }

    ArchitectureConfig arch_;
    int period_ = 1;
    std::uint64_t seed_ = 0;
    TemporalHeadSpec diff_spec_{};
    TemporalHeadSpec ma_spec_{};
    std::vector<nn::Parameter> params_;
};

// Per-step convex combination sum_i w_i * forecasts[i][t].
inline std::vector<double> fuse_forecast(const WeightVector& w, std::span<const std::vector<double>> forecasts)
{
    if (forecasts.size() != w.size() || forecasts.empty())
        throw ShapeError("fuse_forecast: " + std::to_string(w.size()) + " weights for " +
                         std::to_string(forecasts.size()) + " learners");
    const std::size_t h = forecasts[0].size();
    std::vector<double> out(h, 0.0);
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        if (forecasts[i].size() != h) throw ShapeError("fuse_forecast: ragged forecast matrix");
        for (std::size_t t = 0; t < h; ++t) out[t] += w[i] * forecasts[i][t];
    }
    return out;
}

} // namespace deforma
