#pragma once

// Reference fusion methods: simple averaging, the per-series best-learner oracle, and FFORMA-N.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/common/log.hpp"
#include "deforma/features/features.hpp"
#include "deforma/metrics/error_matrix.hpp"
#include "deforma/model/deforma_model.hpp"
#include "deforma/model/training.hpp"
#include "deforma/nn/checkpoint.hpp"
#include "deforma/nn/graph.hpp"
#include "deforma/nn/ops.hpp"

namespace deforma {

enum class FusionMethod { AVG, OracleBest, FFORMA_N, DeFORMA };

inline std::string_view fusion_method_name(FusionMethod m)
{
    switch (m) {
    case FusionMethod::AVG: return "AVG";
    case FusionMethod::OracleBest: return "OracleBest";
    case FusionMethod::FFORMA_N: return "FFORMA-N";
    case FusionMethod::DeFORMA: return "DeFORMA";
    }
    return "?";
}

inline FusionMethod parse_fusion_method(std::string_view s)
{
    for (auto m : {FusionMethod::AVG, FusionMethod::OracleBest, FusionMethod::FFORMA_N, FusionMethod::DeFORMA}) {
        std::string a(fusion_method_name(m)), b(s);
        auto lower = [](std::string v) {
            std::string out;
            for (char c : v)
                if (c != '-' && c != '_') out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            return out;
        };
        if (lower(a) == lower(b)) return m;
    }
    throw ConfigError("unknown fusion method '" + std::string(s) + "'");
}

inline std::vector<double> avg_fuse(std::span<const std::vector<double>> forecasts)
{
    if (forecasts.empty()) throw ArgumentError("avg_fuse: no learners");
    return fuse_forecast(WeightVector::uniform(forecasts.size()), forecasts);
}

// Index of the smallest error; ties go to the lowest index.
inline std::size_t oracle_best(std::span<const double> errors)
{
    if (errors.empty()) throw ArgumentError("oracle_best: empty row");
    return static_cast<std::size_t>(std::min_element(errors.begin(), errors.end()) - errors.begin());
}

// 16 -> 64 -> 32 -> n_learners with ReLU, dropout after each hidden layer, softmax output.
class FformaNet {
public:
    static constexpr std::size_t kHidden1 = 64;
    static constexpr std::size_t kHidden2 = 32;

    FformaNet() = default;

    static FformaNet build(std::size_t n_learners, double dropout_rate, std::uint64_t seed)
    {
        if (n_learners < 2) throw ConfigError("fforma-n: need at least 2 learners");
        FformaNet net;
        net.k_ = n_learners;
        net.dropout_ = dropout_rate;
        net.seed_ = seed;
        std::mt19937_64 rng(seed);
        auto normal = [&](nn::Shape shape, double sd) {
            nn::Tensor t(std::move(shape));
            std::normal_distribution<double> d(0.0, sd);
            for (double& v : t.data()) v = d(rng);
            return t;
        };
        net.params_.emplace_back("h1.dense", normal({kHidden1, kFeatureCount}, std::sqrt(2.0 / kFeatureCount)));
        net.params_.emplace_back("h1.bias", nn::Tensor({kHidden1}, 0.0));
        net.params_.emplace_back("h2.dense", normal({kHidden2, kHidden1}, std::sqrt(2.0 / kHidden1)));
        net.params_.emplace_back("h2.bias", nn::Tensor({kHidden2}, 0.0));
        net.params_.emplace_back("out.dense", normal({n_learners, kHidden2}, std::sqrt(1.0 / kHidden2)));
        net.params_.emplace_back("out.bias", nn::Tensor({n_learners}, 0.0));
        return net;
    }

    std::size_t n_learners() const { return k_; }
    std::vector<nn::Parameter>& parameters() { return params_; }
    const std::vector<nn::Parameter>& parameters() const { return params_; }
    void zero_grad()
    {
        for (auto& p : params_) p.zero_grad();
    }

    static nn::Tensor make_batch(std::span<const FeatureVector* const> rows)
    {
        nn::Tensor x({rows.size(), kFeatureCount});
        for (std::size_t b = 0; b < rows.size(); ++b)
            std::copy(rows[b]->values.begin(), rows[b]->values.end(), x.raw() + b * kFeatureCount);
        return x;
    }

    // Returns logits [B x K].
    nn::Var logits(nn::Graph& g, const nn::Tensor& x)
    {
        return run(*this, g, x, [&g](nn::Parameter& p) { return g.parameter(p); });
    }
    nn::Var logits(nn::Graph& g, const nn::Tensor& x) const
    {
        return run(*this, g, x, [&g](const nn::Parameter& p) { return g.input(p.value); });
    }

    std::vector<WeightVector> predict_weights(std::span<const FeatureVector* const> rows) const
    {
        nn::Graph g(false);
        const auto w = nn::softmax(logits(g, make_batch(rows)));
        std::vector<WeightVector> out(rows.size());
        for (std::size_t b = 0; b < rows.size(); ++b)
            out[b].weights.assign(w.value().raw() + b * k_, w.value().raw() + (b + 1) * k_);
        return out;
    }

    WeightVector predict_weights(const FeatureVector& row) const
    {
        const FeatureVector* one[] = {&row};
        return predict_weights(std::span<const FeatureVector* const>(one))[0];
    }

    nn::Checkpoint to_checkpoint() const
    {
        nn::Checkpoint ck;
        ck.seed = seed_;
        ck.meta = {{"model", "fforma-n"}, {"n_learners", std::to_string(k_)}, {"dropout_rate", text::exact(dropout_)}};
        ck.layers = {"dense 64 relu dropout", "dense 32 relu dropout", "dense " + std::to_string(k_) + " softmax"};
        ck.params = params_;
        return ck;
    }

    static FformaNet from_checkpoint(const nn::Checkpoint& ck)
    {
        if (ck.meta_value("model") != "fforma-n") throw ParseError("checkpoint is not an FFORMA-N model");
        auto net = build(std::stoul(ck.meta_value("n_learners")), std::stod(ck.meta_value("dropout_rate")), ck.seed);
        if (ck.params.size() != net.params_.size()) throw ParseError("checkpoint: parameter count mismatch");
        for (std::size_t i = 0; i < ck.params.size(); ++i) {
            if (ck.params[i].value.shape() != net.params_[i].value.shape())
                throw ParseError("checkpoint: parameter " + ck.params[i].name + " has the wrong shape");
            net.params_[i].value = ck.params[i].value;
        }
        return net;
    }

private:
    template <typename Self, typename Bind>
    static nn::Var run(Self& self, nn::Graph& g, const nn::Tensor& x, Bind bind)
    {
        using namespace nn;
        if (x.rank() != 2 || x.dim(1) != kFeatureCount) throw ShapeError("fforma-n: expected [B x 16] features");
        const Var in = g.input(x);
        Var h = spatial_dropout(relu(dense(in, bind(self.params_[0]), bind(self.params_[1]))), self.dropout_);
        h = spatial_dropout(relu(dense(h, bind(self.params_[2]), bind(self.params_[3]))), self.dropout_);
        return dense(h, bind(self.params_[4]), bind(self.params_[5]));
    }

    std::size_t k_ = 0;
    double dropout_ = 0.1;
    std::uint64_t seed_ = 0;
    std::vector<nn::Parameter> params_;
};

// Cross-entropy against the one-hot best learner of every row.
inline std::pair<FformaNet, TrainingHistory> train_fforma_n(std::span<const FeatureVector> features,
                                                            const ErrorMatrix& errors, const TrainingConfig& cfg,
                                                            double dropout_rate = 0.1)
{
    if (features.size() != errors.n_series()) throw ArgumentError("fforma-n: features and errors are not aligned");
    std::vector<int> targets;
    for (const auto& row : errors.rows) targets.push_back(static_cast<int>(oracle_best(row)));
    if (std::set<int>(targets.begin(), targets.end()).size() < 2)
        log::warn("fforma-n: every series has the same best learner");
    auto net = FformaNet::build(errors.n_learners(), dropout_rate, cfg.seed);
    auto loss = [&](auto& m, nn::Graph& g, std::span<const std::size_t> batch) {
        std::vector<const FeatureVector*> rows;
        std::vector<int> tg;
        for (std::size_t i : batch) {
            rows.push_back(&features[i]);
            tg.push_back(targets[i]);
        }
        return nn::softmax_cross_entropy(m.logits(g, FformaNet::make_batch(rows)), tg);
    };
    auto hist = train_loop(net, features.size(), cfg, loss);
    return {std::move(net), std::move(hist)};
}

} // namespace deforma
