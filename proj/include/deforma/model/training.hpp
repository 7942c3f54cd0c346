#pragma once

// Meta-training data and the mini-batch training loop shared by DeFORMA and FFORMA-N.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/common/log.hpp"
#include "deforma/common/text.hpp"
#include "deforma/data/series.hpp"
#include "deforma/learners/pool.hpp"
#include "deforma/metrics/error_matrix.hpp"
#include "deforma/model/deforma_model.hpp"
#include "deforma/nn/adam.hpp"
#include "deforma/nn/graph.hpp"
#include "deforma/nn/ops.hpp"

namespace deforma {

struct TrainingConfig {
    double learning_rate = 1e-3;
    int batch_size = 92;
    int max_epochs = 150;
    int patience = 20;
    double validation_fraction = 0.10;
    std::uint64_t seed = 0;

    static constexpr double kLearningRateGrid[] = {1e-3, 1e-4, 1e-5};

    void validate() const
    {
        if (!(learning_rate > 0.0)) throw ConfigError("training: learning_rate must be positive");
        if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
        if (max_epochs < 1) throw ConfigError("training: max_epochs must be >= 1");
        if (patience < 0) throw ConfigError("training: patience must be >= 0");
        if (validation_fraction < 0.0 || validation_fraction >= 1.0)
            throw ConfigError("training: validation_fraction must lie in [0, 1)");
    }
};

struct TrainingHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    bool early_stopped = false;
};

// Model inputs and F_i targets for meta-training. Row i of `targets` belongs to inputs[i].
struct TrainingTable {
    std::vector<PaddedInput> inputs;
    ErrorMatrix targets;
    // Base-learner forecasts of the held-out window, rows aligned with targets.
    ForecastMatrix holdout_forecasts;
    std::vector<std::string> skipped;

    std::size_t size() const { return inputs.size(); }
};

// Splits every series into a prefix and its last `horizon` points, fits the learners on the prefix
// and scores them on the held-out window against Naive2. `holdout_learners` may point precomputed
// learners at forecast files for that window.
inline TrainingTable make_training_table(std::span<const TimeSeries> dataset, std::span<const LearnerSpec> holdout_learners,
                                         std::size_t max_length)
{
    std::vector<TimeSeries> prefixes;
    std::vector<std::string> skipped;
    for (const auto& s : dataset) {
        const auto h = static_cast<std::size_t>(s.horizon());
        bool ok = s.train.size() > h;
        const std::size_t prefix_len = ok ? s.train.size() - h : 0;
        for (const auto& l : holdout_learners)
            if (ok && !l.internal.empty() && prefix_len < min_train_length(l.internal)) ok = false;
        if (ok && prefix_len < 2) ok = false; // the MASE scale needs two in-sample points
        if (!ok) {
            skipped.push_back(s.id);
            continue;
        }
        TimeSeries p = s;
        p.train.assign(s.train.begin(), s.train.end() - static_cast<std::ptrdiff_t>(h));
        p.test = std::vector<double>(s.train.end() - static_cast<std::ptrdiff_t>(h), s.train.end());
        prefixes.push_back(std::move(p));
    }
    if (!skipped.empty()) log::info("training table: skipped " + std::to_string(skipped.size()) + " short series");
    if (prefixes.empty()) throw DatasetError("training table: every series was skipped");

    const auto pooled = pool_forecasts(prefixes, holdout_learners);
    std::vector<SeriesTruth> truths;
    for (const auto& p : prefixes) truths.push_back({p.train, *p.test});
    const int period = prefixes.front().period();

    TrainingTable table;
    table.targets = build_error_matrix(pooled, truths, period);
    table.skipped = std::move(skipped);
    table.skipped.insert(table.skipped.end(), table.targets.excluded.begin(), table.targets.excluded.end());
    table.holdout_forecasts.learner_ids = pooled.learner_ids;
    for (const auto& id : table.targets.series_ids) {
        const auto pos = static_cast<std::size_t>(std::find(pooled.series_ids.begin(), pooled.series_ids.end(), id) -
                                                  pooled.series_ids.begin());
        table.inputs.push_back(pad_values(prefixes[pos].train, max_length));
        table.holdout_forecasts.series_ids.push_back(id);
        table.holdout_forecasts.rows.push_back(pooled.rows[pos]);
    }
    if (table.inputs.empty()) throw DatasetError("training table: every series was degenerate");
    return table;
}

// Mean over rows of sum_i w_i F_i.
inline double fforma_loss(std::span<const WeightVector> weights, std::span<const std::vector<double>> errors)
{
    if (weights.size() != errors.size() || weights.empty()) throw ArgumentError("fforma_loss: batch size mismatch");
    double acc = 0.0;
    for (std::size_t b = 0; b < weights.size(); ++b) {
        if (weights[b].size() != errors[b].size()) throw ArgumentError("fforma_loss: learner count mismatch");
        for (std::size_t i = 0; i < errors[b].size(); ++i) {
            if (!(errors[b][i] >= 0.0)) throw ValidationError("fforma_loss: negative error entry");
            acc += weights[b][i] * errors[b][i];
        }
    }
    return acc / static_cast<double>(weights.size());
}

// Generic mini-batch Adam loop with a held-out validation split, early stopping and restoration of
// the best parameters. `batch_loss(graph, indices)` records the forward pass for the given items and
// returns the scalar loss; the same callable evaluates validation loss on a non-training graph.
template <typename Model, typename BatchLoss>
TrainingHistory train_loop(Model& model, std::size_t n_items, const TrainingConfig& cfg, BatchLoss&& batch_loss)
{
    cfg.validate();
    if (n_items == 0) throw DatasetError("train: empty training table");
    std::mt19937_64 rng(cfg.seed);

    std::vector<std::size_t> order(n_items);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n_items - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    std::size_t n_val = static_cast<std::size_t>(std::ceil(cfg.validation_fraction * static_cast<double>(n_items)));
    if (n_val >= n_items) n_val = 0;
    const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    nn::Adam adam(cfg.learning_rate);
    TrainingHistory hist;
    auto best = model.parameters();
    int stale = 0;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

    auto evaluate = [&](const std::vector<std::size_t>& items) {
        double acc = 0.0;
        for (std::size_t start = 0; start < items.size(); start += bs) {
            const std::size_t end = std::min(items.size(), start + bs);
            nn::Graph g(false);
            const std::span<const std::size_t> batch(items.data() + start, end - start);
            acc += batch_loss(std::as_const(model), g, batch).value()[0] * static_cast<double>(batch.size());
        }
        return acc / static_cast<double>(items.size());
    };

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t i = train.size() - 1; i > 0; --i) std::swap(train[i], train[rng() % (i + 1)]);
        double epoch_loss = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < train.size(); start += bs, ++batch_no) {
            const std::size_t end = std::min(train.size(), start + bs);
            const std::span<const std::size_t> batch(train.data() + start, end - start);
            nn::Graph g(true, rng());
            model.zero_grad();
            const nn::Var loss = batch_loss(model, g, batch);
            const double lv = loss.value()[0];
            if (!std::isfinite(lv))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_no) + ", learning rate " + text::exact(cfg.learning_rate));
            g.backward(loss);
            adam.step(model.parameters());
            epoch_loss += lv * static_cast<double>(batch.size());
        }
        hist.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
        const double v = val.empty() ? evaluate(train) : evaluate(val);
        hist.val_loss.push_back(v);
        if (!std::isfinite(v))
            throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch) + ", learning rate " +
                                text::exact(cfg.learning_rate));
        if (v < hist.best_val_loss) {
            hist.best_val_loss = v;
            hist.best_epoch = epoch;
            best = model.parameters();
            stale = 0;
        } else if (++stale >= cfg.patience) {
            hist.early_stopped = true;
            break;
        }
    }
    for (std::size_t i = 0; i < best.size(); ++i) model.parameters()[i].value = best[i].value;
    return hist;
}

// Trains DeFORMA on the F_i targets with the FFORMA loss.
inline TrainingHistory train_deforma(DeformaModel& model, const TrainingTable& table, const TrainingConfig& cfg)
{
    if (table.size() == 0) throw DatasetError("train: empty training table");
    if (table.targets.n_learners() != model.n_learners())
        throw ArgumentError("train: table has " + std::to_string(table.targets.n_learners()) + " learners, model expects " +
                            std::to_string(model.n_learners()));
    const std::size_t K = model.n_learners();
    auto loss = [&](auto& m, nn::Graph& g, std::span<const std::size_t> batch) {
        std::vector<const PaddedInput*> inputs;
        nn::Tensor errors({batch.size(), K});
        for (std::size_t b = 0; b < batch.size(); ++b) {
            inputs.push_back(&table.inputs[batch[b]]);
            const auto& row = table.targets.rows[batch[b]];
            std::copy(row.begin(), row.end(), errors.raw() + b * K);
        }
        const auto w = m.forward(g, m.make_batch(inputs));
        return nn::weighted_error_loss(w, errors);
    };
    return train_loop(model, table.size(), cfg, loss);
}

} // namespace deforma
