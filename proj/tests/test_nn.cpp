#include <gtest/gtest.h>

#include <sstream>

#include "deforma/nn/adam.hpp"
#include "deforma/nn/checkpoint.hpp"
#include "deforma/nn/gradcheck.hpp"
#include "deforma/nn/ops.hpp"

using namespace deforma;
using namespace deforma::nn;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.data()) v = d(rng);
    return t;
}

// Scalar projection <y, r> with a fixed random r, so every output coordinate carries gradient.
Var project(Var y, const Tensor& r)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) acc += y.value()[i] * r[i];
    return y.graph->record(Tensor::scalar(acc), {y}, [y, r](Graph& g, Var self) {
        const double go = g.grad(self)[0];
        Tensor& gy = g.grad(y);
        for (std::size_t i = 0; i < r.size(); ++i) gy[i] += go * r[i];
    });
}

// Runs backward once to fill Parameter::grad, then checks all parameters by finite differences.
template <typename Build>
GradCheckResult grad_check(std::vector<Parameter*> params, Build build, bool training = false)
{
    for (auto* p : params) p->zero_grad();
    {
        Graph g(training, 99);
        g.backward(build(g));
    }
    std::vector<GradCheckTarget> targets;
    for (auto* p : params) targets.push_back({&p->value, &p->grad});
    return check_gradients(targets, [&]() {
        Graph g(training, 99);
        g.track_patterns(true);
        const double loss = build(g).value()[0];
        return Evaluation{loss, g.pattern()};
    });
}

constexpr double kTol = 1e-4;

} // namespace

TEST(Conv1d, Examples)
{
    Graph g;
    const Tensor x({1, 1, 3}, std::vector<double>{3, 5, 9});
    const auto id = conv1d(g.input(x), g.input(Tensor({1, 1, 1}, 1.0)), std::nullopt, 1, Padding::Same);
    EXPECT_EQ(id.value().data().size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(id.value()[i], x[i]);
    const auto d = conv1d(g.input(x), g.input(Tensor({1, 1, 2}, std::vector<double>{1, -1})), std::nullopt, 1, Padding::Valid);
    EXPECT_EQ(d.value().shape(), (Shape{1, 1, 2}));
    EXPECT_DOUBLE_EQ(d.value()[0], -2.0);
    EXPECT_DOUBLE_EQ(d.value()[1], -4.0);
    const auto s = conv1d(g.input(Tensor({1, 1, 7}, 1.0)), g.input(Tensor({1, 1, 3}, 1.0)), std::nullopt, 2, Padding::Same);
    EXPECT_EQ(s.value().dim(2), 4u);
    EXPECT_THROW(conv1d(g.input(Tensor({1, 2, 7}, 1.0)), g.input(Tensor({1, 1, 3}, 1.0)), std::nullopt, 1, Padding::Same),
                 ShapeError);
}

TEST(Backward, TrivialCases)
{
    Parameter p("p", Tensor({2, 3}, 0.7));
    {
        Graph g(true);
        g.backward(sum(g.parameter(p)));
    }
    for (double v : p.grad.data()) EXPECT_EQ(v, 1.0);
    p.zero_grad();
    {
        Graph g(true);
        g.backward(scale(sum(g.parameter(p)), 0.0));
    }
    for (double v : p.grad.data()) EXPECT_EQ(v, 0.0);

    Parameter unused("u", Tensor({2}, 1.0));
    unused.zero_grad();
    {
        Graph g(true);
        g.parameter(unused);
        g.backward(sum(g.parameter(p)));
    }
    for (double v : unused.grad.data()) EXPECT_EQ(v, 0.0);

    Graph empty;
    EXPECT_THROW(empty.backward(Var{&empty, 0}), StateError);
}

TEST(GradCheck, Conv1dVariants)
{
    std::mt19937_64 rng(1);
    for (auto padding : {Padding::Same, Padding::Valid})
        for (std::size_t stride : {1u, 2u})
            for (std::size_t kernel : {1u, 3u, 4u}) {
                Parameter x("x", random_tensor({2, 5, 7}, rng));
                Parameter w("w", random_tensor({3, 5, kernel}, rng));
                Parameter b("b", random_tensor({3}, rng));
                const auto geo = conv_geometry(7, kernel, stride, padding);
                const Tensor r = random_tensor({2, 3, geo.out_length}, rng);
                const auto res = grad_check({&x, &w, &b}, [&](Graph& g) {
                    return project(conv1d(g.parameter(x), g.parameter(w), g.parameter(b), stride, padding), r);
                });
                EXPECT_LT(res.max_relative_error, kTol) << "kernel " << kernel << " stride " << stride;
                EXPECT_GT(res.checked, 0u);
            }
}

TEST(GradCheck, DenseReluAddScale)
{
    std::mt19937_64 rng(2);
    Parameter x("x", random_tensor({5, 7}, rng));
    Parameter w("w", random_tensor({4, 7}, rng));
    Parameter b("b", random_tensor({4}, rng));
    Parameter y("y", random_tensor({5, 4}, rng));
    const Tensor r = random_tensor({5, 4}, rng);
    const auto res = grad_check({&x, &w, &b, &y}, [&](Graph& g) {
        const Var h = relu(dense(g.parameter(x), g.parameter(w), g.parameter(b)));
        return project(scale(add(h, g.parameter(y)), 1.7), r);
    });
    EXPECT_LT(res.max_relative_error, kTol);
}

TEST(GradCheck, LayerNorm)
{
    std::mt19937_64 rng(3);
    Parameter x("x", random_tensor({2, 5, 7}, rng));
    Parameter gain("gain", random_tensor({5}, rng, 0.5, 1.5));
    Parameter offset("offset", random_tensor({5}, rng));
    const Tensor r = random_tensor({2, 5, 7}, rng);
    const auto res = grad_check({&x, &gain, &offset}, [&](Graph& g) {
        return project(layer_norm(g.parameter(x), g.parameter(gain), g.parameter(offset)), r);
    });
    EXPECT_LT(res.max_relative_error, kTol);
}

TEST(GradCheck, PoolingConcatDropout)
{
    std::mt19937_64 rng(4);
    Parameter a("a", random_tensor({2, 5, 7}, rng));
    Parameter b("b", random_tensor({2, 3, 7}, rng));
    const Tensor r1 = random_tensor({2, 8, 4}, rng);
    const Tensor r2 = random_tensor({2, 8}, rng);
    const auto res = grad_check(
        {&a, &b},
        [&](Graph& g) {
            const Var c = spatial_dropout(concat_channels(g.parameter(a), g.parameter(b)), 0.3);
            return add(project(max_pool1d(c, 3, 2), r1), project(global_max_pool(c), r2));
        },
        true);
    EXPECT_LT(res.max_relative_error, kTol);
    EXPECT_GT(res.checked, 0u);
}

TEST(GradCheck, SoftmaxAndLosses)
{
    std::mt19937_64 rng(5);
    Parameter z("z", random_tensor({5, 7}, rng, -2.0, 2.0));
    const Tensor errors = random_tensor({5, 7}, rng, 0.0, 2.0);
    const std::vector<int> targets{0, 6, 3, 3, 1};
    const auto res = grad_check({&z}, [&](Graph& g) {
        const Var zv = g.parameter(z);
        return add(weighted_error_loss(softmax(zv), errors), softmax_cross_entropy(zv, targets));
    });
    EXPECT_LT(res.max_relative_error, kTol);
}

TEST(LayerNorm, Normalizes)
{
    std::mt19937_64 rng(6);
    Graph g;
    const Tensor x = random_tensor({3, 6, 9}, rng, -5.0, 5.0);
    const auto y = layer_norm(g.input(x), g.input(Tensor({6}, 1.0)), g.input(Tensor({6}, 0.0))).value();
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t t = 0; t < 9; ++t) {
            double m = 0.0, v = 0.0;
            for (std::size_t c = 0; c < 6; ++c) m += y.at(b, c, t) / 6.0;
            for (std::size_t c = 0; c < 6; ++c) v += (y.at(b, c, t) - m) * (y.at(b, c, t) - m) / 6.0;
            EXPECT_NEAR(m, 0.0, 1e-6);
            // Epsilon in the denominator shrinks the variance by var / (var + eps).
            EXPECT_NEAR(v, 1.0, 1e-4);
        }
    Tensor flat({1, 4, 3});
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t c = 0; c < 4; ++c) flat.at(0, c, t) = static_cast<double>(t) * 2.0;
    for (double v : layer_norm(g.input(flat), g.input(Tensor({4}, 1.0)), g.input(Tensor({4}, 0.0))).value().data())
        EXPECT_EQ(v, 0.0);
}

TEST(Dropout, IdentityCases)
{
    std::mt19937_64 rng(7);
    const Tensor x = random_tensor({2, 4, 5}, rng);
    Graph train(true, 1), infer(false, 1);
    EXPECT_EQ(spatial_dropout(train.input(x), 0.0).value().data().size(), x.size());
    const auto a = spatial_dropout(train.input(x), 0.0).value();
    const auto b = spatial_dropout(infer.input(x), 0.5).value();
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(a[i], x[i]);
        EXPECT_EQ(b[i], x[i]);
    }
}

TEST(Dropout, MonteCarloDropFraction)
{
    const Tensor x({1, 1, 6}, 1.0);
    std::size_t dropped = 0;
    const std::size_t trials = 10000;
    for (std::size_t s = 0; s < trials; ++s) {
        Graph g(true, s);
        const auto y = spatial_dropout(g.input(x), 0.5).value();
        const bool zero = y[0] == 0.0;
        for (std::size_t t = 0; t < 6; ++t) {
            EXPECT_EQ(y[t] == 0.0, zero);
            if (!zero) EXPECT_DOUBLE_EQ(y[t], 2.0);
        }
        dropped += zero ? 1 : 0;
    }
    EXPECT_NEAR(static_cast<double>(dropped) / static_cast<double>(trials), 0.5, 0.02);
}

TEST(Pooling, Examples)
{
    Graph g;
    const Tensor one({1, 2, 1}, std::vector<double>{4, -2});
    const auto id = global_max_pool(g.input(one)).value();
    EXPECT_EQ(id[0], 4.0);
    EXPECT_EQ(id[1], -2.0);
    EXPECT_EQ(global_max_pool(g.input(Tensor({1, 1, 3}, std::vector<double>{-5, -1, -9}))).value()[0], -1.0);

    // Ties route the gradient to the first maximal position.
    Parameter p("p", Tensor({1, 1, 4}, std::vector<double>{1, 3, 3, 0}));
    {
        Graph gg(true);
        gg.backward(sum(global_max_pool(gg.parameter(p))));
    }
    EXPECT_EQ(p.grad.data()[1], 1.0);
    EXPECT_EQ(p.grad.data()[2], 0.0);
}

TEST(Constraints, Examples)
{
    Parameter z("z", Tensor({1, 3}, std::vector<double>{1, 2, 3}), Constraint::SumToZero);
    apply_constraints(z);
    EXPECT_DOUBLE_EQ(z.value[0], -1.0);
    EXPECT_DOUBLE_EQ(z.value[1], 0.0);
    EXPECT_DOUBLE_EQ(z.value[2], 1.0);
    Parameter o("o", Tensor({1, 3}, 0.2), Constraint::SumToOne);
    apply_constraints(o);
    for (double v : o.value.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
    EXPECT_LE(constraint_violation(o), 1e-12);
    const auto before = o.value.data();
    const std::vector<double> copy(before.begin(), before.end());
    apply_constraints(o);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(o.value[i], copy[i]);
}

TEST(Constraints, ProjectionIsClosestFeasiblePoint)
{
    // Sampled oracle: no random feasible point is closer to w than its projection.
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> d(-3.0, 3.0);
    for (auto c : {Constraint::SumToZero, Constraint::SumToOne}) {
        const double target = c == Constraint::SumToOne ? 1.0 : 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            Parameter p("w", Tensor({1, 3}, std::vector<double>{d(rng), d(rng), d(rng)}), c);
            const std::vector<double> w(p.value.data().begin(), p.value.data().end());
            apply_constraints(p);
            auto dist = [&](double a, double b, double cc) {
                return (a - w[0]) * (a - w[0]) + (b - w[1]) * (b - w[1]) + (cc - w[2]) * (cc - w[2]);
            };
            const double proj = dist(p.value[0], p.value[1], p.value[2]);
            for (int s = 0; s < 2000; ++s) {
                const double a = d(rng), b = d(rng);
                EXPECT_GE(dist(a, b, target - a - b) + 1e-12, proj);
            }
            Parameter q = p;
            apply_constraints(q);
            for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(q.value[i], p.value[i], 1e-15);
        }
    }
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged)
{
    std::vector<Parameter> ps{Parameter("a", Tensor({3}, std::vector<double>{1, -2, 3}))};
    Adam adam(1e-2);
    for (int i = 0; i < 5; ++i) adam.step(ps);
    EXPECT_EQ(ps[0].value[0], 1.0);
    EXPECT_EQ(ps[0].value[1], -2.0);
    EXPECT_EQ(ps[0].value[2], 3.0);
}

TEST(Adam, ConvergesOnConvexToy)
{
    // Adam moves at most about lr per step, so the start sits one unit from the optimum.
    const double target = 1.0;
    std::vector<Parameter> ps{Parameter("x", Tensor({1}, 0.0))};
    Adam adam(1e-2);
    for (int i = 0; i < 500; ++i) {
        ps[0].grad[0] = 2.0 * (ps[0].value[0] - target);
        adam.step(ps);
    }
    EXPECT_LT(std::abs(ps[0].value[0] - target), 1e-3);
    EXPECT_EQ(adam.step_count(), 500);
}

TEST(Adam, ProjectsConstrainedParameters)
{
    std::mt19937_64 rng(9);
    std::vector<Parameter> ps{Parameter("d", random_tensor({4, 2, 5}, rng), Constraint::SumToZero),
                              Parameter("m", random_tensor({4, 2, 5}, rng), Constraint::SumToOne)};
    Adam adam(1e-1);
    for (int i = 0; i < 20; ++i) {
        for (auto& p : ps)
            for (double& g : p.grad.data()) g = std::uniform_real_distribution<double>(-1, 1)(rng);
        adam.step(ps);
        for (const auto& p : ps) EXPECT_LE(constraint_violation(p), 1e-6);
    }
}

TEST(Checkpoint, LosslessRoundTrip)
{
    std::mt19937_64 rng(10);
    Checkpoint ck;
    ck.seed = 123456789012345ULL;
    ck.meta = {{"model", "test"}, {"note", "two words"}};
    ck.layers = {"conv 3", "dense 4"};
    ck.params.emplace_back("w", random_tensor({2, 3, 4}, rng, -1e6, 1e6), Constraint::SumToZero);
    ck.params.emplace_back("b", Tensor({1}, std::vector<double>{1e-300}));
    std::stringstream ss;
    write_checkpoint(ck, ss);
    const auto back = read_checkpoint(ss);
    EXPECT_EQ(back.seed, ck.seed);
    EXPECT_EQ(back.meta, ck.meta);
    EXPECT_EQ(back.layers, ck.layers);
    ASSERT_EQ(back.params.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.params[i].name, ck.params[i].name);
        EXPECT_EQ(back.params[i].constraint, ck.params[i].constraint);
        EXPECT_EQ(back.params[i].value.shape(), ck.params[i].value.shape());
        for (std::size_t j = 0; j < ck.params[i].value.size(); ++j)
            EXPECT_EQ(back.params[i].value[j], ck.params[i].value[j]);
    }
    std::stringstream truncated("DEFORMA-CHECKPOINT 1\nseed 1\n");
    EXPECT_THROW(read_checkpoint(truncated), ParseError);
    std::stringstream bad("NOT A CHECKPOINT\n");
    EXPECT_THROW(read_checkpoint(bad), ParseError);
}

TEST(Tensor, ShapeErrors)
{
    EXPECT_THROW(Tensor({0, 3}), ShapeError);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}
