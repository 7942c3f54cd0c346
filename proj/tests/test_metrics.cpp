#include <gtest/gtest.h>

#include "deforma/metrics/error_matrix.hpp"
#include "deforma/metrics/metrics.hpp"
#include "oracles/m4_reference.hpp"
#include "test_util.hpp"

using namespace deforma;
using V = std::vector<double>;

TEST(Smape, Examples)
{
    EXPECT_DOUBLE_EQ(smape(V{100, 100}, V{100, 100}), 0.0);
    EXPECT_DOUBLE_EQ(smape(V{10}, V{30}), 100.0);
    EXPECT_DOUBLE_EQ(smape(V{0}, V{0}), 0.0);
    EXPECT_THROW(smape(V{1, 2}, V{1}), ArgumentError);
}

TEST(Mase, Examples)
{
    EXPECT_DOUBLE_EQ(mase(V{1, 2, 3, 4}, V{5}, V{5}, 1), 0.0);
    EXPECT_DOUBLE_EQ(mase(V{1, 2, 3, 4}, V{5}, V{7}, 1), 2.0);
    EXPECT_THROW(mase(V{5, 5, 5, 5}, V{5}, V{5}, 1), DegenerateMetric);
}

TEST(Naive2, Examples)
{
    EXPECT_EQ(naive2_forecast(V{3, 1, 3, 1, 3, 1}, 1, 3), (V{1, 1, 1}));
    EXPECT_TRUE(naive2_forecast(V{3, 1, 3}, 1, 0).empty());
}

TEST(Naive2, ExactMultiplicativeSeasonality)
{
    const V s{0.8, 1.2, 0.9, 1.1};
    V train;
    for (int t = 0; t < 48; ++t) train.push_back(100.0 * s[t % 4]);
    const auto fc = naive2_forecast(train, 4, 4);
    const V expected{80, 120, 90, 110};
    ASSERT_EQ(fc.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(fc[i], expected[i], 1e-6);
    const auto ref = oracle::naive2(train, 4, 4);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(fc[i], ref[i], 1e-9);
}

TEST(Naive2, NonpositiveFallsBackToNaive)
{
    V train;
    for (int t = 0; t < 16; ++t) train.push_back(t % 4 == 0 ? -5.0 : 10.0 * (t % 4));
    const auto fc = naive2_forecast(train, 4, 3);
    for (double v : fc) EXPECT_DOUBLE_EQ(v, train.back());
}

TEST(Owa, Examples)
{
    EXPECT_DOUBLE_EQ(owa_per_series({10, 1}, {10, 1}), 1.0);
    EXPECT_DOUBLE_EQ(owa_per_series({5, 0.5}, {10, 1}), 0.5);
    EXPECT_DOUBLE_EQ(owa_per_series({10, 1}, {20, 4}), 0.375);
    EXPECT_THROW(owa_per_series({10, 1}, {0, 4}), DegenerateMetric);
}

TEST(AggregateOwa, Examples)
{
    const std::vector<SeriesErrors> one{{12, 1.5}};
    auto r = aggregate_owa(one, one);
    EXPECT_DOUBLE_EQ(r.mean_owa, 1.0);
    EXPECT_DOUBLE_EQ(r.median_owa, 1.0);

    const std::vector<SeriesErrors> ref{{10, 2}, {30, 4}};
    const std::vector<SeriesErrors> half{{5, 1}, {15, 2}};
    r = aggregate_owa(half, ref);
    EXPECT_DOUBLE_EQ(r.mean_owa, 0.5);
    EXPECT_DOUBLE_EQ(r.median_owa, 0.5);

    const std::vector<SeriesErrors> ref3{{10, 1}, {10, 1}, {10, 1}};
    const std::vector<SeriesErrors> m3{{5, 0.5}, {10, 1}, {20, 2}};
    EXPECT_DOUBLE_EQ(aggregate_owa(m3, ref3).median_owa, 1.0);

    EXPECT_THROW(aggregate_owa(std::vector<SeriesErrors>{}, std::vector<SeriesErrors>{}), ArgumentError);
}

TEST(AggregateOwa, DegenerateSeriesExcluded)
{
    const std::vector<SeriesErrors> ref{{10, 1}, {0, 0}};
    const std::vector<SeriesErrors> m{{5, 0.5}, {3, 3}};
    const auto r = aggregate_owa(m, ref);
    EXPECT_EQ(r.used, 1u);
    EXPECT_EQ(r.excluded, 1u);
    EXPECT_DOUBLE_EQ(r.mean_owa, 0.5);
}

TEST(Metrics, RandomizedAgainstOracle)
{
    std::mt19937_64 rng(2024);
    const int periods[] = {1, 4, 12, 24};
    for (int trial = 0; trial < 200; ++trial) {
        const int m = periods[trial % 4];
        const std::size_t n = 10 + rng() % 51;
        const auto x = random_series(rng, n + 6, m, 0.3);
        const V train(x.begin(), x.end() - 6), actual(x.end() - 6, x.end());
        auto fc = naive2_forecast(train, m, 6);
        const auto ref_fc = oracle::naive2(train, m, 6);
        for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(fc[i], ref_fc[i], 1e-9 * std::abs(ref_fc[i]));
        std::normal_distribution<double> noise(0.0, 5.0);
        V method(actual);
        for (double& v : method) v += noise(rng);
        const double s = smape(actual, method), so = oracle::smape(actual, method);
        const double q = mase(train, actual, method, m), qo = oracle::mase(train, actual, method, m);
        EXPECT_NEAR(s, so, 1e-9 * so);
        EXPECT_NEAR(q, qo, 1e-9 * qo);
        const auto ref = evaluate_forecast(train, actual, fc, m);
        const double o = owa_per_series({s, q}, ref);
        const double oo = oracle::owa(so, qo, oracle::smape(actual, ref_fc), oracle::mase(train, actual, ref_fc, m));
        EXPECT_NEAR(o, oo, 1e-9 * oo);
    }
}

TEST(MetricsProperties, SymmetryScaleAndMonotonicity)
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int m = trial % 2 ? 4 : 1;
        const auto x = random_series(rng, 30, m);
        const V train(x.begin(), x.end() - 4), actual(x.end() - 4, x.end());
        const auto f = random_series(rng, 4, 1);
        EXPECT_NEAR(smape(actual, f), smape(f, actual), 1e-12);
        EXPECT_DOUBLE_EQ(mase(train, actual, actual, m), 0.0);
        const auto ref_fc = naive2_forecast(train, m, 4);
        const auto ref = evaluate_forecast(train, actual, ref_fc, m);
        const auto err = evaluate_forecast(train, actual, f, m);
        for (double c : {0.5, 3.0}) {
            V tc(train), ac(actual), fcc(f);
            for (double& v : tc) v *= c;
            for (double& v : ac) v *= c;
            for (double& v : fcc) v *= c;
            const auto rc = evaluate_forecast(tc, ac, naive2_forecast(tc, m, 4), m);
            const auto ec = evaluate_forecast(tc, ac, fcc, m);
            EXPECT_NEAR(ec.smape, err.smape, 1e-9 * err.smape);
            EXPECT_NEAR(ec.mase, err.mase, 1e-9 * err.mase);
            EXPECT_NEAR(owa_per_series(ec, rc), owa_per_series(err, ref), 1e-9);
        }
        EXPECT_LT(owa_per_series(err, ref), owa_per_series({err.smape + 1.0, err.mase}, ref));
    }
}

TEST(AggregateOwa, Naive2AgainstItselfIsOne)
{
    std::mt19937_64 rng(9);
    std::vector<SeriesErrors> errs;
    for (int i = 0; i < 40; ++i) {
        const auto x = random_series(rng, 40, 12);
        const V train(x.begin(), x.end() - 6), actual(x.end() - 6, x.end());
        errs.push_back(evaluate_forecast(train, actual, naive2_forecast(train, 12, 6), 12));
    }
    const auto r = aggregate_owa(errs, errs);
    EXPECT_DOUBLE_EQ(r.mean_owa, 1.0);
    EXPECT_DOUBLE_EQ(r.median_owa, 1.0);
}

TEST(ErrorMatrix, ColumnsForNaive2AndPerfectLearners)
{
    std::mt19937_64 rng(13);
    ForecastMatrix fm;
    fm.learner_ids = {"naive2", "perfect", "noisy"};
    std::vector<V> trains, actuals;
    for (int i = 0; i < 2; ++i) {
        const auto x = random_series(rng, 24, 1);
        trains.emplace_back(x.begin(), x.end() - 4);
        actuals.emplace_back(x.end() - 4, x.end());
    }
    std::vector<SeriesTruth> truths;
    for (int i = 0; i < 2; ++i) {
        fm.series_ids.push_back("S" + std::to_string(i));
        V noisy(actuals[i]);
        noisy[0] += 3.0;
        fm.rows.push_back({naive2_forecast(trains[i], 1, 4), actuals[i], noisy});
        truths.push_back({trains[i], actuals[i]});
    }
    const auto em = build_error_matrix(fm, truths, 1);
    ASSERT_EQ(em.n_series(), 2u);
    for (std::size_t s = 0; s < 2; ++s) {
        EXPECT_DOUBLE_EQ(em.rows[s][0], 1.0);
        EXPECT_DOUBLE_EQ(em.rows[s][1], 0.0);
        const auto ref = evaluate_forecast(trains[s], actuals[s], fm.rows[s][0], 1);
        EXPECT_DOUBLE_EQ(em.rows[s][2], owa_per_series(evaluate_forecast(trains[s], actuals[s], fm.rows[s][2], 1), ref));
    }
}

TEST(ErrorMatrix, MissingLearnerNamesSeriesAndLearner)
{
    ForecastMatrix fm;
    fm.learner_ids = {"a", "b"};
    fm.series_ids = {"S9"};
    fm.rows = {{V{1, 2}}};
    const V train{1, 2, 3, 4}, actual{5, 6};
    const SeriesTruth t[] = {{train, actual}};
    try {
        build_error_matrix(fm, t, 1);
        FAIL();
    } catch (const ArgumentError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("S9"), std::string::npos);
        EXPECT_NE(msg.find('b'), std::string::npos);
    }
}

TEST(ErrorMatrix, CsvRoundTrip)
{
    ErrorMatrix m;
    m.learner_ids = {"ses", "theta"};
    m.series_ids = {"A", "B"};
    m.rows = {{0.1234567890123, 1.0 / 3.0}, {2.0, 0.0}};
    TempDir dir("em");
    write_error_matrix(m, dir / "em.csv");
    const auto back = read_error_matrix(dir / "em.csv");
    EXPECT_EQ(back.learner_ids, m.learner_ids);
    EXPECT_EQ(back.series_ids, m.series_ids);
    EXPECT_EQ(back.rows, m.rows);
}
