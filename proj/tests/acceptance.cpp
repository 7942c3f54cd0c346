// Acceptance criteria 1-9. One line per criterion:
//
//   [PASS] criterion N: <measurement>
//   [FAIL] criterion N: <measurement>
//   [SKIP] criterion N: <reason>          (exit code 77 when run alone)
//
// Usage: acceptance [--criterion N]     N in 1..9, or 7s for the synthetic Weekly surrogate.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <tuple>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "deforma/deforma.hpp"
#include "motif_task.hpp"
#include "oracles/m4_reference.hpp"
#include "synthetic_m4.hpp"
#include "test_util.hpp"

using namespace deforma;
using Clock = std::chrono::steady_clock;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status;
    std::string detail;
};

Outcome verdict(bool ok, const std::string& detail) { return {ok ? Status::Pass : Status::Fail, detail}; }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 6)
{
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// 1. sMAPE, MASE and OWA against the brute-force reference on 200 random series.
Outcome metric_oracle()
{
    constexpr double kTol = 1e-9;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> len(10, 60), hor(1, 8), pick(0, 3);
    std::normal_distribution<double> jitter(0.0, 0.05);
    const int periods[] = {1, 4, 12, 24};
    double worst = 0.0;
    int seasonal = 0;
    for (int i = 0; i < 200; ++i) {
        const int m = periods[pick(rng)];
        const int n = len(rng), h = hor(rng);
        const auto x = random_series(rng, static_cast<std::size_t>(n + h), m, 0.3);
        const std::vector<double> train(x.begin(), x.begin() + n), actual(x.begin() + n, x.end());
        std::vector<double> fc(actual);
        for (double& v : fc) v *= 1.0 + jitter(rng);
        seasonal += oracle::is_seasonal(train, m);

        const auto ref_lib = naive2_forecast(train, m, h);
        const auto ref_orc = oracle::naive2(train, m, h);
        const SeriesErrors e = evaluate_forecast(train, actual, fc, m);
        const SeriesErrors r = evaluate_forecast(train, actual, ref_lib, m);
        const double o_smape = oracle::smape(actual, fc), o_mase = oracle::mase(train, actual, fc, m);
        const double o_owa = oracle::owa(o_smape, o_mase, oracle::smape(actual, ref_orc), oracle::mase(train, actual, ref_orc, m));
        worst = std::max({worst, rel_err(e.smape, o_smape), rel_err(e.mase, o_mase), rel_err(owa_per_series(e, r), o_owa)});
    }
    const double secs = seconds_since(t0);
    return verdict(worst <= kTol && secs < 10.0, "max relative error " + num(worst, 3) + " (limit 1e-9) over 200 series, " +
                                                     std::to_string(seasonal) + " seasonal, " + num(secs, 3) + " s (limit 10 s)");
}

// 2. Naive2 scored against an independently computed Naive2 gives mean OWA 1 on every subset.
Outcome naive2_self_owa()
{
    TempDir dir("c2");
    std::string detail;
    bool ok = true;
    for (const auto& sub : synth::subsets()) {
        synth::write_subset(dir.path(), sub.code, 40, static_cast<std::uint64_t>(sub.code));
        const auto fc = frequency_class(parse_frequency(std::string(1, sub.code)));
        const auto data = load_m4_dataset(dir / (sub.name + "-train.csv"), dir / (sub.name + "-test.csv"), {}, fc);
        std::vector<SeriesErrors> lib, ref;
        for (const auto& s : data) {
            const auto mine = internal_forecast("naive2", s.train, s.period(), s.horizon());
            const auto theirs = oracle::naive2(s.train, s.period(), s.horizon());
            lib.push_back(evaluate_forecast(s.train, *s.test, mine, s.period()));
            ref.push_back(evaluate_forecast(s.train, *s.test, theirs, s.period()));
        }
        const auto agg = aggregate_owa(lib, ref);
        ok = ok && agg.mean_owa == 1.0;
        detail += std::string(detail.empty() ? "" : ", ") + sub.code + "=" + num(agg.mean_owa, 17);
    }
    return verdict(ok, "mean OWA of Naive2 vs reference Naive2 (must equal 1 exactly): " + detail);
}

// Backward once, then central differences over every coordinate of `params`.
template <typename Build>
nn::GradCheckResult grad_check(std::vector<nn::Parameter*> params, Build build, bool training = false)
{
    for (auto* p : params) p->zero_grad();
    {
        nn::Graph g(training, 99);
        g.backward(build(g));
    }
    std::vector<nn::GradCheckTarget> targets;
    for (auto* p : params) targets.push_back({&p->value, &p->grad});
    return nn::check_gradients(targets, [&]() {
        nn::Graph g(training, 99);
        g.track_patterns(true);
        const double loss = build(g).value()[0];
        return nn::Evaluation{loss, g.pattern()};
    });
}

nn::Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    nn::Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.data()) v = u(rng);
    return t;
}

// Scalar <y, r> so every output coordinate carries a distinct upstream gradient.
nn::Var project(nn::Var y, const nn::Tensor& r)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) acc += y.value()[i] * r[i];
    return y.graph->record(nn::Tensor::scalar(acc), {y}, [y, r](nn::Graph& g, nn::Var self) {
        const double go = g.grad(self)[0];
        nn::Tensor& gy = g.grad(y);
        for (std::size_t i = 0; i < r.size(); ++i) gy[i] += go * r[i];
    });
}

// 3. Finite-difference gradient checks for every layer and the full model.
Outcome gradient_checks()
{
    using namespace nn;
    constexpr double kTol = 1e-4;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(3);
    std::map<std::string, GradCheckResult> results;

    for (auto [name, stride, padding] : {std::tuple{"conv1d_same", 1, Padding::Same}, std::tuple{"conv1d_valid", 1, Padding::Valid},
                                         std::tuple{"conv1d_strided", 2, Padding::Same}}) {
        Parameter x("x", random_tensor({2, 3, 11}, rng)), w("w", random_tensor({4, 3, 3}, rng)), b("b", random_tensor({4}, rng));
        Graph probe;
        const auto shape = conv1d(probe.input(x.value), probe.input(w.value), probe.input(b.value), stride, padding).shape();
        const Tensor r = random_tensor(shape, rng);
        results[name] = grad_check({&x, &w, &b}, [&](Graph& g) {
            return project(conv1d(g.parameter(x), g.parameter(w), g.parameter(b), static_cast<std::size_t>(stride), padding), r);
        });
    }
    {
        Parameter x("x", random_tensor({5, 7}, rng)), w("w", random_tensor({4, 7}, rng)), b("b", random_tensor({4}, rng));
        const Tensor r = random_tensor({5, 4}, rng);
        results["dense_relu"] = grad_check({&x, &w, &b}, [&](Graph& g) {
            return project(relu(dense(g.parameter(x), g.parameter(w), g.parameter(b))), r);
        });
    }
    {
        Parameter x("x", random_tensor({2, 5, 7}, rng)), gain("g", random_tensor({5}, rng, 0.5, 1.5)), off("o", random_tensor({5}, rng));
        const Tensor r = random_tensor({2, 5, 7}, rng);
        results["layer_norm"] = grad_check({&x, &gain, &off}, [&](Graph& g) {
            return project(layer_norm(g.parameter(x), g.parameter(gain), g.parameter(off)), r);
        });
    }
    {
        Parameter x("x", random_tensor({2, 3, 12}, rng));
        const Tensor r1 = random_tensor({2, 3, 6}, rng), r2 = random_tensor({2, 3}, rng);
        results["max_pool"] = grad_check({&x}, [&](Graph& g) { return project(max_pool1d(g.parameter(x), 3, 2), r1); });
        results["global_max_pool"] = grad_check({&x}, [&](Graph& g) { return project(global_max_pool(g.parameter(x)), r2); });
    }
    {
        Parameter x("x", random_tensor({3, 4}, rng));
        const Tensor r = random_tensor({3, 4}, rng), errors = random_tensor({3, 4}, rng, 0.1, 2.0);
        const std::vector<int> targets{0, 3, 1};
        results["softmax"] = grad_check({&x}, [&](Graph& g) { return project(softmax(g.parameter(x)), r); });
        results["weighted_error_loss"] = grad_check({&x}, [&](Graph& g) { return weighted_error_loss(softmax(g.parameter(x)), errors); });
        results["softmax_cross_entropy"] = grad_check({&x}, [&](Graph& g) { return softmax_cross_entropy(g.parameter(x), targets); });
    }
    {
        ArchitectureConfig a;
        a.halvings = 5;
        a.conv_filters = 6;
        a.meta_features = 10;
        a.max_length = 32;
        a.n_learners = 3;
        auto model = DeformaModel::build(a, 4, 17);
        std::vector<PaddedInput> in{pad_values(random_series(rng, 32, 4), 32), pad_values(random_series(rng, 20, 4), 32)};
        const std::vector<const PaddedInput*> ptrs{&in[0], &in[1]};
        const Tensor x = model.make_batch(ptrs), errors = random_tensor({2, 3}, rng, 0.1, 2.0);
        std::vector<Parameter*> params;
        for (auto& p : model.parameters()) params.push_back(&p);
        results["deforma_b2_l32"] =
            grad_check(params, [&](Graph& g) { return weighted_error_loss(model.forward(g, x), errors); }, true);
    }

    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    std::string worst_name;
    bool all_checked = true;
    for (const auto& [name, r] : results) {
        if (r.max_relative_error >= worst) {
            worst = r.max_relative_error;
            worst_name = name;
        }
        checked += r.checked;
        skipped += r.skipped_kinks;
        all_checked = all_checked && r.checked > 0;
    }
    const double secs = seconds_since(t0);
    return verdict(worst < kTol && all_checked && secs < 60.0,
                   std::to_string(results.size()) + " checks, max relative error " + num(worst, 3) + " (" + worst_name +
                       ", limit 1e-4), " + std::to_string(checked) + " coordinates, " + std::to_string(skipped) +
                       " kink-crossing skipped, " + num(secs, 3) + " s (limit 60 s)");
}

// 4. Head constraints after 1000 Adam steps on random data.
Outcome constraint_persistence()
{
    ArchitectureConfig a;
    a.n_learners = 9;
    auto model = DeformaModel::build(a, 12, 4);
    std::mt19937_64 rng(4);
    nn::Adam adam(1e-2);
    for (int step = 0; step < 1000; ++step) {
        std::vector<PaddedInput> in;
        for (int b = 0; b < 4; ++b) in.push_back(pad_values(random_series(rng, 32, 12), 32));
        std::vector<const PaddedInput*> ptrs;
        for (const auto& p : in) ptrs.push_back(&p);
        nn::Graph g(true, rng());
        model.zero_grad();
        const auto loss = nn::weighted_error_loss(model.forward(g, model.make_batch(ptrs)), random_tensor({4, 9}, rng, 0.0, 3.0));
        g.backward(loss);
        adam.step(model.parameters());
    }
    auto worst = [&](const std::string& name, double target) {
        const auto& p = model.parameter(name);
        double w = 0.0;
        for (std::size_t f = 0; f < p.filters(); ++f) {
            double s = 0.0;
            for (std::size_t j = 0; j < p.filter_size(); ++j) s += p.value[f * p.filter_size() + j];
            w = std::max(w, std::abs(s - target));
        }
        return w;
    };
    const double d = worst("diff_head.conv", 0.0), m = worst("ma_head.conv", 1.0);
    return verdict(d <= 1e-6 && m <= 1e-6, "after 1000 steps max |sum w| = " + num(d, 3) + ", max |sum w - 1| = " + num(m, 3) +
                                              " (limit 1e-6)");
}

// 5. Motif-signalled best learner: DeFORMA concentrates, FFORMA-N classifies.
Outcome synthetic_concentration()
{
    const auto t0 = Clock::now();
    const auto train = task::motif_task(600, 51, 32), held = task::motif_task(300, 52, 32);
    const auto tab = task::table_from(train), held_tab = task::table_from(held);

    ArchitectureConfig a;
    a.n_learners = 3;
    auto model = DeformaModel::build(a, 4, 5);
    TrainingConfig cfg;
    cfg.seed = 5;
    cfg.batch_size = 32;
    train_deforma(model, tab, cfg);

    std::vector<const PaddedInput*> ptrs;
    for (const auto& in : held_tab.inputs) ptrs.push_back(&in);
    const double loss = fforma_loss(model.predict_weights(ptrs), held_tab.targets.rows);
    double oracle_loss = 0.0, uniform = 0.0;
    for (const auto& row : held_tab.targets.rows) {
        oracle_loss += *std::min_element(row.begin(), row.end());
        uniform += (row[0] + row[1] + row[2]) / 3.0;
    }
    oracle_loss /= static_cast<double>(held_tab.size());
    uniform /= static_cast<double>(held_tab.size());

    // Separable variant: the same motifs seen through the 16 series features.
    auto features = [](const task::MotifTask& t) {
        std::vector<FeatureVector> out;
        for (const auto& v : t.values) out.push_back(extract_features(v, 4));
        return out;
    };
    const auto f_train = features(train), f_held = features(held);
    const auto scaler = FeatureScaler::fit(f_train);
    TrainingConfig fcfg;
    fcfg.seed = 6;
    fcfg.batch_size = 32;
    const auto [net, hist] = train_fforma_n(scaler.apply(f_train), tab.targets, fcfg);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < f_held.size(); ++i) {
        const auto w = net.predict_weights(scaler.apply(f_held[i]));
        hits += static_cast<int>(std::max_element(w.weights.begin(), w.weights.end()) - w.weights.begin()) == held.best[i];
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(f_held.size());
    const double secs = seconds_since(t0);
    return verdict(loss <= 1.05 * oracle_loss && loss < uniform && acc > 0.95 && secs < 900.0,
                   "held-out DeFORMA loss " + num(loss, 4) + " vs oracle " + num(oracle_loss, 4) + " (limit x1.05 = " +
                       num(1.05 * oracle_loss, 4) + ") and uniform " + num(uniform, 4) + "; FFORMA-N accuracy " + num(acc, 4) +
                       " (limit > 0.95); " + num(secs, 3) + " s (limit 900 s)");
}

// 6. Schulze ranks of the published mean-OWA table against its rank column.
Outcome schulze_reproduction()
{
    ScoreTable t;
    t.subsets = {"H", "D", "W", "M", "Y", "Q"};
    t.add_method("AVG", {0.847, 0.985, 0.860, 0.863, 0.804, 0.856});
    t.add_method("ES-RNN", {0.440, 1.046, 0.864, 0.836, 0.778, 0.847});
    t.add_method("FFORMS", {0.423, 0.981, 0.740, 0.817, 0.752, 0.830});
    t.add_method("N-BEATS", {0.464, 0.974, 0.703, 0.819, 0.758, 0.800});
    t.add_method("FFORMA-N", {0.428, 0.979, 0.718, 0.813, 0.746, 0.828});
    t.add_method("FFORMA", {0.415, 0.983, 0.725, 0.800, 0.732, 0.816});
    t.add_method("DeFORMA", {0.423, 0.972, 0.700, 0.802, 0.729, 0.810});
    const std::map<std::string, int> published{{"AVG", 8},      {"ES-RNN", 7}, {"FFORMS", 4}, {"N-BEATS", 4},
                                               {"FFORMA-N", 3}, {"FFORMA", 2}, {"DeFORMA", 1}};
    const auto r = schulze_rank(t);
    bool ok = true;
    std::string got, wins;
    for (std::size_t m = 0; m < t.n_methods(); ++m) {
        ok = ok && r.ranks[m] == published.at(t.methods[m]);
        got += std::string(got.empty() ? "" : ", ") + t.methods[m] + ":" + std::to_string(r.ranks[m]) + "/" +
               std::to_string(published.at(t.methods[m]));
        wins += std::string(wins.empty() ? "" : ",") + std::to_string(r.wins[m]);
    }
    return verdict(ok, "computed/published ranks " + got + "; strongest-path wins " + wins);
}

// Shared by 7 and 7s: full pipeline on one Weekly subset, DeFORMA against AVG on the test split.
Outcome weekly_run(const std::filesystem::path& data_dir, const std::filesystem::path& out, Config cfg, std::size_t expected_rows)
{
    const auto t0 = Clock::now();
    cfg.set("data.dir", data_dir.string());
    cfg.set("data.subsets", "W");
    cfg.set("learners.pool", "ses,holt,damped,comb,theta");
    cfg.set("learners.external", "");
    cfg.set("fusion.methods", "AVG,OracleBest,FFORMA-N,DeFORMA");
    Experiment exp(cfg, out);
    exp.run();
    const auto scores = exp.subset_scores(Frequency::Weekly);
    std::map<std::string, double> owa;
    for (const auto& s : scores) owa[s.method] = s.mean_owa;
    std::ifstream in(out / "Weekly" / "test_errors.csv");
    std::string line;
    std::size_t rows = 0;
    std::getline(in, line);
    while (std::getline(in, line)) rows += !line.empty();
    const double secs = seconds_since(t0);
    const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
    // The runtime limit is stated for 4 cores; on fewer the time is reported but not enforced.
    const bool time_ok = cores < 4 || secs < 1800.0;
    return verdict(owa["DeFORMA"] <= owa["AVG"] && rows == expected_rows && time_ok,
                   "mean OWA DeFORMA " + num(owa["DeFORMA"], 4) + " vs AVG " + num(owa["AVG"], 4) + " (FFORMA-N " +
                       num(owa["FFORMA-N"], 4) + ", OracleBest " + num(owa["OracleBest"], 4) + "); " + std::to_string(rows) +
                       " per-series rows (expected " + std::to_string(expected_rows) + "); " + num(secs, 4) + " s on " +
                       std::to_string(cores) + " core(s); internal-only pool, published 0.700 not expected");
}

std::filesystem::path find_m4_dir()
{
    std::vector<std::filesystem::path> candidates;
    if (const char* env = std::getenv("DEFORMA_M4_DIR")) candidates.emplace_back(env);
    candidates.emplace_back("data/m4");
    candidates.emplace_back(std::filesystem::path(DEFORMA_SOURCE_DIR) / "data" / "m4");
    for (const auto& c : candidates)
        for (const auto& sub : {std::filesystem::path{}, std::filesystem::path{"Train"}})
            if (std::filesystem::exists(c / sub / "Weekly-train.csv")) return c;
    return {};
}

// 7. Official M4 Weekly subset.
Outcome m4_weekly()
{
    const auto dir = find_m4_dir();
    if (dir.empty())
        return {Status::Skip, "M4 Weekly files not found (set DEFORMA_M4_DIR or place Weekly-train.csv/Weekly-test.csv "
                              "under data/m4); criterion 7s runs the synthetic surrogate"};
    TempDir out("c7");
    return weekly_run(dir, out / "run", Config{}, 359);
}

// 7s. Same pipeline on 359 synthetic Weekly series, without cross-validation.
Outcome weekly_surrogate()
{
    TempDir dir("c7s");
    synth::write_subset(dir / "data", 'W', 359, 77, 200);
    Config cfg;
    cfg.set("cv.repeats", "0");
    return weekly_run(dir / "data", dir / "run", cfg, 359);
}

// 8. Fused forecasts stay inside the per-step learner envelope.
Outcome envelope_fuzz()
{
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> kd(1, 10), hd(1, 20), zero(0, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::lognormal_distribution<double> magnitude(0.0, 4.0);
    std::size_t violations = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int k = kd(rng), h = hd(rng);
        WeightVector w{std::vector<double>(static_cast<std::size_t>(k))};
        double s = 0.0;
        for (double& v : w.weights) s += (v = zero(rng) == 0 ? 0.0 : u(rng));
        if (s == 0.0) s += (w.weights[0] = 1.0);
        for (double& v : w.weights) v /= s;
        std::vector<std::vector<double>> f(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(h)));
        const double scale = magnitude(rng);
        for (auto& row : f)
            for (double& v : row) v = scale * (2.0 * u(rng) - 1.0);
        const auto out = fuse_forecast(w, f);
        for (int t = 0; t < h; ++t) {
            double lo = f[0][static_cast<std::size_t>(t)], hi = lo, mag = 0.0;
            for (const auto& row : f) {
                lo = std::min(lo, row[static_cast<std::size_t>(t)]);
                hi = std::max(hi, row[static_cast<std::size_t>(t)]);
                mag = std::max(mag, std::abs(row[static_cast<std::size_t>(t)]));
            }
            const double excess = std::max({0.0, lo - out[static_cast<std::size_t>(t)], out[static_cast<std::size_t>(t)] - hi});
            worst = std::max(worst, excess / std::max(mag, 1e-300));
            // Round-off allowance: 1e-12 of the largest forecast magnitude at this step.
            violations += excess > 1e-12 * mag;
        }
    }
    return verdict(violations == 0, "10000 pairs, " + std::to_string(violations) +
                                        " steps outside the envelope; worst relative excess " + num(worst, 3) +
                                        " (allowance 1e-12)");
}

// 9. Two runs from one manifest give byte-identical ScoreTable CSVs.
Outcome determinism()
{
    TempDir dir("c9");
    synth::write_subset(dir / "data", 'Y', 80, 91);
    synth::write_subset(dir / "data", 'Q', 60, 92);
    Config cfg;
    cfg.set("data.dir", (dir / "data").string());
    cfg.set("data.subsets", "Q,Y");
    cfg.set("model.conv_filters", "16");
    cfg.set("model.halvings", "3");
    cfg.set("training.max_epochs", "8");
    cfg.set("training.batch_size", "32");
    cfg.set("cv.folds", "3");
    cfg.set("cv.repeats", "1");
    cfg.set("run.seed", "9");
    Experiment(cfg, dir / "first").run();
    Experiment(Config::load(dir / "first" / "manifest.txt"), dir / "second").run();
    std::size_t same = 0, total = 0;
    for (const auto* f : {"scores_mean_test.csv", "scores_median_test.csv", "scores_mean_cv.csv", "scores_median_cv.csv"}) {
        ++total;
        const auto a = read_file(dir / "first" / f), b = read_file(dir / "second" / f);
        same += !a.empty() && a == b;
    }
    return verdict(same == total, std::to_string(same) + "/" + std::to_string(total) + " ScoreTable CSVs byte-identical");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance criteria"};
    std::string which;
    app.add_option("--criterion", which, "1..9 or 7s; all when omitted");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
        {"1", metric_oracle},   {"2", naive2_self_owa},        {"3", gradient_checks}, {"4", constraint_persistence},
        {"5", synthetic_concentration}, {"6", schulze_reproduction}, {"7", m4_weekly}, {"7s", weekly_surrogate},
        {"8", envelope_fuzz},   {"9", determinism}};

    int failed = 0, skipped = 0, ran = 0;
    for (const auto& [id, fn] : criteria) {
        if (!which.empty() && which != id) continue;
        ++ran;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {Status::Fail, std::string("exception: ") + e.what()};
        }
        const char* tag = o.status == Status::Pass ? "[PASS]" : o.status == Status::Fail ? "[FAIL]" : "[SKIP]";
        std::cout << tag << " criterion " << id << ": " << o.detail << std::endl;
        failed += o.status == Status::Fail;
        skipped += o.status == Status::Skip;
    }
    if (ran == 0) {
        std::cerr << "unknown criterion '" << which << "'\n";
        return 2;
    }
    if (failed) return 1;
    return skipped == ran ? 77 : 0;
}
