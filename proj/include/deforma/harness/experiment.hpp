#pragma once

// End-to-end experiment over M4-format subsets. Every stage reads the previous stage's files from the
// run directory and leaves a marker when it completes, so a failed run can be resumed.
//
//   <out>/manifest.txt                 resolved config, itself a valid config file
//   <out>/PARTIAL                      present until the rank stage completes; records failures
//   <out>/<Subset>/series_*.csv        prepared train/test values
//   <out>/<Subset>/forecasts/*.csv     base-learner forecasts of the test window
//   <out>/<Subset>/holdout/*.csv       base-learner forecasts of the in-sample holdout window
//   <out>/<Subset>/table_errors.csv    F_i targets (per-series OWA on the holdout window)
//   <out>/<Subset>/*.ckpt, cv_*.csv    trained models and cross-validation runs
//   <out>/<Subset>/test_errors.csv     per-series test OWA of every method
//   <out>/<Subset>/test_scores.csv     per-method aggregates on the test split
//   <out>/scores_*.csv, ranks.csv      ScoreTables across subsets and Schulze ranks

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "deforma/baselines/baselines.hpp"
#include "deforma/common/error.hpp"
#include "deforma/common/log.hpp"
#include "deforma/common/text.hpp"
#include "deforma/data/series.hpp"
#include "deforma/features/features.hpp"
#include "deforma/harness/config.hpp"
#include "deforma/harness/schulze.hpp"
#include "deforma/harness/score_table.hpp"
#include "deforma/learners/pool.hpp"
#include "deforma/metrics/error_matrix.hpp"
#include "deforma/metrics/metrics.hpp"
#include "deforma/model/deforma_model.hpp"
#include "deforma/model/training.hpp"
#include "deforma/nn/checkpoint.hpp"

namespace deforma {

namespace fs = std::filesystem;

// splitmix64 over the master seed, a tag and two counters. Stable across platforms, unlike std::hash.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0)
{
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(master);
    for (unsigned char c : tag) h = mix(h ^ c);
    h = mix(h ^ a);
    return mix(h ^ b);
}

enum class Stage { Prepare, BaseForecast, BuildTable, Train, Evaluate };

inline constexpr Stage kStages[] = {Stage::Prepare, Stage::BaseForecast, Stage::BuildTable, Stage::Train, Stage::Evaluate};

inline std::string_view stage_name(Stage s)
{
    constexpr std::string_view names[] = {"prepare", "base-forecast", "build-table", "train", "evaluate"};
    return names[static_cast<int>(s)];
}

inline bool needs_training(FusionMethod m) { return m == FusionMethod::FFORMA_N || m == FusionMethod::DeFORMA; }

// File-name form of a method: lower case, dashes become underscores.
inline std::string method_slug(FusionMethod m)
{
    std::string out;
    for (char c : fusion_method_name(m)) out += c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Per-method aggregates of one subset on the test split.
struct SubsetScore {
    std::string method;
    double mean_owa = 0.0;
    double median_owa = 0.0;
    double weighted_loss = 0.0;
    double cv_mean_owa = 0.0;
    double cv_median_owa = 0.0;
    std::size_t cv_runs = 0;
};

class Experiment {
public:
    // Creates the run directory, or reopens it when the stored manifest matches `cfg`.
    Experiment(Config cfg, fs::path out) : cfg_(std::move(cfg)), out_(std::move(out))
    {
        validate_config();
        fs::create_directories(out_);
        const auto manifest = out_ / "manifest.txt";
        const std::string text = manifest_text();
        if (fs::exists(manifest)) {
            if (read_text(manifest) != text)
                throw ConfigError("run directory " + out_.string() +
                                  " holds a different manifest; use a fresh --out or the stored manifest");
        } else {
            write_text(manifest, text);
        }
        if (!fs::exists(out_ / ".rank.done") && !fs::exists(out_ / "PARTIAL")) write_text(out_ / "PARTIAL", "incomplete\n");
    }

    // Reopens a run from its stored manifest.
    static Experiment open(const fs::path& out)
    {
        const auto manifest = out / "manifest.txt";
        if (!fs::exists(manifest)) throw StateError("no manifest in " + out.string());
        return Experiment(Config::load(manifest), out);
    }

    const Config& config() const { return cfg_; }
    const fs::path& dir() const { return out_; }
    fs::path subset_dir(Frequency f) const { return out_ / std::string(frequency_name(f)); }

    std::vector<Frequency> subsets() const
    {
        std::vector<Frequency> out;
        for (const auto& s : cfg_.list("data.subsets")) out.push_back(parse_frequency(s));
        return out;
    }

    std::vector<FusionMethod> methods() const
    {
        std::vector<FusionMethod> out;
        for (const auto& s : cfg_.list("fusion.methods")) out.push_back(parse_fusion_method(s));
        return out;
    }

    bool done(Frequency f, Stage s) const
    {
        if (s == Stage::Train) {
            for (auto m : methods())
                if (needs_training(m) && !fs::exists(marker(f, "train-" + method_slug(m)))) return false;
            return true;
        }
        return fs::exists(marker(f, std::string(stage_name(s))));
    }

    bool ranked() const { return fs::exists(out_ / ".rank.done"); }

    // Stages still missing, as "<Subset>/<stage>" plus "rank".
    std::vector<std::string> missing_stages() const
    {
        std::vector<std::string> out;
        for (auto f : subsets())
            for (auto s : kStages)
                if (!done(f, s)) out.push_back(std::string(frequency_name(f)) + "/" + std::string(stage_name(s)));
        if (!ranked()) out.emplace_back("rank");
        return out;
    }

    // Runs every stage that has not completed yet. `only` restricts the run to one subset; ranking
    // then waits until every configured subset is evaluated.
    void run(std::optional<Frequency> only = std::nullopt)
    {
        for (auto f : subsets()) {
            if (only && *only != f) continue;
            for (auto s : kStages) {
                if (done(f, s)) continue;
                if (s != Stage::Train) {
                    run_stage(f, s);
                    continue;
                }
                for (auto m : methods())
                    if (needs_training(m) && !fs::exists(marker(f, "train-" + method_slug(m)))) run_stage(f, s, m);
            }
        }
        bool all = true;
        for (auto f : subsets()) all = all && done(f, Stage::Evaluate);
        if (all) rank();
    }

    void run_stage(Frequency f, Stage s, std::optional<FusionMethod> method = std::nullopt)
    {
        guarded(std::string(frequency_name(f)) + "/" + std::string(stage_name(s)), [&] {
            invalidate_after(f, s);
            switch (s) {
            case Stage::Prepare: prepare(f); break;
            case Stage::BaseForecast: base_forecast(f); break;
            case Stage::BuildTable: build_table(f); break;
            case Stage::Train:
                for (auto m : methods())
                    if (needs_training(m) && (!method || *method == m)) train(f, m);
                if (method && !needs_training(*method))
                    throw ArgumentError("train: method " + std::string(fusion_method_name(*method)) + " has nothing to train");
                break;
            case Stage::Evaluate: evaluate(f); break;
            }
        });
    }

    // Loads, validates and stores one subset.
    void prepare(Frequency f)
    {
        const auto fc = frequency_class(f);
        const auto name = std::string(frequency_name(f));
        const fs::path data(cfg_.str("data.dir"));
        auto locate = [&](const std::string& kind, const std::string& folder) -> fs::path {
            for (const auto& p : {data / (name + "-" + kind + ".csv"), data / folder / (name + "-" + kind + ".csv")})
                if (fs::exists(p)) return p;
            return {};
        };
        const auto train_csv = locate("train", "Train");
        const auto test_csv = locate("test", "Test");
        if (train_csv.empty()) throw LoadError("no " + name + "-train.csv under " + data.string());
        if (test_csv.empty()) throw LoadError("no " + name + "-test.csv under " + data.string());
        const auto info = fs::exists(data / "M4-info.csv") ? data / "M4-info.csv" : fs::path{};
        auto series = load_m4_dataset(train_csv, test_csv, info, fc);
        const auto limit = cfg_.integer("data.limit");
        if (limit > 0 && static_cast<std::size_t>(limit) < series.size()) series.resize(static_cast<std::size_t>(limit));
        if (series.empty()) throw DatasetError(name + ": no series");
        const auto dir = subset_dir(f);
        fs::create_directories(dir);
        write_m4_dataset(series, dir / "series_train.csv", dir / "series_test.csv");
        log::info(name + ": prepared " + std::to_string(series.size()) + " series");
        mark(f, "prepare");
    }

    // Forecasts the test window with every pooled learner fitted on the full training values.
    void base_forecast(Frequency f)
    {
        require(f, Stage::Prepare);
        const auto series = load_prepared(f);
        const auto specs = learner_specs(f, false);
        const auto pooled = pool_forecasts(series, specs);
        const auto dir = subset_dir(f) / "forecasts";
        fs::create_directories(dir);
        for (std::size_t l = 0; l < pooled.n_learners(); ++l) {
            ForecastMap fm;
            for (std::size_t s = 0; s < series.size(); ++s) fm[series[s].id] = pooled.rows[s][l];
            write_forecasts(fm, series, dir / (pooled.learner_ids[l] + ".csv"));
        }
        mark(f, "base-forecast");
    }

    // Holdout split, F_i targets and raw features of the training table.
    void build_table(Frequency f)
    {
        require(f, Stage::BaseForecast);
        const auto series = load_prepared(f);
        const auto table = make_training_table(series, learner_specs(f, true), max_length());
        const auto dir = subset_dir(f);
        write_error_matrix(table.targets, dir / "table_errors.csv");
        fs::create_directories(dir / "holdout");
        const auto prefixes = prefixes_for(series, table.targets.series_ids);
        for (std::size_t l = 0; l < table.holdout_forecasts.n_learners(); ++l) {
            ForecastMap fm;
            for (std::size_t s = 0; s < prefixes.size(); ++s) fm[prefixes[s].id] = table.holdout_forecasts.rows[s][l];
            write_forecasts(fm, prefixes, dir / "holdout" / (table.holdout_forecasts.learner_ids[l] + ".csv"));
        }
        std::vector<std::string> ids;
        std::vector<FeatureVector> feats;
        for (const auto& p : prefixes)
            if (p.train.size() >= 3) {
                ids.push_back(p.id);
                feats.push_back(extract_features(p));
            }
        write_features(ids, feats, dir / "table_features.csv");
        {
            std::ofstream out(dir / "table_skipped.txt");
            for (const auto& id : table.skipped) out << id << '\n';
        }
        mark(f, "build-table");
    }

    // Cross-validation runs followed by the final model on the full table.
    void train(Frequency f, FusionMethod m)
    {
        require(f, Stage::BuildTable);
        if (!needs_training(m)) return;
        const auto t = load_table(f);
        const auto dir = subset_dir(f);
        const auto slug = method_slug(m);
        const std::uint64_t master = static_cast<std::uint64_t>(cfg_.integer("run.seed"));
        const std::string code(1, frequency_code(f));

        std::ofstream cv(dir / ("cv_" + slug + ".csv"), std::ios::binary);
        cv << "repeat,fold,mean_owa,median_owa\n";
        const auto repeats = static_cast<int>(cfg_.integer("cv.repeats"));
        if (repeats > 0) {
            const auto plan = fold_plan(f, t.table.size());
            const auto n_jobs = static_cast<std::size_t>(repeats * plan.k);
            std::vector<OwaSummary> results(n_jobs);
            parallel_for(n_jobs, [&](std::size_t job) {
                const int r = static_cast<int>(job) / plan.k, k = static_cast<int>(job) % plan.k;
                const auto& held = plan.assignments[r][k];
                std::vector<std::size_t> fit;
                for (std::size_t i = 0; i < t.table.size(); ++i)
                    if (!std::binary_search(held.begin(), held.end(), i)) fit.push_back(i);
                const auto seed =
                    derive_seed(master, slug + "/cv/" + code, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k));
                results[job] = holdout_score(t, held, fit_predict_holdout(m, t, fit, held, seed, f));
                log::info(std::string(frequency_name(f)) + " " + std::string(fusion_method_name(m)) + " cv " +
                          std::to_string(r) + "/" + std::to_string(k) + ": " + text::fixed(results[job].mean_owa, 4));
            });
            for (std::size_t job = 0; job < n_jobs; ++job)
                cv << job / static_cast<std::size_t>(plan.k) << ',' << job % static_cast<std::size_t>(plan.k) << ','
                   << text::exact(results[job].mean_owa) << ',' << text::exact(results[job].median_owa) << '\n';
        }
        cv.close();

        std::vector<std::size_t> all(t.table.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        const auto seed = derive_seed(master, slug + "/final/" + code);
        TrainingHistory hist;
        if (m == FusionMethod::DeFORMA) {
            auto model = DeformaModel::build(architecture(), frequency_class(f).seasonal_period, seed);
            hist = train_deforma(model, t.table, training_config(seed));
            nn::save_checkpoint(model.to_checkpoint(), dir / "deforma.ckpt");
        } else {
            auto [net, h, scaler] = fit_fforma_n(t, all, seed);
            hist = h;
            auto ck = net.to_checkpoint();
            for (std::size_t j = 0; j < kFeatureCount; ++j) {
                ck.meta.emplace_back("scaler.mean." + std::to_string(j), text::exact(scaler.mean[j]));
                ck.meta.emplace_back("scaler.scale." + std::to_string(j), text::exact(scaler.scale[j]));
            }
            nn::save_checkpoint(ck, dir / "fforma_n.ckpt");
        }
        std::ofstream h(dir / ("history_" + slug + ".csv"), std::ios::binary);
        h << "epoch,train_loss,val_loss\n";
        for (std::size_t e = 0; e < hist.train_loss.size(); ++e)
            h << e << ',' << text::exact(hist.train_loss[e]) << ',' << text::exact(hist.val_loss[e]) << '\n';
        mark(f, "train-" + slug);
    }

    // Fuses the test-window forecasts with every method and scores them against Naive2.
    void evaluate(Frequency f)
    {
        require(f, Stage::Train);
        const auto series = load_prepared(f);
        const auto dir = subset_dir(f);
        const auto fc = forecast_matrix(f, series, dir / "forecasts");
        const auto ms = methods();
        const std::size_t K = fc.n_learners(), N = series.size();
        const int period = frequency_class(f).seasonal_period;

        // Reference errors and per-learner F_i on the test window.
        std::vector<SeriesErrors> ref(N);
        std::vector<std::vector<double>> learner_owa(N, std::vector<double>(K, 0.0));
        std::vector<bool> degenerate(N, false);
        for (std::size_t s = 0; s < N; ++s) {
            const auto& x = series[s];
            const auto h = x.horizon();
            try {
                ref[s] = evaluate_forecast(x.train, *x.test, naive2_forecast(x.train, period, h), period);
                for (std::size_t l = 0; l < K; ++l)
                    learner_owa[s][l] = owa_per_series(evaluate_forecast(x.train, *x.test, fc.rows[s][l], period), ref[s]);
            } catch (const DegenerateMetric&) {
                degenerate[s] = true;
            }
        }

        std::vector<std::vector<WeightVector>> weights;
        for (auto m : ms) weights.push_back(test_weights(f, m, series, learner_owa, degenerate));

        std::vector<SubsetScore> scores;
        std::vector<std::vector<std::optional<double>>> per_series(ms.size(), std::vector<std::optional<double>>(N));
        for (std::size_t mi = 0; mi < ms.size(); ++mi) {
            std::vector<SeriesErrors> errs, refs;
            double wl = 0.0;
            std::size_t used = 0;
            for (std::size_t s = 0; s < N; ++s) {
                if (degenerate[s]) continue;
                const auto fused = fuse_forecast(weights[mi][s], fc.rows[s]);
                const auto e = evaluate_forecast(series[s].train, *series[s].test, fused, period);
                errs.push_back(e);
                refs.push_back(ref[s]);
                per_series[mi][s] = owa_per_series(e, ref[s]);
                for (std::size_t l = 0; l < K; ++l) wl += weights[mi][s][l] * learner_owa[s][l];
                ++used;
            }
            if (used == 0) throw DegenerateMetric(std::string(frequency_name(f)) + ": every test series is degenerate");
            const auto agg = aggregate_owa(errs, refs);
            SubsetScore sc;
            sc.method = std::string(fusion_method_name(ms[mi]));
            sc.mean_owa = agg.mean_owa;
            sc.median_owa = agg.median_owa;
            sc.weighted_loss = wl / static_cast<double>(used);
            std::tie(sc.cv_mean_owa, sc.cv_median_owa, sc.cv_runs) = cv_summary(f, ms[mi]);
            scores.push_back(sc);
        }

        std::ofstream pe(dir / "test_errors.csv", std::ios::binary);
        pe << "series_id";
        for (auto m : ms) pe << ',' << fusion_method_name(m);
        pe << '\n';
        for (std::size_t s = 0; s < N; ++s) {
            pe << series[s].id;
            for (std::size_t mi = 0; mi < ms.size(); ++mi) {
                pe << ',';
                if (per_series[mi][s]) pe << text::exact(*per_series[mi][s]);
            }
            pe << '\n';
        }
        pe.close();

        std::ofstream ts(dir / "test_scores.csv", std::ios::binary);
        ts << "method,mean_owa,median_owa,weighted_loss,cv_mean_owa,cv_median_owa,cv_runs\n";
        for (const auto& sc : scores) {
            ts << sc.method << ',' << text::exact(sc.mean_owa) << ',' << text::exact(sc.median_owa) << ','
               << text::exact(sc.weighted_loss) << ',';
            if (sc.cv_runs > 0) ts << text::exact(sc.cv_mean_owa) << ',' << text::exact(sc.cv_median_owa);
            else ts << ',';
            ts << ',' << sc.cv_runs << '\n';
        }
        ts.close();
        mark(f, "evaluate");
    }

    std::vector<SubsetScore> subset_scores(Frequency f) const
    {
        const auto path = subset_dir(f) / "test_scores.csv";
        std::ifstream in(path);
        if (!in) throw LoadError("cannot open " + path.string());
        std::string line;
        std::getline(in, line);
        std::vector<SubsetScore> out;
        while (std::getline(in, line)) {
            if (text::trim(line).empty()) continue;
            const auto c = text::split_csv(line);
            if (c.size() != 7) throw ParseError(path.string() + ": expected 7 columns");
            SubsetScore s;
            s.method = std::string(c[0]);
            s.mean_owa = text::parse_double(c[1]).value();
            s.median_owa = text::parse_double(c[2]).value();
            s.weighted_loss = text::parse_double(c[3]).value();
            s.cv_runs = static_cast<std::size_t>(text::parse_int(c[6]).value());
            if (s.cv_runs > 0) {
                s.cv_mean_owa = text::parse_double(c[4]).value();
                s.cv_median_owa = text::parse_double(c[5]).value();
            }
            out.push_back(s);
        }
        return out;
    }

    // Assembles the ScoreTables across subsets, injects external scores and ranks.
    void rank()
    {
        guarded("rank", [&] {
            for (auto f : subsets()) require(f, Stage::Evaluate);
            const auto tables = collect_scores();
            write_score_table(tables.test, ScoreKind::Mean, out_ / "scores_mean_test.csv");
            write_score_table(tables.test, ScoreKind::Median, out_ / "scores_median_test.csv");
            if (tables.cv) {
                write_score_table(*tables.cv, ScoreKind::Mean, out_ / "scores_mean_cv.csv");
                write_score_table(*tables.cv, ScoreKind::Median, out_ / "scores_median_cv.csv");
            }
            std::ofstream r(out_ / "ranks.csv", std::ios::binary);
            r << "method,source,rank_test" << (tables.cv ? ",rank_cv" : "") << '\n';
            const auto rt = ranks_of(tables.test);
            const auto rc = tables.cv ? ranks_of(*tables.cv) : std::vector<int>{};
            for (std::size_t m = 0; m < tables.test.n_methods(); ++m) {
                r << tables.test.methods[m] << ',' << (tables.test.external[m] ? "external" : "internal") << ',' << rt[m];
                if (tables.cv) r << ',' << rc[m];
                r << '\n';
            }
            r.close();
            write_text(out_ / ".rank.done", "");
            fs::remove(out_ / "PARTIAL");
        });
    }

    // Schulze ranks, or rank 1 for a single method.
    static std::vector<int> ranks_of(const ScoreTable& t)
    {
        if (t.n_methods() == 1) return {1};
        return schulze_rank(t).ranks;
    }

private:
    struct Tables {
        ScoreTable test;
        std::optional<ScoreTable> cv;
    };

    struct LoadedTable {
        std::vector<TimeSeries> prefixes; // aligned with table rows; test = holdout actuals
        TrainingTable table;
    };

    Tables collect_scores() const
    {
        Tables t;
        t.test.subsets.clear();
        for (auto f : subsets()) t.test.subsets.emplace_back(1, frequency_code(f));
        bool have_cv = cfg_.integer("cv.repeats") > 0;
        if (have_cv) t.cv = ScoreTable{{}, t.test.subsets, {}, {}, {}};
        std::vector<std::vector<SubsetScore>> per;
        for (auto f : subsets()) per.push_back(subset_scores(f));
        for (auto m : methods()) {
            const auto name = std::string(fusion_method_name(m));
            std::vector<double> mean, cv_mean;
            std::vector<std::optional<double>> med, cv_med;
            for (const auto& rows : per) {
                const auto it = std::find_if(rows.begin(), rows.end(), [&](const SubsetScore& s) { return s.method == name; });
                if (it == rows.end()) throw StateError("test scores lack method " + name + "; rerun evaluate");
                mean.push_back(it->mean_owa);
                med.emplace_back(it->median_owa);
                cv_mean.push_back(it->cv_mean_owa);
                cv_med.emplace_back(it->cv_median_owa);
            }
            t.test.add_method(name, mean, med);
            if (t.cv) t.cv->add_method(name, cv_mean, cv_med);
        }
        const auto& ext = cfg_.str("report.external_scores");
        if (!ext.empty()) {
            const auto table = select_subsets(read_score_table(ext), t.test.subsets);
            for (std::size_t m = 0; m < table.n_methods(); ++m) {
                t.test.add_method(table.methods[m], table.mean_owa[m], table.median_owa[m], true);
                if (t.cv) t.cv->add_method(table.methods[m], table.mean_owa[m], table.median_owa[m], true);
            }
        }
        return t;
    }

    void validate_config() const
    {
        if (subsets().empty()) throw ConfigError("data.subsets is empty");
        if (methods().empty()) throw ConfigError("fusion.methods is empty");
        std::set<std::string> seen;
        for (auto m : methods())
            if (!seen.insert(std::string(fusion_method_name(m))).second)
                throw ConfigError("fusion.methods lists " + std::string(fusion_method_name(m)) + " twice");
        if (cfg_.list("learners.pool").size() + cfg_.list("learners.external").size() < 2)
            throw ConfigError("the learner pool needs at least 2 learners");
        for (const auto& l : cfg_.list("learners.pool")) (void)min_train_length(l);
        if (cfg_.integer("run.threads") < 0) throw ConfigError("run.threads must be >= 0");
        if (cfg_.integer("data.limit") < 0) throw ConfigError("data.limit must be >= 0");
        if (cfg_.integer("cv.repeats") < 0) throw ConfigError("cv.repeats must be >= 0");
        if (cfg_.integer("cv.repeats") > 0 && cfg_.integer("cv.folds") < 2) throw ConfigError("cv.folds must be >= 2");
        auto arch = architecture();
        arch.validate();
        training_config(0).validate();
        const double d = cfg_.real("fforma_n.dropout_rate");
        if (d < 0.0 || d >= 1.0) throw ConfigError("fforma_n.dropout_rate must lie in [0, 1)");
    }

    std::string manifest_text() const
    {
        return "# deforma run manifest; rerun with: deforma run --config manifest.txt --out <dir>\n" + cfg_.render();
    }

    std::size_t max_length() const { return static_cast<std::size_t>(cfg_.integer("model.max_length")); }

    ArchitectureConfig architecture() const
    {
        ArchitectureConfig a;
        a.halvings = static_cast<int>(cfg_.integer("model.halvings"));
        a.conv_filters = static_cast<int>(cfg_.integer("model.conv_filters"));
        a.meta_features = static_cast<int>(cfg_.integer("model.meta_features"));
        a.max_length = static_cast<int>(cfg_.integer("model.max_length"));
        a.dropout_rate = cfg_.real("model.dropout_rate");
        a.n_learners = static_cast<int>(cfg_.list("learners.pool").size() + cfg_.list("learners.external").size());
        return a;
    }

    TrainingConfig training_config(std::uint64_t seed) const
    {
        TrainingConfig t;
        t.learning_rate = cfg_.real("training.learning_rate");
        t.batch_size = static_cast<int>(cfg_.integer("training.batch_size"));
        t.max_epochs = static_cast<int>(cfg_.integer("training.max_epochs"));
        t.patience = static_cast<int>(cfg_.integer("training.patience"));
        t.validation_fraction = cfg_.real("training.validation_fraction");
        t.seed = seed;
        return t;
    }

    // Internal learners in pool order, then external ones. `holdout` selects which file an external
    // learner reads.
    std::vector<LearnerSpec> learner_specs(Frequency f, bool holdout) const
    {
        std::vector<LearnerSpec> out;
        for (const auto& l : cfg_.list("learners.pool")) out.push_back({l, l, {}});
        for (const auto& e : cfg_.list("learners.external")) {
            std::vector<std::string> parts;
            std::stringstream ss(e);
            std::string p;
            while (std::getline(ss, p, '|')) parts.emplace_back(text::trim(p));
            if (parts.size() != 3) throw ConfigError("learners.external entry '" + e + "' is not id|holdout|test");
            std::string path = holdout ? parts[1] : parts[2];
            for (auto pos = path.find("{F}"); pos != std::string::npos; pos = path.find("{F}"))
                path.replace(pos, 3, std::string(frequency_name(f)));
            out.push_back({parts[0], "", path});
        }
        return out;
    }

    std::vector<std::string> learner_ids() const
    {
        std::vector<std::string> out;
        for (const auto& s : learner_specs(Frequency::Yearly, false)) out.push_back(s.id);
        return out;
    }

    std::vector<TimeSeries> load_prepared(Frequency f) const
    {
        const auto dir = subset_dir(f);
        return load_m4_dataset(dir / "series_train.csv", dir / "series_test.csv", {}, frequency_class(f));
    }

    // The series of `ids`, cut to the training-table prefix with the holdout window as test values.
    static std::vector<TimeSeries> prefixes_for(const std::vector<TimeSeries>& series, const std::vector<std::string>& ids)
    {
        std::map<std::string, const TimeSeries*> by_id;
        for (const auto& s : series) by_id[s.id] = &s;
        std::vector<TimeSeries> out;
        for (const auto& id : ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) throw StateError("training table names unknown series " + id);
            TimeSeries p = *it->second;
            const auto h = static_cast<std::ptrdiff_t>(p.horizon());
            p.test = std::vector<double>(p.train.end() - h, p.train.end());
            p.train.resize(p.train.size() - static_cast<std::size_t>(h));
            out.push_back(std::move(p));
        }
        return out;
    }

    ForecastMatrix forecast_matrix(Frequency, const std::vector<TimeSeries>& series, const fs::path& dir) const
    {
        std::vector<LearnerSpec> specs;
        for (const auto& id : learner_ids()) specs.push_back({id, "", dir / (id + ".csv")});
        return pool_forecasts(series, specs);
    }

    LoadedTable load_table(Frequency f) const
    {
        LoadedTable t;
        const auto dir = subset_dir(f);
        t.table.targets = read_error_matrix(dir / "table_errors.csv");
        if (t.table.targets.learner_ids != learner_ids())
            throw StateError("table_errors.csv learners do not match learners.pool; rebuild the table");
        t.prefixes = prefixes_for(load_prepared(f), t.table.targets.series_ids);
        t.table.holdout_forecasts = forecast_matrix(f, t.prefixes, dir / "holdout");
        for (const auto& p : t.prefixes) t.table.inputs.push_back(pad_values(p.train, max_length()));
        return t;
    }

    FoldPlan fold_plan(Frequency f, std::size_t n) const
    {
        const auto k = static_cast<int>(cfg_.integer("cv.folds"));
        if (static_cast<std::size_t>(k) > n)
            throw DatasetError(std::string(frequency_name(f)) + ": " + std::to_string(n) + " table rows are fewer than " +
                               std::to_string(k) + " folds");
        return make_fold_plan(n, k, static_cast<int>(cfg_.integer("cv.repeats")),
                              derive_seed(static_cast<std::uint64_t>(cfg_.integer("run.seed")), "folds",
                                          static_cast<std::uint64_t>(frequency_code(f))));
    }

    struct FformaFit {
        FformaNet net;
        TrainingHistory history;
        FeatureScaler scaler;
    };

    // Rows of `rows` with enough history for features; the scaler is fitted on them.
    FformaFit fit_fforma_n(const LoadedTable& t, const std::vector<std::size_t>& rows, std::uint64_t seed) const
    {
        std::vector<FeatureVector> feats;
        ErrorMatrix errs;
        errs.learner_ids = t.table.targets.learner_ids;
        for (auto i : rows) {
            if (t.prefixes[i].train.size() < 3) continue;
            feats.push_back(extract_features(t.prefixes[i]));
            errs.series_ids.push_back(t.table.targets.series_ids[i]);
            errs.rows.push_back(t.table.targets.rows[i]);
        }
        const auto scaler = FeatureScaler::fit(feats);
        const auto scaled = scaler.apply(feats);
        auto [net, hist] = train_fforma_n(scaled, errs, training_config(seed), cfg_.real("fforma_n.dropout_rate"));
        return {std::move(net), std::move(hist), scaler};
    }

    std::vector<WeightVector> fforma_weights(const FformaNet& net, const FeatureScaler& scaler,
                                             const std::vector<TimeSeries>& series) const
    {
        std::vector<WeightVector> out;
        for (const auto& s : series) {
            if (s.train.size() < 3) out.push_back(WeightVector::uniform(net.n_learners()));
            else out.push_back(net.predict_weights(scaler.apply(extract_features(s))));
        }
        return out;
    }

    static std::vector<WeightVector> deforma_weights(const DeformaModel& model, const std::vector<PaddedInput>& inputs)
    {
        std::vector<WeightVector> out;
        constexpr std::size_t kBatch = 256;
        for (std::size_t start = 0; start < inputs.size(); start += kBatch) {
            std::vector<const PaddedInput*> batch;
            for (std::size_t i = start; i < std::min(inputs.size(), start + kBatch); ++i) batch.push_back(&inputs[i]);
            for (auto& w : model.predict_weights(batch)) out.push_back(std::move(w));
        }
        return out;
    }

    // Trains on rows `fit` and returns weights for rows `held` of the table.
    std::vector<WeightVector> fit_predict_holdout(FusionMethod m, const LoadedTable& t, const std::vector<std::size_t>& fit,
                                                  const std::vector<std::size_t>& held, std::uint64_t seed, Frequency f) const
    {
        std::vector<TimeSeries> held_series;
        for (auto i : held) held_series.push_back(t.prefixes[i]);
        if (m == FusionMethod::DeFORMA) {
            TrainingTable sub;
            sub.targets.learner_ids = t.table.targets.learner_ids;
            for (auto i : fit) {
                sub.inputs.push_back(t.table.inputs[i]);
                sub.targets.series_ids.push_back(t.table.targets.series_ids[i]);
                sub.targets.rows.push_back(t.table.targets.rows[i]);
            }
            auto model = DeformaModel::build(architecture(), frequency_class(f).seasonal_period, seed);
            train_deforma(model, sub, training_config(seed));
            std::vector<PaddedInput> inputs;
            for (auto i : held) inputs.push_back(t.table.inputs[i]);
            return deforma_weights(model, inputs);
        }
        const auto fitted = fit_fforma_n(t, fit, seed);
        return fforma_weights(fitted.net, fitted.scaler, held_series);
    }

    // Mean/median OWA of fused holdout forecasts over the rows `held`.
    OwaSummary holdout_score(const LoadedTable& t, const std::vector<std::size_t>& held,
                             const std::vector<WeightVector>& weights) const
    {
        std::vector<SeriesErrors> errs, refs;
        for (std::size_t j = 0; j < held.size(); ++j) {
            const auto& p = t.prefixes[held[j]];
            const auto fused = fuse_forecast(weights[j], t.table.holdout_forecasts.rows[held[j]]);
            errs.push_back(evaluate_forecast(p.train, *p.test, fused, p.period()));
            refs.push_back(evaluate_forecast(p.train, *p.test, naive2_forecast(p.train, p.period(), p.horizon()), p.period()));
        }
        return aggregate_owa(errs, refs);
    }

    // (mean of run means, mean of run medians, runs). Untrained methods are scored on the same folds here.
    std::tuple<double, double, std::size_t> cv_summary(Frequency f, FusionMethod m) const
    {
        if (cfg_.integer("cv.repeats") == 0) return {0.0, 0.0, 0};
        std::vector<std::pair<double, double>> runs;
        if (needs_training(m)) {
            const auto path = subset_dir(f) / ("cv_" + method_slug(m) + ".csv");
            std::ifstream in(path);
            if (!in) throw LoadError("cannot open " + path.string());
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) {
                if (text::trim(line).empty()) continue;
                const auto c = text::split_csv(line);
                runs.emplace_back(text::parse_double(c[2]).value(), text::parse_double(c[3]).value());
            }
        } else {
            const auto t = load_table(f);
            const auto plan = fold_plan(f, t.table.size());
            for (int r = 0; r < plan.repeats; ++r)
                for (int k = 0; k < plan.k; ++k) {
                    const auto& held = plan.assignments[r][k];
                    std::vector<WeightVector> w;
                    for (auto i : held) {
                        if (m == FusionMethod::AVG) w.push_back(WeightVector::uniform(t.table.targets.n_learners()));
                        else w.push_back(one_hot(t.table.targets.n_learners(), oracle_best(t.table.targets.rows[i])));
                    }
                    const auto s = holdout_score(t, held, w);
                    runs.emplace_back(s.mean_owa, s.median_owa);
                }
        }
        if (runs.empty()) throw StateError("no cross-validation runs recorded for " + std::string(fusion_method_name(m)));
        double a = 0.0, b = 0.0;
        for (const auto& [x, y] : runs) {
            a += x;
            b += y;
        }
        const auto n = static_cast<double>(runs.size());
        return {a / n, b / n, runs.size()};
    }

    static WeightVector one_hot(std::size_t k, std::size_t i)
    {
        WeightVector w{std::vector<double>(k, 0.0)};
        w.weights[i] = 1.0;
        return w;
    }

    std::vector<WeightVector> test_weights(Frequency f, FusionMethod m, const std::vector<TimeSeries>& series,
                                           const std::vector<std::vector<double>>& learner_owa,
                                           const std::vector<bool>& degenerate) const
    {
        const std::size_t K = learner_ids().size();
        const auto dir = subset_dir(f);
        switch (m) {
        case FusionMethod::AVG: return std::vector<WeightVector>(series.size(), WeightVector::uniform(K));
        case FusionMethod::OracleBest: {
            std::vector<WeightVector> out;
            for (std::size_t s = 0; s < series.size(); ++s)
                out.push_back(one_hot(K, degenerate[s] ? 0 : oracle_best(learner_owa[s])));
            return out;
        }
        case FusionMethod::DeFORMA: {
            const auto model = DeformaModel::from_checkpoint(nn::load_checkpoint(dir / "deforma.ckpt"));
            std::vector<PaddedInput> inputs;
            for (const auto& s : series) inputs.push_back(pad_series(s, max_length()));
            return deforma_weights(model, inputs);
        }
        case FusionMethod::FFORMA_N: {
            const auto ck = nn::load_checkpoint(dir / "fforma_n.ckpt");
            FeatureScaler scaler;
            for (std::size_t j = 0; j < kFeatureCount; ++j) {
                scaler.mean[j] = std::stod(ck.meta_value("scaler.mean." + std::to_string(j)));
                scaler.scale[j] = std::stod(ck.meta_value("scaler.scale." + std::to_string(j)));
            }
            return fforma_weights(FformaNet::from_checkpoint(ck), scaler, series);
        }
        }
        throw ArgumentError("unknown fusion method");
    }

    // Runs fn(0..n-1) on run.threads workers. The first failure (by job index) is rethrown.
    template <typename Fn>
    void parallel_for(std::size_t n, Fn&& fn) const
    {
        auto threads = static_cast<std::size_t>(cfg_.integer("run.threads"));
        if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
        threads = std::min(threads, n);
        std::vector<std::exception_ptr> errors(n);
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t job; (job = next++) < n;) {
                try {
                    fn(job);
                } catch (...) {
                    errors[job] = std::current_exception();
                }
            }
        };
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    fs::path marker(Frequency f, const std::string& stage) const { return subset_dir(f) / ("." + stage + ".done"); }

    void mark(Frequency f, const std::string& stage) const { write_text(marker(f, stage), ""); }

    // A rerun stage makes everything downstream of it stale.
    void invalidate_after(Frequency f, Stage s) const
    {
        for (auto later : kStages) {
            if (static_cast<int>(later) <= static_cast<int>(s)) continue;
            if (later == Stage::Train)
                for (auto m : methods()) fs::remove(marker(f, "train-" + method_slug(m)));
            else
                fs::remove(marker(f, std::string(stage_name(later))));
        }
        if (fs::remove(out_ / ".rank.done") || !fs::exists(out_ / "PARTIAL")) write_text(out_ / "PARTIAL", "incomplete\n");
    }

    void require(Frequency f, Stage s) const
    {
        if (!done(f, s))
            throw StateError(std::string(frequency_name(f)) + ": stage " + std::string(stage_name(s)) + " has not completed");
    }

    template <typename Fn>
    void guarded(const std::string& what, Fn&& fn)
    {
        try {
            fn();
        } catch (const std::exception& e) {
            write_text(out_ / "PARTIAL", "failed at " + what + ": " + e.what() + "\n");
            throw;
        }
    }

    static std::string read_text(const fs::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static void write_text(const fs::path& p, const std::string& s)
    {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw LoadError("cannot write " + p.string());
        out << s;
    }

    Config cfg_;
    fs::path out_;
};

} // namespace deforma
