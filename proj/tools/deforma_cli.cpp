// deforma: command-line driver for the forecast-fusion experiment.
//
//   deforma --config run.cfg --out runs/a run
//   deforma --out runs/a --subset W train --method deforma
//   deforma --out runs/a report

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "deforma/deforma.hpp"

namespace {

using namespace deforma;

struct Globals {
    std::string config;
    std::optional<long long> seed;
    std::string subset;
    std::string out = "run";
    bool verbose = false;
};

Config resolve_config(const Globals& g)
{
    Config cfg;
    const auto manifest = std::filesystem::path(g.out) / "manifest.txt";
    if (!g.config.empty()) cfg = Config::load(g.config);
    else if (std::filesystem::exists(manifest)) cfg = Config::load(manifest);
    if (g.seed) cfg.set("run.seed", std::to_string(*g.seed), "--seed");
    return cfg;
}

std::vector<Frequency> selected(const Experiment& exp, const Globals& g)
{
    if (g.subset.empty()) return exp.subsets();
    const auto f = parse_frequency(g.subset);
    const auto all = exp.subsets();
    if (std::find(all.begin(), all.end(), f) == all.end())
        throw ArgumentError("subset " + g.subset + " is not listed in data.subsets");
    return {f};
}

void print_schema()
{
    for (const auto& k : config_schema())
        std::cout << "# " << k.help << '\n' << k.key << " = " << k.default_value << "\n\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Late meta-learning forecast fusion: experiment driver"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "config file (key = value, [section] headers)");
    app.add_option("--seed", g.seed, "override run.seed");
    app.add_option("--subset", g.subset, "restrict to one subset: H, D, W, M, Q or Y");
    app.add_option("--out", g.out, "run directory")->capture_default_str();
    app.add_flag("-v,--verbose", g.verbose, "progress logging");

    auto* schema = app.add_subcommand("schema", "print every config key with its default");
    auto* prepare = app.add_subcommand("prepare", "ingest and validate the M4-format files");
    auto* base = app.add_subcommand("base-forecast", "forecast the test window with every pooled learner");
    auto* table = app.add_subcommand("build-table", "holdout errors and features for meta-training");
    auto* train = app.add_subcommand("train", "cross-validate and fit the meta-learners");
    std::string method;
    train->add_option("--method", method, "deforma or fforma-n (default: every trained method in fusion.methods)");
    auto* evaluate = app.add_subcommand("evaluate", "score every fusion method on the test split");
    auto* rank = app.add_subcommand("rank", "assemble score tables and Schulze ranks");
    auto* report = app.add_subcommand("report", "render mean/median tables of a completed run");
    auto* run = app.add_subcommand("run", "every remaining stage, resuming a partial run");

    CLI11_PARSE(app, argc, argv);
    if (g.verbose) log::set_level(log::Level::Info);

    try {
        if (schema->parsed()) {
            print_schema();
            return 0;
        }
        Experiment exp(resolve_config(g), g.out);
        auto each = [&](Stage s, std::optional<FusionMethod> m = std::nullopt) {
            for (auto f : selected(exp, g)) exp.run_stage(f, s, m);
        };
        if (prepare->parsed()) each(Stage::Prepare);
        else if (base->parsed()) each(Stage::BaseForecast);
        else if (table->parsed()) each(Stage::BuildTable);
        else if (train->parsed()) {
            std::optional<FusionMethod> m;
            if (!method.empty()) m = parse_fusion_method(method);
            each(Stage::Train, m);
        } else if (evaluate->parsed()) each(Stage::Evaluate);
        else if (rank->parsed()) exp.rank();
        else if (report->parsed()) std::cout << report_run(exp);
        else if (run->parsed()) {
            if (g.subset.empty()) exp.run();
            else exp.run(parse_frequency(g.subset));
            if (exp.ranked()) std::cout << report_run(exp);
        }
    } catch (const std::exception& e) {
        std::cerr << "deforma: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
