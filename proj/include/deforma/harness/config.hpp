#pragma once

// Flat key=value run configuration with [section] headers. Every key has a documented default in
// the schema below, and the resolved values are echoed verbatim into the run manifest.
//
//   # comment
//   [training]
//   learning_rate = 1e-3
//
// resolves to the key "training.learning_rate". Unknown keys are rejected.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/common/text.hpp"

namespace deforma {

struct ConfigKey {
    std::string_view key;
    std::string_view default_value;
    std::string_view help;
};

inline const std::vector<ConfigKey>& config_schema()
{
    static const std::vector<ConfigKey> schema{
        {"data.dir", "data/m4", "directory holding <Name>-train.csv, <Name>-test.csv (optionally under Train/ and Test/) and M4-info.csv"},
        {"data.subsets", "H,D,W,M,Q,Y", "frequency subsets to run, in report column order"},
        {"data.limit", "0", "keep only the first N series of each subset (0 = all)"},
        {"learners.pool", "ses,holt,damped,comb,theta", "internal base learners, in pool order"},
        {"learners.external", "", "precomputed learners as id|holdout_pattern|test_pattern; {F} expands to the subset name"},
        {"fusion.methods", "AVG,OracleBest,FFORMA-N,DeFORMA", "fusion methods to evaluate"},
        {"model.halvings", "5", "number of stride-2 sites in use (1..5)"},
        {"model.conv_filters", "64", "filters per temporal head and backbone width"},
        {"model.meta_features", "40", "width of the dense layer before the output"},
        {"model.max_length", "32", "input window; shorter series are left-padded with zeros"},
        {"model.dropout_rate", "0.1", "spatial dropout rate"},
        {"fforma_n.dropout_rate", "0.1", "dropout after each FFORMA-N hidden layer"},
        {"training.learning_rate", "0.001", "Adam learning rate"},
        {"training.batch_size", "92", "mini-batch size"},
        {"training.max_epochs", "150", "epoch cap"},
        {"training.patience", "20", "early-stopping patience in epochs"},
        {"training.validation_fraction", "0.1", "share of training rows held out for early stopping"},
        {"cv.folds", "10", "folds per cross-validation repeat"},
        {"cv.repeats", "5", "cross-validation repeats (0 skips cross-validation)"},
        {"run.seed", "0", "master seed"},
        {"run.threads", "0", "worker threads for cross-validation folds (0 = all cores); results do not depend on it"},
        {"report.external_scores", "", "optional score table CSV of published methods, ranked alongside this run"},
    };
    return schema;
}

class Config {
public:
    Config()
    {
        for (const auto& k : config_schema()) values_[std::string(k.key)] = std::string(k.default_value);
    }

    static Config parse(std::istream& in, const std::string& origin = "config")
    {
        Config cfg;
        std::string line, section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            std::string_view s = text::trim(std::string_view(line).substr(0, hash));
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']') throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section");
                section = std::string(text::trim(s.substr(1, s.size() - 2)));
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
            std::string key(text::trim(s.substr(0, eq)));
            if (!section.empty()) key = section + "." + key;
            cfg.set(key, std::string(text::trim(s.substr(eq + 1))), origin + ":" + std::to_string(line_no));
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path.string());
        return parse(in, path.string());
    }

    void set(const std::string& key, std::string value, const std::string& where = "override")
    {
        if (!values_.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
        values_[key] = std::move(value);
    }

    const std::string& str(const std::string& key) const
    {
        const auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    long long integer(const std::string& key) const
    {
        const auto v = text::parse_int(str(key));
        if (!v) throw ConfigError(key + ": expected an integer, got '" + str(key) + "'");
        return *v;
    }

    double real(const std::string& key) const
    {
        const auto v = text::parse_double(str(key));
        if (!v) throw ConfigError(key + ": expected a number, got '" + str(key) + "'");
        return *v;
    }

    // Comma-separated list with blanks dropped.
    std::vector<std::string> list(const std::string& key) const
    {
        std::vector<std::string> out;
        std::stringstream ss(str(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto t = text::trim(item);
            if (!t.empty()) out.emplace_back(t);
        }
        return out;
    }

    // Schema order, one "key = value" line each.
    std::string render() const
    {
        std::string out;
        for (const auto& k : config_schema()) out += std::string(k.key) + " = " + values_.at(std::string(k.key)) + "\n";
        return out;
    }

    bool operator==(const Config& other) const { return values_ == other.values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace deforma
