#pragma once

// M4-style series, loading, padding and cross-validation fold plans.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/common/log.hpp"
#include "deforma/common/text.hpp"

namespace deforma {

enum class Frequency { Hourly, Daily, Weekly, Monthly, Quarterly, Yearly };

inline constexpr Frequency kAllFrequencies[] = {Frequency::Hourly, Frequency::Daily,  Frequency::Weekly,
                                                Frequency::Monthly, Frequency::Quarterly, Frequency::Yearly};

struct FrequencyClass {
    Frequency label;
    int seasonal_period;
    int horizon;

    friend bool operator==(const FrequencyClass&, const FrequencyClass&) = default;
};

inline constexpr FrequencyClass frequency_class(Frequency f)
{
    switch (f) {
    case Frequency::Hourly: return {f, 24, 48};
    case Frequency::Daily: return {f, 1, 14};
    case Frequency::Weekly: return {f, 1, 13};
    case Frequency::Monthly: return {f, 12, 18};
    case Frequency::Quarterly: return {f, 4, 8};
    case Frequency::Yearly: return {f, 1, 6};
    }
    return {f, 1, 1};
}

// Single-letter code used on the command line and in score tables (H, D, W, M, Q, Y).
inline constexpr char frequency_code(Frequency f)
{
    constexpr char codes[] = {'H', 'D', 'W', 'M', 'Q', 'Y'};
    return codes[static_cast<int>(f)];
}

inline std::string_view frequency_name(Frequency f)
{
    constexpr std::string_view names[] = {"Hourly", "Daily", "Weekly", "Monthly", "Quarterly", "Yearly"};
    return names[static_cast<int>(f)];
}

inline Frequency parse_frequency(std::string_view s)
{
    s = text::trim(s);
    for (Frequency f : kAllFrequencies) {
        if (s.size() == 1 && (s[0] == frequency_code(f) || s[0] == frequency_code(f) + ('a' - 'A'))) return f;
        if (s == frequency_name(f)) return f;
    }
    throw ArgumentError("unknown frequency '" + std::string(s) + "'");
}

struct TimeSeries {
    std::string id;
    FrequencyClass frequency;
    std::string domain_tag;
    std::vector<double> train;
    std::optional<std::vector<double>> test;

    int period() const { return frequency.seasonal_period; }
    int horizon() const { return frequency.horizon; }
};

// Throws ValidationError when a series breaks its invariants.
inline void validate(const TimeSeries& s)
{
    if (s.train.empty()) throw ValidationError("series " + s.id + ": empty training values");
    for (double v : s.train)
        if (!std::isfinite(v)) throw ValidationError("series " + s.id + ": non-finite training value");
    if (s.test) {
        if (static_cast<int>(s.test->size()) != s.frequency.horizon)
            throw ValidationError("series " + s.id + ": test length " + std::to_string(s.test->size()) +
                                  " != horizon " + std::to_string(s.frequency.horizon));
        for (double v : *s.test)
            if (!std::isfinite(v)) throw ValidationError("series " + s.id + ": non-finite test value");
    }
}

struct PaddedInput {
    std::vector<double> values;
    std::size_t original_length = 0;
};

// Left zero-pads to max_length, or keeps the most recent max_length values.
inline PaddedInput pad_values(std::span<const double> values, std::size_t max_length)
{
    if (max_length < 1) throw ArgumentError("pad: max_length must be >= 1");
    PaddedInput out;
    out.original_length = std::min(values.size(), max_length);
    out.values.assign(max_length, 0.0);
    const std::size_t n = out.original_length;
    std::copy(values.end() - static_cast<std::ptrdiff_t>(n), values.end(), out.values.end() - static_cast<std::ptrdiff_t>(n));
    return out;
}

inline PaddedInput pad_series(const TimeSeries& s, std::size_t max_length) { return pad_values(s.train, max_length); }

namespace detail {

struct CsvRow {
    std::string id;
    std::vector<double> values;
};

// Reads an (id, v1, v2, ...) file. A first row whose second cell is not numeric is treated as a header.
inline std::vector<CsvRow> read_value_rows(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    std::vector<CsvRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto cells = text::split_csv(line);
        if (line_no == 1 && cells.size() > 1 && !text::parse_double(cells[1])) continue;
        CsvRow row;
        row.id = std::string(cells[0]);
        if (row.id.empty()) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": empty series id");
        bool ended = false;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            if (cells[i].empty()) {
                ended = true;
                continue;
            }
            if (ended)
                throw ParseError("row " + row.id + ": value after an empty cell in " + path.string());
            const auto v = text::parse_double(cells[i]);
            if (!v) throw ParseError("row " + row.id + ": cannot parse '" + std::string(cells[i]) + "'");
            row.values.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace detail

// Loads one frequency subset from M4-format train/test/info files. Empty test or info paths are
// allowed: the series then carry no test values / no domain tag.
inline std::vector<TimeSeries> load_m4_dataset(const std::filesystem::path& train_csv,
                                               const std::filesystem::path& test_csv,
                                               const std::filesystem::path& info_csv, FrequencyClass frequency)
{
    const auto train_rows = detail::read_value_rows(train_csv);

    std::map<std::string, std::vector<double>> tests;
    if (!test_csv.empty()) {
        for (auto& row : detail::read_value_rows(test_csv)) tests.emplace(row.id, std::move(row.values));
    }

    std::map<std::string, std::string> categories;
    if (!info_csv.empty()) {
        std::ifstream in(info_csv);
        if (!in) throw LoadError("cannot open " + info_csv.string());
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (text::trim(line).empty()) continue;
            const auto cells = text::split_csv(line);
            if (first) {
                first = false;
                if (cells.size() > 3 && !text::parse_int(cells[3])) continue;
            }
            if (cells.size() < 3) throw ParseError("info row '" + line + "' has fewer than 3 columns");
            categories.emplace(std::string(cells[0]), std::string(cells[1]));
        }
    }

    std::vector<TimeSeries> out;
    out.reserve(train_rows.size());
    for (const auto& row : train_rows) {
        TimeSeries s;
        s.id = row.id;
        s.frequency = frequency;
        s.train = row.values;
        if (auto it = categories.find(row.id); it != categories.end()) s.domain_tag = it->second;
        if (!test_csv.empty()) {
            auto it = tests.find(row.id);
            if (it == tests.end()) throw ValidationError("series " + row.id + ": missing from test file");
            s.test = it->second;
        }
        validate(s);
        out.push_back(std::move(s));
    }
    return out;
}

// Writes the train (and, when every series has one, test) values back in M4 layout.
inline void write_m4_dataset(std::span<const TimeSeries> data, const std::filesystem::path& train_csv,
                             const std::filesystem::path& test_csv = {})
{
    auto write_rows = [&](const std::filesystem::path& path, bool test) {
        std::ofstream out(path);
        if (!out) throw LoadError("cannot write " + path.string());
        out << "id";
        std::size_t width = 0;
        for (const auto& s : data) width = std::max(width, test ? s.test->size() : s.train.size());
        for (std::size_t i = 1; i <= width; ++i) out << ",V" << i;
        out << '\n';
        for (const auto& s : data) {
            out << s.id;
            const auto& v = test ? *s.test : s.train;
            for (double x : v) out << ',' << text::exact(x);
            out << '\n';
        }
    };
    write_rows(train_csv, false);
    if (!test_csv.empty()) write_rows(test_csv, true);
}

struct FoldPlan {
    std::uint64_t seed = 0;
    int k = 0;
    int repeats = 0;
    // assignments[repeat][fold] = sorted series indices in that fold
    std::vector<std::vector<std::vector<std::size_t>>> assignments;

    // Fold that holds series `index` in repeat `r`.
    int fold_of(int r, std::size_t index) const
    {
        for (int f = 0; f < k; ++f) {
            const auto& fold = assignments[r][f];
            if (std::binary_search(fold.begin(), fold.end(), index)) return f;
        }
        return -1;
    }
};

// Shuffled round-robin partition; fold sizes differ by at most one.
inline FoldPlan make_fold_plan(std::size_t n_series, int k, int repeats, std::uint64_t seed)
{
    if (k < 2) throw ArgumentError("fold plan: k must be >= 2");
    if (repeats < 1) throw ArgumentError("fold plan: repeats must be >= 1");
    if (static_cast<std::size_t>(k) > n_series)
        throw ArgumentError("fold plan: k=" + std::to_string(k) + " exceeds n_series=" + std::to_string(n_series));

    FoldPlan plan{seed, k, repeats, {}};
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(n_series);
    for (int r = 0; r < repeats; ++r) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        // Fisher-Yates with an explicit draw so the plan does not depend on std::shuffle's implementation.
        for (std::size_t i = n_series - 1; i > 0; --i) {
            const std::size_t j = rng() % (i + 1);
            std::swap(order[i], order[j]);
        }
        std::vector<std::vector<std::size_t>> folds(k);
        for (std::size_t i = 0; i < n_series; ++i) folds[i % k].push_back(order[i]);
        for (auto& f : folds) std::sort(f.begin(), f.end());
        plan.assignments.push_back(std::move(folds));
    }
    return plan;
}

} // namespace deforma
