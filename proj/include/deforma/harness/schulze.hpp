#pragma once

// Schulze ranking of methods over per-subset ballots, plus the ScoreTable it consumes.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "deforma/common/error.hpp"

namespace deforma {

// Methods x subsets. mean_owa is complete; median_owa may have gaps.
struct ScoreTable {
    std::vector<std::string> methods;
    std::vector<std::string> subsets;
    std::vector<std::vector<double>> mean_owa;
    std::vector<std::vector<std::optional<double>>> median_owa;
    // Scores injected from published results rather than computed in this run.
    std::vector<bool> external;

    std::size_t n_methods() const { return methods.size(); }
    std::size_t n_subsets() const { return subsets.size(); }

    std::size_t method_index(const std::string& m) const
    {
        const auto it = std::find(methods.begin(), methods.end(), m);
        if (it == methods.end()) throw ArgumentError("score table: no method " + m);
        return static_cast<std::size_t>(it - methods.begin());
    }

    void add_method(std::string name, std::vector<double> mean, std::vector<std::optional<double>> median = {},
                    bool is_external = false)
    {
        if (mean.size() != subsets.size()) throw ShapeError("score table: " + name + " has the wrong number of subsets");
        if (median.empty()) median.assign(subsets.size(), std::nullopt);
        if (median.size() != subsets.size()) throw ShapeError("score table: " + name + " median row has the wrong size");
        if (std::find(methods.begin(), methods.end(), name) != methods.end())
            throw ArgumentError("score table: duplicate method " + name);
        methods.push_back(std::move(name));
        mean_owa.push_back(std::move(mean));
        median_owa.push_back(std::move(median));
        external.push_back(is_external);
    }

    void validate() const
    {
        if (mean_owa.size() != methods.size() || median_owa.size() != methods.size() || external.size() != methods.size())
            throw ValidationError("score table: row count mismatch");
        for (std::size_t m = 0; m < methods.size(); ++m) {
            if (mean_owa[m].size() != subsets.size() || median_owa[m].size() != subsets.size())
                throw ValidationError("score table: " + methods[m] + " has the wrong number of subsets");
            for (double v : mean_owa[m])
                if (std::isnan(v)) throw ValidationError("score table: NaN mean OWA for " + methods[m]);
        }
    }
};

struct SchulzeResult {
    std::vector<std::string> methods;
    // d[a][b]: ballots ranking a strictly above b. p: strongest-path strengths.
    std::vector<std::vector<int>> d;
    std::vector<std::vector<int>> p;
    // Number of methods each one beats on strongest paths.
    std::vector<int> wins;
    // 1 = best; methods with equal win counts share a rank, and the next rank skips accordingly.
    std::vector<int> ranks;

    int rank_of(const std::string& m) const
    {
        const auto it = std::find(methods.begin(), methods.end(), m);
        if (it == methods.end()) throw ArgumentError("schulze: no method " + m);
        return ranks[static_cast<std::size_t>(it - methods.begin())];
    }
};

// Each subset is a ballot ordering methods by ascending mean OWA; equal scores are tied.
inline SchulzeResult schulze_rank(const ScoreTable& table)
{
    table.validate();
    const std::size_t n = table.n_methods();
    if (n < 2) throw ArgumentError("schulze: need at least 2 methods");
    if (table.n_subsets() < 1) throw ArgumentError("schulze: need at least 1 subset");

    SchulzeResult r;
    r.methods = table.methods;
    r.d.assign(n, std::vector<int>(n, 0));
    for (std::size_t s = 0; s < table.n_subsets(); ++s)
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b)
                if (table.mean_owa[a][s] < table.mean_owa[b][s]) ++r.d[a][b];

    r.p.assign(n, std::vector<int>(n, 0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            if (a != b && r.d[a][b] > r.d[b][a]) r.p[a][b] = r.d[a][b];
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t a = 0; a < n; ++a) {
            if (a == k) continue;
            for (std::size_t b = 0; b < n; ++b) {
                if (b == k || b == a) continue;
                r.p[a][b] = std::max(r.p[a][b], std::min(r.p[a][k], r.p[k][b]));
            }
        }

    r.wins.assign(n, 0);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            if (a != b && r.p[a][b] > r.p[b][a]) ++r.wins[a];
    r.ranks.assign(n, 1);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            if (r.wins[b] > r.wins[a]) ++r.ranks[a];
    return r;
}

} // namespace deforma
