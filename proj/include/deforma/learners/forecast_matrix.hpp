#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace deforma {

// rows[s][l] is learner l's forecast for series s over the horizon.
struct ForecastMatrix {
    std::vector<std::string> learner_ids;
    std::vector<std::string> series_ids;
    std::vector<std::vector<std::vector<double>>> rows;

    std::size_t n_learners() const { return learner_ids.size(); }
    std::size_t n_series() const { return series_ids.size(); }
};

} // namespace deforma
