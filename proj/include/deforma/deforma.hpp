#pragma once

#include "deforma/baselines/baselines.hpp"
#include "deforma/common/error.hpp"
#include "deforma/common/log.hpp"
#include "deforma/common/text.hpp"
#include "deforma/data/series.hpp"
#include "deforma/features/features.hpp"
#include "deforma/harness/config.hpp"
#include "deforma/harness/experiment.hpp"
#include "deforma/harness/report.hpp"
#include "deforma/harness/schulze.hpp"
#include "deforma/harness/score_table.hpp"
#include "deforma/learners/forecast_matrix.hpp"
#include "deforma/learners/pool.hpp"
#include "deforma/learners/smoothing.hpp"
#include "deforma/learners/theta.hpp"
#include "deforma/metrics/error_matrix.hpp"
#include "deforma/metrics/metrics.hpp"
#include "deforma/model/deforma_model.hpp"
#include "deforma/model/training.hpp"
#include "deforma/nn/adam.hpp"
#include "deforma/nn/checkpoint.hpp"
#include "deforma/nn/gradcheck.hpp"
#include "deforma/nn/graph.hpp"
#include "deforma/nn/ops.hpp"
#include "deforma/nn/tensor.hpp"
