#pragma once

#include "pdakit/pda.hpp"

namespace pdakit::ref {

// Plain serial counterparts of the OpenMP kernels, kept as test oracles and
// benchmark baselines. Same contracts as the production functions.

OlsResult pointwise_ols(const CurveSet& curves, bool include_intercept,
                        const std::vector<int>& included_orders = {});

std::vector<Eigen::MatrixXd> expected_cross_moment(const TransitionTable& table,
                                                   const std::vector<const CovarianceGrid*>& covs,
                                                   const std::vector<int>& channels,
                                                   int refine = 4);

}  // namespace pdakit::ref
