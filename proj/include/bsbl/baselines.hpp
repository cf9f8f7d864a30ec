#pragma once

#include <Eigen/Dense>
#include <vector>

#include "bsbl/types.hpp"

namespace bsbl {

// Block indices claimed nonzero, kept sorted ascending and unique.
struct SupportSet {
    std::vector<int> blocks;

    // Validates, sorts, and deduplicate-checks against a block count g.
    static SupportSet of(std::vector<int> blocks, int block_count);
};

// Greedy block orthogonal matching pursuit with a known block budget: at each
// of k_blocks steps select the block maximizing ||Phi_i^T residual||_2
// (unweighted), re-project y orthogonally on all selected blocks' columns,
// and update the residual. Returns the least-squares coefficients on the
// selected blocks, zeros elsewhere. Stops early only on an exactly zero
// residual.
Eigen::VectorXd block_omp(const MeasurementSystem& system, const BlockPartition& partition,
                          int k_blocks);

// Minimum-norm least-squares fit of y on the supported blocks' columns,
// zeros elsewhere. Infeasible supports (more columns than measurements, or a
// rank-deficient column set) are rejected.
Eigen::VectorXd oracle_ls(const MeasurementSystem& system, const BlockPartition& partition,
                          const SupportSet& support);

}  // namespace bsbl
