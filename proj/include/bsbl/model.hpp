#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "bsbl/types.hpp"

namespace bsbl {

// Full mutable solver state: the measurement system, the active covariances,
// the posterior over active coefficients, and the per-block statistic caches.
// full_stats hold (S_i, Q_i) computed with the complete current C; loo_stats
// hold (s_i, q_i) computed with block i left out of C. For inactive blocks
// the two coincide.
struct BlockStats {
    Eigen::MatrixXd s;
    Eigen::VectorXd q;
};

struct ModelState {
    BlockPartition partition;
    MeasurementSystem system;
    CovarianceMap covs;
    Posterior posterior;
    std::vector<BlockStats> full_stats;
    std::vector<BlockStats> loo_stats;
    double cost = 0.0;

    Eigen::Ref<const Eigen::MatrixXd> phi_block(int i) const {
        return system.phi.middleCols(partition.offsets[static_cast<std::size_t>(i)],
                                     partition.sizes[static_cast<std::size_t>(i)]);
    }
};

// Symmetric Toeplitz AR(1) correlation template, entry (j,k) = r^|j-k|.
Eigen::MatrixXd toeplitz_ar(int d, double r);

// Reference (non-incremental) posterior over the active columns:
// Sigma = (Gamma^{-1} + beta Phi_a^T Phi_a)^{-1}, mu = beta Sigma Phi_a^T y.
Posterior compute_posterior(const MeasurementSystem& system, const BlockPartition& partition,
                            const CovarianceMap& covs);

// Reference evaluation of the marginal-likelihood cost
// L = log|C| + y^T C^{-1} y with C = beta^{-1} I + sum_i Phi_i A_i Phi_i^T.
double cost_direct(const MeasurementSystem& system, const BlockPartition& partition,
                   const CovarianceMap& covs);

// Per-block contribution L(i) = log|I + A s| - q^T (A^{-1} + s)^{-1} q,
// evaluated inverse-free as log|I + A s| - q^T (I + A s)^{-1} A q.
// a = 0 is the no-block case and yields 0.
double cost_block(const Eigen::MatrixXd& s, const Eigen::VectorXd& q, const Eigen::MatrixXd& a);

// Embeds the posterior mean into the full-length signal (inactive blocks
// exactly zero).
Eigen::VectorXd map_estimate(const ModelState& state);

}  // namespace bsbl
