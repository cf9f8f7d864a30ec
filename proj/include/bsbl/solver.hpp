#pragma once

#include <Eigen/Dense>

#include "bsbl/model.hpp"
#include "bsbl/types.hpp"

namespace bsbl {

// Scenario heuristics for the noise precision: beta = 1e6 (noiseless),
// 1/(0.1 ||y||^2) (low SNR), 1/(0.01 ||y||^2) (high SNR); fixed returns its
// value unchanged. The SNR-scaled modes reject a zero observation.
double noise_precision_heuristic(const Eigen::VectorXd& y, const BetaMode& mode);

// Marginal-likelihood update beta = M / (Tr[Sigma Phi_a^T Phi_a] + ||y - Phi_a mu||^2).
// Known to be non-robust inside the greedy loop; disabled unless
// SolverOptions::learn_beta is set.
double beta_ml_update(const ModelState& state);

// Empty-model state: no active blocks, S_i = s_i = beta Phi_i^T Phi_i,
// Q_i = q_i = beta Phi_i^T y, cost = beta ||y||^2 + M log(1/beta).
ModelState initialize(const MeasurementSystem& system, const BlockPartition& partition);

// Unconstrained per-block maximizer template A' = s^{-1}(q q^T - s) s^{-1}.
// May be indefinite; its relevance sign decides how it is used.
Eigen::MatrixXd candidate_covariance(const Eigen::MatrixXd& s, const Eigen::VectorXd& q);

// Block relevance gamma = Tr(a) / d.
double block_relevance(const Eigen::MatrixXd& a);

// AR(1) coefficient from the main-diagonal mean m0 and first-sub-diagonal
// mean m1 of a template: r = sign(m1/m0) * min(|m1/m0|, 0.99). d = 1 has no
// sub-diagonal and yields 0.
double estimate_ar_coefficient(const Eigen::MatrixXd& b);

// Shapes a raw candidate into gamma * B with B the model's correlation
// template (I, per-block Toeplitz, or shared-r Toeplitz). Requires positive
// candidate relevance.
BlockCovariance regularize(const Eigen::MatrixXd& a_candidate, const CorrelationModel& model);

// Leave-one-out statistics from the full-model ones: passthrough when the
// block is inactive (a = nullptr), otherwise the deflation
// s = (I - S A)^{-1} S, q = (I - S A)^{-1} Q.
BlockStats leave_one_out_stats(const BlockStats& full, const Eigen::MatrixXd* a);

// Scores one block: ADD (inactive, relevant candidate), RE-ESTIMATE (active,
// relevant), DELETE (active, non-relevant), NONE (inactive, non-relevant).
// delta is the predicted cost change.
ActionProposal propose_action(const ModelState& state, int block, const CorrelationModel& model);

// Applies an eligible proposal through the incremental update rules
// (posterior, full and leave-one-out statistic caches, cached cost) and
// verifies the refreshed caches and posterior are finite.
void apply_action(ModelState& state, const ActionProposal& proposal);

// Mean of the freshly estimated AR coefficients over the active blocks whose
// current candidates are relevant; 0 when nothing qualifies. Recomputed by
// the AR1-AVERAGED solve before every proposal sweep.
double shared_ar_coefficient(const ModelState& state);

// The full greedy marginalized-likelihood loop: per sweep, propose on every
// block, apply the eligible proposal with the most negative delta (ties to
// the lowest index), stop when |delta| < eta or nothing is eligible.
RecoveryResult solve(const MeasurementSystem& system, const BlockPartition& partition,
                     const SolverOptions& options);

// Convenience overload that resolves beta from options.beta_mode.
RecoveryResult solve(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                     const BlockPartition& partition, const SolverOptions& options);

}  // namespace bsbl
