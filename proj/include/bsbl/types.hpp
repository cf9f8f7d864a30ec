#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bsbl/errors.hpp"

namespace bsbl {

// Replace a nominally symmetric matrix by its symmetric part. Applied after
// every update that is symmetric on paper, so round-off never accumulates
// into a skew component over long runs of rank-d updates.
inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

// Contiguous partition of the N signal coefficients into g blocks.
struct BlockPartition {
    std::vector<int> sizes;
    std::vector<int> offsets;  // exclusive prefix sums of sizes
    int total = 0;             // N

    explicit BlockPartition(std::vector<int> block_sizes)
        : sizes(std::move(block_sizes)) {
        if (sizes.empty()) {
            throw invalid_input("partition requires at least one block");
        }
        offsets.reserve(sizes.size());
        for (const int d : sizes) {
            if (d < 1) {
                throw invalid_input("every block size must be at least 1");
            }
            offsets.push_back(total);
            total += d;
        }
    }

    static BlockPartition uniform(int g, int d) {
        if (g < 1 || d < 1) {
            throw invalid_input("uniform partition requires positive g and d");
        }
        return BlockPartition(std::vector<int>(static_cast<std::size_t>(g), d));
    }

    int count() const { return static_cast<int>(sizes.size()); }
};

// Sensing matrix, observation, and noise precision. M > N is permitted
// (overdetermined systems are legal inputs) but is not the regime any of the
// experiments exercise.
struct MeasurementSystem {
    Eigen::MatrixXd phi;
    Eigen::VectorXd y;
    double beta = 0.0;

    MeasurementSystem(Eigen::MatrixXd sensing, Eigen::VectorXd observation, double noise_precision)
        : phi(std::move(sensing)), y(std::move(observation)), beta(noise_precision) {
        if (phi.rows() == 0 || phi.cols() == 0) {
            throw invalid_input("sensing matrix must be non-empty");
        }
        if (y.size() != phi.rows()) {
            throw invalid_input("observation length must equal the sensing matrix row count");
        }
        if (!(beta > 0.0)) {
            throw invalid_input("noise precision beta must be positive");
        }
    }

    Eigen::Index rows() const { return phi.rows(); }
    Eigen::Index cols() const { return phi.cols(); }
};

// The three intra-block correlation treatments: SIM ignores correlation
// (B = I), AR1 fits a per-block AR(1) template, AR1-AVERAGED shares one AR
// coefficient across all blocks.
enum class correlation_kind { sim, ar1, ar1_averaged };

struct CorrelationModel {
    correlation_kind kind = correlation_kind::sim;
    // Present (meaningful) only for ar1_averaged.
    double shared_r = 0.0;

    static CorrelationModel sim() { return {correlation_kind::sim, 0.0}; }
    static CorrelationModel ar1() { return {correlation_kind::ar1, 0.0}; }
    static CorrelationModel ar1_averaged(double r = 0.0) {
        if (!(std::abs(r) <= 0.99)) {
            throw invalid_input("shared AR coefficient must satisfy |r| <= 0.99");
        }
        return {correlation_kind::ar1_averaged, r};
    }
};

// Prior covariance of one block after regularization: a = gamma * b with
// gamma > 0 and b a unit-diagonal positive definite correlation template.
struct BlockCovariance {
    Eigen::MatrixXd a;
    double gamma = 0.0;
    Eigen::MatrixXd b;
    std::optional<double> r;  // AR coefficient, present for the AR templates

    static BlockCovariance from_template(double gamma, Eigen::MatrixXd b,
                                         std::optional<double> r = std::nullopt) {
        if (!(gamma > 0.0)) {
            throw invalid_input("block relevance gamma must be positive");
        }
        if (b.rows() != b.cols() || b.rows() == 0) {
            throw invalid_input("correlation template must be square and non-empty");
        }
        const double asym = (b - b.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-10 * (1.0 + b.cwiseAbs().maxCoeff())) {
            throw invalid_input("correlation template must be symmetric");
        }
        b = symmetrize(b);
        for (Eigen::Index i = 0; i < b.rows(); ++i) {
            if (std::abs(b(i, i) - 1.0) > 1e-10) {
                throw invalid_input("correlation template must have unit diagonal");
            }
        }
        if (r && !(std::abs(*r) <= 0.99)) {
            throw invalid_input("AR coefficient must satisfy |r| <= 0.99");
        }
        BlockCovariance cov;
        cov.gamma = gamma;
        cov.b = std::move(b);
        cov.a = gamma * cov.b;
        cov.r = r;
        // Degenerate templates are rejected here rather than repaired; the
        // solver's regularizer is the designated repair path.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov.a, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < 1e-12 * cov.a.trace()) {
            throw numerical_error("degenerate block covariance: eigenvalue below 1e-12 * trace");
        }
        return cov;
    }

    Eigen::Index dim() const { return a.rows(); }
};

// Posterior over the active coefficients only, plus the active block list
// (kept sorted ascending).
struct Posterior {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    std::vector<int> active;
};

enum class action_kind { none, add, reestimate, remove };

inline const char* action_name(action_kind a) {
    switch (a) {
        case action_kind::none: return "none";
        case action_kind::add: return "add";
        case action_kind::reestimate: return "reestimate";
        case action_kind::remove: return "delete";
    }
    return "?";
}

struct ActionProposal {
    action_kind action = action_kind::none;
    int block = -1;
    double delta = 0.0;                       // predicted cost change
    std::optional<BlockCovariance> candidate;  // absent for delete / none
};

// How the solver resolves the noise precision.
struct BetaMode {
    enum class kind_t { fixed, noiseless, low_snr, high_snr };
    kind_t kind = kind_t::high_snr;
    double value = 0.0;  // meaningful for kind_t::fixed only

    static BetaMode fixed(double beta) {
        if (!(beta > 0.0)) {
            throw invalid_input("fixed beta must be positive");
        }
        return {kind_t::fixed, beta};
    }
    static BetaMode noiseless() { return {kind_t::noiseless, 0.0}; }
    static BetaMode low_snr() { return {kind_t::low_snr, 0.0}; }
    static BetaMode high_snr() { return {kind_t::high_snr, 0.0}; }
};

struct SolverOptions {
    CorrelationModel model;
    double eta = 1e-4;
    int max_iters = 1000;
    BetaMode beta_mode;  // authoritative over any beta carried by the system
    bool learn_beta = false;

    void validate() const {
        if (!(eta > 0.0)) {
            throw invalid_input("stopping threshold eta must be positive");
        }
        if (max_iters < 1) {
            throw invalid_input("max_iters must be at least 1");
        }
    }
};

// Active-block prior covariances keyed by block index (absent key = pruned
// block with A_i = 0, which contributes nothing to C).
using CovarianceMap = std::map<int, BlockCovariance>;

struct RecoveryResult {
    Eigen::VectorXd x;
    std::vector<int> active;  // sorted ascending
    CovarianceMap covs;       // final learned block covariances
    std::vector<double> cost_trace;  // initial cost, then one entry per action
    int iterations = 0;
    bool converged = false;
    double beta = 0.0;  // resolved noise precision actually used
    std::vector<std::pair<action_kind, int>> actions;
    // Best eligible delta at the stopping sweep; absent when the loop stopped
    // because nothing was eligible (or max_iters was exhausted).
    std::optional<double> final_best_delta;
};

}  // namespace bsbl
