#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bsbl/baselines.hpp"
#include "bsbl/model.hpp"
#include "bsbl/solver.hpp"
#include "bsbl/types.hpp"

namespace bsbl {

// Canonical algorithm labels used in records and CLI flags.
inline constexpr const char* kAlgoFm0 = "bsbl-fm0";        // SIM model
inline constexpr const char* kAlgoFm1 = "bsbl-fm1";        // AR1 model
inline constexpr const char* kAlgoFm2 = "bsbl-fm2";        // AR1-AVERAGED model
inline constexpr const char* kAlgoBlockOmp = "block-omp";
inline constexpr const char* kAlgoOracleLs = "oracle-ls";

// Generator description for block-sparse test signals. Blocks are uniform
// (size d); each active block is drawn from N(0, amplitude * B(r)) with B the
// AR(1) Toeplitz template. r is fixed when r_lo == r_hi, otherwise sampled
// uniformly per active block.
struct SignalSpec {
    int g = 1;
    int d = 1;
    int k_active = 0;
    double r_lo = 0.0;
    double r_hi = 0.0;
    double amplitude = 1.0;

    static SignalSpec fixed_r(int g, int d, int k_active, double r, double amplitude = 1.0);
    static SignalSpec ranged_r(int g, int d, int k_active, double r_lo, double r_hi,
                               double amplitude = 1.0);

    int n() const { return g * d; }
    void validate() const;
};

// One algorithm's result on one synthetic instance. `success` is pinned to
// nmse <= 1e-5. runtime_seconds is wall-clock around the recovery call only;
// it is reported out-of-band (never serialized into records files, which stay
// byte-reproducible for a fixed base seed).
struct TrialRecord {
    std::string algorithm;
    std::uint64_t seed = 0;
    int n = 0;
    int m = 0;
    std::optional<int> k_active;
    std::optional<double> r;       // mean sampled AR coefficient of the active blocks
    std::optional<double> snr_db;  // absent for noiseless runs
    double nmse = 0.0;
    double runtime_seconds = 0.0;
    bool success = false;

    static TrialRecord make(std::string algorithm, std::uint64_t seed, int n, int m,
                            std::optional<int> k_active, std::optional<double> r,
                            std::optional<double> snr_db, double nmse, double runtime_seconds);
};

using RecordSink = std::function<void(const TrialRecord&)>;

// Success-rate surface over the (M, k_active) sweep. delta = M/N depends only
// on the row; rho = K/M (K = k*d) is genuinely per-cell, so it is stored as a
// full matrix of the same shape as `success`.
struct PhaseGrid {
    int n = 0;
    int d = 0;
    int trials = 0;
    std::vector<int> m_values;   // row axis
    std::vector<int> k_values;   // column axis
    std::vector<double> delta;   // M/N, one per row
    Eigen::MatrixXd rho;         // (k*d)/M per cell
    Eigen::MatrixXd success;     // success rate per cell, each in [0, 1]
};

struct PhaseConfig {
    int n = 500;
    int g = 20;  // block size d = n/g
    double r = 0.95;
    std::vector<int> m_values = {50, 100, 150, 200, 250};
    std::vector<int> k_values = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    int trials = 20;
    std::uint64_t base_seed = 1;
    CorrelationModel model = CorrelationModel::ar1();
    double eta = 1e-4;
    int max_iters = 1000;
    BetaMode beta_mode = BetaMode::noiseless();
    RecordSink sink;  // optional incremental record stream
};

struct SweepConfig {
    std::vector<int> n_values = {512, 1024, 2048};
    double m_ratio = 0.5;
    int g = 32;  // block size d = n/g
    int k_active = 5;
    double r_lo = 0.8;
    double r_hi = 0.99;
    double snr_db = 15.0;
    int trials = 20;
    std::uint64_t base_seed = 1;
    double eta = 1e-4;
    int max_iters = 1000;
    // Default: per-trial noise precision set to the exactly known realized
    // value M / ||n||^2 (the harness generated n). Set to override.
    std::optional<BetaMode> beta_override;
    std::vector<std::string> algorithms = {kAlgoFm0, kAlgoFm1, kAlgoFm2, kAlgoBlockOmp,
                                           kAlgoOracleLs};
    RecordSink sink;
};

struct DctDemoConfig {
    int m = 256;
    int n = 512;
    int ones_per_column = 12;
    int g = 16;  // transform-domain block size d = n/g
    int trials = 20;
    std::uint64_t base_seed = 1;
    CorrelationModel model = CorrelationModel::sim();
    double eta = 1e-4;
    int max_iters = 1000;
    BetaMode beta_mode = BetaMode::noiseless();
    RecordSink sink;
};

// --- Generators -----------------------------------------------------------

// Block-sparse signal draw; returns the signal and its block support.
// `sampled_r` (optional) receives the AR coefficient used for each active
// block, in support order.
std::pair<Eigen::VectorXd, SupportSet> gen_block_sparse_signal(
    const SignalSpec& spec, std::uint64_t seed, std::vector<double>* sampled_r = nullptr);

// i.i.d. standard normal sensing matrix.
Eigen::MatrixXd gen_gaussian_matrix(int m, int n, std::uint64_t seed);

// Binary sensing matrix with exactly ones_per_column ones per column at
// random rows.
Eigen::MatrixXd gen_sparse_binary_matrix(int m, int n, int ones_per_column, std::uint64_t seed);

// Smooth quasi-periodic test signal: a slow sinusoidal baseline plus a
// Gaussian-pulse train (sharp positive peak with a trailing negative lobe)
// and a faster, weaker secondary pulse train, with per-period timing jitter.
Eigen::VectorXd gen_quasi_periodic_signal(int n, std::uint64_t seed);

// y_clean + gaussian noise scaled so the realized (not expected) SNR in dB
// equals snr_db exactly; +infinity passes y_clean through. `noise` (optional)
// receives the injected noise vector.
Eigen::VectorXd add_noise_at_snr(const Eigen::VectorXd& y_clean, double snr_db,
                                 std::uint64_t seed, Eigen::VectorXd* noise = nullptr);

// --- Metrics ---------------------------------------------------------------

// ||x_hat - x_gen||^2 / ||x_gen||^2.
double nmse(const Eigen::VectorXd& x_hat, const Eigen::VectorXd& x_gen);

inline constexpr double kSuccessNmse = 1e-5;

// --- Transform-domain pipeline ---------------------------------------------

// Orthonormal inverse-DCT synthesis matrix (columns are DCT-II basis
// vectors): x = D theta, D^T D = I.
Eigen::MatrixXd dct_basis(int n);

// Runs the solver on the composed matrix phi * basis and maps the recovered
// coefficients back through the basis.
Eigen::VectorXd recover_transform_domain(const Eigen::VectorXd& y, const Eigen::MatrixXd& phi,
                                         const Eigen::MatrixXd& basis,
                                         const BlockPartition& partition,
                                         const SolverOptions& options);

// --- Harnesses --------------------------------------------------------------

// Noiseless phase-transition sweep over (M, k_active) cells; per-trial solver
// failures are recorded as NMSE = 1. Per-trial seeds are
// base_seed + global trial index (cells row-major, M outer / k inner, each
// cell consuming `trials` consecutive indices).
PhaseGrid run_phase_transition(const PhaseConfig& config);

// Noisy N-sweep: every configured algorithm runs on identical data per trial
// (block-omp receives the true block count, oracle-ls the true support).
std::vector<TrialRecord> run_noisy_sweep(const SweepConfig& config);

// Compressed-sensing pipeline demo in a DCT basis; compares the sparse
// Bayesian recovery against block-omp with a matched block budget (the
// Bayesian solve's active block count).
std::vector<TrialRecord> run_dct_demo(const DctDemoConfig& config);

}  // namespace bsbl
