#include "bsbl/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bsbl/errors.hpp"
#include "bsbl/rng.hpp"

namespace bsbl {

namespace {

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

const char* label_for(const CorrelationModel& model) {
    switch (model.kind) {
        case correlation_kind::sim: return kAlgoFm0;
        case correlation_kind::ar1: return kAlgoFm1;
        case correlation_kind::ar1_averaged: return kAlgoFm2;
    }
    return "?";
}

CorrelationModel model_for(const std::string& label) {
    if (label == kAlgoFm0) {
        return CorrelationModel::sim();
    }
    if (label == kAlgoFm1) {
        return CorrelationModel::ar1();
    }
    if (label == kAlgoFm2) {
        return CorrelationModel::ar1_averaged();
    }
    throw invalid_input("unknown solver algorithm label: " + label);
}

bool is_solver_label(const std::string& label) {
    return label == kAlgoFm0 || label == kAlgoFm1 || label == kAlgoFm2;
}

void emit(const RecordSink& sink, const TrialRecord& record) {
    if (sink) {
        sink(record);
    }
}

}  // namespace

SignalSpec SignalSpec::fixed_r(int g, int d, int k_active, double r, double amplitude) {
    SignalSpec spec{g, d, k_active, r, r, amplitude};
    spec.validate();
    return spec;
}

SignalSpec SignalSpec::ranged_r(int g, int d, int k_active, double r_lo, double r_hi,
                                double amplitude) {
    SignalSpec spec{g, d, k_active, r_lo, r_hi, amplitude};
    spec.validate();
    return spec;
}

void SignalSpec::validate() const {
    if (g < 1 || d < 1) {
        throw invalid_input("signal spec requires positive g and d");
    }
    if (k_active < 0 || k_active > g) {
        throw invalid_input("signal spec requires 0 <= k_active <= g");
    }
    if (!(std::abs(r_lo) < 1.0) || !(std::abs(r_hi) < 1.0) || r_lo > r_hi) {
        throw invalid_input("signal spec requires -1 < r_lo <= r_hi < 1");
    }
    if (!(amplitude > 0.0)) {
        throw invalid_input("signal spec requires positive amplitude");
    }
}

TrialRecord TrialRecord::make(std::string algorithm, std::uint64_t seed, int n, int m,
                              std::optional<int> k_active, std::optional<double> r,
                              std::optional<double> snr_db, double nmse,
                              double runtime_seconds) {
    TrialRecord rec;
    rec.algorithm = std::move(algorithm);
    rec.seed = seed;
    rec.n = n;
    rec.m = m;
    rec.k_active = k_active;
    rec.r = r;
    rec.snr_db = snr_db;
    rec.nmse = nmse;
    rec.runtime_seconds = runtime_seconds;
    rec.success = nmse <= kSuccessNmse;
    return rec;
}

std::pair<Eigen::VectorXd, SupportSet> gen_block_sparse_signal(const SignalSpec& spec,
                                                               std::uint64_t seed,
                                                               std::vector<double>* sampled_r) {
    spec.validate();
    rng gen(seed);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(spec.n());
    std::vector<int> picked = gen.sample_without_replacement(spec.g, spec.k_active);
    SupportSet support = SupportSet::of(std::move(picked), spec.g);
    if (sampled_r != nullptr) {
        sampled_r->clear();
    }
    for (const int b : support.blocks) {
        const double r = spec.r_lo == spec.r_hi
                             ? spec.r_lo
                             : spec.r_lo + (spec.r_hi - spec.r_lo) * gen.uniform();
        if (sampled_r != nullptr) {
            sampled_r->push_back(r);
        }
        Eigen::LLT<Eigen::MatrixXd> llt(spec.amplitude * toeplitz_ar(spec.d, r));
        if (llt.info() != Eigen::Success) {
            throw numerical_error("signal covariance factorization failed");
        }
        Eigen::VectorXd z(spec.d);
        for (int i = 0; i < spec.d; ++i) {
            z(i) = gen.gaussian();
        }
        x.segment(static_cast<Eigen::Index>(b) * spec.d, spec.d) =
            llt.matrixL() * z;
    }
    return {std::move(x), std::move(support)};
}

Eigen::MatrixXd gen_gaussian_matrix(int m, int n, std::uint64_t seed) {
    if (m < 1 || n < 1) {
        throw invalid_input("matrix dimensions must be positive");
    }
    rng gen(seed);
    Eigen::MatrixXd phi(m, n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            phi(i, j) = gen.gaussian();
        }
    }
    return phi;
}

Eigen::MatrixXd gen_sparse_binary_matrix(int m, int n, int ones_per_column, std::uint64_t seed) {
    if (m < 1 || n < 1) {
        throw invalid_input("matrix dimensions must be positive");
    }
    if (ones_per_column < 1 || ones_per_column > m) {
        throw invalid_input("invalid sparse binary spec: ones_per_column must be in [1, m]");
    }
    rng gen(seed);
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(m, n);
    for (int j = 0; j < n; ++j) {
        for (const int i : gen.sample_without_replacement(m, ones_per_column)) {
            phi(i, j) = 1.0;
        }
    }
    return phi;
}

Eigen::VectorXd gen_quasi_periodic_signal(int n, std::uint64_t seed) {
    if (n < 1) {
        throw invalid_input("signal length must be positive");
    }
    rng gen(seed);
    auto uniform = [&gen](double lo, double hi) { return lo + (hi - lo) * gen.uniform(); };
    Eigen::VectorXd x(n);
    const double cycles = uniform(1.5, 3.0);
    const double phase = uniform(0.0, 6.28);
    for (int t = 0; t < n; ++t) {
        x(t) = 0.5 * std::sin(2.0 * std::numbers::pi * t / n * cycles + phase);
    }
    // Main pulse train: sharp positive peak with a trailing wide negative lobe.
    const double period = uniform(70.0, 90.0);
    const double width = uniform(1.2, 2.2);
    const double amp = uniform(4.0, 7.0);
    for (double c = uniform(0.0, period); c < n; c += period * uniform(0.95, 1.05)) {
        for (int t = 0; t < n; ++t) {
            const double u = (t - c) / width;
            const double v = (t - c - 3.0 * width) / (2.0 * width);
            x(t) += amp * std::exp(-0.5 * u * u) - 0.3 * amp * std::exp(-0.5 * v * v);
        }
    }
    // Secondary faster, weaker pulse train.
    const double period2 = uniform(38.0, 48.0);
    const double width2 = uniform(1.0, 1.6);
    const double amp2 = uniform(1.0, 2.0);
    for (double c = uniform(0.0, period2); c < n; c += period2 * uniform(0.95, 1.05)) {
        for (int t = 0; t < n; ++t) {
            const double u = (t - c) / width2;
            x(t) += amp2 * std::exp(-0.5 * u * u);
        }
    }
    return x;
}

Eigen::VectorXd add_noise_at_snr(const Eigen::VectorXd& y_clean, double snr_db,
                                 std::uint64_t seed, Eigen::VectorXd* noise) {
    if (std::isinf(snr_db) && snr_db > 0.0) {
        if (noise != nullptr) {
            *noise = Eigen::VectorXd::Zero(y_clean.size());
        }
        return y_clean;
    }
    const double clean_norm = y_clean.norm();
    if (clean_norm == 0.0) {
        throw invalid_input("zero clean observation cannot be assigned an SNR");
    }
    rng gen(seed);
    Eigen::VectorXd raw(y_clean.size());
    double raw_norm = 0.0;
    do {
        for (Eigen::Index i = 0; i < raw.size(); ++i) {
            raw(i) = gen.gaussian();
        }
        raw_norm = raw.norm();
    } while (raw_norm == 0.0);
    // ||n|| = ||y_clean|| / 10^(snr/20) exactly, so the realized SNR is snr_db.
    const double scale = clean_norm / (raw_norm * std::pow(10.0, snr_db / 20.0));
    if (noise != nullptr) {
        *noise = scale * raw;
    }
    return y_clean + scale * raw;
}

double nmse(const Eigen::VectorXd& x_hat, const Eigen::VectorXd& x_gen) {
    if (x_hat.size() != x_gen.size()) {
        throw invalid_input("nmse operands must have equal length");
    }
    const double ref = x_gen.squaredNorm();
    if (ref == 0.0) {
        throw invalid_input("nmse reference signal must be nonzero");
    }
    return (x_hat - x_gen).squaredNorm() / ref;
}

Eigen::MatrixXd dct_basis(int n) {
    if (n < 1) {
        throw invalid_input("basis size must be positive");
    }
    Eigen::MatrixXd d(n, n);
    for (int k = 0; k < n; ++k) {
        const double c = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        for (int t = 0; t < n; ++t) {
            d(t, k) = c * std::cos(std::numbers::pi * (2.0 * t + 1.0) * k / (2.0 * n));
        }
    }
    return d;
}

Eigen::VectorXd recover_transform_domain(const Eigen::VectorXd& y, const Eigen::MatrixXd& phi,
                                         const Eigen::MatrixXd& basis,
                                         const BlockPartition& partition,
                                         const SolverOptions& options) {
    if (y.size() != phi.rows()) {
        throw invalid_input("observation length must equal the sensing matrix row count");
    }
    if (phi.cols() != basis.rows()) {
        throw invalid_input("sensing matrix columns must equal the basis row count");
    }
    if (partition.total != basis.cols()) {
        throw invalid_input("partition length must equal the basis column count");
    }
    const RecoveryResult result = solve(phi * basis, y, partition, options);
    return basis * result.x;
}

PhaseGrid run_phase_transition(const PhaseConfig& config) {
    if (config.n < 1 || config.g < 1 || config.n % config.g != 0) {
        throw invalid_input("phase config requires g to divide n");
    }
    if (config.trials < 1) {
        throw invalid_input("phase config requires at least one trial per cell");
    }
    if (config.m_values.empty() || config.k_values.empty()) {
        throw invalid_input("phase config requires non-empty M and k sweeps");
    }
    const int d = config.n / config.g;
    for (const int m : config.m_values) {
        if (m < 1) {
            throw invalid_input("phase config requires positive M values");
        }
    }
    for (const int k : config.k_values) {
        if (k < 1 || k > config.g) {
            throw invalid_input("phase config requires 1 <= k_active <= g");
        }
    }

    PhaseGrid grid;
    grid.n = config.n;
    grid.d = d;
    grid.trials = config.trials;
    grid.m_values = config.m_values;
    grid.k_values = config.k_values;
    const auto rows = static_cast<Eigen::Index>(config.m_values.size());
    const auto cols = static_cast<Eigen::Index>(config.k_values.size());
    grid.delta.resize(config.m_values.size());
    grid.rho.resize(rows, cols);
    grid.success.resize(rows, cols);

    const std::string algorithm = label_for(config.model);
    SolverOptions options;
    options.model = config.model;
    options.eta = config.eta;
    options.max_iters = config.max_iters;
    options.beta_mode = config.beta_mode;

    for (std::size_t mi = 0; mi < config.m_values.size(); ++mi) {
        const int m = config.m_values[mi];
        grid.delta[mi] = static_cast<double>(m) / config.n;
        for (std::size_t ki = 0; ki < config.k_values.size(); ++ki) {
            const int k = config.k_values[ki];
            grid.rho(static_cast<Eigen::Index>(mi), static_cast<Eigen::Index>(ki)) =
                static_cast<double>(k) * d / m;
            int successes = 0;
            for (int t = 0; t < config.trials; ++t) {
                const std::uint64_t global =
                    (static_cast<std::uint64_t>(mi) * config.k_values.size() + ki) *
                        static_cast<std::uint64_t>(config.trials) +
                    static_cast<std::uint64_t>(t);
                const std::uint64_t seed = config.base_seed + global;
                const Eigen::MatrixXd phi =
                    gen_gaussian_matrix(m, config.n, derive_seed(seed, 0));
                const auto [x, support] = gen_block_sparse_signal(
                    SignalSpec::fixed_r(config.g, d, k, config.r), derive_seed(seed, 1));
                const Eigen::VectorXd y = phi * x;
                const BlockPartition partition = BlockPartition::uniform(config.g, d);
                double err = 1.0;
                const auto start = std::chrono::steady_clock::now();
                try {
                    const RecoveryResult result = solve(phi, y, partition, options);
                    err = nmse(result.x, x);
                } catch (const error&) {
                    err = 1.0;  // solver failure counts as a failed trial
                }
                const double runtime = elapsed_seconds(start);
                const TrialRecord record = TrialRecord::make(algorithm, seed, config.n, m, k,
                                                             config.r, std::nullopt, err, runtime);
                successes += record.success ? 1 : 0;
                emit(config.sink, record);
            }
            grid.success(static_cast<Eigen::Index>(mi), static_cast<Eigen::Index>(ki)) =
                static_cast<double>(successes) / config.trials;
        }
    }
    return grid;
}

std::vector<TrialRecord> run_noisy_sweep(const SweepConfig& config) {
    if (config.trials < 1) {
        throw invalid_input("sweep config requires at least one trial");
    }
    if (config.n_values.empty()) {
        throw invalid_input("sweep config requires a non-empty N sweep");
    }
    if (!(config.m_ratio > 0.0) || config.m_ratio > 1.0) {
        throw invalid_input("sweep config requires 0 < m_ratio <= 1");
    }
    if (config.algorithms.empty()) {
        throw invalid_input("sweep config requires at least one algorithm");
    }
    for (const auto& alg : config.algorithms) {
        if (!is_solver_label(alg) && alg != kAlgoBlockOmp && alg != kAlgoOracleLs) {
            throw invalid_input("unknown algorithm label: " + alg);
        }
    }
    for (const int n : config.n_values) {
        if (n < config.g || n % config.g != 0) {
            throw invalid_input("sweep config requires g to divide every N");
        }
    }
    if (config.k_active < 0 || config.k_active > config.g) {
        throw invalid_input("sweep config requires 0 <= k_active <= g");
    }

    std::vector<TrialRecord> records;
    for (std::size_t ni = 0; ni < config.n_values.size(); ++ni) {
        const int n = config.n_values[ni];
        const int d = n / config.g;
        const int m = std::max(1, static_cast<int>(std::lround(config.m_ratio * n)));
        const BlockPartition partition = BlockPartition::uniform(config.g, d);
        for (int t = 0; t < config.trials; ++t) {
            const std::uint64_t global =
                static_cast<std::uint64_t>(ni) * static_cast<std::uint64_t>(config.trials) +
                static_cast<std::uint64_t>(t);
            const std::uint64_t seed = config.base_seed + global;

            const Eigen::MatrixXd phi = gen_gaussian_matrix(m, n, derive_seed(seed, 0));
            std::vector<double> sampled_r;
            const auto [x, support] = gen_block_sparse_signal(
                SignalSpec::ranged_r(config.g, d, config.k_active, config.r_lo, config.r_hi),
                derive_seed(seed, 1), &sampled_r);
            const Eigen::VectorXd y_clean = phi * x;
            Eigen::VectorXd noise;
            const Eigen::VectorXd y =
                add_noise_at_snr(y_clean, config.snr_db, derive_seed(seed, 2), &noise);

            // Noise precision: exact realized value by default (the harness
            // generated the noise, so it is known), or the configured mode.
            BetaMode beta_mode = BetaMode::noiseless();
            if (config.beta_override) {
                beta_mode = *config.beta_override;
            } else if (!std::isinf(config.snr_db)) {
                beta_mode = BetaMode::fixed(static_cast<double>(m) / noise.squaredNorm());
            }

            const std::optional<double> r_mean =
                sampled_r.empty()
                    ? std::nullopt
                    : std::optional<double>(
                          std::accumulate(sampled_r.begin(), sampled_r.end(), 0.0) /
                          static_cast<double>(sampled_r.size()));
            const std::optional<double> snr =
                std::isinf(config.snr_db) ? std::nullopt : std::optional<double>(config.snr_db);

            for (const auto& alg : config.algorithms) {
                double err = 1.0;
                const auto start = std::chrono::steady_clock::now();
                try {
                    Eigen::VectorXd x_hat;
                    if (is_solver_label(alg)) {
                        SolverOptions options;
                        options.model = model_for(alg);
                        options.eta = config.eta;
                        options.max_iters = config.max_iters;
                        options.beta_mode = beta_mode;
                        x_hat = solve(phi, y, partition, options).x;
                    } else if (alg == kAlgoBlockOmp) {
                        const int budget =
                            std::max(1, static_cast<int>(support.blocks.size()));
                        x_hat = block_omp(MeasurementSystem(phi, y, 1.0), partition, budget);
                    } else {
                        x_hat = oracle_ls(MeasurementSystem(phi, y, 1.0), partition, support);
                    }
                    err = nmse(x_hat, x);
                } catch (const error&) {
                    err = 1.0;  // recovery failure counts as a failed trial
                }
                const double runtime = elapsed_seconds(start);
                records.push_back(TrialRecord::make(alg, seed, n, m, config.k_active, r_mean,
                                                    snr, err, runtime));
                emit(config.sink, records.back());
            }
        }
    }
    return records;
}

std::vector<TrialRecord> run_dct_demo(const DctDemoConfig& config) {
    if (config.trials < 1) {
        throw invalid_input("demo config requires at least one trial");
    }
    if (config.n < 1 || config.g < 1 || config.n % config.g != 0) {
        throw invalid_input("demo config requires g to divide n");
    }
    if (config.m < 1 || config.ones_per_column < 1 || config.ones_per_column > config.m) {
        throw invalid_input("demo config requires 1 <= ones_per_column <= m");
    }
    const int d = config.n / config.g;
    const BlockPartition partition = BlockPartition::uniform(config.g, d);
    const Eigen::MatrixXd basis = dct_basis(config.n);
    const std::string fm_label = label_for(config.model);

    SolverOptions options;
    options.model = config.model;
    options.eta = config.eta;
    options.max_iters = config.max_iters;
    options.beta_mode = config.beta_mode;

    std::vector<TrialRecord> records;
    for (int t = 0; t < config.trials; ++t) {
        const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(t);
        const Eigen::MatrixXd phi =
            gen_sparse_binary_matrix(config.m, config.n, config.ones_per_column,
                                     derive_seed(seed, 0));
        const Eigen::VectorXd x = gen_quasi_periodic_signal(config.n, derive_seed(seed, 1));
        const Eigen::VectorXd y = phi * x;
        const Eigen::MatrixXd composed = phi * basis;

        double fm_err = 1.0;
        int budget = 1;
        auto start = std::chrono::steady_clock::now();
        try {
            const RecoveryResult result = solve(composed, y, partition, options);
            fm_err = nmse(basis * result.x, x);
            budget = std::max(1, static_cast<int>(result.active.size()));
        } catch (const error&) {
            fm_err = 1.0;
        }
        const double fm_runtime = elapsed_seconds(start);
        records.push_back(TrialRecord::make(fm_label, seed, config.n, config.m, std::nullopt,
                                            std::nullopt, std::nullopt, fm_err, fm_runtime));
        emit(config.sink, records.back());

        double omp_err = 1.0;
        start = std::chrono::steady_clock::now();
        try {
            const Eigen::VectorXd theta =
                block_omp(MeasurementSystem(composed, y, 1.0), partition, budget);
            omp_err = nmse(basis * theta, x);
        } catch (const error&) {
            omp_err = 1.0;
        }
        const double omp_runtime = elapsed_seconds(start);
        records.push_back(TrialRecord::make(kAlgoBlockOmp, seed, config.n, config.m,
                                            std::nullopt, std::nullopt, std::nullopt, omp_err,
                                            omp_runtime));
        emit(config.sink, records.back());
    }
    return records;
}

}  // namespace bsbl
