#include "bsbl/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "bsbl/errors.hpp"

namespace bsbl {

namespace {

int block_size(const ModelState& state, int i) {
    return state.partition.sizes[static_cast<std::size_t>(i)];
}

// Start offset of block j inside the active-coordinate frame (posterior
// ordering is the sorted active list).
Eigen::Index active_offset(const ModelState& state, int j) {
    Eigen::Index at = 0;
    for (const int i : state.posterior.active) {
        if (i == j) {
            return at;
        }
        at += block_size(state, i);
    }
    throw internal_error("block is not active");
}

// Active sensing columns in sorted block order.
Eigen::MatrixXd active_columns(const ModelState& state) {
    Eigen::Index total = 0;
    for (const int i : state.posterior.active) {
        total += block_size(state, i);
    }
    Eigen::MatrixXd phi_a(state.system.rows(), total);
    Eigen::Index at = 0;
    for (const int i : state.posterior.active) {
        const Eigen::Index d = block_size(state, i);
        phi_a.middleCols(at, d) = state.phi_block(i);
        at += d;
    }
    return phi_a;
}

void refresh_loo_stats(ModelState& state) {
    for (int i = 0; i < state.partition.count(); ++i) {
        const auto it = state.covs.find(i);
        const Eigen::MatrixXd* a = it == state.covs.end() ? nullptr : &it->second.a;
        auto& slot = state.loo_stats[static_cast<std::size_t>(i)];
        try {
            slot = leave_one_out_stats(state.full_stats[static_cast<std::size_t>(i)], a);
        } catch (const numerical_error&) {
            // Deflation can be singular for a block whose contribution the
            // model has fully absorbed. Poison the slot instead of failing
            // the update; proposals on this block raise until it recovers.
            const auto d = state.full_stats[static_cast<std::size_t>(i)].s.rows();
            const double nan = std::numeric_limits<double>::quiet_NaN();
            slot.s = Eigen::MatrixXd::Constant(d, d, nan);
            slot.q = Eigen::VectorXd::Constant(d, nan);
        }
    }
}

// Directly recomputes S_j, Q_j from the current posterior:
// C^{-1} = beta I - beta^2 Phi_a Sigma Phi_a^T, so
// S_j = beta Phi_j^T Phi_j - beta^2 (Phi_j^T Phi_a) Sigma (Phi_a^T Phi_j),
// Q_j = beta Phi_j^T (y - Phi_a mu).
BlockStats direct_full_stats(const ModelState& state, int j) {
    const double beta = state.system.beta;
    const auto phi_j = state.phi_block(j);
    BlockStats out;
    out.s = symmetrize(beta * (phi_j.transpose() * phi_j));
    out.q = beta * (phi_j.transpose() * state.system.y);
    if (!state.posterior.active.empty()) {
        const Eigen::MatrixXd phi_a = active_columns(state);
        const Eigen::MatrixXd cross = phi_a.transpose() * phi_j;
        out.s = symmetrize(out.s -
                           beta * beta * (cross.transpose() * (state.posterior.sigma * cross)));
        out.q -= beta * (cross.transpose() * state.posterior.mu);
    }
    return out;
}

// Fatal tripwire: a correct update never produces non-finite caches, cost,
// or posterior (leave-one-out slots may carry deliberate NaN poison, so they
// are exempt). Full from-scratch cache coherence is a test-bench property:
// the direct recomputation cancels terms of magnitude ~beta*|phi^T phi| and
// is itself noise-limited at large beta, so it cannot arbitrate at runtime.
void check_updated_state(const ModelState& state) {
    bool ok = state.posterior.mu.allFinite() && state.posterior.sigma.allFinite() &&
              std::isfinite(state.cost);
    for (const auto& stats : state.full_stats) {
        ok = ok && stats.s.allFinite() && stats.q.allFinite();
    }
    if (!ok) {
        throw internal_error(
            "non-finite caches after accepted action; this indicates an update-rule bug");
    }
}

double resolve_beta(const Eigen::VectorXd& y, const BetaMode& mode) {
    if (mode.kind == BetaMode::kind_t::fixed) {
        return mode.value;
    }
    if (mode.kind != BetaMode::kind_t::noiseless && y.squaredNorm() == 0.0) {
        // The recovery of y = 0 is beta-invariant (every q_i is zero, so no
        // block is ever added); any positive value serves.
        return 1.0;
    }
    return noise_precision_heuristic(y, mode);
}

}  // namespace

double noise_precision_heuristic(const Eigen::VectorXd& y, const BetaMode& mode) {
    switch (mode.kind) {
        case BetaMode::kind_t::fixed:
            return mode.value;
        case BetaMode::kind_t::noiseless:
            return 1e6;
        case BetaMode::kind_t::low_snr:
        case BetaMode::kind_t::high_snr: {
            const double energy = y.squaredNorm();
            if (energy == 0.0) {
                throw invalid_input("zero observation is invalid for an SNR-scaled beta mode");
            }
            const double scale = mode.kind == BetaMode::kind_t::low_snr ? 0.1 : 0.01;
            return 1.0 / (scale * energy);
        }
    }
    throw invalid_input("unknown beta mode");
}

double beta_ml_update(const ModelState& state) {
    const double m = static_cast<double>(state.system.rows());
    double denom = state.system.y.squaredNorm();
    if (!state.posterior.active.empty()) {
        const Eigen::MatrixXd phi_a = active_columns(state);
        denom = (state.posterior.sigma * (phi_a.transpose() * phi_a)).trace() +
                (state.system.y - phi_a * state.posterior.mu).squaredNorm();
    }
    if (!(denom > 0.0)) {
        throw numerical_error("beta update denominator is not positive");
    }
    return m / denom;
}

ModelState initialize(const MeasurementSystem& system, const BlockPartition& partition) {
    if (partition.total != system.cols()) {
        throw invalid_input("partition length must equal the sensing matrix column count");
    }
    ModelState state{partition, system, {}, {}, {}, {}, 0.0};
    const int g = partition.count();
    state.full_stats.resize(static_cast<std::size_t>(g));
    for (int i = 0; i < g; ++i) {
        const auto phi_i = state.phi_block(i);
        state.full_stats[static_cast<std::size_t>(i)].s =
            symmetrize(system.beta * (phi_i.transpose() * phi_i));
        state.full_stats[static_cast<std::size_t>(i)].q =
            system.beta * (phi_i.transpose() * system.y);
    }
    state.loo_stats = state.full_stats;
    state.cost = system.beta * system.y.squaredNorm() +
                 static_cast<double>(system.rows()) * std::log(1.0 / system.beta);
    return state;
}

Eigen::MatrixXd candidate_covariance(const Eigen::MatrixXd& s, const Eigen::VectorXd& q) {
    if (s.rows() != s.cols() || q.size() != s.rows()) {
        throw invalid_input("candidate statistics must share one dimension");
    }
    if (!s.allFinite() || !q.allFinite()) {
        throw numerical_error("non-finite statistics; candidate covariance undefined");
    }
    // Exactly s is symmetric positive definite, but at extreme noise
    // precisions the cached copy can carry round-off of either sign, so a
    // pivoted symmetric factorization is used instead of a Cholesky.
    Eigen::LDLT<Eigen::MatrixXd> ldlt(symmetrize(s));
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
        throw numerical_error("rank-deficient statistic s; candidate covariance undefined");
    }
    const Eigen::VectorXd u = ldlt.solve(q);  // s^{-1} q
    const Eigen::Index d = s.rows();
    const Eigen::MatrixXd s_inv = ldlt.solve(Eigen::MatrixXd::Identity(d, d));
    return symmetrize(u * u.transpose() - s_inv);
}

double block_relevance(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols() || a.rows() == 0) {
        throw invalid_input("relevance requires a non-empty square matrix");
    }
    return a.trace() / static_cast<double>(a.rows());
}

double estimate_ar_coefficient(const Eigen::MatrixXd& b) {
    if (b.rows() != b.cols() || b.rows() == 0) {
        throw invalid_input("AR estimation requires a non-empty square matrix");
    }
    const Eigen::Index d = b.rows();
    if (d == 1) {
        return 0.0;
    }
    const double m0 = b.diagonal().mean();
    if (m0 == 0.0) {
        throw numerical_error("degenerate correlation template: zero main-diagonal mean");
    }
    double m1 = 0.0;
    for (Eigen::Index i = 0; i + 1 < d; ++i) {
        m1 += b(i + 1, i);
    }
    m1 /= static_cast<double>(d - 1);
    const double ratio = m1 / m0;
    if (ratio == 0.0) {
        return 0.0;
    }
    return (ratio > 0.0 ? 1.0 : -1.0) * std::min(std::abs(ratio), 0.99);
}

BlockCovariance regularize(const Eigen::MatrixXd& a_candidate, const CorrelationModel& model) {
    const double gamma = block_relevance(a_candidate);
    if (!(gamma > 0.0)) {
        throw invalid_input("candidate is not relevant (gamma <= 0); nothing to regularize");
    }
    const int d = static_cast<int>(a_candidate.rows());
    switch (model.kind) {
        case correlation_kind::sim:
            return BlockCovariance::from_template(gamma, Eigen::MatrixXd::Identity(d, d));
        case correlation_kind::ar1: {
            const double r = estimate_ar_coefficient(a_candidate / gamma);
            return BlockCovariance::from_template(gamma, toeplitz_ar(d, r), r);
        }
        case correlation_kind::ar1_averaged:
            return BlockCovariance::from_template(gamma, toeplitz_ar(d, model.shared_r),
                                                  model.shared_r);
    }
    throw invalid_input("unknown correlation model");
}

BlockStats leave_one_out_stats(const BlockStats& full, const Eigen::MatrixXd* a) {
    if (a == nullptr) {
        return full;
    }
    const Eigen::Index d = full.s.rows();
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(d, d) - full.s * (*a);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    if (lu.rcond() < 1e-14) {
        throw numerical_error("leave-one-out deflation failed: (I - S A) is singular");
    }
    BlockStats out;
    out.s = symmetrize(lu.solve(full.s));
    out.q = lu.solve(full.q);
    if (!out.q.allFinite() || !out.s.allFinite()) {
        throw numerical_error("leave-one-out deflation produced non-finite statistics");
    }
    return out;
}

ActionProposal propose_action(const ModelState& state, int block, const CorrelationModel& model) {
    if (block < 0 || block >= state.partition.count()) {
        throw invalid_input("block index out of range");
    }
    const BlockStats& loo = state.loo_stats[static_cast<std::size_t>(block)];
    if (!loo.s.allFinite() || !loo.q.allFinite()) {
        std::ostringstream msg;
        msg << "block " << block << ": degenerate leave-one-out statistics";
        throw numerical_error(msg.str());
    }
    Eigen::MatrixXd raw;
    try {
        raw = candidate_covariance(loo.s, loo.q);
    } catch (const numerical_error& e) {
        std::ostringstream msg;
        msg << "block " << block << ": " << e.what();
        throw numerical_error(msg.str());
    }
    const double gamma = block_relevance(raw);
    const auto it = state.covs.find(block);
    const bool active = it != state.covs.end();

    ActionProposal proposal;
    proposal.block = block;
    if (!active) {
        if (!(gamma > 0.0)) {
            return proposal;  // NONE, delta 0
        }
        proposal.action = action_kind::add;
        proposal.candidate = regularize(raw, model);
        proposal.delta = cost_block(loo.s, loo.q, proposal.candidate->a);
        return proposal;
    }
    if (!(gamma > 0.0)) {
        proposal.action = action_kind::remove;
        proposal.delta = -cost_block(loo.s, loo.q, it->second.a);
        return proposal;
    }
    proposal.action = action_kind::reestimate;
    proposal.candidate = regularize(raw, model);
    proposal.delta =
        cost_block(loo.s, loo.q, proposal.candidate->a) - cost_block(loo.s, loo.q, it->second.a);
    return proposal;
}

void apply_action(ModelState& state, const ActionProposal& proposal) {
    if (proposal.action == action_kind::none) {
        throw invalid_input("cannot apply a NONE proposal");
    }
    const int j = proposal.block;
    if (j < 0 || j >= state.partition.count()) {
        throw invalid_input("proposal block index out of range");
    }
    const bool active = state.covs.count(j) > 0;
    if (proposal.action == action_kind::add && active) {
        throw invalid_input("cannot add a block that is already active");
    }
    if (proposal.action != action_kind::add && !active) {
        throw invalid_input("cannot re-estimate or delete an inactive block");
    }

    const Eigen::Index d = block_size(state, j);
    const double beta = state.system.beta;
    const Eigen::MatrixXd a_old =
        active ? state.covs.at(j).a : Eigen::MatrixXd::Zero(d, d).eval();
    const Eigen::MatrixXd a_new = proposal.action == action_kind::remove
                                      ? Eigen::MatrixXd::Zero(d, d).eval()
                                      : proposal.candidate->a;

    // Rank-d update kernel K = Delta (I + S_j Delta)^{-1} and the projected
    // columns E = C^{-1} Phi_j, both taken at the pre-update state.
    const Eigen::MatrixXd delta_a = a_new - a_old;
    const BlockStats stats_j = state.full_stats[static_cast<std::size_t>(j)];
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(d, d) +
                                            stats_j.s * delta_a);
    if (lu.rcond() < 1e-14) {
        throw numerical_error("statistic update failed: (I + S delta) is singular");
    }
    const Eigen::MatrixXd k = symmetrize(delta_a * lu.inverse());

    const Eigen::MatrixXd phi_j = state.phi_block(j);
    const bool had_active = !state.posterior.active.empty();
    Eigen::MatrixXd phi_a;
    Eigen::MatrixXd f;  // beta Sigma Phi_a^T Phi_j, n_active x d
    Eigen::MatrixXd e;  // C^{-1} Phi_j, M x d
    if (had_active) {
        phi_a = active_columns(state);
        f = beta * (state.posterior.sigma * (phi_a.transpose() * phi_j));
        e = beta * (phi_j - phi_a * f);
    } else {
        e = beta * phi_j;
    }

    const Eigen::VectorXd kq = k * stats_j.q;
    for (int i = 0; i < state.partition.count(); ++i) {
        const Eigen::MatrixXd g_i = state.phi_block(i).transpose() * e;
        auto& fs = state.full_stats[static_cast<std::size_t>(i)];
        fs.s = symmetrize(fs.s - g_i * k * g_i.transpose());
        fs.q -= g_i * kq;
    }

    // Posterior update, by case.
    if (proposal.action == action_kind::add) {
        // For an inactive block the leave-one-out stats equal the full ones.
        Eigen::LLT<Eigen::MatrixXd> allt(a_new);
        if (allt.info() != Eigen::Success) {
            throw numerical_error("added covariance is not positive definite");
        }
        const Eigen::MatrixXd prec =
            symmetrize(allt.solve(Eigen::MatrixXd::Identity(d, d)) + stats_j.s);
        const Eigen::MatrixXd sigma_jj = symmetrize(prec.llt().solve(Eigen::MatrixXd::Identity(d, d)));
        const Eigen::VectorXd mu_j = sigma_jj * stats_j.q;

        const std::vector<int> order_old = state.posterior.active;
        std::vector<int> order_new = order_old;
        order_new.insert(std::upper_bound(order_new.begin(), order_new.end(), j), j);

        const Eigen::Index n_old = state.posterior.mu.size();
        const Eigen::Index n_new = n_old + d;
        Eigen::MatrixXd sigma_new = Eigen::MatrixXd::Zero(n_new, n_new);
        Eigen::VectorXd mu_new = Eigen::VectorXd::Zero(n_new);
        // Offset of the inserted block in the new frame = total size of the
        // active blocks that sort before it.
        Eigen::Index pos_j = 0;
        for (const int i : order_old) {
            if (i < j) {
                pos_j += block_size(state, i);
            }
        }
        auto new_offset = [&](Eigen::Index old_offset) {
            return old_offset < pos_j ? old_offset : old_offset + d;
        };
        if (had_active) {
            const Eigen::MatrixXd sigma_aa =
                symmetrize(state.posterior.sigma + f * sigma_jj * f.transpose());
            const Eigen::MatrixXd sigma_aj = -f * sigma_jj;
            const Eigen::VectorXd mu_a = state.posterior.mu - f * mu_j;
            Eigen::Index row_old = 0;
            for (const int a_blk : order_old) {
                const Eigen::Index da = block_size(state, a_blk);
                const Eigen::Index row_new = new_offset(row_old);
                mu_new.segment(row_new, da) = mu_a.segment(row_old, da);
                sigma_new.block(row_new, pos_j, da, d) = sigma_aj.middleRows(row_old, da);
                sigma_new.block(pos_j, row_new, d, da) =
                    sigma_aj.middleRows(row_old, da).transpose();
                Eigen::Index col_old = 0;
                for (const int b_blk : order_old) {
                    const Eigen::Index db = block_size(state, b_blk);
                    sigma_new.block(row_new, new_offset(col_old), da, db) =
                        sigma_aa.block(row_old, col_old, da, db);
                    col_old += db;
                }
                row_old += da;
            }
        }
        sigma_new.block(pos_j, pos_j, d, d) = sigma_jj;
        mu_new.segment(pos_j, d) = mu_j;
        state.posterior.sigma = symmetrize(sigma_new);
        state.posterior.mu = mu_new;
        state.posterior.active = order_new;
        state.covs.insert_or_assign(j, *proposal.candidate);
    } else if (proposal.action == action_kind::reestimate) {
        const Eigen::Index pos = active_offset(state, j);
        const Eigen::MatrixXd v = state.posterior.sigma.middleCols(pos, d);
        const Eigen::MatrixXd sigma_jj = state.posterior.sigma.block(pos, pos, d, d);
        const Eigen::MatrixXd dprec =
            symmetrize(a_new.llt().solve(Eigen::MatrixXd::Identity(d, d)) -
                       a_old.llt().solve(Eigen::MatrixXd::Identity(d, d)));
        Eigen::PartialPivLU<Eigen::MatrixXd> rlu(Eigen::MatrixXd::Identity(d, d) +
                                                 sigma_jj * dprec);
        if (rlu.rcond() < 1e-14) {
            throw numerical_error("re-estimate update failed: resolvent is singular");
        }
        const Eigen::MatrixXd t = symmetrize(dprec * rlu.inverse());
        state.posterior.sigma = symmetrize(state.posterior.sigma - v * t * v.transpose());
        state.posterior.mu -= v * (t * state.posterior.mu.segment(pos, d));
        state.covs.insert_or_assign(j, *proposal.candidate);
    } else {  // remove
        const Eigen::Index pos = active_offset(state, j);
        const Eigen::Index n_old = state.posterior.mu.size();
        const Eigen::MatrixXd v = state.posterior.sigma.middleCols(pos, d);
        const Eigen::MatrixXd sigma_jj = state.posterior.sigma.block(pos, pos, d, d);
        Eigen::LLT<Eigen::MatrixXd> jllt(sigma_jj);
        if (jllt.info() != Eigen::Success) {
            throw numerical_error("delete update failed: posterior block is not positive definite");
        }
        const Eigen::MatrixXd w = jllt.solve(v.transpose()).transpose();  // V Sigma_jj^{-1}
        const Eigen::MatrixXd sigma_full = state.posterior.sigma - w * v.transpose();
        const Eigen::VectorXd mu_full =
            state.posterior.mu - w * state.posterior.mu.segment(pos, d);
        const Eigen::Index n_new = n_old - d;
        Eigen::MatrixXd sigma_new(n_new, n_new);
        Eigen::VectorXd mu_new(n_new);
        const Eigen::Index tail = n_old - pos - d;
        sigma_new.topLeftCorner(pos, pos) = sigma_full.topLeftCorner(pos, pos);
        sigma_new.topRightCorner(pos, tail) = sigma_full.topRightCorner(pos, tail);
        sigma_new.bottomLeftCorner(tail, pos) = sigma_full.bottomLeftCorner(tail, pos);
        sigma_new.bottomRightCorner(tail, tail) = sigma_full.bottomRightCorner(tail, tail);
        mu_new.head(pos) = mu_full.head(pos);
        mu_new.tail(tail) = mu_full.tail(tail);
        state.posterior.sigma = symmetrize(sigma_new);
        state.posterior.mu = mu_new;
        state.posterior.active.erase(
            std::find(state.posterior.active.begin(), state.posterior.active.end(), j));
        state.covs.erase(j);
    }

    state.cost += proposal.delta;
    refresh_loo_stats(state);
    check_updated_state(state);
}

double shared_ar_coefficient(const ModelState& state) {
    double sum = 0.0;
    int n = 0;
    for (const auto& [i, cov] : state.covs) {
        const BlockStats& loo = state.loo_stats[static_cast<std::size_t>(i)];
        try {
            const Eigen::MatrixXd raw = candidate_covariance(loo.s, loo.q);
            const double gamma = block_relevance(raw);
            if (!(gamma > 0.0)) {
                continue;
            }
            const double r = estimate_ar_coefficient(raw / gamma);
            if (std::isfinite(r)) {
                sum += r;
                ++n;
            }
        } catch (const numerical_error&) {
            continue;  // degenerate statistics; nothing to contribute
        }
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

RecoveryResult solve(const MeasurementSystem& system, const BlockPartition& partition,
                     const SolverOptions& options) {
    options.validate();
    const double beta = resolve_beta(system.y, options.beta_mode);
    MeasurementSystem resolved(system.phi, system.y, beta);
    ModelState state = initialize(resolved, partition);

    RecoveryResult result;
    result.beta = beta;
    result.cost_trace.push_back(state.cost);
    CorrelationModel model = options.model;

    for (int iter = 0; iter < options.max_iters; ++iter) {
        if (model.kind == correlation_kind::ar1_averaged) {
            model.shared_r = shared_ar_coefficient(state);
        }
        ActionProposal best;
        for (int i = 0; i < partition.count(); ++i) {
            ActionProposal p;
            try {
                p = propose_action(state, i, model);
            } catch (const numerical_error&) {
                // Degenerate per-block statistics (typically the deflation of
                // a block whose contribution the model already absorbed, at
                // extreme noise precisions): nothing useful to propose this
                // sweep.
                continue;
            }
            if (p.action == action_kind::none || !(p.delta < 0.0) || !std::isfinite(p.delta)) {
                continue;
            }
            if (best.action == action_kind::none || p.delta < best.delta) {
                best = std::move(p);
            }
        }
        result.final_best_delta = best.action == action_kind::none
                                      ? std::nullopt
                                      : std::optional<double>(best.delta);
        if (best.action == action_kind::none || std::abs(best.delta) < options.eta) {
            result.converged = true;
            break;
        }
        apply_action(state, best);
        if (options.learn_beta) {
            // Quarantined rule: refit beta once per iteration from the
            // current posterior and rebuild every cache under the new value.
            const double next_beta = beta_ml_update(state);
            CovarianceMap covs = state.covs;
            state = initialize(MeasurementSystem(system.phi, system.y, next_beta), partition);
            for (const auto& [i, cov] : covs) {
                // Rebuild through compute_posterior-equivalent incremental
                // adds would re-derive deltas; instead reconstitute directly.
                state.covs.insert_or_assign(i, cov);
            }
            if (!state.covs.empty()) {
                state.posterior = compute_posterior(state.system, partition, state.covs);
                for (int i = 0; i < partition.count(); ++i) {
                    state.full_stats[static_cast<std::size_t>(i)] = direct_full_stats(state, i);
                }
                refresh_loo_stats(state);
                state.cost = cost_direct(state.system, partition, state.covs);
            }
            result.beta = next_beta;
        }
        result.cost_trace.push_back(state.cost);
        result.actions.emplace_back(best.action, best.block);
        result.iterations = iter + 1;
    }

    if (!result.converged) {
        result.final_best_delta.reset();
    }
    result.x = map_estimate(state);
    result.active = state.posterior.active;
    result.covs = state.covs;
    return result;
}

RecoveryResult solve(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                     const BlockPartition& partition, const SolverOptions& options) {
    options.validate();
    const double beta = resolve_beta(y, options.beta_mode);
    return solve(MeasurementSystem(phi, y, beta), partition, options);
}

}  // namespace bsbl
