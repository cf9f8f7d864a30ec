#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "bsbl/errors.hpp"
#include "bsbl/model.hpp"
#include "bsbl/solver.hpp"
#include "bsbl/types.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bsbl;

namespace {

// Mirror of the solve loop's selection rule: propose on every block, skip
// degenerate proposals, keep the strictly most negative finite delta with
// ties to the lowest index.
std::optional<ActionProposal> select_best(const ModelState& state, const CorrelationModel& model) {
    std::optional<ActionProposal> best;
    for (int i = 0; i < state.partition.count(); ++i) {
        ActionProposal proposal;
        try {
            proposal = propose_action(state, i, model);
        } catch (const numerical_error&) {
            continue;
        }
        if (proposal.action == action_kind::none || !(proposal.delta < 0.0) ||
            !std::isfinite(proposal.delta)) {
            continue;
        }
        if (!best || proposal.delta < best->delta) {
            best = proposal;
        }
    }
    return best;
}

double rel_gap(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
    return (got - want).cwiseAbs().maxCoeff() / (1.0 + want.cwiseAbs().maxCoeff());
}

double rel_gap(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
    return (got - want).cwiseAbs().maxCoeff() / (1.0 + want.cwiseAbs().maxCoeff());
}

// From-scratch audit of every incremental cache against the dense oracles.
void audit_state(const ModelState& state, double tol) {
    const auto& phi = state.system.phi;
    const auto& y = state.system.y;
    const double beta = state.system.beta;

    for (int i = 0; i < state.partition.count(); ++i) {
        const auto [s_full, q_full] =
            oracles::full_stats(phi, y, beta, state.partition, state.covs, i);
        CHECK(rel_gap(state.full_stats[static_cast<std::size_t>(i)].s, s_full) <= tol);
        CHECK(rel_gap(state.full_stats[static_cast<std::size_t>(i)].q, q_full) <= tol);

        if (state.covs.count(i) != 0) {
            const auto [s_loo, q_loo] =
                oracles::loo_stats(phi, y, beta, state.partition, state.covs, i);
            CHECK(rel_gap(state.loo_stats[static_cast<std::size_t>(i)].s, s_loo) <= tol);
            CHECK(rel_gap(state.loo_stats[static_cast<std::size_t>(i)].q, q_loo) <= tol);
        } else {
            CHECK(rel_gap(state.loo_stats[static_cast<std::size_t>(i)].s, s_full) <= tol);
            CHECK(rel_gap(state.loo_stats[static_cast<std::size_t>(i)].q, q_full) <= tol);
        }
    }

    if (!state.covs.empty()) {
        const auto [mu, sigma] = oracles::posterior(phi, y, beta, state.partition, state.covs);
        CHECK(rel_gap(state.posterior.mu, mu) <= tol);
        CHECK(rel_gap(state.posterior.sigma, sigma) <= tol);
    } else {
        CHECK(state.posterior.mu.size() == 0);
    }

    const double direct = oracles::cost(phi, y, beta, state.partition, state.covs);
    CHECK(std::abs(state.cost - direct) <= 1e-8 * (1.0 + std::abs(direct)));
}

}  // namespace

TEST_CASE("noise precision heuristic covers the three scenarios") {
    Eigen::VectorXd y(2);
    y << 2.0, 0.0;  // ||y||^2 = 4
    CHECK(noise_precision_heuristic(y, BetaMode::noiseless()) == doctest::Approx(1e6));
    CHECK(noise_precision_heuristic(y, BetaMode::low_snr()) == doctest::Approx(2.5));
    CHECK(noise_precision_heuristic(y, BetaMode::high_snr()) == doctest::Approx(25.0));
    CHECK(noise_precision_heuristic(y, BetaMode::fixed(7.5)) == doctest::Approx(7.5));

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(noise_precision_heuristic(zero, BetaMode::low_snr()), invalid_input);
    CHECK_THROWS_AS(noise_precision_heuristic(zero, BetaMode::high_snr()), invalid_input);
    CHECK(noise_precision_heuristic(zero, BetaMode::noiseless()) == doctest::Approx(1e6));
}

TEST_CASE("beta mode validates fixed values") {
    CHECK_THROWS_AS(BetaMode::fixed(0.0), invalid_input);
    CHECK_THROWS_AS(BetaMode::fixed(-1.0), invalid_input);
}

TEST_CASE("initialize fills the empty-model caches") {
    Eigen::MatrixXd phi(2, 1);
    phi << 1.0, 0.0;
    Eigen::VectorXd y(2);
    y << 3.0, 4.0;
    const MeasurementSystem system(phi, y, 2.0);
    const ModelState state = initialize(system, BlockPartition::uniform(1, 1));

    CHECK(state.posterior.active.empty());
    CHECK(state.covs.empty());
    REQUIRE(state.full_stats.size() == 1);
    CHECK(state.full_stats[0].s(0, 0) == doctest::Approx(2.0));
    CHECK(state.full_stats[0].q[0] == doctest::Approx(6.0));
    CHECK(state.loo_stats[0].s(0, 0) == doctest::Approx(2.0));
    CHECK(state.loo_stats[0].q[0] == doctest::Approx(6.0));
    // cost = beta ||y||^2 + M log(1/beta) = 50 - 2 log 2.
    CHECK(state.cost == doctest::Approx(50.0 - 2.0 * std::log(2.0)));
}

TEST_CASE("initialize with orthonormal columns gives identity statistics") {
    const MeasurementSystem system(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Ones(3), 1.0);
    const ModelState state = initialize(system, BlockPartition({3}));
    CHECK(rel_gap(state.full_stats[0].s, Eigen::MatrixXd::Identity(3, 3)) <= 1e-14);
}

TEST_CASE("initialize matches the direct empty-model statistics") {
    test_util::rng_t rng(11);
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, 8, 12);
    const Eigen::VectorXd y = test_util::gaussian_vector(rng, 8);
    const double beta = 3.5;
    const MeasurementSystem system(phi, y, beta);
    const BlockPartition part = BlockPartition::uniform(4, 3);
    const ModelState state = initialize(system, part);

    for (int i = 0; i < 4; ++i) {
        const auto [s, q] = oracles::full_stats(phi, y, beta, part, {}, i);
        CHECK(rel_gap(state.full_stats[static_cast<std::size_t>(i)].s, s) <= 1e-12);
        CHECK(rel_gap(state.full_stats[static_cast<std::size_t>(i)].q, q) <= 1e-12);
    }
    const double direct = oracles::cost(phi, y, beta, part, {});
    CHECK(state.cost == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("candidate covariance scalar and zero-correlation cases") {
    Eigen::MatrixXd s(1, 1);
    Eigen::VectorXd q(1);
    s << 2.0;
    q << 3.0;
    CHECK(candidate_covariance(s, q)(0, 0) == doctest::Approx(1.75));

    const Eigen::MatrixXd a =
        candidate_covariance(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3));
    CHECK(rel_gap(a, Eigen::MatrixXd(-Eigen::MatrixXd::Identity(3, 3))) <= 1e-14);
}

TEST_CASE("candidate covariance satisfies the stationarity equation") {
    // The first-order condition of the per-block cost rearranges to
    // s A s = q q^T - s; the returned template must satisfy it exactly.
    test_util::rng_t rng(22);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd s = test_util::random_pd(rng, 3);
        const Eigen::VectorXd q = test_util::gaussian_vector(rng, 3);
        const Eigen::MatrixXd a = candidate_covariance(s, q);
        CHECK((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        const Eigen::MatrixXd residual = s * a * s - (q * q.transpose() - s);
        CHECK(residual.cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + s.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("candidate covariance is stationary in the scalar case") {
    // d=1 is the one dimension where the per-block cost stays finite at the
    // candidate itself, so the finite-difference check applies directly.
    test_util::rng_t rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd s(1, 1);
        Eigen::VectorXd q(1);
        s << 0.5 + 2.0 * std::abs(test_util::gaussian_vector(rng, 1)[0]);
        q << 2.0 + std::abs(test_util::gaussian_vector(rng, 1)[0]);
        const Eigen::MatrixXd a = candidate_covariance(s, q);
        if (!(a(0, 0) > 0.0)) {
            continue;
        }
        const double center = cost_block(s, q, a);
        const double h = 1e-6 * (1.0 + std::abs(a(0, 0)));
        Eigen::MatrixXd hi = a, lo = a;
        hi(0, 0) += h;
        lo(0, 0) -= h;
        const double grad = (cost_block(s, q, hi) - cost_block(s, q, lo)) / (2.0 * h);
        CHECK(std::abs(grad) <= 1e-5 * (1.0 + std::abs(center)));
    }
}

TEST_CASE("candidate covariance rejects a singular s") {
    const Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(candidate_covariance(s, Eigen::VectorXd::Ones(2)), numerical_error);
}

TEST_CASE("block relevance is the trace mean") {
    CHECK(block_relevance(Eigen::MatrixXd::Identity(4, 4)) == doctest::Approx(1.0));
    Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(3, 3);
    diag.diagonal() << 1.0, 2.0, 3.0;
    CHECK(block_relevance(diag) == doctest::Approx(2.0));
    CHECK(block_relevance(Eigen::MatrixXd(-Eigen::MatrixXd::Identity(2, 2))) ==
          doctest::Approx(-1.0));
}

TEST_CASE("ar coefficient estimation clips and signs") {
    Eigen::MatrixXd b(2, 2);
    b << 1.0, 1.2, 1.2, 1.0;
    CHECK(estimate_ar_coefficient(b) == doctest::Approx(0.99));

    CHECK(estimate_ar_coefficient(Eigen::MatrixXd::Identity(3, 3)) == doctest::Approx(0.0));

    b << 1.0, -0.5, -0.5, 1.0;
    CHECK(estimate_ar_coefficient(b) == doctest::Approx(-0.5));

    CHECK(estimate_ar_coefficient(Eigen::MatrixXd::Ones(1, 1)) == doctest::Approx(0.0));

    Eigen::MatrixXd degenerate(2, 2);
    degenerate << 0.0, 1.0, 1.0, 0.0;
    CHECK_THROWS_AS(estimate_ar_coefficient(degenerate), numerical_error);
}

TEST_CASE("regularize shapes candidates per correlation model") {
    // SIM: only the trace survives.
    Eigen::MatrixXd a(2, 2);
    a << 3.0, 0.7, 0.7, 1.0;  // trace 4
    const BlockCovariance sim = regularize(a, CorrelationModel::sim());
    CHECK(sim.gamma == doctest::Approx(2.0));
    CHECK(rel_gap(sim.a, Eigen::MatrixXd(2.0 * Eigen::MatrixXd::Identity(2, 2))) <= 1e-12);

    // AR1: the template's m1/m0 ratio becomes the Toeplitz coefficient.
    const Eigen::MatrixXd ar_source = 1.7 * toeplitz_ar(3, 0.95);
    const BlockCovariance ar = regularize(ar_source, CorrelationModel::ar1());
    CHECK(ar.gamma == doctest::Approx(1.7));
    REQUIRE(ar.r.has_value());
    CHECK(*ar.r == doctest::Approx(0.95));
    CHECK(rel_gap(ar.b, toeplitz_ar(3, 0.95)) <= 1e-10);
    CHECK(rel_gap(ar.a, Eigen::MatrixXd(1.7 * toeplitz_ar(3, 0.95))) <= 1e-10);

    // AR1-AVERAGED with shared r = 0 ignores the block's own correlation.
    const BlockCovariance shared = regularize(ar_source, CorrelationModel::ar1_averaged(0.0));
    CHECK(shared.gamma == doctest::Approx(1.7));
    CHECK(rel_gap(shared.b, Eigen::MatrixXd::Identity(3, 3)) <= 1e-12);

    // Non-relevant candidates are a caller error.
    CHECK_THROWS_AS(regularize(Eigen::MatrixXd(-Eigen::MatrixXd::Identity(2, 2)),
                               CorrelationModel::sim()),
                    invalid_input);
}

TEST_CASE("leave-one-out statistics deflate or pass through") {
    BlockStats full;
    full.s = Eigen::MatrixXd::Constant(1, 1, 0.5);
    full.q = Eigen::VectorXd::Constant(1, 1.0);

    const BlockStats inactive = leave_one_out_stats(full, nullptr);
    CHECK(inactive.s(0, 0) == doctest::Approx(0.5));
    CHECK(inactive.q[0] == doctest::Approx(1.0));

    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(1, 1);
    const BlockStats active = leave_one_out_stats(full, &a);
    CHECK(active.s(0, 0) == doctest::Approx(1.0));
    CHECK(active.q[0] == doctest::Approx(2.0));
}

TEST_CASE("leave-one-out statistics match the explicit deflation oracle") {
    test_util::rng_t rng(44);
    const auto model = test_util::random_active_model(rng, 4, 2, 2);
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, 10, 8);
    const Eigen::VectorXd y = test_util::gaussian_vector(rng, 10);
    const double beta = 2.0;

    const int i = model.covs.begin()->first;
    const auto [s_full, q_full] = oracles::full_stats(phi, y, beta, model.partition, model.covs, i);
    BlockStats full{s_full, q_full};
    const BlockStats loo = leave_one_out_stats(full, &model.covs.at(i).a);

    const auto [s_ref, q_ref] = oracles::loo_stats(phi, y, beta, model.partition, model.covs, i);
    CHECK(rel_gap(loo.s, s_ref) <= 1e-8);
    CHECK(rel_gap(loo.q, q_ref) <= 1e-8);
}

TEST_CASE("leave-one-out statistics reject singular deflations") {
    // (I - S A) = 0 at S = A = I.
    BlockStats full;
    full.s = Eigen::MatrixXd::Identity(2, 2);
    full.q = Eigen::VectorXd::Ones(2);
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(leave_one_out_stats(full, &a), numerical_error);
}

TEST_CASE("propose_action scores the engineered scalar instance") {
    // Identity sensing, y = (2, 0): block 0 has s=1, q=2; block 1 has q=0.
    Eigen::VectorXd y(2);
    y << 2.0, 0.0;
    const MeasurementSystem system(Eigen::MatrixXd::Identity(2, 2), y, 1.0);
    const ModelState state = initialize(system, BlockPartition::uniform(2, 1));

    const ActionProposal add = propose_action(state, 0, CorrelationModel::sim());
    CHECK(add.action == action_kind::add);
    REQUIRE(add.candidate.has_value());
    CHECK(add.candidate->a(0, 0) == doctest::Approx(3.0));
    CHECK(add.delta == doctest::Approx(std::log(4.0) - 3.0));

    const ActionProposal none = propose_action(state, 1, CorrelationModel::sim());
    CHECK(none.action == action_kind::none);
    CHECK(none.delta == doctest::Approx(0.0));
}

TEST_CASE("re-proposing a freshly added block is idempotent") {
    Eigen::VectorXd y(2);
    y << 2.0, 0.0;
    const MeasurementSystem system(Eigen::MatrixXd::Identity(2, 2), y, 1.0);
    ModelState state = initialize(system, BlockPartition::uniform(2, 1));

    apply_action(state, propose_action(state, 0, CorrelationModel::sim()));
    const ActionProposal again = propose_action(state, 0, CorrelationModel::sim());
    CHECK(again.action == action_kind::reestimate);
    CHECK(std::abs(again.delta) <= 1e-10);
}

TEST_CASE("adding the first block reproduces the closed-form posterior") {
    test_util::rng_t rng(55);
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, 10, 8);
    const BlockPartition part = BlockPartition::uniform(4, 2);
    const Eigen::VectorXd x_gen = [&] {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(8);
        x.segment(2, 2) = test_util::gaussian_vector(rng, 2) * 2.0;
        return x;
    }();
    const MeasurementSystem system(phi, phi * x_gen, 30.0);

    ModelState state = initialize(system, part);
    const auto best = select_best(state, CorrelationModel::sim());
    REQUIRE(best.has_value());
    CHECK(best->action == action_kind::add);
    apply_action(state, *best);

    CovarianceMap covs;
    covs.emplace(best->block, *best->candidate);
    const Posterior ref = compute_posterior(system, part, covs);
    CHECK(rel_gap(state.posterior.mu, ref.mu) <= 1e-10);
    CHECK(rel_gap(state.posterior.sigma, ref.sigma) <= 1e-10);
}

TEST_CASE("deleting the only active block restores the initial state") {
    Eigen::VectorXd y(2);
    y << 2.0, 0.0;
    const MeasurementSystem system(Eigen::MatrixXd::Identity(2, 2), y, 1.0);
    ModelState state = initialize(system, BlockPartition::uniform(2, 1));
    const ModelState fresh = initialize(system, BlockPartition::uniform(2, 1));

    apply_action(state, propose_action(state, 0, CorrelationModel::sim()));
    REQUIRE(state.posterior.active == std::vector<int>{0});

    // Score the deletion against the current leave-one-out statistics, then
    // roll the model back; everything must match a fresh initialization.
    ActionProposal remove;
    remove.action = action_kind::remove;
    remove.block = 0;
    remove.delta = -cost_block(state.loo_stats[0].s, state.loo_stats[0].q, state.covs.at(0).a);
    apply_action(state, remove);

    CHECK(state.posterior.active.empty());
    CHECK(state.covs.empty());
    CHECK(state.posterior.mu.size() == 0);
    CHECK(std::abs(state.cost - fresh.cost) <= 1e-10 * (1.0 + std::abs(fresh.cost)));
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(rel_gap(state.full_stats[i].s, fresh.full_stats[i].s) <= 1e-10);
        CHECK(rel_gap(state.full_stats[i].q, fresh.full_stats[i].q) <= 1e-10);
        CHECK(rel_gap(state.loo_stats[i].s, fresh.loo_stats[i].s) <= 1e-10);
        CHECK(rel_gap(state.loo_stats[i].q, fresh.loo_stats[i].q) <= 1e-10);
    }
}

TEST_CASE("accepted actions change the direct cost by exactly delta") {
    test_util::rng_t rng(66);
    const int g = 6, d = 3, m = 14;
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, m, g * d);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(g * d);
    x.segment(0, d) = test_util::gaussian_vector(rng, d);
    x.segment(3 * d, d) = test_util::gaussian_vector(rng, d);
    const Eigen::VectorXd y = phi * x + 0.05 * test_util::gaussian_vector(rng, m);
    const MeasurementSystem system(phi, y, 25.0);
    const BlockPartition part = BlockPartition::uniform(g, d);

    ModelState state = initialize(system, part);
    for (int iter = 0; iter < 12; ++iter) {
        const auto best = select_best(state, CorrelationModel::ar1());
        if (!best || std::abs(best->delta) < 1e-6) {
            break;
        }
        const double before = oracles::cost(phi, y, 25.0, part, state.covs);
        apply_action(state, *best);
        const double after = oracles::cost(phi, y, 25.0, part, state.covs);
        CHECK(std::abs((after - before) - best->delta) <= 1e-6 * (1.0 + std::abs(best->delta)));
    }
    CHECK(!state.covs.empty());
}

TEST_CASE("incremental caches stay coherent through a full descent") {
    // Manual replication of the solve loop with a dense-oracle audit of
    // S, Q, s, q, mu, sigma, and cost after every accepted action.
    test_util::rng_t rng(77);
    const int g = 8, d = 4, m = 20;
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, m, g * d);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(g * d);
    x.segment(d, d) = test_util::gaussian_vector(rng, d);
    x.segment(5 * d, d) = test_util::gaussian_vector(rng, d);
    const Eigen::VectorXd y = phi * x + 0.02 * test_util::gaussian_vector(rng, m);
    const MeasurementSystem system(phi, y, 40.0);
    const BlockPartition part = BlockPartition::uniform(g, d);

    ModelState state = initialize(system, part);
    audit_state(state, 1e-6);
    int applied = 0;
    for (int iter = 0; iter < 40; ++iter) {
        const auto best = select_best(state, CorrelationModel::ar1());
        if (!best || std::abs(best->delta) < 1e-4) {
            break;
        }
        apply_action(state, *best);
        audit_state(state, 1e-6);
        ++applied;
    }
    CHECK(applied >= 2);
}

TEST_CASE("beta ml update matches the dense formula") {
    // Empty active set: beta = M / ||y||^2.
    Eigen::VectorXd y(4);
    y << 1.0, 1.0, 0.0, 0.0;  // ||y||^2 = 2
    const MeasurementSystem system(Eigen::MatrixXd::Identity(4, 4), y, 1.0);
    const ModelState empty = initialize(system, BlockPartition::uniform(4, 1));
    CHECK(beta_ml_update(empty) == doctest::Approx(2.0));

    // Random active state against the dense oracle.
    test_util::rng_t rng(88);
    const auto model = test_util::random_active_model(rng, 4, 2, 2);
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, 10, 8);
    const Eigen::VectorXd obs = test_util::gaussian_vector(rng, 10);
    const MeasurementSystem sys2(phi, obs, 3.0);
    ModelState state{model.partition,
                     sys2,
                     model.covs,
                     compute_posterior(sys2, model.partition, model.covs),
                     {},
                     {},
                     0.0};
    const double reference = oracles::beta_ml(phi, obs, 3.0, model.partition, model.covs);
    CHECK(beta_ml_update(state) == doctest::Approx(reference).epsilon(1e-10));
}

TEST_CASE("solve on a zero observation returns the empty model") {
    const MeasurementSystem unused(Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4), 1.0);
    SolverOptions options;
    options.beta_mode = BetaMode::high_snr();
    const RecoveryResult res =
        solve(unused.phi, unused.y, BlockPartition::uniform(4, 1), options);
    CHECK(res.converged);
    CHECK(res.active.empty());
    CHECK(res.iterations == 0);
    CHECK(res.x.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("solve recovers the support of an orthogonal design") {
    // Identity sensing with scalar blocks: exact recovery of the lone spike.
    Eigen::VectorXd x_gen = Eigen::VectorXd::Zero(8);
    x_gen[2] = 3.0;
    SolverOptions options;
    options.beta_mode = BetaMode::noiseless();
    const RecoveryResult res = solve(Eigen::MatrixXd::Identity(8, 8), x_gen,
                                     BlockPartition::uniform(8, 1), options);
    CHECK(res.converged);
    REQUIRE(res.active == std::vector<int>{2});
    CHECK((res.x - x_gen).squaredNorm() / x_gen.squaredNorm() <= 1e-5);
    CHECK(res.beta == doctest::Approx(1e6));
}

TEST_CASE("solve resolves beta from the mode") {
    test_util::rng_t rng(99);
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, 10, 16);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(16);
    x.segment(4, 4) = test_util::gaussian_vector(rng, 4);
    const Eigen::VectorXd y = phi * x;
    const BlockPartition part = BlockPartition::uniform(4, 4);

    SolverOptions options;
    options.beta_mode = BetaMode::high_snr();
    CHECK(solve(phi, y, part, options).beta ==
          doctest::Approx(1.0 / (0.01 * y.squaredNorm())));

    options.beta_mode = BetaMode::fixed(123.0);
    CHECK(solve(phi, y, part, options).beta == doctest::Approx(123.0));
}

TEST_CASE("solve rejects invalid options") {
    const Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(4, 4);
    const Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
    const BlockPartition part = BlockPartition::uniform(4, 1);

    SolverOptions bad_eta;
    bad_eta.eta = 0.0;
    CHECK_THROWS_AS(solve(phi, y, part, bad_eta), invalid_input);

    SolverOptions bad_iters;
    bad_iters.max_iters = 0;
    CHECK_THROWS_AS(solve(phi, y, part, bad_iters), invalid_input);

    CHECK_THROWS_AS(solve(phi, Eigen::VectorXd::Ones(3), part, SolverOptions{}), invalid_input);
}

TEST_CASE("solve descends strictly and stops below eta") {
    test_util::rng_t rng(111);
    for (const auto& model :
         {CorrelationModel::sim(), CorrelationModel::ar1(), CorrelationModel::ar1_averaged()}) {
        const int g = 8, d = 4, m = 20;
        const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, m, g * d);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(g * d);
        const Eigen::MatrixXd chol = toeplitz_ar(d, 0.9).llt().matrixL();
        x.segment(0, d) = chol * test_util::gaussian_vector(rng, d);
        x.segment(4 * d, d) = chol * test_util::gaussian_vector(rng, d);
        const Eigen::VectorXd y = phi * x + 0.03 * test_util::gaussian_vector(rng, m);

        SolverOptions options;
        options.model = model;
        options.beta_mode = BetaMode::fixed(50.0);
        const RecoveryResult res = solve(phi, y, BlockPartition::uniform(g, d), options);

        REQUIRE(res.cost_trace.size() >= 2);
        for (std::size_t k = 1; k < res.cost_trace.size(); ++k) {
            CHECK(res.cost_trace[k] < res.cost_trace[k - 1]);
        }
        CHECK(res.converged);
        if (res.final_best_delta) {
            CHECK(std::abs(*res.final_best_delta) < options.eta);
        }
        CHECK(res.iterations == static_cast<int>(res.actions.size()));
        CHECK((phi * res.x - y).norm() / y.norm() < 0.5);
    }
}

TEST_CASE("solve applies the argmin proposal first") {
    // The first applied action must agree with an independent scan of the
    // initial proposals (most negative delta, ties to the lowest index).
    test_util::rng_t rng(122);
    const int g = 6, d = 2, m = 10;
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, m, g * d);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(g * d);
    x.segment(2 * d, d) = test_util::gaussian_vector(rng, d);
    const Eigen::VectorXd y = phi * x + 0.05 * test_util::gaussian_vector(rng, m);
    const MeasurementSystem system(phi, y, 30.0);
    const BlockPartition part = BlockPartition::uniform(g, d);

    const ModelState state = initialize(system, part);
    const auto best = select_best(state, CorrelationModel::sim());
    REQUIRE(best.has_value());

    SolverOptions options;
    options.beta_mode = BetaMode::fixed(30.0);
    const RecoveryResult res = solve(phi, y, part, options);
    REQUIRE(!res.actions.empty());
    CHECK(res.actions[0].first == best->action);
    CHECK(res.actions[0].second == best->block);
}

TEST_CASE("scalar solve reproduces the fast-RVM reference decisions") {
    test_util::rng_t rng(133);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 14, m = 10;
        const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, m, n);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        x[3] = 1.5;
        x[7] = -2.0;
        const Eigen::VectorXd y = phi * x + 0.05 * test_util::gaussian_vector(rng, m);

        SolverOptions options;
        options.beta_mode = BetaMode::fixed(25.0);
        const RecoveryResult res = solve(phi, y, BlockPartition::uniform(n, 1), options);
        const auto reference = oracles::scalar_rvm_reference(phi, y, 25.0, options.eta);

        REQUIRE(res.actions.size() == reference.size());
        for (std::size_t k = 0; k < reference.size(); ++k) {
            CHECK(res.actions[k].first == reference[k].first);
            CHECK(res.actions[k].second == reference[k].second);
        }
    }
}

TEST_CASE("correlated blocks are recovered by every model") {
    test_util::rng_t rng(144);
    const int g = 8, d = 8, m = 32;
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, m, g * d);
    const Eigen::MatrixXd chol = toeplitz_ar(d, 0.9).llt().matrixL();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(g * d);
    x.segment(d, d) = chol * test_util::gaussian_vector(rng, d);
    x.segment(6 * d, d) = chol * test_util::gaussian_vector(rng, d);
    const Eigen::VectorXd y = phi * x;

    for (const auto& model :
         {CorrelationModel::sim(), CorrelationModel::ar1(), CorrelationModel::ar1_averaged()}) {
        SolverOptions options;
        options.model = model;
        options.beta_mode = BetaMode::noiseless();
        const RecoveryResult res = solve(phi, y, BlockPartition::uniform(g, d), options);
        CHECK(res.converged);
        CHECK((res.x - x).squaredNorm() / x.squaredNorm() <= 1e-5);
        CHECK(res.active == std::vector<int>{1, 6});
    }
}

TEST_CASE("shared ar coefficient averages the active blocks") {
    // A state whose single active block has a strongly correlated candidate
    // yields a nonzero average; with no active blocks the average is zero.
    test_util::rng_t rng(155);
    const int g = 4, d = 4, m = 24;
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, m, g * d);
    const Eigen::MatrixXd chol = toeplitz_ar(d, 0.92).llt().matrixL();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(g * d);
    x.segment(0, d) = chol * test_util::gaussian_vector(rng, d);
    const Eigen::VectorXd y = phi * x + 0.01 * test_util::gaussian_vector(rng, m);
    const MeasurementSystem system(phi, y, 60.0);
    const BlockPartition part = BlockPartition::uniform(g, d);

    ModelState state = initialize(system, part);
    CHECK(shared_ar_coefficient(state) == doctest::Approx(0.0));

    const auto best = select_best(state, CorrelationModel::ar1());
    REQUIRE(best.has_value());
    apply_action(state, *best);
    const double r = shared_ar_coefficient(state);
    CHECK(std::abs(r) <= 0.99);
    CHECK(std::abs(r) > 0.0);
}

TEST_CASE("learn_beta refines the noise precision when enabled") {
    test_util::rng_t rng(166);
    const int g = 6, d = 3, m = 16;
    const Eigen::MatrixXd phi = test_util::gaussian_matrix(rng, m, g * d);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(g * d);
    x.segment(0, d) = test_util::gaussian_vector(rng, d);
    x.segment(3 * d, d) = test_util::gaussian_vector(rng, d);
    const Eigen::VectorXd y = phi * x + 0.1 * test_util::gaussian_vector(rng, m);

    SolverOptions options;
    options.beta_mode = BetaMode::fixed(10.0);
    options.learn_beta = true;
    const RecoveryResult res = solve(phi, y, BlockPartition::uniform(g, d), options);
    CHECK(res.converged);
    CHECK(res.beta > 0.0);
    CHECK(res.beta != doctest::Approx(10.0));
}
