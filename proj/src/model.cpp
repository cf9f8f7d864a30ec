#include "bsbl/model.hpp"

#include <cmath>
#include <sstream>

#include "bsbl/errors.hpp"

namespace bsbl {

namespace {

// log det of a square matrix through partial-pivot LU, with the sign tracked
// separately so an indefinite or singular argument is detected instead of
// silently producing NaN.
struct LogDet {
    double value = 0.0;
    int sign = 1;
};

LogDet log_abs_det(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
    LogDet out;
    out.sign = lu.permutationP().determinant() > 0 ? 1 : -1;
    const auto& u = lu.matrixLU();
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        const double pivot = u(i, i);
        if (pivot == 0.0 || !std::isfinite(pivot)) {
            out.sign = 0;
            return out;
        }
        if (pivot < 0.0) {
            out.sign = -out.sign;
        }
        out.value += std::log(std::abs(pivot));
    }
    return out;
}

void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
    if (m.rows() != m.cols()) {
        throw invalid_input(std::string(what) + " must be square");
    }
    const double scale = 1.0 + m.cwiseAbs().maxCoeff();
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
        throw invalid_input(std::string(what) + " must be symmetric");
    }
}

}  // namespace

Eigen::MatrixXd toeplitz_ar(int d, double r) {
    if (d < 1) {
        throw invalid_input("Toeplitz template requires d >= 1");
    }
    if (!(std::abs(r) < 1.0)) {
        throw invalid_input("AR(1) coefficient must satisfy |r| < 1");
    }
    std::vector<double> powers(static_cast<std::size_t>(d), 1.0);
    for (int k = 1; k < d; ++k) {
        powers[static_cast<std::size_t>(k)] = powers[static_cast<std::size_t>(k - 1)] * r;
    }
    Eigen::MatrixXd b(d, d);
    for (int j = 0; j < d; ++j) {
        for (int k = 0; k < d; ++k) {
            b(j, k) = powers[static_cast<std::size_t>(std::abs(j - k))];
        }
    }
    return b;
}

Posterior compute_posterior(const MeasurementSystem& system, const BlockPartition& partition,
                            const CovarianceMap& covs) {
    Posterior post;
    Eigen::Index total = 0;
    for (const auto& [i, cov] : covs) {
        if (i < 0 || i >= partition.count()) {
            throw invalid_input("active block index out of range");
        }
        if (cov.dim() != partition.sizes[static_cast<std::size_t>(i)]) {
            throw invalid_input("block covariance dimension does not match the partition");
        }
        total += cov.dim();
    }
    if (total == 0) {
        return post;
    }

    Eigen::MatrixXd phi_a(system.rows(), total);
    Eigen::MatrixXd gamma_inv = Eigen::MatrixXd::Zero(total, total);
    Eigen::Index at = 0;
    for (const auto& [i, cov] : covs) {
        const Eigen::Index d = cov.dim();
        phi_a.middleCols(at, d) =
            system.phi.middleCols(partition.offsets[static_cast<std::size_t>(i)], d);
        Eigen::LLT<Eigen::MatrixXd> llt(cov.a);
        if (llt.info() != Eigen::Success) {
            std::ostringstream msg;
            msg << "degenerate prior covariance for block " << i;
            throw numerical_error(msg.str());
        }
        gamma_inv.block(at, at, d, d) = llt.solve(Eigen::MatrixXd::Identity(d, d));
        post.active.push_back(i);
        at += d;
    }

    const Eigen::MatrixXd prec =
        symmetrize(gamma_inv + system.beta * phi_a.transpose() * phi_a);
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) {
        throw numerical_error("posterior precision matrix is not positive definite");
    }
    post.sigma = symmetrize(llt.solve(Eigen::MatrixXd::Identity(total, total)));
    post.mu = system.beta * (post.sigma * (phi_a.transpose() * system.y));
    return post;
}

double cost_direct(const MeasurementSystem& system, const BlockPartition& partition,
                   const CovarianceMap& covs) {
    const Eigen::Index m = system.rows();
    Eigen::MatrixXd c = Eigen::MatrixXd::Identity(m, m) / system.beta;
    for (const auto& [i, cov] : covs) {
        const auto pi = system.phi.middleCols(partition.offsets[static_cast<std::size_t>(i)],
                                              partition.sizes[static_cast<std::size_t>(i)]);
        c += pi * cov.a * pi.transpose();
    }
    c = symmetrize(c);

    Eigen::LLT<Eigen::MatrixXd> llt(c);
    double value = std::numeric_limits<double>::quiet_NaN();
    if (llt.info() == Eigen::Success) {
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            logdet += 2.0 * std::log(llt.matrixL()(i, i));
        }
        value = logdet + system.y.dot(llt.solve(system.y));
    }
    if (!std::isfinite(value)) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        std::ostringstream msg;
        msg << "ill-conditioned model covariance C: eigenvalue range [" << lo << ", " << hi
            << "], condition estimate " << (lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
        throw numerical_error(msg.str());
    }
    return value;
}

double cost_block(const Eigen::MatrixXd& s, const Eigen::VectorXd& q, const Eigen::MatrixXd& a) {
    require_symmetric(s, "block statistic s");
    require_symmetric(a, "block covariance A");
    if (s.rows() != a.rows() || q.size() != s.rows()) {
        throw invalid_input("block cost arguments must share one dimension");
    }
    if (a.isZero(0.0)) {
        return 0.0;
    }
    const Eigen::Index d = a.rows();
    const Eigen::MatrixXd t = Eigen::MatrixXd::Identity(d, d) + a * s;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(t);
    const LogDet det = log_abs_det(lu);
    if (det.sign <= 0) {
        throw numerical_error("block cost degenerate: det(I + A s) is not positive");
    }
    const double quad = q.dot(lu.solve(a * q));
    const double value = det.value - quad;
    if (!std::isfinite(value)) {
        throw numerical_error("block cost evaluated to a non-finite value");
    }
    return value;
}

Eigen::VectorXd map_estimate(const ModelState& state) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(state.partition.total);
    Eigen::Index at = 0;
    for (const int i : state.posterior.active) {
        const Eigen::Index d = state.partition.sizes[static_cast<std::size_t>(i)];
        x.segment(state.partition.offsets[static_cast<std::size_t>(i)], d) =
            state.posterior.mu.segment(at, d);
        at += d;
    }
    return x;
}

}  // namespace bsbl
