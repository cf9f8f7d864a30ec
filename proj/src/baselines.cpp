#include "bsbl/baselines.hpp"

#include <algorithm>
#include <sstream>

#include "bsbl/errors.hpp"

namespace bsbl {

namespace {

// Stacks the listed blocks' columns (blocks assumed sorted).
Eigen::MatrixXd stack_columns(const MeasurementSystem& system, const BlockPartition& partition,
                              const std::vector<int>& blocks) {
    Eigen::Index total = 0;
    for (const int i : blocks) {
        total += partition.sizes[static_cast<std::size_t>(i)];
    }
    Eigen::MatrixXd out(system.rows(), total);
    Eigen::Index at = 0;
    for (const int i : blocks) {
        const Eigen::Index d = partition.sizes[static_cast<std::size_t>(i)];
        out.middleCols(at, d) =
            system.phi.middleCols(partition.offsets[static_cast<std::size_t>(i)], d);
        at += d;
    }
    return out;
}

// Scatters stacked per-block coefficients back into a length-N vector.
Eigen::VectorXd scatter(const BlockPartition& partition, const std::vector<int>& blocks,
                        const Eigen::VectorXd& coeffs) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(partition.total);
    Eigen::Index at = 0;
    for (const int i : blocks) {
        const Eigen::Index d = partition.sizes[static_cast<std::size_t>(i)];
        x.segment(partition.offsets[static_cast<std::size_t>(i)], d) = coeffs.segment(at, d);
        at += d;
    }
    return x;
}

}  // namespace

SupportSet SupportSet::of(std::vector<int> blocks, int block_count) {
    std::sort(blocks.begin(), blocks.end());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i] < 0 || blocks[i] >= block_count) {
            throw invalid_input("support block index out of range");
        }
        if (i > 0 && blocks[i] == blocks[i - 1]) {
            throw invalid_input("support block indices must be unique");
        }
    }
    SupportSet s;
    s.blocks = std::move(blocks);
    return s;
}

Eigen::VectorXd block_omp(const MeasurementSystem& system, const BlockPartition& partition,
                          int k_blocks) {
    if (partition.total != system.cols()) {
        throw invalid_input("partition length must equal the sensing matrix column count");
    }
    if (k_blocks < 1 || k_blocks > partition.count()) {
        throw invalid_input("block budget must be in [1, g]");
    }
    for (int i = 0; i < partition.count(); ++i) {
        const Eigen::Index d = partition.sizes[static_cast<std::size_t>(i)];
        if (system.phi.middleCols(partition.offsets[static_cast<std::size_t>(i)], d).norm() ==
            0.0) {
            std::ostringstream msg;
            msg << "sensing block " << i << " has zero norm";
            throw invalid_input(msg.str());
        }
    }

    std::vector<int> selected;
    std::vector<bool> in(static_cast<std::size_t>(partition.count()), false);
    Eigen::VectorXd residual = system.y;
    Eigen::VectorXd coeffs;

    for (int step = 0; step < k_blocks; ++step) {
        if (residual.norm() == 0.0) {
            break;
        }
        int pick = -1;
        double best = -1.0;
        for (int i = 0; i < partition.count(); ++i) {
            if (in[static_cast<std::size_t>(i)]) {
                continue;
            }
            const Eigen::Index d = partition.sizes[static_cast<std::size_t>(i)];
            const double corr =
                (system.phi.middleCols(partition.offsets[static_cast<std::size_t>(i)], d)
                     .transpose() *
                 residual)
                    .norm();
            if (corr > best) {
                best = corr;
                pick = i;
            }
        }
        in[static_cast<std::size_t>(pick)] = true;
        selected.insert(std::upper_bound(selected.begin(), selected.end(), pick), pick);

        const Eigen::MatrixXd phi_s = stack_columns(system, partition, selected);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi_s);
        if (qr.rank() < phi_s.cols()) {
            throw numerical_error("selected block columns are rank-deficient");
        }
        coeffs = qr.solve(system.y);
        residual = system.y - phi_s * coeffs;
    }

    if (selected.empty()) {
        return Eigen::VectorXd::Zero(partition.total);
    }
    return scatter(partition, selected, coeffs);
}

Eigen::VectorXd oracle_ls(const MeasurementSystem& system, const BlockPartition& partition,
                          const SupportSet& support) {
    if (partition.total != system.cols()) {
        throw invalid_input("partition length must equal the sensing matrix column count");
    }
    for (const int i : support.blocks) {
        if (i < 0 || i >= partition.count()) {
            throw invalid_input("support block index out of range");
        }
    }
    if (support.blocks.empty()) {
        return Eigen::VectorXd::Zero(partition.total);
    }
    Eigen::Index total = 0;
    for (const int i : support.blocks) {
        total += partition.sizes[static_cast<std::size_t>(i)];
    }
    if (total > system.rows()) {
        throw invalid_input("oracle-infeasible support: more columns than measurements");
    }
    const Eigen::MatrixXd phi_s = stack_columns(system, partition, support.blocks);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(phi_s);
    if (cod.rank() < phi_s.cols()) {
        throw numerical_error("oracle-infeasible support: rank-deficient columns");
    }
    return scatter(partition, support.blocks, cod.solve(system.y));
}

}  // namespace bsbl
