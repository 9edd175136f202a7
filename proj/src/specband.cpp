// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/specband.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "bandfuse/error.hpp"
#include "bandfuse/ops.hpp"

namespace bandfuse::specband {

namespace {

Tensor to_tensor(const Matrix& m) {
    std::vector<Scalar> v(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) v[i * m.cols() + j] = static_cast<Scalar>(m(i, j));
    return Tensor::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), std::move(v));
}

Matrix to_matrix(const Tensor& t) {
    if (t.rank() != 2) throw DimensionError("expected a [T, d] tensor, got " + shape_str(t.shape()));
    Matrix m(t.dim(0), t.dim(1));
    const auto v = t.values();
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) m(i, j) = static_cast<double>(v[i * t.dim(1) + j]);
    return m;
}

void require_length(std::size_t got, const SpectralBasis& basis, const char* op) {
    if (got != basis.T) {
        throw DimensionError(std::string(op) + ": sequence length " + std::to_string(got) +
                             " does not match basis length " + std::to_string(basis.T));
    }
}

}  // namespace

std::size_t BandPartition::band_of(std::size_t f) const {
    for (std::size_t k = 0; k < K; ++k)
        if (f < boundaries[k + 1]) return k;
    throw ParameterError("frequency " + std::to_string(f) + " outside partition");
}

void BandPartition::validate() const {
    if (K == 0 || boundaries.size() != K + 1 || boundaries.front() != 0) {
        throw ValidationError("band partition must have K+1 boundaries starting at 0");
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (boundaries[k + 1] <= boundaries[k]) throw ValidationError("band partition boundaries must strictly increase");
    }
}

Matrix build_normalized_laplacian(std::size_t T) {
    if (T < 2) throw ParameterError("path-graph Laplacian needs T >= 2, got " + std::to_string(T));
    Matrix L = Matrix::Identity(T, T);
    auto degree = [T](std::size_t t) { return (t == 0 || t + 1 == T) ? 1.0 : 2.0; };
    for (std::size_t t = 0; t + 1 < T; ++t) {
        const double w = -1.0 / std::sqrt(degree(t) * degree(t + 1));
        L(t, t + 1) = w;
        L(t + 1, t) = w;
    }
    return L;
}

SpectralBasis eigendecompose(const Matrix& L) {
    if (L.rows() != L.cols() || L.rows() < 1) throw DimensionError("eigendecompose: matrix must be square");
    if ((L - L.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw ValidationError("eigendecompose: input is not symmetric within 1e-12");
    }
    // Tridiagonalization + implicit QR; eigenvalues come back ascending.
    Eigen::SelfAdjointEigenSolver<Matrix> solver(L);
    if (solver.info() != Eigen::Success) throw ValidationError("eigendecompose: solver did not converge");

    SpectralBasis basis;
    basis.T = static_cast<std::size_t>(L.rows());
    basis.U = solver.eigenvectors();
    basis.eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + L.rows());
    for (Eigen::Index k = 0; k < basis.U.cols(); ++k) {
        for (Eigen::Index t = 0; t < basis.U.rows(); ++t) {
            const double v = basis.U(t, k);
            if (std::abs(v) > 1e-9) {
                if (v < 0) basis.U.col(k) *= -1.0;
                break;
            }
        }
    }
    return basis;
}

SpectralBasis path_graph_basis(std::size_t T) { return eigendecompose(build_normalized_laplacian(T)); }

Tensor project_spectral(const Tensor& X, const SpectralBasis& basis) {
    if (X.rank() != 2) throw DimensionError("project_spectral: expected [T, d], got " + shape_str(X.shape()));
    require_length(X.dim(0), basis, "project_spectral");
    return matmul(to_tensor(basis.U.transpose()), X);
}

Tensor inverse_project(const Tensor& X_hat, const SpectralBasis& basis) {
    if (X_hat.rank() != 2) throw DimensionError("inverse_project: expected [T, d], got " + shape_str(X_hat.shape()));
    require_length(X_hat.dim(0), basis, "inverse_project");
    return matmul(to_tensor(basis.U), X_hat);
}

BandPartition equidistant_partition(std::size_t T, std::size_t K) {
    if (K < 1) throw ParameterError("band count must be >= 1");
    if (T < K) throw ParameterError("cannot split " + std::to_string(T) + " frequencies into " + std::to_string(K) + " bands");
    BandPartition p;
    p.K = K;
    for (std::size_t k = 0; k <= K; ++k) p.boundaries.push_back(k * T / K);
    return p;
}

BandPartition equal_energy_partition(std::span<const double> energy, std::size_t K) {
    const std::size_t T = energy.size();
    if (K < 1) throw ParameterError("band count must be >= 1");
    if (T < K) throw ParameterError("cannot split " + std::to_string(T) + " frequencies into " + std::to_string(K) + " bands");
    for (double e : energy) {
        if (!(e >= 0.0) || !std::isfinite(e)) throw ParameterError("energy profile must be finite and nonnegative");
    }
    const double total = std::accumulate(energy.begin(), energy.end(), 0.0);
    if (total <= 0.0) {
        BandPartition p = equidistant_partition(T, K);
        p.energy_profile.assign(energy.begin(), energy.end());
        return p;
    }

    // cdf[f] = energy strictly below boundary f.
    std::vector<double> cdf(T + 1, 0.0);
    for (std::size_t f = 0; f < T; ++f) cdf[f + 1] = cdf[f] + energy[f];
    const double slack = 1e-12 * total;

    BandPartition p;
    p.K = K;
    p.boundaries.assign(K + 1, 0);
    p.boundaries[K] = T;
    for (std::size_t k = 1; k < K; ++k) {
        const double target = static_cast<double>(k) * total / static_cast<double>(K);
        std::size_t f = p.boundaries[k - 1] + 1;
        while (f < T && cdf[f] < target - slack) ++f;
        p.boundaries[k] = f;
    }
    for (std::size_t k = K - 1; k >= 1; --k) p.boundaries[k] = std::min(p.boundaries[k], p.boundaries[k + 1] - 1);
    p.energy_profile.assign(energy.begin(), energy.end());
    p.validate();
    return p;
}

EnergyAccumulator::EnergyAccumulator(std::shared_ptr<const SpectralBasis> basis)
    : basis_(std::move(basis)), sum_(basis_->T, 0.0) {}

void EnergyAccumulator::add(const Tensor& X) { add(to_matrix(X)); }

void EnergyAccumulator::add(const Matrix& X) {
    require_length(static_cast<std::size_t>(X.rows()), *basis_, "estimate_energy_profile");
    const Matrix hat = basis_->U.transpose() * X;
    for (Eigen::Index f = 0; f < hat.rows(); ++f) sum_[f] += hat.row(f).squaredNorm();
    ++count_;
}

std::vector<double> EnergyAccumulator::profile() const {
    if (count_ == 0) throw ParameterError("energy profile of an empty sample stream");
    std::vector<double> out(sum_);
    for (auto& v : out) v /= static_cast<double>(count_);
    return out;
}

std::vector<double> estimate_energy_profile(std::span<const Tensor> samples, const SpectralBasis& basis) {
    EnergyAccumulator acc(std::make_shared<const SpectralBasis>(basis));
    for (const auto& x : samples) acc.add(x);
    return acc.profile();
}

BandProjector::BandProjector(std::shared_ptr<const SpectralBasis> basis, BandPartition partition)
    : basis_(std::move(basis)), partition_(std::move(partition)) {
    partition_.validate();
    if (partition_.T() != basis_->T) {
        throw DimensionError("partition covers " + std::to_string(partition_.T()) + " frequencies, basis has " +
                             std::to_string(basis_->T));
    }
    for (std::size_t k = 0; k < partition_.K; ++k) {
        const auto b0 = static_cast<Eigen::Index>(partition_.boundaries[k]);
        const auto w = static_cast<Eigen::Index>(partition_.width(k));
        const Matrix Uk = basis_->U.middleCols(b0, w);
        projectors_.push_back(to_tensor(Uk * Uk.transpose()));
    }
}

BandDecomposition BandProjector::decompose(const Tensor& X) const {
    if (X.rank() != 2) throw DimensionError("decompose: expected [T, d], got " + shape_str(X.shape()));
    require_length(X.dim(0), *basis_, "decompose");
    BandDecomposition out;
    out.source_shape = X.shape();
    out.components.reserve(projectors_.size());
    for (const auto& P : projectors_) out.components.push_back(matmul(P, X));
    return out;
}

BandDecomposition decompose(const Tensor& X, const SpectralBasis& basis, const BandPartition& partition) {
    return BandProjector(std::make_shared<const SpectralBasis>(basis), partition).decompose(X);
}

std::vector<double> band_energies(const Tensor& X, const SpectralBasis& basis, const BandPartition& partition) {
    require_length(X.dim(0), basis, "band_energies");
    const Matrix hat = basis.U.transpose() * to_matrix(X);
    std::vector<double> out(partition.K, 0.0);
    for (Eigen::Index f = 0; f < hat.rows(); ++f) out[partition.band_of(static_cast<std::size_t>(f))] += hat.row(f).squaredNorm();
    return out;
}

std::shared_ptr<const SpectralBasis> BasisCache::get(std::size_t T) {
    std::lock_guard lock(mu_);
    auto it = bases_.find(T);
    if (it != bases_.end()) return it->second;
    auto basis = std::make_shared<const SpectralBasis>(path_graph_basis(T));
    bases_.emplace(T, basis);
    return basis;
}

BasisCache& BasisCache::global() {
    static BasisCache cache;
    return cache;
}

}  // namespace bandfuse::specband
