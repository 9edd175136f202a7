// SPDX-License-Identifier: Apache-2.0
//
// Spectral band decomposition of temporal features over the path graph.
//
// A length-T sequence is treated as a signal on the chain graph with edges
// (t, t+1). The eigenvectors of its normalized Laplacian I - D^-1/2 A D^-1/2
// form an orthonormal "graph Fourier" basis ordered from smooth to rapidly
// oscillating. Frequencies are grouped into K contiguous bands whose
// boundaries split the training-set spectral energy into roughly equal parts,
// and each feature map is split into K band components that sum back to the
// original exactly.
#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bandfuse/tensor.hpp"

namespace bandfuse::specband {

using Matrix = Eigen::MatrixXd;

/// Eigenbasis of the normalized path-graph Laplacian for one sequence length.
struct SpectralBasis {
    std::size_t T = 0;
    Matrix U;                          // columns are eigenvectors, ascending eigenvalue
    std::vector<double> eigenvalues;   // nondecreasing, within [0, 2]
};

/// Contiguous frequency bands [b_{k-1}, b_k).
struct BandPartition {
    std::size_t K = 0;
    std::vector<std::size_t> boundaries;  // b_0 = 0 < b_1 < ... < b_K = T
    std::vector<double> energy_profile;   // E_f used to derive the boundaries (may be empty)

    std::size_t T() const { return boundaries.empty() ? 0 : boundaries.back(); }
    std::size_t width(std::size_t k) const { return boundaries[k + 1] - boundaries[k]; }
    /// Band index that contains frequency f.
    std::size_t band_of(std::size_t f) const;
    void validate() const;
};

struct BandDecomposition {
    std::vector<Tensor> components;  // K tensors, each [T, d]
    Shape source_shape;
};

Matrix build_normalized_laplacian(std::size_t T);

/// Symmetric eigendecomposition with ascending eigenvalues and deterministic
/// column signs (first entry with |u| > 1e-9 is positive).
SpectralBasis eigendecompose(const Matrix& L);

/// Shorthand for eigendecompose(build_normalized_laplacian(T)).
SpectralBasis path_graph_basis(std::size_t T);

/// X_hat = U^T X. Differentiable in X.
Tensor project_spectral(const Tensor& X, const SpectralBasis& basis);
/// X = U X_hat.
Tensor inverse_project(const Tensor& X_hat, const SpectralBasis& basis);

/// Greedy equal-energy boundaries: b_k is the smallest f > b_{k-1} whose
/// cumulative energy sum_{j<f} E_j reaches k/K of the total, followed by a
/// right-to-left repair so every band stays nonempty. An all-zero profile
/// falls back to equidistant_partition.
BandPartition equal_energy_partition(std::span<const double> energy, std::size_t K);
BandPartition equidistant_partition(std::size_t T, std::size_t K);

/// Running mean of per-frequency energy ||row f of U^T X||^2 over a stream of samples.
class EnergyAccumulator {
public:
    explicit EnergyAccumulator(std::shared_ptr<const SpectralBasis> basis);

    void add(const Tensor& X);
    void add(const Matrix& X);
    std::size_t count() const noexcept { return count_; }
    /// Mean profile; throws if no samples were added.
    std::vector<double> profile() const;

private:
    std::shared_ptr<const SpectralBasis> basis_;
    std::vector<double> sum_;
    std::size_t count_ = 0;
};

std::vector<double> estimate_energy_profile(std::span<const Tensor> samples, const SpectralBasis& basis);

/// Precomputed band projectors P_k = U^(k) U^(k)^T for one (basis, partition) pair.
class BandProjector {
public:
    BandProjector(std::shared_ptr<const SpectralBasis> basis, BandPartition partition);

    BandDecomposition decompose(const Tensor& X) const;

    const SpectralBasis& basis() const { return *basis_; }
    const BandPartition& partition() const { return partition_; }
    std::size_t K() const { return partition_.K; }
    const Tensor& projector(std::size_t k) const { return projectors_.at(k); }

private:
    std::shared_ptr<const SpectralBasis> basis_;
    BandPartition partition_;
    std::vector<Tensor> projectors_;
};

/// One-shot decomposition; prefer BandProjector inside loops.
BandDecomposition decompose(const Tensor& X, const SpectralBasis& basis, const BandPartition& partition);

/// Per-band energy sum_f in band ||row f of U^T X||^2 of a single sample.
std::vector<double> band_energies(const Tensor& X, const SpectralBasis& basis, const BandPartition& partition);

/// Thread-safe cache of bases keyed by sequence length.
class BasisCache {
public:
    std::shared_ptr<const SpectralBasis> get(std::size_t T);
    static BasisCache& global();

private:
    std::mutex mu_;
    std::map<std::size_t, std::shared_ptr<const SpectralBasis>> bases_;
};

}  // namespace bandfuse::specband
