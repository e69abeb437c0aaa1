#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "poolrank/pooling_geometry.hpp"
#include "poolrank/tensor_core.hpp"

namespace poolrank {

enum class DepthKind { deep, shallow };

/// Architecture of an arithmetic circuit over N patches.
///
/// Deep: N = 4^L, widths = r_0..r_{L-1}. Shallow: widths = {r_0}.
/// `geometry` is optional and only records how spatial positions map to
/// patch indexes; all routines here work on patch indexes.
struct NetworkSpec {
    std::size_t n_patches = 0;
    int m_rep = 0;
    std::vector<int> widths;
    int outputs = 1;
    DepthKind kind = DepthKind::deep;
    std::shared_ptr<const PoolingGeometry> geometry;

    int depth() const;  // L; 1 for shallow
    void validate() const;
};

/// Linear weights. layers[0] is r_0 x M (row gamma = a^{0,gamma}),
/// layers[l] is r_l x r_{l-1}, layers.back() is Y x r_{L-1} (row y = a^{L,y}).
/// Shallow settings have exactly two layers.
struct WeightSetting {
    std::vector<Matrix> layers;

    friend bool operator==(const WeightSetting& a, const WeightSetting& b);
};

void check_shapes(const NetworkSpec& spec, const WeightSetting& w);

enum class WeightDistribution { gaussian, uniform };

/// i.i.d. N(0,1) or U[-1,1] entries, filled layer by layer in row-major order.
WeightSetting random_weights(const NetworkSpec& spec, std::uint64_t seed,
                             WeightDistribution dist = WeightDistribution::gaussian);

/// a^{0,gamma} = e_gamma for gamma <= min(r_0, M) else 0; a^{1,1} all ones;
/// a^{l,1} = e_1 for l >= 2; every other hidden vector 0; a^{L,y} = e_1.
/// With L = 1 the output layer doubles as level 1 and is all ones.
WeightSetting canonical_lowerbound_weights(const NetworkSpec& spec);

Tensor realize_deep_tensor(const NetworkSpec& spec, const WeightSetting& w, int y,
                           std::size_t max_elements = kDefaultCapacity);
Tensor realize_shallow_tensor(const NetworkSpec& spec, const WeightSetting& w, int y,
                              std::size_t max_elements = kDefaultCapacity);

/// Matricization of the deep coefficient tensor, built bottom-up from the
/// induced partitions without materializing the tensor. Blocks with equal
/// induced partitions are computed once.
Matrix matricized_deep(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p,
                       std::size_t max_elements = kDefaultCapacity);

/// sum_gamma a^{1,y}_gamma (kron^{|I|} a^{0,gamma}) (kron^{|J|} a^{0,gamma})^T.
Matrix matricized_shallow(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p,
                          std::size_t max_elements = kDefaultCapacity);

Matrix matricized(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p,
                  std::size_t max_elements = kDefaultCapacity);

/// Drops representation coordinates that are zero in every a^{0,gamma}.
/// Tensor entries touching such a coordinate vanish, so every matricization
/// keeps its rank. Returns the reduced pair (M may shrink, never below 1).
std::pair<NetworkSpec, WeightSetting> drop_dead_coordinates(const NetworkSpec& spec, const WeightSetting& w);

/// h_y on representation values: rep(i, d) = f_d(x_i) for patch i (0-based).
double evaluate_circuit(const NetworkSpec& spec, const WeightSetting& w, int y, const Matrix& rep);

}  // namespace poolrank
