#pragma once

#include <array>
#include <string>
#include <vector>

#include "poolrank/binary_image.hpp"
#include "poolrank/tensor_core.hpp"

namespace poolrank {

/// Bijection from grid positions (row-major, zero-based) to 1-based patch
/// indexes in {1..side^2}.
class PatchOrdering {
public:
    PatchOrdering() = default;
    PatchOrdering(int side, std::vector<int> index_of);

    int side() const noexcept { return side_; }
    std::size_t n() const noexcept { return index_of_.size(); }

    /// Patch index of the pixel at (row, col).
    int at(int row, int col) const { return index_of_[static_cast<std::size_t>(row * side_ + col)]; }
    const std::vector<int>& index_of() const noexcept { return index_of_; }

    /// Row-major position of each patch: position_of()[k-1] is where patch k sits.
    std::vector<int> position_of() const;

    friend bool operator==(const PatchOrdering&, const PatchOrdering&) = default;

private:
    int side_ = 0;
    std::vector<int> index_of_;
};

/// Replicate-and-offset ordering induced by 2x2 pooling: the top-left block is
/// copied right (+4^(l-1)), bottom-right (+2*4^(l-1)) and bottom (+3*4^(l-1)).
PatchOrdering square_ordering(int side);

enum class GeometryKind { square, mirror, custom };

std::string to_string(GeometryKind kind);
GeometryKind geometry_kind_from_string(const std::string& name);

/// One pooling window: four node ids of the level below, in member order.
using PoolGroup = std::array<int, 4>;

/// Pooling layout of a deep network over a side x side grid.
///
/// `levels[l]` lists the windows of pooling level l+1. Window k consumes four
/// nodes of the level below and produces node k of the level above. Level-0
/// node ids are row-major pixel positions. For square and mirror geometries
/// the node ids at each level are row-major positions on the pooled grid.
///
/// `ordering` is the depth-first numbering of the leaves of the pooling tree,
/// so every geometry maps onto the canonical quad-tree of consecutive
/// quadruples.
struct PoolingGeometry {
    GeometryKind kind = GeometryKind::square;
    int side = 0;
    PatchOrdering ordering;
    std::vector<std::vector<PoolGroup>> levels;

    int depth() const noexcept { return static_cast<int>(levels.size()); }
    std::size_t n() const noexcept { return static_cast<std::size_t>(side) * side; }
};

PoolingGeometry build_geometry(GeometryKind kind, int side);

/// Explicit group lists; each level must cover the level below exactly once
/// with windows of exactly four nodes.
PoolingGeometry custom_geometry(int side, std::vector<std::vector<PoolGroup>> levels);

/// Partition induced on the k-th size-4^l block of {1..n} (k is 1-based).
Partition induced_partition(const Partition& p, int level, int k);

/// Number of level-1 quadruples containing indexes from both I and J.
int split_count(const Partition& p);

/// I = {1, 3, ..., n-1}.
Partition odd_even_partition(std::size_t n);
/// I = {1, ..., n/2}.
Partition low_high_partition(std::size_t n);

/// I holds the patch indexes of the mask's foreground pixels.
Partition spatial_pattern_to_partition(const BinaryImage& mask, const PatchOrdering& ordering);
/// Inverse of spatial_pattern_to_partition.
BinaryImage partition_to_spatial_pattern(const Partition& p, const PatchOrdering& ordering);

/// Maps a partition of row-major pixel positions (1-based) to the patch
/// indexes assigned by `ordering`.
Partition to_patch_partition(const Partition& spatial, const PatchOrdering& ordering);

/// log4(n) for n a power of four, otherwise -1.
int log4_exact(std::size_t n);

}  // namespace poolrank
