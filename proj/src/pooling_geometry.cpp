#include "poolrank/pooling_geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace poolrank {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

void require_side(int side) {
    if (!is_power_of_two(side) || side < 2 || side > 1024) {
        throw std::invalid_argument("geometry side must be a power of 2 in [2, 1024], got " +
                                    std::to_string(side));
    }
}

// Depth-first numbering of the leaves under the pooling tree.
PatchOrdering ordering_from_levels(int side, const std::vector<std::vector<PoolGroup>>& levels) {
    const std::size_t n = static_cast<std::size_t>(side) * side;
    std::vector<int> index_of(n, 0);
    int next = 1;
    // Explicit stack of (level, node); level 0 nodes are pixels.
    std::vector<std::pair<int, int>> stack{{static_cast<int>(levels.size()), 0}};
    while (!stack.empty()) {
        auto [level, node] = stack.back();
        stack.pop_back();
        if (level == 0) {
            index_of[static_cast<std::size_t>(node)] = next++;
            continue;
        }
        const auto& g = levels[static_cast<std::size_t>(level - 1)][static_cast<std::size_t>(node)];
        for (int t = 3; t >= 0; --t) stack.emplace_back(level - 1, g[static_cast<std::size_t>(t)]);
    }
    return PatchOrdering(side, std::move(index_of));
}

std::vector<PoolGroup> square_level(int grid) {
    const int half = grid / 2;
    std::vector<PoolGroup> groups;
    groups.reserve(static_cast<std::size_t>(half) * half);
    for (int i = 0; i < half; ++i) {
        for (int j = 0; j < half; ++j) {
            const int r = 2 * i, c = 2 * j;
            groups.push_back({r * grid + c, r * grid + c + 1, (r + 1) * grid + c + 1, (r + 1) * grid + c});
        }
    }
    return groups;
}

// Node (i, j) joins its horizontal, vertical and diagonal reflections; the
// pooled node takes the position of the top-left member.
std::vector<PoolGroup> mirror_level(int grid) {
    const int half = grid / 2;
    std::vector<PoolGroup> groups;
    groups.reserve(static_cast<std::size_t>(half) * half);
    for (int i = 0; i < half; ++i) {
        for (int j = 0; j < half; ++j) {
            const int ri = grid - 1 - i, rj = grid - 1 - j;
            groups.push_back({i * grid + j, i * grid + rj, ri * grid + rj, ri * grid + j});
        }
    }
    return groups;
}

}  // namespace

int log4_exact(std::size_t n) {
    int l = 0;
    while (n > 1 && n % 4 == 0) {
        n /= 4;
        ++l;
    }
    return n == 1 ? l : -1;
}

PatchOrdering::PatchOrdering(int side, std::vector<int> index_of)
    : side_(side), index_of_(std::move(index_of)) {
    const std::size_t n = static_cast<std::size_t>(side) * side;
    if (side < 1 || index_of_.size() != n) {
        throw std::invalid_argument("patch ordering: expected side*side entries");
    }
    std::vector<char> seen(n + 1, 0);
    for (int v : index_of_) {
        if (v < 1 || static_cast<std::size_t>(v) > n || seen[static_cast<std::size_t>(v)]++) {
            throw std::invalid_argument("patch ordering is not a bijection onto {1..n}");
        }
    }
}

std::vector<int> PatchOrdering::position_of() const {
    std::vector<int> pos(index_of_.size());
    for (std::size_t p = 0; p < index_of_.size(); ++p) pos[static_cast<std::size_t>(index_of_[p] - 1)] = static_cast<int>(p);
    return pos;
}

PatchOrdering square_ordering(int side) {
    require_side(side);
    std::vector<int> idx(static_cast<std::size_t>(side) * side, 0);
    auto at = [&](int r, int c) -> int& { return idx[static_cast<std::size_t>(r * side + c)]; };
    at(0, 0) = 1;
    int offset = 1;  // 4^(l-1)
    for (int block = 1; block < side; block *= 2, offset *= 4) {
        for (int r = 0; r < block; ++r) {
            for (int c = 0; c < block; ++c) {
                const int v = at(r, c);
                at(r, c + block) = v + offset;
                at(r + block, c + block) = v + 2 * offset;
                at(r + block, c) = v + 3 * offset;
            }
        }
    }
    return PatchOrdering(side, std::move(idx));
}

std::string to_string(GeometryKind kind) {
    switch (kind) {
        case GeometryKind::square: return "square";
        case GeometryKind::mirror: return "mirror";
        case GeometryKind::custom: return "custom";
    }
    return "unknown";
}

GeometryKind geometry_kind_from_string(const std::string& name) {
    if (name == "square") return GeometryKind::square;
    if (name == "mirror") return GeometryKind::mirror;
    if (name == "custom") return GeometryKind::custom;
    throw std::invalid_argument("unknown geometry kind '" + name + "'");
}

PoolingGeometry build_geometry(GeometryKind kind, int side) {
    require_side(side);
    PoolingGeometry g;
    g.kind = kind;
    g.side = side;
    for (int grid = side; grid > 1; grid /= 2) {
        switch (kind) {
            case GeometryKind::square: g.levels.push_back(square_level(grid)); break;
            case GeometryKind::mirror: g.levels.push_back(mirror_level(grid)); break;
            case GeometryKind::custom:
                throw std::invalid_argument("custom geometries need explicit groups");
        }
    }
    g.ordering = ordering_from_levels(side, g.levels);
    return g;
}

PoolingGeometry custom_geometry(int side, std::vector<std::vector<PoolGroup>> levels) {
    require_side(side);
    std::size_t nodes = static_cast<std::size_t>(side) * side;
    const int depth = log4_exact(nodes);
    if (static_cast<int>(levels.size()) != depth) {
        throw std::invalid_argument("custom geometry: expected " + std::to_string(depth) + " levels");
    }
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& groups = levels[l];
        if (groups.size() * 4 != nodes) {
            throw std::invalid_argument("custom geometry: level " + std::to_string(l + 1) +
                                        " must have " + std::to_string(nodes / 4) + " groups");
        }
        std::vector<char> seen(nodes, 0);
        for (const auto& g : groups) {
            for (int v : g) {
                if (v < 0 || static_cast<std::size_t>(v) >= nodes || seen[static_cast<std::size_t>(v)]++) {
                    throw std::invalid_argument("custom geometry: level " + std::to_string(l + 1) +
                                                " groups do not cover each node exactly once");
                }
            }
        }
        nodes /= 4;
    }
    PoolingGeometry g;
    g.kind = GeometryKind::custom;
    g.side = side;
    g.levels = std::move(levels);
    g.ordering = ordering_from_levels(side, g.levels);
    return g;
}

Partition induced_partition(const Partition& p, int level, int k) {
    const int depth = log4_exact(p.n());
    if (depth < 0) throw std::invalid_argument("induced_partition: n must be a power of 4");
    if (level < 0 || level > std::max(depth - 1, 0)) {
        throw std::out_of_range("induced_partition: level " + std::to_string(level) + " out of range");
    }
    std::size_t block = 1;
    for (int t = 0; t < level; ++t) block *= 4;
    const std::size_t blocks = p.n() / block;
    if (k < 1 || static_cast<std::size_t>(k) > blocks) {
        throw std::out_of_range("induced_partition: group " + std::to_string(k) + " out of range");
    }
    const int lo = static_cast<int>((k - 1) * block);
    const int hi = static_cast<int>(k * block);
    auto shift = [&](const std::vector<int>& side) {
        std::vector<int> out;
        auto first = std::upper_bound(side.begin(), side.end(), lo);
        auto last = std::upper_bound(side.begin(), side.end(), hi);
        for (auto it = first; it != last; ++it) out.push_back(*it - lo);
        return out;
    };
    return Partition(block, shift(p.i_set()), shift(p.j_set()));
}

int split_count(const Partition& p) {
    if (p.n() % 4 != 0) throw std::invalid_argument("split_count: n must be divisible by 4");
    std::vector<char> has_i(p.n() / 4, 0), has_j(p.n() / 4, 0);
    for (int v : p.i_set()) has_i[static_cast<std::size_t>(v - 1) / 4] = 1;
    for (int v : p.j_set()) has_j[static_cast<std::size_t>(v - 1) / 4] = 1;
    int s = 0;
    for (std::size_t k = 0; k < has_i.size(); ++k) s += has_i[k] && has_j[k];
    return s;
}

Partition odd_even_partition(std::size_t n) {
    std::vector<int> i;
    for (std::size_t v = 1; v <= n; v += 2) i.push_back(static_cast<int>(v));
    return Partition::from_i(n, std::move(i));
}

Partition low_high_partition(std::size_t n) {
    std::vector<int> i;
    for (std::size_t v = 1; v <= n / 2; ++v) i.push_back(static_cast<int>(v));
    return Partition::from_i(n, std::move(i));
}

Partition spatial_pattern_to_partition(const BinaryImage& mask, const PatchOrdering& ordering) {
    if (mask.side() != ordering.side()) {
        throw std::invalid_argument("spatial pattern: mask side " + std::to_string(mask.side()) +
                                    " does not match ordering side " + std::to_string(ordering.side()));
    }
    std::vector<int> i;
    for (std::size_t pos = 0; pos < mask.size(); ++pos) {
        if (mask.pixels()[pos]) i.push_back(ordering.index_of()[pos]);
    }
    return Partition::from_i(ordering.n(), std::move(i));
}

BinaryImage partition_to_spatial_pattern(const Partition& p, const PatchOrdering& ordering) {
    if (p.n() != ordering.n()) throw std::invalid_argument("spatial pattern: size mismatch");
    BinaryImage mask(ordering.side());
    const auto pos = ordering.position_of();
    for (int v : p.i_set()) {
        const int at = pos[static_cast<std::size_t>(v - 1)];
        mask(at / ordering.side(), at % ordering.side()) = 1;
    }
    return mask;
}

Partition to_patch_partition(const Partition& spatial, const PatchOrdering& ordering) {
    if (spatial.n() != ordering.n()) throw std::invalid_argument("partition/ordering size mismatch");
    std::vector<int> i;
    for (int pos : spatial.i_set()) i.push_back(ordering.index_of()[static_cast<std::size_t>(pos - 1)]);
    return Partition::from_i(ordering.n(), std::move(i));
}

}  // namespace poolrank
