#include "poolrank/circuit_builder.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <string>

#include "poolrank/random.hpp"

namespace poolrank {

namespace {

using Eigen::Index;

std::size_t pow_size(std::size_t base, std::size_t exp) {
    std::size_t out = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        if (base != 0 && out > SIZE_MAX / base) return SIZE_MAX;
        out *= base;
    }
    return out;
}

void check_output(const NetworkSpec& spec, int y) {
    if (y < 0 || y >= spec.outputs)
        throw std::out_of_range("output index " + std::to_string(y) + " outside [0, " + std::to_string(spec.outputs) + ")");
}

void require_kind(const NetworkSpec& spec, DepthKind kind, const char* op) {
    if (spec.kind != kind)
        throw std::invalid_argument(std::string(op) + ": expected a " + (kind == DepthKind::deep ? "deep" : "shallow") +
                                    " spec");
}

Tensor vector_tensor(const Matrix& layer, Index row) {
    std::vector<double> v(static_cast<std::size_t>(layer.cols()));
    for (Index d = 0; d < layer.cols(); ++d) v[static_cast<std::size_t>(d)] = layer(row, d);
    const std::size_t m = v.size();
    return Tensor({m}, std::move(v));
}

}  // namespace

int NetworkSpec::depth() const {
    if (kind == DepthKind::shallow) return 1;
    return log4_exact(n_patches);
}

void NetworkSpec::validate() const {
    if (m_rep < 1) throw std::invalid_argument("spec: m_rep must be positive");
    if (outputs < 1) throw std::invalid_argument("spec: outputs must be positive");
    if (n_patches < 1) throw std::invalid_argument("spec: n_patches must be positive");
    for (int r : widths)
        if (r < 1) throw std::invalid_argument("spec: widths must be positive");
    if (kind == DepthKind::deep) {
        const int L = log4_exact(n_patches);
        if (L < 1) throw std::invalid_argument("spec: deep networks need n_patches = 4^L with L >= 1");
        if (static_cast<int>(widths.size()) != L)
            throw std::invalid_argument("spec: deep network with N=" + std::to_string(n_patches) + " needs " +
                                        std::to_string(L) + " widths, got " + std::to_string(widths.size()));
    } else if (widths.size() != 1) {
        throw std::invalid_argument("spec: shallow networks take exactly one width");
    }
    if (geometry && geometry->n() != n_patches)
        throw std::invalid_argument("spec: geometry covers " + std::to_string(geometry->n()) + " positions, expected " +
                                    std::to_string(n_patches));
}

bool operator==(const WeightSetting& a, const WeightSetting& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].rows() != b.layers[i].rows() || a.layers[i].cols() != b.layers[i].cols()) return false;
        if (a.layers[i] != b.layers[i]) return false;
    }
    return true;
}

void check_shapes(const NetworkSpec& spec, const WeightSetting& w) {
    spec.validate();
    const int L = spec.depth();
    const std::size_t expected = spec.kind == DepthKind::deep ? static_cast<std::size_t>(L) + 1 : 2;
    if (w.layers.size() != expected)
        throw std::invalid_argument("weights: expected " + std::to_string(expected) + " layers, got " +
                                    std::to_string(w.layers.size()));
    auto need = [&](std::size_t i, Index rows, Index cols) {
        const auto& m = w.layers[i];
        if (m.rows() != rows || m.cols() != cols)
            throw std::invalid_argument("weights: layer " + std::to_string(i) + " is " + std::to_string(m.rows()) + "x" +
                                        std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                                        std::to_string(cols));
    };
    need(0, spec.widths[0], spec.m_rep);
    for (std::size_t l = 1; l + 1 < expected; ++l) need(l, spec.widths[l], spec.widths[l - 1]);
    need(expected - 1, spec.outputs, spec.widths.back());
}

WeightSetting random_weights(const NetworkSpec& spec, std::uint64_t seed, WeightDistribution dist) {
    spec.validate();
    std::mt19937_64 rng(splitmix64(seed));
    WeightSetting w;
    auto fill = [&](Index rows, Index cols) {
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j)
                m(i, j) = dist == WeightDistribution::gaussian ? standard_normal(rng) : uniform(rng, -1.0, 1.0);
        w.layers.push_back(std::move(m));
    };
    fill(spec.widths[0], spec.m_rep);
    for (std::size_t l = 1; l < spec.widths.size(); ++l) fill(spec.widths[l], spec.widths[l - 1]);
    fill(spec.outputs, spec.widths.back());
    return w;
}

WeightSetting canonical_lowerbound_weights(const NetworkSpec& spec) {
    require_kind(spec, DepthKind::deep, "canonical_lowerbound_weights");
    spec.validate();
    const int L = spec.depth();
    WeightSetting w;
    Matrix a0 = Matrix::Zero(spec.widths[0], spec.m_rep);
    for (int g = 0; g < std::min(spec.widths[0], spec.m_rep); ++g) a0(g, g) = 1.0;
    w.layers.push_back(std::move(a0));
    for (int l = 1; l < L; ++l) {
        Matrix a = Matrix::Zero(spec.widths[l], spec.widths[l - 1]);
        if (l == 1) a.row(0).setOnes();
        else a(0, 0) = 1.0;
        w.layers.push_back(std::move(a));
    }
    Matrix out = Matrix::Zero(spec.outputs, spec.widths.back());
    if (L == 1) out.setOnes();
    else out.col(0).setOnes();
    w.layers.push_back(std::move(out));
    return w;
}

Tensor realize_deep_tensor(const NetworkSpec& spec, const WeightSetting& w, int y, std::size_t max_elements) {
    require_kind(spec, DepthKind::deep, "realize_deep_tensor");
    check_shapes(spec, w);
    check_output(spec, y);
    const std::size_t total = pow_size(static_cast<std::size_t>(spec.m_rep), spec.n_patches);
    if (total > max_elements)
        throw CapacityError("realize_deep_tensor: M^N = " + std::to_string(total) + " elements exceeds the limit",
                            total, max_elements);
    const int L = spec.depth();

    std::vector<Tensor> phi;
    for (Index a = 0; a < w.layers[0].rows(); ++a) phi.push_back(vector_tensor(w.layers[0], a));

    for (int l = 1; l <= L; ++l) {
        const Matrix& a = w.layers[static_cast<std::size_t>(l)];
        std::vector<Tensor> powers;
        powers.reserve(phi.size());
        for (const auto& t : phi) {
            Tensor p = tensor_product(t, t, max_elements);
            p = tensor_product(p, t, max_elements);
            powers.push_back(tensor_product(p, t, max_elements));
        }
        std::vector<Tensor> next;
        const Index first = l == L ? y : 0;
        const Index last = l == L ? y + 1 : a.rows();
        for (Index g = first; g < last; ++g) {
            Tensor acc(powers.front().dims());
            for (Index al = 0; al < a.cols(); ++al) {
                if (a(g, al) == 0.0) continue;
                Tensor term = powers[static_cast<std::size_t>(al)];
                term *= a(g, al);
                acc += term;
            }
            next.push_back(std::move(acc));
        }
        phi = std::move(next);
    }
    return std::move(phi.front());
}

Tensor realize_shallow_tensor(const NetworkSpec& spec, const WeightSetting& w, int y, std::size_t max_elements) {
    require_kind(spec, DepthKind::shallow, "realize_shallow_tensor");
    check_shapes(spec, w);
    check_output(spec, y);
    const std::size_t total = pow_size(static_cast<std::size_t>(spec.m_rep), spec.n_patches);
    if (total > max_elements)
        throw CapacityError("realize_shallow_tensor: M^N = " + std::to_string(total) + " elements exceeds the limit",
                            total, max_elements);
    const Matrix& a0 = w.layers[0];
    const Matrix& out = w.layers[1];
    std::vector<std::size_t> dims(spec.n_patches, static_cast<std::size_t>(spec.m_rep));
    Tensor acc(dims);
    for (Index g = 0; g < a0.rows(); ++g) {
        if (out(y, g) == 0.0) continue;
        const Tensor v = vector_tensor(a0, g);
        Tensor t = v;
        for (std::size_t i = 1; i < spec.n_patches; ++i) t = tensor_product(t, v, max_elements);
        t *= out(y, g);
        acc += t;
    }
    return acc;
}

Matrix matricized_deep(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p,
                       std::size_t max_elements) {
    require_kind(spec, DepthKind::deep, "matricized_deep");
    check_shapes(spec, w);
    check_output(spec, y);
    if (p.n() != spec.n_patches)
        throw std::invalid_argument("matricized_deep: partition covers " + std::to_string(p.n()) + " indexes, spec has " +
                                    std::to_string(spec.n_patches));
    const int L = spec.depth();
    const auto M = static_cast<std::size_t>(spec.m_rep);

    // Induced partitions as membership strings ('1' = in I) of each block.
    std::string pattern(spec.n_patches, '0');
    for (int i : p.i_set()) pattern[static_cast<std::size_t>(i - 1)] = '1';

    using Blocks = std::vector<Matrix>;  // one matricized phi per channel
    std::map<std::string, Blocks> prev;
    {
        const Matrix& a0 = w.layers[0];
        for (const char side : {'0', '1'}) {
            Blocks b;
            for (Index g = 0; g < a0.rows(); ++g) {
                if (side == '1') b.push_back(a0.row(g).transpose());
                else b.push_back(a0.row(g));
            }
            prev.emplace(std::string(1, side), std::move(b));
        }
    }

    for (int l = 1; l <= L; ++l) {
        const std::size_t block = pow_size(4, static_cast<std::size_t>(l));
        const std::size_t count = spec.n_patches / block;
        const std::size_t need = pow_size(M, block);
        if (need > max_elements) {
            const auto key = pattern.substr(0, block);
            const auto ni = static_cast<std::size_t>(std::count(key.begin(), key.end(), '1'));
            throw CapacityError("matricized_deep: block (l=" + std::to_string(l) + ", k=1) is " +
                                    std::to_string(pow_size(M, ni)) + "x" + std::to_string(pow_size(M, block - ni)) +
                                    " = " + std::to_string(need) + " elements, over the limit",
                                need, max_elements);
        }
        const Matrix& a = w.layers[static_cast<std::size_t>(l)];
        const std::size_t child = block / 4;
        std::map<std::string, Blocks> cur;
        for (std::size_t k = 0; k < count; ++k) {
            std::string key = pattern.substr(k * block, block);
            if (cur.count(key)) continue;
            std::vector<Matrix> kron_alpha;
            kron_alpha.reserve(static_cast<std::size_t>(a.cols()));
            for (Index al = 0; al < a.cols(); ++al) {
                Matrix k_al = prev.at(key.substr(0, child))[static_cast<std::size_t>(al)];
                for (std::size_t t = 1; t < 4; ++t)
                    k_al = kronecker(k_al, prev.at(key.substr(t * child, child))[static_cast<std::size_t>(al)], max_elements);
                kron_alpha.push_back(std::move(k_al));
            }
            Blocks b;
            const Index first = l == L ? y : 0;
            const Index last = l == L ? y + 1 : a.rows();
            for (Index g = first; g < last; ++g) {
                Matrix acc = Matrix::Zero(kron_alpha.front().rows(), kron_alpha.front().cols());
                for (Index al = 0; al < a.cols(); ++al)
                    if (a(g, al) != 0.0) acc.noalias() += a(g, al) * kron_alpha[static_cast<std::size_t>(al)];
                b.push_back(std::move(acc));
            }
            cur.emplace(std::move(key), std::move(b));
        }
        prev = std::move(cur);
    }
    return std::move(prev.begin()->second.front());
}

Matrix matricized_shallow(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p,
                          std::size_t max_elements) {
    require_kind(spec, DepthKind::shallow, "matricized_shallow");
    check_shapes(spec, w);
    check_output(spec, y);
    if (p.n() != spec.n_patches) throw std::invalid_argument("matricized_shallow: partition size mismatch");
    const auto M = static_cast<std::size_t>(spec.m_rep);
    const std::size_t rows = pow_size(M, p.i_set().size());
    const std::size_t cols = pow_size(M, p.j_set().size());
    const std::size_t need = rows == SIZE_MAX || cols == SIZE_MAX ? SIZE_MAX : (rows > SIZE_MAX / std::max<std::size_t>(cols, 1) ? SIZE_MAX : rows * cols);
    if (need > max_elements)
        throw CapacityError("matricized_shallow: " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " matrix exceeds the limit",
                            need, max_elements);
    const Matrix& a0 = w.layers[0];
    const Matrix& out = w.layers[1];
    auto kron_power = [&](Index g, std::size_t times) {
        Matrix v = Matrix::Ones(1, 1);
        const Matrix col = a0.row(g).transpose();
        for (std::size_t t = 0; t < times; ++t) v = kronecker(v, col, max_elements);
        return v;
    };
    Matrix acc = Matrix::Zero(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index g = 0; g < a0.rows(); ++g) {
        if (out(y, g) == 0.0) continue;
        const Matrix u = kron_power(g, p.i_set().size());
        const Matrix v = kron_power(g, p.j_set().size());
        acc.noalias() += out(y, g) * (u * v.transpose());
    }
    return acc;
}

Matrix matricized(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p, std::size_t max_elements) {
    return spec.kind == DepthKind::deep ? matricized_deep(spec, w, y, p, max_elements)
                                        : matricized_shallow(spec, w, y, p, max_elements);
}

std::pair<NetworkSpec, WeightSetting> drop_dead_coordinates(const NetworkSpec& spec, const WeightSetting& w) {
    check_shapes(spec, w);
    const Matrix& a0 = w.layers[0];
    std::vector<Index> live;
    for (Index d = 0; d < a0.cols(); ++d)
        if (!a0.col(d).isZero(0.0)) live.push_back(d);
    if (live.empty()) live.push_back(0);
    NetworkSpec s = spec;
    s.m_rep = static_cast<int>(live.size());
    WeightSetting r = w;
    r.layers[0] = Matrix(a0.rows(), static_cast<Index>(live.size()));
    for (std::size_t j = 0; j < live.size(); ++j) r.layers[0].col(static_cast<Index>(j)) = a0.col(live[j]);
    return {s, r};
}

double evaluate_circuit(const NetworkSpec& spec, const WeightSetting& w, int y, const Matrix& rep) {
    check_shapes(spec, w);
    check_output(spec, y);
    if (rep.rows() != static_cast<Index>(spec.n_patches) || rep.cols() != spec.m_rep)
        throw std::invalid_argument("evaluate_circuit: representation table must be N x M");
    Matrix v = rep * w.layers[0].transpose();  // N x r_0
    if (spec.kind == DepthKind::shallow) {
        const Eigen::RowVectorXd prod = v.colwise().prod();
        return w.layers[1].row(y).dot(prod);
    }
    const int L = spec.depth();
    for (int l = 1; l <= L; ++l) {
        Matrix pooled(v.rows() / 4, v.cols());
        for (Index k = 0; k < pooled.rows(); ++k)
            pooled.row(k) = v.row(4 * k).cwiseProduct(v.row(4 * k + 1)).cwiseProduct(v.row(4 * k + 2)).cwiseProduct(v.row(4 * k + 3));
        const Matrix& a = w.layers[static_cast<std::size_t>(l)];
        if (l == L) return a.row(y).dot(pooled.row(0));
        v = pooled * a.transpose();
    }
    return 0.0;
}

}  // namespace poolrank
