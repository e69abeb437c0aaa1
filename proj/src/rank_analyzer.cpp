#include "poolrank/rank_analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace poolrank {

namespace {

using Eigen::Index;

BigInt big_pow(long long base, std::size_t exp) {
    return boost::multiprecision::pow(BigInt(base), static_cast<unsigned>(exp));
}

void require_deep(const NetworkSpec& spec, const char* op) {
    if (spec.kind != DepthKind::deep) throw std::invalid_argument(std::string(op) + ": requires a deep spec");
    spec.validate();
}

void require_match(const NetworkSpec& spec, const Partition& p) {
    if (p.n() != spec.n_patches)
        throw std::invalid_argument("partition covers " + std::to_string(p.n()) + " indexes, spec has " +
                                    std::to_string(spec.n_patches));
}

constexpr std::uint64_t kPrimes[2] = {2305843009213693951ULL, 1000000000000000009ULL};

std::uint64_t mul_mod(std::uint64_t a, std::uint64_t b, std::uint64_t q) {
    return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % q);
}

std::uint64_t add_mod(std::uint64_t a, std::uint64_t b, std::uint64_t q) {
    const std::uint64_t s = a + b;
    return s >= q ? s - q : s;
}

std::uint64_t pow_mod(std::uint64_t base, std::uint64_t exp, std::uint64_t q) {
    std::uint64_t out = 1;
    for (; exp; exp >>= 1, base = mul_mod(base, base, q))
        if (exp & 1) out = mul_mod(out, base, q);
    return out;
}

// A finite double is mantissa * 2^exponent with a 53-bit integer mantissa.
std::uint64_t to_mod(double v, std::uint64_t q) {
    if (v == 0.0) return 0;
    int e = 0;
    const double f = std::frexp(std::abs(v), &e);
    const auto mant = static_cast<std::uint64_t>(std::ldexp(f, 53));
    const long long shift = static_cast<long long>(e) - 53;
    const std::uint64_t two_inv = (q + 1) / 2;
    const std::uint64_t scale = shift >= 0 ? pow_mod(2, static_cast<std::uint64_t>(shift), q)
                                           : pow_mod(two_inv, static_cast<std::uint64_t>(-shift), q);
    const std::uint64_t r = mul_mod(mant % q, scale, q);
    return v < 0 && r != 0 ? q - r : r;
}

using ModVec = std::vector<std::uint64_t>;

ModVec outer_mod(const ModVec& a, const ModVec& b, std::uint64_t q) {
    ModVec out(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i * b.size() + j] = mul_mod(a[i], b[j], q);
    return out;
}

ModVec row_mod(const Matrix& m, Index row, std::uint64_t q) {
    ModVec v(static_cast<std::size_t>(m.cols()));
    for (Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = to_mod(m(row, c), q);
    return v;
}

// Flattened coefficient tensor modulo q, same index order as the real one.
ModVec tensor_mod(const NetworkSpec& spec, const WeightSetting& w, int y, std::uint64_t q) {
    const Matrix& a0 = w.layers[0];
    if (spec.kind == DepthKind::shallow) {
        ModVec acc(static_cast<std::size_t>(std::pow(spec.m_rep, spec.n_patches)), 0);
        for (Index g = 0; g < a0.rows(); ++g) {
            const std::uint64_t c = to_mod(w.layers[1](y, g), q);
            if (c == 0) continue;
            const ModVec v = row_mod(a0, g, q);
            ModVec t = v;
            for (std::size_t i = 1; i < spec.n_patches; ++i) t = outer_mod(t, v, q);
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = add_mod(acc[i], mul_mod(c, t[i], q), q);
        }
        return acc;
    }
    std::vector<ModVec> phi;
    for (Index g = 0; g < a0.rows(); ++g) phi.push_back(row_mod(a0, g, q));
    const int L = spec.depth();
    for (int l = 1; l <= L; ++l) {
        const Matrix& a = w.layers[static_cast<std::size_t>(l)];
        std::vector<ModVec> powers;
        for (const auto& v : phi) {
            const ModVec sq = outer_mod(v, v, q);
            powers.push_back(outer_mod(sq, sq, q));
        }
        std::vector<ModVec> next;
        const Index first = l == L ? y : 0, last = l == L ? y + 1 : a.rows();
        for (Index g = first; g < last; ++g) {
            ModVec acc(powers.front().size(), 0);
            for (Index al = 0; al < a.cols(); ++al) {
                const std::uint64_t c = to_mod(a(g, al), q);
                if (c == 0) continue;
                const ModVec& t = powers[static_cast<std::size_t>(al)];
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = add_mod(acc[i], mul_mod(c, t[i], q), q);
            }
            next.push_back(std::move(acc));
        }
        phi = std::move(next);
    }
    return std::move(phi.front());
}

int rank_mod(std::vector<std::uint64_t> a, std::size_t rows, std::size_t cols, std::uint64_t q) {
    std::size_t rank = 0;
    for (std::size_t c = 0; c < cols && rank < rows; ++c) {
        std::size_t piv = rank;
        while (piv < rows && a[piv * cols + c] == 0) ++piv;
        if (piv == rows) continue;
        if (piv != rank)
            for (std::size_t j = c; j < cols; ++j) std::swap(a[piv * cols + j], a[rank * cols + j]);
        const std::uint64_t inv = pow_mod(a[rank * cols + c], q - 2, q);
        for (std::size_t i = rank + 1; i < rows; ++i) {
            const std::uint64_t f = mul_mod(a[i * cols + c], inv, q);
            if (f == 0) continue;
            for (std::size_t j = c; j < cols; ++j)
                a[i * cols + j] = add_mod(a[i * cols + j], q - mul_mod(f, a[rank * cols + j], q), q);
        }
        ++rank;
    }
    return static_cast<int>(rank);
}

bool integral(const WeightSetting& w) {
    for (const auto& m : w.layers)
        for (Index i = 0; i < m.size(); ++i)
            if (std::trunc(m.data()[i]) != m.data()[i]) return false;
    return true;
}

}  // namespace

int modular_matricization_rank(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p,
                               std::size_t max_elements) {
    spec.validate();
    check_shapes(spec, w);
    require_match(spec, p);
    if (y < 0 || y >= spec.outputs) throw std::out_of_range("output index out of range");
    for (const auto& m : w.layers)
        if (!m.allFinite()) throw NumericError("modular rank: weights must be finite");
    const std::size_t n = spec.n_patches;
    const auto m = static_cast<std::size_t>(spec.m_rep);
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) {
        if (total > max_elements / m) throw CapacityError("modular rank: M^N exceeds the limit", total * m, max_elements);
        total *= m;
    }
    std::size_t rows = 1;
    for (std::size_t i = 0; i < p.i_set().size(); ++i) rows *= m;
    const std::size_t cols = total / rows;

    int best = 0;
    for (std::uint64_t q : kPrimes) {
        const ModVec t = tensor_mod(spec, w, y, q);
        ModVec mat(total);
        std::vector<std::size_t> digit(n, 0);
        for (std::size_t flat = 0; flat < total; ++flat) {
            std::size_t r = 0, c = 0;
            for (int i : p.i_set()) r = r * m + digit[static_cast<std::size_t>(i - 1)];
            for (int j : p.j_set()) c = c * m + digit[static_cast<std::size_t>(j - 1)];
            mat[r * cols + c] = t[flat];
            for (std::size_t d = n; d-- > 0;) {
                if (++digit[d] < m) break;
                digit[d] = 0;
            }
        }
        best = std::max(best, rank_mod(std::move(mat), rows, cols, q));
    }
    return best;
}

BigInt theorem1_lower_bound(const NetworkSpec& spec, const Partition& p) {
    require_deep(spec, "theorem1_lower_bound");
    require_match(spec, p);
    const int s = split_count(p);
    return big_pow(std::min(spec.widths[0], spec.m_rep), static_cast<std::size_t>(s));
}

BoundReport theorem1_upper_bound(const NetworkSpec& spec, const Partition& p) {
    require_deep(spec, "theorem1_upper_bound");
    require_match(spec, p);
    const int L = spec.depth();
    BoundReport rep;
    rep.s_stat = split_count(p);
    rep.lower = big_pow(std::min(spec.widths[0], spec.m_rep), static_cast<std::size_t>(rep.s_stat));

    rep.c_table.push_back(std::vector<BigInt>(spec.n_patches, BigInt(1)));
    for (int l = 1; l < L; ++l) {
        const std::size_t count = spec.n_patches >> (2 * l);
        std::vector<BigInt> row;
        row.reserve(count);
        for (std::size_t k = 1; k <= count; ++k) {
            const Partition q = induced_partition(p, l, static_cast<int>(k));
            const BigInt cap = big_pow(spec.m_rep, std::min(q.i_set().size(), q.j_set().size()));
            BigInt prod = spec.widths[static_cast<std::size_t>(l - 1)];
            for (std::size_t t = 1; t <= 4; ++t) prod *= rep.c_table[static_cast<std::size_t>(l - 1)][4 * (k - 1) + t - 1];
            row.push_back(std::min(cap, prod));
        }
        rep.c_table.push_back(std::move(row));
    }
    const BigInt cap = big_pow(spec.m_rep, std::min(p.i_set().size(), p.j_set().size()));
    BigInt prod = spec.widths[static_cast<std::size_t>(L - 1)];
    for (std::size_t t = 0; t < 4; ++t) prod *= rep.c_table[static_cast<std::size_t>(L - 1)][t];
    rep.upper = std::min(cap, prod);
    return rep;
}

BigInt shallow_upper_bound(const NetworkSpec& spec, const Partition& p) {
    if (spec.kind != DepthKind::shallow) throw std::invalid_argument("shallow_upper_bound: requires a shallow spec");
    spec.validate();
    require_match(spec, p);
    return std::min(big_pow(spec.m_rep, std::min(p.i_set().size(), p.j_set().size())), BigInt(spec.widths[0]));
}

BoundReport bound_report(const NetworkSpec& spec, const Partition& p) {
    if (spec.kind == DepthKind::deep) return theorem1_upper_bound(spec, p);
    BoundReport rep;
    rep.upper = shallow_upper_bound(spec, p);
    rep.s_stat = p.n() % 4 == 0 ? split_count(p) : 0;
    return rep;
}

std::string to_string(RankMethod m) {
    switch (m) {
        case RankMethod::numerical: return "numerical";
        case RankMethod::exact: return "exact";
        case RankMethod::grid_oracle: return "grid_oracle";
    }
    return "?";
}

SeparationRankEstimate matricization_rank(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p,
                                          RankMethod method, double rel_tol) {
    SeparationRankEstimate est{p, 0, method};
    switch (method) {
        case RankMethod::numerical: est.matricization_rank = numerical_rank(matricized(spec, w, y, p), rel_tol); break;
        case RankMethod::exact: {
            const auto [s, r] = drop_dead_coordinates(spec, w);
            if (integral(r)) {
                const Matrix mat = matricized(s, r, y, p);
                if (mat.cwiseAbs().maxCoeff() <= 9007199254740992.0) {
                    est.matricization_rank = exact_rank_integer(mat);
                    break;
                }
            }
            est.matricization_rank = modular_matricization_rank(s, r, y, p);
            break;
        }
        case RankMethod::grid_oracle: est.matricization_rank = grid_oracle_rank(spec, w, y, p, rel_tol); break;
    }
    return est;
}

Claim2Report verify_claim2(const NetworkSpec& spec, const Partition& p, int trials, std::uint64_t seed, double rel_tol,
                           WeightDistribution dist, RankMethod method) {
    if (trials < 1) throw std::invalid_argument("verify_claim2: trials must be at least 1");
    Claim2Report rep;
    rep.trials = trials;
    for (int t = 0; t < trials; ++t) {
        const WeightSetting w = random_weights(spec, seed + static_cast<std::uint64_t>(t), dist);
        rep.ranks.push_back(matricization_rank(spec, w, 0, p, method, rel_tol).matricization_rank);
    }
    rep.max_rank_observed = *std::max_element(rep.ranks.begin(), rep.ranks.end());
    const auto at_max = std::count(rep.ranks.begin(), rep.ranks.end(), rep.max_rank_observed);
    rep.fraction_at_max = static_cast<double>(at_max) / trials;
    return rep;
}

int grid_oracle_rank(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p, double rel_tol,
                     std::size_t max_elements) {
    check_shapes(spec, w);
    require_match(spec, p);
    if (spec.m_rep != 2) throw std::invalid_argument("grid oracle: requires the binary representation (M = 2)");
    if (y < 0 || y >= spec.outputs) throw std::out_of_range("grid oracle: output index out of range");
    const std::size_t n = spec.n_patches;
    if (n >= 63 || (std::size_t{1} << n) > max_elements)
        throw CapacityError("grid oracle: 2^" + std::to_string(n) + " inputs exceed the limit",
                            n >= 63 ? SIZE_MAX : (std::size_t{1} << n), max_elements);

    // Level-0 channel values for b = 1 (f = (1, 0)) and b = 0 (f = (0, 1)).
    const Matrix& a0 = w.layers[0];
    const auto r0 = static_cast<std::size_t>(a0.rows());
    std::vector<double> on(r0), off(r0);
    for (std::size_t g = 0; g < r0; ++g) {
        on[g] = a0(static_cast<Index>(g), 0);
        off[g] = a0(static_cast<Index>(g), 1);
    }

    const auto& iset = p.i_set();
    const auto& jset = p.j_set();
    Matrix values(Index{1} << iset.size(), Index{1} << jset.size());

    const int L = spec.depth();
    std::vector<double> cur(n * std::max<std::size_t>(r0, 1)), next;
    for (std::size_t x = 0; x < (std::size_t{1} << n); ++x) {
        double h = 0.0;
        if (spec.kind == DepthKind::shallow) {
            const Matrix& out = w.layers[1];
            for (std::size_t g = 0; g < r0; ++g) {
                double prod = 1.0;
                for (std::size_t i = 0; i < n; ++i) prod *= (x >> i) & 1 ? on[g] : off[g];
                h += out(y, static_cast<Index>(g)) * prod;
            }
        } else {
            std::size_t width = r0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& src = (x >> i) & 1 ? on : off;
                std::copy(src.begin(), src.end(), cur.begin() + static_cast<std::ptrdiff_t>(i * width));
            }
            std::size_t nodes = n;
            for (int l = 1; l <= L; ++l) {
                const Matrix& a = w.layers[static_cast<std::size_t>(l)];
                const std::size_t pooled_nodes = nodes / 4;
                const std::size_t out_width = static_cast<std::size_t>(a.rows());
                next.assign(pooled_nodes * out_width, 0.0);
                std::vector<double> prod(width);
                for (std::size_t k = 0; k < pooled_nodes; ++k) {
                    for (std::size_t c = 0; c < width; ++c) {
                        double v = 1.0;
                        for (std::size_t t = 0; t < 4; ++t) v *= cur[(4 * k + t) * width + c];
                        prod[c] = v;
                    }
                    for (std::size_t g = 0; g < out_width; ++g) {
                        double s = 0.0;
                        for (std::size_t c = 0; c < width; ++c) s += a(static_cast<Index>(g), static_cast<Index>(c)) * prod[c];
                        next[k * out_width + g] = s;
                    }
                }
                cur.swap(next);
                nodes = pooled_nodes;
                width = out_width;
            }
            h = cur[static_cast<std::size_t>(y)];
        }
        Index row = 0, col = 0;
        for (int i : iset) row = (row << 1) | static_cast<Index>((x >> (i - 1)) & 1);
        for (int j : jset) col = (col << 1) | static_cast<Index>((x >> (j - 1)) & 1);
        values(row, col) = h;
    }
    return numerical_rank(values, rel_tol);
}

DistanceReport separability_distance(const Matrix& m, double rel_tol) {
    const std::vector<double> sv = singular_values(m);
    DistanceReport rep;
    for (double s : sv) rep.spectral_energy += s * s;
    if (sv.empty() || rep.spectral_energy == 0.0)
        throw std::domain_error("separability distance is undefined for the zero function");
    rep.top_energy = sv.front() * sv.front();
    rep.d_value = std::sqrt(std::max(0.0, 1.0 - rep.top_energy / rep.spectral_energy));
    rep.rank = static_cast<int>(std::count_if(sv.begin(), sv.end(), [&](double s) { return s > rel_tol * sv.front(); }));
    rep.ub_from_rank = std::sqrt(1.0 - 1.0 / rep.rank);
    return rep;
}

double deep_distance_lower_bound(const NetworkSpec& spec, const Partition& p) {
    require_deep(spec, "deep_distance_lower_bound");
    require_match(spec, p);
    const int base = std::min(spec.widths[0], spec.m_rep);
    const int s = split_count(p);
    return std::sqrt(1.0 - std::pow(static_cast<double>(base), -static_cast<double>(s)));
}

}  // namespace poolrank
