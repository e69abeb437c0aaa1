#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "poolrank/circuit_builder.hpp"

namespace poolrank {

using BigInt = boost::multiprecision::cpp_int;

struct BoundReport {
    std::optional<BigInt> lower;  // deep only
    BigInt upper;
    int s_stat = 0;
    /// c_table[l][k-1] = c^{l,k} for l = 0..L-1 (deep only).
    std::vector<std::vector<BigInt>> c_table;
};

/// min(r_0, M)^S.
BigInt theorem1_lower_bound(const NetworkSpec& spec, const Partition& p);

/// Recursive c^{l,k} table and min(M^min(|I|,|J|), r_{L-1} prod_t c^{L-1,t}).
/// Also fills `lower` and `s_stat`.
BoundReport theorem1_upper_bound(const NetworkSpec& spec, const Partition& p);

/// min(M^min(|I|,|J|), r_0).
BigInt shallow_upper_bound(const NetworkSpec& spec, const Partition& p);

/// Deep or shallow bound report, whichever the spec calls for.
BoundReport bound_report(const NetworkSpec& spec, const Partition& p);

enum class RankMethod { numerical, exact, grid_oracle };
std::string to_string(RankMethod m);

struct SeparationRankEstimate {
    Partition partition;
    int matricization_rank = 0;
    RankMethod method = RankMethod::numerical;
};

/// Rank of the matricized coefficient tensor for output y. The exact path
/// first drops representation coordinates unused by every a^{0,gamma}, which
/// leaves the rank unchanged and shrinks the matricization. Integer weights
/// whose matricization stays within 2^53 go through fraction-free elimination;
/// any other weights go through modular_matricization_rank.
SeparationRankEstimate matricization_rank(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p,
                                          RankMethod method, double rel_tol = 1e-9);

/// Rank over the rationals of the matricization, taking each weight as the
/// exact dyadic rational its double encodes. The tensor is rebuilt modulo
/// each of two 61-bit primes and the larger modular rank is returned; a
/// modular rank never exceeds the rational one and falls short only when
/// the prime divides every maximal nonzero minor. Needs M^N within the guard.
int modular_matricization_rank(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p,
                               std::size_t max_elements = kDefaultCapacity);

struct Claim2Report {
    int trials = 0;
    int max_rank_observed = 0;
    double fraction_at_max = 0.0;
    std::vector<int> ranks;  // per trial, trial t drawn with seed + t
};

/// Ranks of output 0 over `trials` random weight draws, numerical by default.
Claim2Report verify_claim2(const NetworkSpec& spec, const Partition& p, int trials, std::uint64_t seed,
                           double rel_tol = 1e-9, WeightDistribution dist = WeightDistribution::gaussian,
                           RankMethod method = RankMethod::numerical);

/// Evaluates h_y on all 2^N binary inputs under f_1(b) = b, f_2(b) = 1 - b,
/// arranges the values as a 2^|I| x 2^|J| matrix and returns its numerical rank.
int grid_oracle_rank(const NetworkSpec& spec, const WeightSetting& w, int y, const Partition& p,
                     double rel_tol = 1e-9, std::size_t max_elements = kDefaultCapacity);

struct DistanceReport {
    double d_value = 0.0;
    double spectral_energy = 0.0;
    double top_energy = 0.0;
    double ub_from_rank = 0.0;
    int rank = 0;
    std::optional<double> lb_deep;
};

/// sqrt(1 - sigma_1^2 / sum sigma_i^2) and the rank-based upper bound
/// sqrt(1 - 1/rank). Throws std::domain_error on the zero matrix.
DistanceReport separability_distance(const Matrix& m, double rel_tol = 1e-9);

/// sqrt(1 - min(r_0, M)^(-S)).
double deep_distance_lower_bound(const NetworkSpec& spec, const Partition& p);

}  // namespace poolrank
