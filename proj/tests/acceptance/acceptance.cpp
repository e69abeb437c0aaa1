// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `--only 1,2,9` runs a subset (criterion 11 needs 10).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "poolrank/blob_benchmark.hpp"
#include "poolrank/cac_trainer.hpp"
#include "poolrank/circuit_builder.hpp"
#include "poolrank/experiment.hpp"
#include "poolrank/pooling_geometry.hpp"
#include "poolrank/random.hpp"
#include "poolrank/rank_analyzer.hpp"
#include "poolrank/tensor_core.hpp"
#include "test_util.hpp"

using namespace poolrank;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

NetworkSpec deep_spec(std::size_t n, int m, std::vector<int> widths) {
    NetworkSpec s;
    s.n_patches = n;
    s.m_rep = m;
    s.widths = std::move(widths);
    return s;
}

NetworkSpec shallow_spec(std::size_t n, int m, int r0) {
    NetworkSpec s;
    s.n_patches = n;
    s.m_rep = m;
    s.widths = {r0};
    s.kind = DepthKind::shallow;
    return s;
}

Partition partition_with_size(std::mt19937_64& rng, std::size_t n, std::size_t k) {
    std::vector<int> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<int>(i + 1);
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<int> i_set(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(i_set.begin(), i_set.end());
    return Partition::from_i(n, i_set);
}

// Level-1 windows {4k+1..4k+4} holding patches from both sides.
int split_quadruples(const Partition& p) {
    std::set<int> in_i(p.i_set().begin(), p.i_set().end());
    int s = 0;
    for (std::size_t q = 0; q < p.n() / 4; ++q) {
        int hits = 0;
        for (int t = 1; t <= 4; ++t) hits += in_i.count(static_cast<int>(4 * q) + t) ? 1 : 0;
        s += hits > 0 && hits < 4;
    }
    return s;
}

// Order-(P+Q) tensor product by the index formula.
Tensor outer(const Tensor& a, const Tensor& b) {
    std::vector<std::size_t> dims = a.dims();
    dims.insert(dims.end(), b.dims().begin(), b.dims().end());
    std::vector<double> v;
    v.reserve(a.size() * b.size());
    for (double x : a.data())
        for (double y : b.data()) v.push_back(x * y);
    return Tensor(std::move(dims), std::move(v));
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    std::mt19937_64 rng(1001);
    double worst = 0.0;
    int shape_errors = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t P = 1 + rng() % 3, Q = 1 + rng() % 3;
        std::vector<std::size_t> da(P), db(Q);
        for (auto& d : da) d = 1 + rng() % 3;
        for (auto& d : db) d = 1 + rng() % 3;
        const Tensor a = testutil::random_tensor(rng, da);
        const Tensor b = testutil::random_tensor(rng, db);
        const Partition p = testutil::random_partition(rng, P + Q);
        std::vector<int> ia, ja, ib, jb;
        const int split = static_cast<int>(P);
        for (int i : p.i_set()) (i <= split ? ia : ib).push_back(i <= split ? i : i - split);
        for (int j : p.j_set()) (j <= split ? ja : jb).push_back(j <= split ? j : j - split);
        const Matrix lhs = matricize(outer(a, b), p);
        const Matrix rhs = kronecker(matricize(a, Partition(P, ia, ja)), matricize(b, Partition(Q, ib, jb)));
        const Matrix naive = testutil::naive_kronecker(testutil::naive_matricize(a, Partition(P, ia, ja)),
                                                       testutil::naive_matricize(b, Partition(Q, ib, jb)));
        if (lhs.rows() != rhs.rows() || lhs.cols() != rhs.cols() || naive.rows() != lhs.rows()) {
            ++shape_errors;
            continue;
        }
        worst = std::max({worst, (lhs - rhs).cwiseAbs().maxCoeff(), (lhs - naive).cwiseAbs().maxCoeff()});
    }
    return {shape_errors == 0 && worst <= 1e-12,
            "1000 triples, max |diff| " + fmt("%.3g", worst) + ", shape errors " + std::to_string(shape_errors)};
}

Outcome criterion2() {
    struct Case {
        int m, r;
    };
    bool ok = true;
    std::ostringstream d;
    for (Case c : {Case{2, 2}, Case{3, 2}, Case{2, 3}}) {
        const NetworkSpec s = deep_spec(16, c.m, {c.r, c.r});
        const WeightSetting w = canonical_lowerbound_weights(s);
        const Partition p = odd_even_partition(16);
        const int rank = matricization_rank(s, w, 0, p, RankMethod::exact).matricization_rank;
        // Second route: Bareiss on the reduced matricization built here.
        const auto [rs, rw] = drop_dead_coordinates(s, w);
        const int direct = exact_rank_integer(matricized(rs, rw, 0, p));
        ok = ok && rank == 16 && direct == 16;
        d << "M=" << c.m << ",r=" << c.r << ": " << rank << "/" << direct << "  ";
    }
    return {ok, d.str() + "(want 16)"};
}

Outcome criterion3() {
    const std::vector<NetworkSpec> specs = {deep_spec(16, 2, {2, 2}), deep_spec(16, 2, {3, 2}),
                                            deep_spec(16, 2, {2, 3}), deep_spec(16, 2, {4, 4})};
    std::mt19937_64 rng(3003);
    int checks = 0, violations = 0, lh_violations = 0;
    for (int draw = 0; draw < 200; ++draw) {
        const NetworkSpec& s = specs[static_cast<std::size_t>(draw) % specs.size()];
        const WeightSetting w = random_weights(s, rng());
        for (int k = 0; k < 10; ++k) {
            const Partition p = testutil::random_partition(rng, 16);
            const int rank = numerical_rank(matricized(s, w, 0, p));
            if (BigInt(rank) > theorem1_upper_bound(s, p).upper) ++violations;
            ++checks;
        }
        const int lh = numerical_rank(matricized(s, w, 0, low_high_partition(16)));
        if (lh > s.widths.back()) ++lh_violations;
    }
    return {violations == 0 && lh_violations == 0,
            std::to_string(checks) + " ranks, " + std::to_string(violations) + " above bound, " +
                std::to_string(lh_violations) + " low_high above r_{L-1}"};
}

Outcome criterion4() {
    const NetworkSpec s = deep_spec(16, 2, {2, 2});
    const Partition p = odd_even_partition(16);
    const Claim2Report exact =
        verify_claim2(s, p, 100, 4004, 1e-9, WeightDistribution::gaussian, RankMethod::exact);
    const Claim2Report numeric = verify_claim2(s, p, 100, 4004);
    return {exact.fraction_at_max >= 0.95,
            "exact: max " + std::to_string(exact.max_rank_observed) + " fraction " +
                fmt("%.2f", exact.fraction_at_max) + "; numerical at 1e-9 for reference: max " +
                std::to_string(numeric.max_rank_observed) + " fraction " + fmt("%.2f", numeric.fraction_at_max)};
}

Outcome criterion5() {
    std::mt19937_64 rng(5005);
    int checks = 0, mismatches = 0;
    for (int draw = 0; draw < 20; ++draw) {
        for (const NetworkSpec& s : {deep_spec(16, 2, {2, 2}), shallow_spec(16, 2, 3)}) {
            const WeightSetting w = random_weights(s, rng());
            for (int k = 0; k < 5; ++k) {
                const Partition p = k == 0 ? odd_even_partition(16) : testutil::random_partition(rng, 16);
                if (grid_oracle_rank(s, w, 0, p) != numerical_rank(matricized(s, w, 0, p))) ++mismatches;
                ++checks;
            }
        }
    }
    return {mismatches == 0, std::to_string(checks) + " comparisons, " + std::to_string(mismatches) + " mismatches"};
}

Outcome criterion6() {
    std::mt19937_64 rng(6006);
    int unequal = 0, over = 0;
    for (int draw = 0; draw < 100; ++draw) {
        const int m = 2 + static_cast<int>(rng() % 2);
        const std::size_t n = m == 2 ? 16 : 8;
        const int r0 = 1 + static_cast<int>(rng() % 8);
        const NetworkSpec s = shallow_spec(n, m, r0);
        const WeightSetting w = random_weights(s, rng());
        const std::size_t k = rng() % (n + 1);
        const Partition p = partition_with_size(rng, n, k);
        const Partition q = partition_with_size(rng, n, k);
        const Matrix a = matricized_shallow(s, w, 0, p);
        if (!(a == matricized_shallow(s, w, 0, q))) ++unequal;
        const double cap = std::min(std::pow(m, static_cast<double>(std::min(k, n - k))), static_cast<double>(r0));
        if (numerical_rank(a) > cap) ++over;
    }
    return {unequal == 0 && over == 0,
            "100 draws, " + std::to_string(unequal) + " unequal pairs, " + std::to_string(over) + " ranks above cap"};
}

Outcome criterion7() {
    std::mt19937_64 rng(7007);
    double worst = 0.0;
    int bound_violations = 0;
    for (int t = 0; t < 200; ++t) {
        const Eigen::Index rows = 2 + static_cast<Eigen::Index>(rng() % 15);
        const Eigen::Index cols = 2 + static_cast<Eigen::Index>(rng() % 15);
        Matrix a = testutil::random_matrix(rng, rows, cols);
        if (t % 2) {
            const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(std::min(rows, cols)));
            a = testutil::random_matrix(rng, rows, k) * testutil::random_matrix(rng, k, cols);
        }
        const DistanceReport r = separability_distance(a);
        const Eigen::VectorXd sv = Eigen::JacobiSVD<Matrix>(a).singularValues();
        const double tail = sv.squaredNorm() - sv[0] * sv[0];
        const double oracle = std::sqrt(std::max(0.0, tail) / sv.squaredNorm());
        worst = std::max(worst, std::abs(r.d_value - oracle));
        if (r.d_value > std::sqrt(1.0 - 1.0 / r.rank) + 1e-12) ++bound_violations;
    }
    double canon_worst = 0.0;
    std::string canon;
    const NetworkSpec s = deep_spec(16, 2, {2, 2});
    const WeightSetting w = canonical_lowerbound_weights(s);
    std::mt19937_64 prng(77);
    for (int k = 0; k < 6; ++k) {
        const Partition p = k == 0 ? odd_even_partition(16) : k == 1 ? low_high_partition(16)
                                                                     : testutil::random_partition(prng, 16);
        const int S = split_quadruples(p);
        const double want = std::sqrt(1.0 - std::pow(2.0, -S));
        const double got = separability_distance(matricized(s, w, 0, p)).d_value;
        canon_worst = std::max(canon_worst, std::abs(got - want));
        canon += " S=" + std::to_string(S);
    }
    return {worst <= 1e-10 && bound_violations == 0 && canon_worst <= 1e-9,
            "max |D - oracle| " + fmt("%.3g", worst) + ", bound violations " + std::to_string(bound_violations) +
                ", canonical max err " + fmt("%.3g", canon_worst) + " over" + canon};
}

Outcome criterion8() {
    const std::array<Arch, 4> archs = {Arch::deep_cac, Arch::shallow_cac, Arch::deep_relu_max, Arch::deep_relu_avg};
    bool ok = true;
    std::ostringstream d;
    for (Arch arch : archs) {
        // 4x4 input, 8 channels, central differences over every parameter with
        // a step of 1e-5 relative to the parameter (floored at 1e-3 in
        // magnitude). A fixed 1e-5 step is over 1% of the smallest circuit
        // weights, which enter the output raised to the sixteenth power.
        const ModelConfig cfg{arch, GeometryKind::square, 4, 8};
        std::mt19937_64 rng(8008 + static_cast<std::uint64_t>(arch));
        Evaluator ev(cfg);
        double worst = 0.0;
        int points = 0;
        for (int point = 0; point < 50; ++point) {
            Model m = Model::initialized(cfg, rng());
            if (!is_arithmetic(arch))
                for (const auto& b : m.layout())
                    if (b.name.rfind("bias", 0) == 0)
                        for (Eigen::Index i = 0; i < b.size(); ++i) m.params()[b.offset + i] = 0.1 * standard_normal(rng);
            BinaryImage img(4);
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) img(r, c) = static_cast<std::uint8_t>(rng() & 1u);
            const std::vector<Sample> batch = {{&img, static_cast<int>(rng() & 1u), 0}};
            const Eigen::VectorXd ga = ev.backward(m, batch).grad;
            Eigen::VectorXd gf(ga.size());
            for (Eigen::Index i = 0; i < ga.size(); ++i) {
                const double w = m.params()[i];
                const double h = 1e-5 * std::max(std::abs(w), 1e-3);
                m.params()[i] = w + h;
                const double up = ev.backward(m, batch).loss;
                m.params()[i] = w - h;
                const double down = ev.backward(m, batch).loss;
                m.params()[i] = w;
                gf[i] = (up - down) / (2 * h);
            }
            const double scale = std::max(ga.norm(), gf.norm());
            if (scale > 0) worst = std::max(worst, (ga - gf).norm() / scale);
            ++points;
        }
        ok = ok && worst < 1e-4;
        d << to_string(arch) << " " << points << " pts max " << fmt("%.2g", worst) << "  ";
    }
    return {ok, d.str()};
}

BinaryImage from_rows(const std::vector<std::string>& rows) {
    BinaryImage img(static_cast<int>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) img(static_cast<int>(r), static_cast<int>(c)) = rows[r][c] == '#';
    return img;
}

Outcome criterion9() {
    int not_idempotent = 0;
    for (std::uint64_t id = 0; id < 500; ++id) {
        std::mt19937_64 rng(image_seed(9009, id));
        const BinaryImage blob = generate_blob(16, rng);
        const BinaryImage once = morphological_closure(blob);
        if (!(morphological_closure(once) == once)) ++not_idempotent;
    }
    const bool ring = morphological_closure(from_rows({".....", ".###.", ".#.#.", ".###.", "....."})) ==
                      from_rows({".....", ".###.", ".###.", ".###.", "....."});
    const bool closed = closedness(from_rows({"###", "#.#", "###"})) == 8.0 / 9.0;
    const bool sym = symmetry(from_rows({"#..", "##.", "..."})) == 2.0 / 3.0;
    return {not_idempotent == 0 && ring && closed && sym,
            "500 blobs, " + std::to_string(not_idempotent) + " not idempotent; ring " + (ring ? "ok" : "wrong") +
                ", closedness 8/9 " + (closed ? "ok" : "wrong") + ", symmetry 2/3 " + (sym ? "ok" : "wrong")};
}

// Criterion 10 rule, fixed before the first full run: per seed and variant
// take the best test accuracy over the two widths; a seed passes when deep
// square beats mirror by 5 points on closedness, mirror beats square by 5 on
// symmetry, shallow_cac trails the better deep circuit by 5 on both tasks,
// and the first two orderings also hold for each rectifier variant.
struct SeedVerdict {
    bool pass = false;
    std::string detail;
};

SeedVerdict judge_seed(const std::vector<GridRun>& runs) {
    auto best = [&](Task t, Arch a, GeometryKind g) { return best_accuracy(runs, t, a, g); };
    const auto sq = GeometryKind::square, mi = GeometryKind::mirror;
    const auto C = Task::closedness, S = Task::symmetry;
    std::ostringstream d;
    bool pass = true;
    auto ordering = [&](Arch a, const char* tag) {
        const double cs = best(C, a, sq), cm = best(C, a, mi), ss = best(S, a, sq), sm = best(S, a, mi);
        const bool a_ok = cs >= cm + 0.05, b_ok = sm >= ss + 0.05;
        d << "    " << tag << ": closedness sq " << fmt("%.3f", cs) << " mi " << fmt("%.3f", cm) << " ["
          << (a_ok ? "ok" : "no") << "], symmetry mi " << fmt("%.3f", sm) << " sq " << fmt("%.3f", ss) << " ["
          << (b_ok ? "ok" : "no") << "]\n";
        pass = pass && a_ok && b_ok;
    };
    ordering(Arch::deep_cac, "deep_cac");
    for (Task t : {C, S}) {
        const double deep = std::max(best(t, Arch::deep_cac, sq), best(t, Arch::deep_cac, mi));
        const double shallow = best(t, Arch::shallow_cac, sq);
        const bool ok = shallow <= deep - 0.05;
        d << "    shallow_cac " << to_string(t) << ": " << fmt("%.3f", shallow) << " vs deep " << fmt("%.3f", deep)
          << " [" << (ok ? "ok" : "no") << "]\n";
        pass = pass && ok;
    }
    ordering(Arch::deep_relu_max, "deep_relu_max");
    ordering(Arch::deep_relu_avg, "deep_relu_avg");
    return {pass, d.str()};
}

std::vector<GridRun> trend_runs(std::uint64_t seed) {
    const LabeledDataset ds = desk_dataset(seed);
    GridSpec g;
    g.archs = {Arch::deep_cac, Arch::shallow_cac, Arch::deep_relu_max, Arch::deep_relu_avg};
    g.seed = seed;
    return run_grid(ds, g);
}

std::vector<GridRun> seed0_runs;

Outcome criterion10() {
    int passed = 0;
    std::ostringstream d;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        const auto start = std::chrono::steady_clock::now();
        const auto runs = trend_runs(seed);
        if (seed == 0) seed0_runs = runs;
        const SeedVerdict v = judge_seed(runs);
        passed += v.pass;
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        d << "\n  seed " << seed << (v.pass ? " holds" : " misses") << " (" << fmt("%.0f", secs) << " s)\n"
          << v.detail;
        std::fflush(stdout);
    }
    std::string detail = std::to_string(passed) + "/3 seeds hold the ordering (need 2)" + d.str();
    if (!detail.empty() && detail.back() == '\n') detail.pop_back();
    return {passed >= 2, detail};
}

Outcome criterion11() {
    if (seed0_runs.empty()) return {false, "criterion 10 did not run"};
    const auto again = trend_runs(0);
    std::size_t diffs = again.size() == seed0_runs.size() ? 0 : 1;
    for (std::size_t i = 0; i < std::min(again.size(), seed0_runs.size()); ++i)
        if (again[i].test_acc != seed0_runs[i].test_acc || again[i].train_acc != seed0_runs[i].train_acc) ++diffs;
    return {diffs == 0, std::to_string(again.size()) + " runs repeated, " + std::to_string(diffs) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                             criterion5, criterion6, criterion7, criterion8,
                                                             criterion9, criterion10, criterion11};
    std::set<int> only;
    for (int a = 1; a < argc; ++a) {
        const std::string arg = argv[a];
        if (arg == "--only" && a + 1 < argc) {
            std::stringstream ss(argv[++a]);
            std::string tok;
            while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
        } else {
            std::fprintf(stderr, "usage: acceptance [--only 1,2,...]\n");
            return 2;
        }
    }
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k + 1);
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !o.pass;
        std::printf("criterion %2d: %s  [%.1f s]  %s\n", id, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
