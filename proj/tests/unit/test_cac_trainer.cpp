#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "poolrank/cac_trainer.hpp"
#include "poolrank/random.hpp"
#include "test_util.hpp"

using namespace poolrank;

namespace {

BinaryImage image_from_bits(int side, std::uint64_t bits) {
    BinaryImage img(side);
    for (int k = 0; k < side * side; ++k) img(k / side, k % side) = static_cast<std::uint8_t>((bits >> k) & 1u);
    return img;
}

BinaryImage random_image(int side, std::mt19937_64& rng) {
    BinaryImage img(side);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) img(r, c) = static_cast<std::uint8_t>(rng() & 1u);
    return img;
}

Model random_model(ModelConfig cfg, std::uint64_t seed, double scale = 1.0) {
    Model m(cfg);
    std::mt19937_64 rng(seed);
    for (Eigen::Index i = 0; i < m.params().size(); ++i) m.params()[i] = scale * standard_normal(rng);
    return m;
}

// |a - b| relative to the larger magnitude; both zero counts as equal.
double rel_diff(double a, double b) {
    const double s = std::max(std::abs(a), std::abs(b));
    return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

const std::array<Arch, 4> kArchs = {Arch::deep_cac, Arch::shallow_cac, Arch::deep_relu_max, Arch::deep_relu_avg};

}  // namespace

TEST_CASE("arch names round trip and reject unknown names") {
    for (Arch a : kArchs) CHECK(arch_from_string(to_string(a)) == a);
    CHECK_THROWS(arch_from_string("deep_tanh"));
    CHECK(is_arithmetic(Arch::deep_cac));
    CHECK(is_arithmetic(Arch::shallow_cac));
    CHECK_FALSE(is_arithmetic(Arch::deep_relu_max));
}

TEST_CASE("parameter layouts") {
    SUBCASE("deep circuit, side 8") {
        Model m({Arch::deep_cac, GeometryKind::square, 8, 5});
        CHECK(m.depth() == 3);
        REQUIRE(m.layout().size() == 4);
        CHECK(m.block_info("conv0").rows == 5);
        CHECK(m.block_info("conv0").cols == 2);
        CHECK(m.block_info("conv2").cols == 5);
        CHECK(m.block_info("out").rows == 2);
        CHECK(m.params().size() == 10 + 25 + 25 + 10);
        CHECK_THROWS_AS(m.block_info("bias0"), std::out_of_range);
    }
    SUBCASE("shallow circuit has no inner convs") {
        Model m({Arch::shallow_cac, GeometryKind::square, 8, 7});
        CHECK(m.layout().size() == 2);
        CHECK(m.params().size() == 14 + 14);
    }
    SUBCASE("rectifier nets carry biases") {
        Model m({Arch::deep_relu_avg, GeometryKind::mirror, 4, 3});
        CHECK(m.block_info("bias0").rows == 3);
        CHECK(m.block_info("bias1").rows == 3);
        CHECK(m.block_info("bias_out").rows == 2);
        CHECK(m.params().size() == 6 + 9 + 6 + 3 + 3 + 2);
    }
    SUBCASE("bad configs") {
        CHECK_THROWS(Model({Arch::deep_cac, GeometryKind::square, 6, 4}));
        CHECK_THROWS(Model({Arch::deep_cac, GeometryKind::square, 8, 0}));
        CHECK_THROWS(Model({Arch::deep_cac, GeometryKind::custom, 8, 4}));
    }
}

TEST_CASE("initialization draws weights and zero biases") {
    const ModelConfig cfg{Arch::deep_relu_max, GeometryKind::square, 16, 16};
    const Model a = Model::initialized(cfg, 11);
    const Model b = Model::initialized(cfg, 11);
    const Model c = Model::initialized(cfg, 12);
    CHECK(a.params() == b.params());
    CHECK(a.params() != c.params());
    CHECK(a.block("bias0").cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.block("bias_out").cwiseAbs().maxCoeff() == 0.0);
    std::vector<double> w;
    for (const auto& blk : a.layout())
        if (blk.name.rfind("bias", 0) != 0)
            for (Eigen::Index i = 0; i < blk.size(); ++i) w.push_back(a.params()[blk.offset + i]);
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    double var = 0.0;
    for (double x : w) var += (x - mean) * (x - mean);
    var /= static_cast<double>(w.size());
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::sqrt(var) == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("log-space forward matches direct forward on every 4x4 image") {
    for (Arch arch : kArchs) {
        for (GeometryKind g : {GeometryKind::square, GeometryKind::mirror}) {
            const ModelConfig cfg{arch, g, 4, 6};
            const Model m = random_model(cfg, 100 + static_cast<std::uint64_t>(arch));
            Evaluator ev(cfg);
            const std::uint64_t total = 1u << 16;
            const std::uint64_t stride = arch == Arch::deep_cac ? 1 : 7;
            double worst = 0.0;
            for (std::uint64_t bits = 0; bits < total; bits += stride) {
                const BinaryImage img = image_from_bits(4, bits);
                const OutputScores s = ev.forward(m, img);
                const auto d = forward_direct(m, img);
                for (int y = 0; y < kOutputs; ++y) worst = std::max(worst, rel_diff(s.value[static_cast<std::size_t>(y)].to_double(), d[static_cast<std::size_t>(y)]));
            }
            INFO(to_string(arch), " ", to_string(g));
            CHECK(worst < 1e-10);
        }
    }
}

TEST_CASE("circuit logits are log magnitudes") {
    const ModelConfig cfg{Arch::deep_cac, GeometryKind::square, 8, 4};
    const Model m = random_model(cfg, 5);
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const OutputScores s = forward(m, random_image(8, rng));
        for (int y = 0; y < kOutputs; ++y) {
            const auto& v = s.value[static_cast<std::size_t>(y)];
            CHECK(s.logit[static_cast<std::size_t>(y)] == v.magnitude);
        }
        CHECK(s.predicted() == (s.logit[1] > s.logit[0] ? 1 : 0));
    }
}

TEST_CASE("blank image yields finite scores") {
    for (Arch arch : kArchs) {
        const ModelConfig cfg{arch, GeometryKind::square, 32, 8};
        const Model m = Model::initialized(cfg, 1);
        const OutputScores s = forward(m, BinaryImage(32));
        INFO(to_string(arch));
        CHECK(std::isfinite(s.logit[0]));
        CHECK(std::isfinite(s.logit[1]));
    }
}

TEST_CASE("deep circuit on a 32x32 image stays finite in log space") {
    const ModelConfig cfg{Arch::deep_cac, GeometryKind::mirror, 32, 16};
    const Model m = Model::initialized(cfg, 9);
    std::mt19937_64 rng(8);
    for (int t = 0; t < 5; ++t) {
        const OutputScores s = forward(m, random_image(32, rng));
        CHECK(std::isfinite(s.logit[0]));
        CHECK(std::isfinite(s.logit[1]));
    }
}

TEST_CASE("forward rejects mismatched images") {
    const Model m({Arch::deep_cac, GeometryKind::square, 8, 2});
    CHECK_THROWS_AS(forward(m, BinaryImage(4)), std::invalid_argument);
    CHECK_THROWS_AS(forward_direct(m, BinaryImage(16)), std::invalid_argument);
}

TEST_CASE("single-channel shallow circuit is separable across any split") {
    // With one hidden channel the output is a product of per-pixel factors, so
    // its grid over two pixel groups has rank one.
    const ModelConfig cfg{Arch::shallow_cac, GeometryKind::square, 4, 1};
    const Model m = random_model(cfg, 77);
    for (int split = 0; split < 3; ++split) {
        std::vector<int> left, right;
        for (int k = 0; k < 16; ++k) {
            const bool in_left = split == 0 ? k < 8 : split == 1 ? k % 2 == 0 : (k / 4 + k % 4) % 2 == 0;
            (in_left ? left : right).push_back(k);
        }
        Matrix grid(1 << left.size(), 1 << right.size());
        for (int a = 0; a < grid.rows(); ++a)
            for (int b = 0; b < grid.cols(); ++b) {
                std::uint64_t bits = 0;
                for (std::size_t i = 0; i < left.size(); ++i)
                    if ((a >> i) & 1) bits |= std::uint64_t{1} << left[i];
                for (std::size_t j = 0; j < right.size(); ++j)
                    if ((b >> j) & 1) bits |= std::uint64_t{1} << right[j];
                grid(a, b) = forward_direct(m, image_from_bits(4, bits))[0];
            }
        CHECK(numerical_rank(grid) == 1);
    }
}

TEST_CASE("gradients agree with central differences") {
    // Relative error of the analytic gradient against central differences on
    // a random subset of coordinates, with random weights and images.
    const double h = 1e-5;
    for (Arch arch : kArchs) {
        const ModelConfig cfg{arch, arch == Arch::deep_relu_avg ? GeometryKind::mirror : GeometryKind::square, 4, 4};
        std::mt19937_64 rng(500 + static_cast<std::uint64_t>(arch));
        int checked = 0;
        double worst = 0.0;
        for (int point = 0; point < 12; ++point) {
            Model m = random_model(cfg, rng(), 0.7);
            std::vector<BinaryImage> imgs = {random_image(4, rng), random_image(4, rng)};
            const std::vector<Sample> batch = {{&imgs[0], 0, 0}, {&imgs[1], 1, 1}};
            const BatchGradient g = backward(m, batch);
            for (int k = 0; k < 6; ++k) {
                const auto i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.params().size()));
                const double w = m.params()[i];
                m.params()[i] = w + h;
                const double up = backward(m, batch).loss;
                m.params()[i] = w - h;
                const double down = backward(m, batch).loss;
                m.params()[i] = w;
                const double fd = (up - down) / (2 * h);
                if (std::max(std::abs(fd), std::abs(g.grad[i])) < 1e-7) continue;
                worst = std::max(worst, rel_diff(fd, g.grad[i]));
                ++checked;
            }
        }
        INFO(to_string(arch), " checked ", checked);
        CHECK(checked > 20);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
    const ModelConfig cfg{Arch::deep_cac, GeometryKind::square, 8, 4};
    const Model m = Model::initialized(cfg, 4);
    std::mt19937_64 rng(6);
    std::vector<BinaryImage> imgs;
    for (int i = 0; i < 5; ++i) imgs.push_back(random_image(8, rng));
    std::vector<Sample> batch;
    for (std::size_t i = 0; i < imgs.size(); ++i) batch.push_back({&imgs[i], static_cast<int>(i % 2), i});
    const BatchGradient g = backward(m, batch);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(m.params().size());
    double loss = 0.0;
    Evaluator ev(cfg);
    for (const auto& s : batch) loss += ev.accumulate(m, s, sum);
    CHECK(g.loss == doctest::Approx(loss / 5.0).epsilon(1e-12));
    CHECK((g.grad - sum / 5.0).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS(backward(m, std::span<const Sample>{}));
}

TEST_CASE("symmetric output rows give opposite output gradients") {
    // Equal output rows tie the two classes; the loss is log 2 and the two
    // rows receive gradients of equal size and opposite sign.
    for (Arch arch : {Arch::deep_cac, Arch::deep_relu_avg}) {
        const ModelConfig cfg{arch, GeometryKind::square, 4, 3};
        Model m = random_model(cfg, 21);
        auto out = m.block("out");
        out.row(1) = out.row(0);
        if (!is_arithmetic(arch)) m.block("bias_out").setZero();
        std::mt19937_64 rng(1);
        const BinaryImage img = random_image(4, rng);
        const std::vector<Sample> batch = {{&img, 1, 0}};
        const BatchGradient g = backward(m, batch);
        CHECK(g.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        const auto& info = m.block_info("out");
        for (Eigen::Index c = 0; c < info.cols; ++c) {
            const double g0 = g.grad[info.offset + c];
            const double g1 = g.grad[info.offset + info.cols + c];
            CHECK(g0 == doctest::Approx(-g1).epsilon(1e-12));
        }
    }
}

TEST_CASE("max pooling sends gradient only through the winning input") {
    // One-channel max net on a 4x4 image with a single foreground pixel: the
    // foreground leaf wins every window on its path, so the foreground column
    // of conv0 collects the whole leaf gradient and the background column
    // none of it.
    const ModelConfig cfg{Arch::deep_relu_max, GeometryKind::square, 4, 1};
    Model m(cfg);
    m.block("conv0")(0, 0) = 1.0;   // identity channel
    m.block("conv0")(0, 1) = -1.0;  // negation channel
    m.block("conv1")(0, 0) = 1.0;
    m.block("out")(0, 0) = 1.0;
    m.block("out")(1, 0) = -1.0;
    m.block("bias0")(0, 0) = 2.0;  // keeps every leaf active
    BinaryImage img(4);
    img(1, 2) = 1;
    const std::vector<Sample> batch = {{&img, 1, 0}};
    const BatchGradient g = backward(m, batch);
    const auto& c0 = m.block_info("conv0");
    const double d_id = g.grad[c0.offset];
    const double d_neg = g.grad[c0.offset + 1];
    const double d_b0 = g.grad[m.block_info("bias0").offset];
    CHECK(d_id != 0.0);
    CHECK(d_neg == 0.0);
    CHECK(d_b0 == doctest::Approx(d_id).epsilon(1e-12));

    SUBCASE("ties route to one member only") {
        // All-background image: every leaf ties. Exactly one leaf per window
        // receives gradient, so the bias gradient equals that of a single path.
        BinaryImage blank(4);
        const std::vector<Sample> b2 = {{&blank, 1, 0}};
        const BatchGradient gb = backward(m, b2);
        const double id0 = gb.grad[c0.offset];
        const double neg0 = gb.grad[c0.offset + 1];
        const double bias = gb.grad[m.block_info("bias0").offset];
        CHECK(id0 == 0.0);
        CHECK(bias == doctest::Approx(neg0).epsilon(1e-12));
        // Outputs are (a, -a) for the routed leaf a, so one path gives
        // dL/da = 2 (1 - p1); counting all tied leaves would give 16 times that.
        const OutputScores s = forward(m, blank);
        const double p1 = 1.0 / (1.0 + std::exp(s.logit[0] - s.logit[1]));
        CHECK(bias == doctest::Approx(2.0 * (1.0 - p1)).epsilon(1e-9));
    }
}

TEST_CASE("adam update rule") {
    SUBCASE("first step moves each weight by alpha against the gradient sign") {
        const Eigen::Index n = 6;
        OptimizerState st(n, AdamHyper::arithmetic());
        Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(n, -1.0, 1.0);
        const Eigen::VectorXd before = p;
        Eigen::VectorXd g(n);
        g << 3.0, -0.2, 1e-3, -50.0, 0.7, -1.0;
        adam_step(st, p, g);
        CHECK(st.step == 1);
        for (Eigen::Index i = 0; i < n; ++i)
            CHECK(p[i] - before[i] == doctest::Approx(-0.003 * (g[i] > 0 ? 1.0 : -1.0)).epsilon(1e-4));
    }
    SUBCASE("zero gradient leaves weights in place but advances the counter") {
        OptimizerState st(4, AdamHyper::arithmetic());
        Eigen::VectorXd p = Eigen::VectorXd::Constant(4, 0.5);
        adam_step(st, p, Eigen::VectorXd::Zero(4));
        adam_step(st, p, Eigen::VectorXd::Zero(4));
        CHECK(st.step == 2);
        CHECK(p == Eigen::VectorXd::Constant(4, 0.5));
    }
    SUBCASE("matches a scalar reference over several steps") {
        const AdamHyper h = AdamHyper::rectifier();
        OptimizerState st(1, h);
        Eigen::VectorXd p(1);
        p << 0.3;
        double w = 0.3, m = 0.0, v = 0.0;
        const double grads[] = {0.5, -0.1, 0.2, 0.0, 1.5};
        for (int t = 1; t <= 5; ++t) {
            Eigen::VectorXd g(1);
            g << grads[t - 1];
            adam_step(st, p, g, 0.5);
            const double gt = grads[t - 1] + 1e-4 * w;
            m = 0.9 * m + 0.1 * gt;
            v = 0.999 * v + 0.001 * gt * gt;
            const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
            w -= 0.0005 * mh / (std::sqrt(vh) + 1e-8);
            CHECK(p[0] == doctest::Approx(w).epsilon(1e-14));
        }
    }
    SUBCASE("hyperparameters per family") {
        const AdamHyper a = AdamHyper::for_arch(Arch::shallow_cac);
        CHECK(a.alpha == 0.003);
        CHECK(a.beta1 == 0.9);
        CHECK(a.beta2 == 0.9);
        CHECK(a.weight_decay == 0.0);
        const AdamHyper r = AdamHyper::for_arch(Arch::deep_relu_max);
        CHECK(r.alpha == 0.001);
        CHECK(r.beta2 == 0.999);
        CHECK(r.weight_decay == 1e-4);
    }
    SUBCASE("shape mismatch") {
        OptimizerState st(3, AdamHyper::arithmetic());
        Eigen::VectorXd p = Eigen::VectorXd::Zero(4);
        CHECK_THROWS(adam_step(st, p, Eigen::VectorXd::Zero(4)));
    }
}

TEST_CASE("schedules") {
    const TrainSchedule p = TrainSchedule::paper();
    CHECK(p.iterations == 15000);
    CHECK(p.batch_size == 64);
    CHECK(p.decay_at == 12000);
    CHECK(p.decay_factor == 0.1);
    const TrainSchedule d = TrainSchedule::desk();
    CHECK(d.batch_size == 64);
    CHECK(d.decay_at < d.iterations);
}

TEST_CASE("task samples skip excluded labels and other splits") {
    const LabeledDataset ds = build_split_dataset(50, 25, 8, 3);
    for (Task task : {Task::closedness, Task::symmetry}) {
        const auto tr = task_samples(ds, task, Split::train);
        const auto te = task_samples(ds, task, Split::test);
        CHECK(tr.size() == 40);
        CHECK(te.size() == 20);
        for (const auto& s : tr) {
            CHECK(ds.split[s.id] == Split::train);
            CHECK(ds.label(task, s.id) != ScoreLabel::excluded);
            CHECK(s.label == (ds.label(task, s.id) == ScoreLabel::high ? 1 : 0));
            CHECK(s.image == &ds.images[s.id]);
        }
        for (std::size_t i = 1; i < te.size(); ++i) CHECK(te[i - 1].id < te[i].id);
    }
}

TEST_CASE("training") {
    const LabeledDataset ds = build_split_dataset(100, 100, 8, 17);
    const ModelConfig cfg{Arch::deep_cac, GeometryKind::square, 8, 8};

    SUBCASE("zero iterations sits at chance on a balanced test split") {
        TrainSchedule s;
        s.iterations = 0;
        const TrainResult r = train(cfg, ds, Task::closedness, s, 1);
        REQUIRE(r.curve.size() == 1);
        CHECK(r.curve[0].step == 0);
        CHECK(std::abs(r.curve[0].test_acc - 0.5) <= 0.05);
    }

    SUBCASE("constant prediction scores exactly one half") {
        Model m = Model::initialized(cfg, 2);
        m.block("out").row(1) = 2.0 * m.block("out").row(0);
        CHECK(evaluate(m, ds, Task::symmetry) == 0.5);
    }

    SUBCASE("runs are reproducible and never touch excluded labels") {
        TrainSchedule s;
        s.iterations = 40;
        s.batch_size = 16;
        s.decay_at = 30;
        s.eval_every = 20;
        const TrainResult a = train(cfg, ds, Task::symmetry, s, 5);
        const TrainResult b = train(cfg, ds, Task::symmetry, s, 5);
        CHECK(a.model.params() == b.model.params());
        REQUIRE(a.curve.size() == b.curve.size());
        for (std::size_t i = 0; i < a.curve.size(); ++i) {
            CHECK(a.curve[i].loss == b.curve[i].loss);
            CHECK(a.curve[i].test_acc == b.curve[i].test_acc);
        }
        CHECK(a.excluded_touched == 0);
        CHECK(a.curve.back().step == 40);
        const TrainResult c = train(cfg, ds, Task::symmetry, s, 6);
        CHECK(c.model.params() != a.model.params());
    }

    SUBCASE("rejects bad inputs") {
        TrainSchedule s;
        s.iterations = 1;
        CHECK_THROWS_AS(train({Arch::deep_cac, GeometryKind::square, 16, 4}, ds, Task::closedness, s, 0),
                        std::invalid_argument);
        s.batch_size = 0;
        CHECK_THROWS(train(cfg, ds, Task::closedness, s, 0));
        const LabeledDataset train_only = build_dataset(30, 8, 1);
        CHECK_THROWS_AS(train(cfg, train_only, Task::closedness, TrainSchedule{}, 0), EmptySplitError);
        CHECK_THROWS_AS(accuracy(Model::initialized(cfg, 0), std::span<const Sample>{}), EmptySplitError);
    }
}

TEST_CASE("a deep circuit memorizes twenty images") {
    const LabeledDataset pool = build_split_dataset(25, 25, 8, 31);
    const auto tr = task_samples(pool, Task::closedness, Split::train);
    REQUIRE(tr.size() == 20);
    const ModelConfig cfg{Arch::deep_cac, GeometryKind::square, 8, 8};
    Model m = Model::initialized(cfg, 3);
    OptimizerState st(m.params().size(), AdamHyper::arithmetic());
    Evaluator ev(cfg);
    for (int it = 0; it < 1500 && accuracy(m, tr) < 1.0; ++it) {
        const BatchGradient g = ev.backward(m, tr);
        adam_step(st, m.params(), g.grad);
    }
    CHECK(accuracy(m, tr) == 1.0);
}

TEST_CASE("non-finite loss names the sample") {
    const ModelConfig cfg{Arch::deep_relu_avg, GeometryKind::square, 8, 4};
    Model m = Model::initialized(cfg, 1);
    m.params().setConstant(1e200);
    BinaryImage img(8);
    img(0, 0) = 1;
    const std::vector<Sample> batch = {{&img, 1, 42}};
    try {
        backward(m, batch);
        FAIL("expected NonFiniteLossError");
    } catch (const NonFiniteLossError& e) {
        CHECK(e.sample_id() == 42);
    }
}

TEST_CASE("mirror and square nets agree on images that read the same in both leaf orders") {
    // Pixels joined by the map between the two depth-first leaf numberings are
    // forced equal; such images feed both pooling trees identical leaf
    // sequences. Adding both reflections as well leaves only constant images,
    // which are checked separately below.
    for (int side : {4, 8}) {
        const PoolingGeometry sq = build_geometry(GeometryKind::square, side);
        const PoolingGeometry mi = build_geometry(GeometryKind::mirror, side);
        const auto ps = sq.ordering.position_of();
        const auto pm = mi.ordering.position_of();
        const int n = side * side;
        std::vector<int> parent(static_cast<std::size_t>(n));
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](int x) {
            while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            return x;
        };
        auto unite = [&](int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); };
        for (int k = 0; k < n; ++k) unite(ps[static_cast<std::size_t>(k)], pm[static_cast<std::size_t>(k)]);
        int classes = 0;
        for (int k = 0; k < n; ++k) classes += find(k) == k;
        INFO("side ", side, " classes ", classes);
        CHECK(classes >= 2);

        std::mt19937_64 rng(static_cast<std::uint64_t>(side));
        for (Arch arch : kArchs) {
            const Model ms = random_model({arch, GeometryKind::square, side, 4}, 9);
            Model mm({arch, GeometryKind::mirror, side, 4});
            mm.params() = ms.params();
            for (int t = 0; t < 8; ++t) {
                std::vector<std::uint8_t> bit(static_cast<std::size_t>(n));
                for (auto& b : bit) b = static_cast<std::uint8_t>(rng() & 1u);
                BinaryImage img(side);
                for (int k = 0; k < n; ++k) img(k / side, k % side) = bit[static_cast<std::size_t>(find(k))];
                const OutputScores a = forward(ms, img);
                const OutputScores b = forward(mm, img);
                CHECK(a.logit[0] == doctest::Approx(b.logit[0]).epsilon(1e-12));
                CHECK(a.logit[1] == doctest::Approx(b.logit[1]).epsilon(1e-12));
            }
            for (std::uint8_t v : {0, 1}) {
                BinaryImage flat(side);
                for (int k = 0; k < n; ++k) flat(k / side, k % side) = v;
                CHECK(forward(ms, flat).logit[0] == forward(mm, flat).logit[0]);
            }
        }
    }
}

TEST_CASE("checkpoint and curve files") {
    const auto dir = std::filesystem::temp_directory_path() / "poolrank_ckpt_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const Model m = Model::initialized({Arch::deep_relu_max, GeometryKind::mirror, 8, 5}, 12);
    save_checkpoint(m, 77, dir / "model");
    std::int64_t step = 0;
    const Model back = load_checkpoint(dir / "model", &step);
    CHECK(step == 77);
    CHECK(back.config() == m.config());
    CHECK(back.params() == m.params());

    {
        std::ofstream trunc(dir / "model.bin", std::ios::binary | std::ios::trunc);
        trunc << "xx";
    }
    CHECK_THROWS(load_checkpoint(dir / "model"));
    CHECK_THROWS(load_checkpoint(dir / "missing"));

    write_curve_csv({{0, 0.69, 0.5, 0.5}, {10, 0.4, 0.75, 0.625}}, dir / "curve.csv");
    std::ifstream in(dir / "curve.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "step,loss,train_acc,test_acc");
    CHECK(row.rfind("0,0.68", 0) == 0);
    std::filesystem::remove_all(dir);
}
