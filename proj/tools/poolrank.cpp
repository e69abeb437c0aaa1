// poolrank command-line entry point.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "poolrank/blob_benchmark.hpp"
#include "poolrank/cac_trainer.hpp"
#include "poolrank/experiment.hpp"
#include "poolrank/io_util.hpp"
#include "poolrank/json_io.hpp"
#include "poolrank/rank_analyzer.hpp"

namespace fs = std::filesystem;
using namespace poolrank;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct Emitter {
    std::string out;  // empty = stdout

    void operator()(const json& report) const {
        const std::string text = report.dump(2) + "\n";
        if (out.empty()) {
            std::cout << text;
        } else {
            write_file_atomic(out, text);
        }
    }
};

struct Inputs {
    std::string spec, partition, geometry, weights;
    int output = 0;
};

NetworkSpec load_spec(const Inputs& in) { return spec_from_json(load_json_file(in.spec)); }

// A partition given together with a geometry is read over spatial positions
// (row-major, 1-based) and mapped to patch indexes.
Partition load_partition(const Inputs& in, const NetworkSpec& spec) {
    Partition p = partition_from_json(load_json_file(in.partition));
    if (!in.geometry.empty()) {
        const PoolingGeometry g = geometry_from_json(load_json_file(in.geometry));
        if (g.n() != spec.n_patches) throw std::invalid_argument("geometry size does not match the spec");
        p = to_patch_partition(p, g.ordering);
    }
    return p;
}

WeightSetting load_weights(const Inputs& in) {
    const fs::path path(in.weights);
    return weights_from_json(load_json_file(path), path.parent_path());
}

void add_common(CLI::App* cmd, Inputs& in, bool weights) {
    cmd->add_option("--spec", in.spec, "network spec JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--partition", in.partition, "partition JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--geometry", in.geometry, "geometry JSON; the partition is then read over spatial positions")
        ->check(CLI::ExistingFile);
    if (weights) {
        cmd->add_option("--weights", in.weights, "weights JSON (inline layers or float64-le header)")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--output-index", in.output, "network output y (0-based)");
    }
}

ModelConfig model_config(const std::string& arch, const std::string& pool, int side, int channels) {
    ModelConfig cfg;
    cfg.arch = arch_from_string(arch);
    cfg.geometry = geometry_kind_from_string(pool);
    cfg.side = side;
    cfg.channels = channels;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Separation-rank analysis and pooling-geometry experiments for convolutional arithmetic circuits",
                 "poolrank"};
    app.require_subcommand(1);
    std::string report_out;
    app.add_option("--report", report_out, "write the JSON report here instead of stdout");

    Inputs in;
    bool exact = false;
    std::string oracle;
    int trials = 100;
    std::uint64_t seed = 0;
    double tol = 1e-9;
    std::size_t count = 7500, test_count = 0;
    int side = 16, channels = 16, iterations = -1;
    std::string out_dir, data_dir, task_name, arch_name = "deep_cac", pool_name = "square", model_path;
    bool paper_scale = false;
    std::vector<int> widths{16, 32}, shallow_widths{64, 256};

    auto* bounds = app.add_subcommand("bounds", "lower and upper bounds on the matricization rank");
    add_common(bounds, in, false);

    auto* rank = app.add_subcommand("rank", "rank of the matricized coefficient tensor");
    add_common(rank, in, true);
    rank->add_flag("--exact", exact, "exact rank over the rationals instead of a singular-value count");
    rank->add_option("--oracle", oracle, "use an evaluation oracle instead")->check(CLI::IsMember({"grid"}));
    rank->add_option("--tol", tol, "relative singular-value tolerance");

    auto* verify = app.add_subcommand("verify", "statistical checks");
    verify->require_subcommand(1);
    auto* claim2 = verify->add_subcommand("claim2", "rank attained by random weights");
    add_common(claim2, in, false);
    claim2->add_option("--trials", trials, "number of weight draws")->check(CLI::PositiveNumber);
    claim2->add_option("--seed", seed, "master seed; trial t uses seed + t");
    claim2->add_option("--tol", tol, "relative singular-value tolerance");
    claim2->add_flag("--exact", exact, "exact ranks over the rationals");

    auto* distance = app.add_subcommand("distance", "normalized distance from separable functions");
    add_common(distance, in, true);

    auto* gen = app.add_subcommand("gen-blobs", "render and label a blob dataset");
    gen->add_option("--count", count, "images rendered in total")->required()->check(CLI::Range(20, 10000000));
    gen->add_option("--test-count", test_count, "images in the test pool (default count/6)");
    gen->add_option("--side", side, "image side")->required();
    gen->add_option("--seed", seed, "master seed")->required();
    gen->add_option("--out", out_dir, "dataset directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train one network on one task");
    train_cmd->add_option("--task", task_name, "closedness | symmetry")->required();
    train_cmd->add_option("--arch", arch_name, "deep_cac | shallow_cac | deep_relu_max | deep_relu_avg");
    train_cmd->add_option("--pool", pool_name, "square | mirror")->check(CLI::IsMember({"square", "mirror"}));
    train_cmd->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    train_cmd->add_flag("--paper-scale", paper_scale, "15000 iterations, decay at 12000");
    train_cmd->add_option("--channels", channels, "hidden width")->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", seed, "initialization and batch-order seed");
    train_cmd->add_option("--iterations", iterations, "override the schedule's iteration count")
        ->check(CLI::NonNegativeNumber);

    auto* eval = app.add_subcommand("eval", "test accuracy of a checkpoint");
    eval->add_option("--model", model_path, "checkpoint header (.json)")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--task", task_name, "closedness | symmetry")->required();

    auto* repro = app.add_subcommand("repro", "geometry x task accuracy grids");
    std::string figure;
    repro->add_option("figure", figure, "fig3 (arithmetic circuits) | fig4 (rectifier networks)")
        ->required()
        ->check(CLI::IsMember({"fig3", "fig4"}));
    repro->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    repro->add_option("--out", out_dir, "output directory")->required();
    repro->add_option("--widths", widths, "deep hidden widths")->delimiter(',');
    repro->add_option("--shallow-widths", shallow_widths, "shallow hidden widths (fig3)")->delimiter(',');
    repro->add_option("--seed", seed, "training seed");
    repro->add_flag("--paper-scale", paper_scale, "15000 iterations, decay at 12000");
    repro->add_option("--iterations", iterations, "override the schedule's iteration count")
        ->check(CLI::NonNegativeNumber);

    if (argc <= 1) {
        std::cerr << app.help();
        return kUsageError;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kUsageError;
    }

    const Emitter emit{report_out};
    try {
        if (*bounds) {
            const NetworkSpec spec = load_spec(in);
            const Partition p = load_partition(in, spec);
            json j = bound_report_to_json(bound_report(spec, p));
            j["kind"] = spec.kind == DepthKind::deep ? "deep" : "shallow";
            j["partition"] = partition_to_json(p);
            emit(j);
        } else if (*rank) {
            const NetworkSpec spec = load_spec(in);
            const Partition p = load_partition(in, spec);
            const WeightSetting w = load_weights(in);
            RankMethod method = RankMethod::numerical;
            if (!oracle.empty()) method = RankMethod::grid_oracle;
            else if (exact) method = RankMethod::exact;
            if (!oracle.empty() && exact) throw CLI::ValidationError("--exact and --oracle are mutually exclusive");
            const auto est = matricization_rank(spec, w, in.output, p, method, tol);
            emit({{"rank", est.matricization_rank},
                  {"method", to_string(est.method)},
                  {"output", in.output},
                  {"partition", partition_to_json(p)}});
        } else if (*claim2) {
            const NetworkSpec spec = load_spec(in);
            const Partition p = load_partition(in, spec);
            json j = claim2_report_to_json(verify_claim2(spec, p, trials, seed, tol, WeightDistribution::gaussian,
                                                           exact ? RankMethod::exact : RankMethod::numerical));
            j["seed"] = seed;
            j["method"] = exact ? "exact" : "numerical";
            j["partition"] = partition_to_json(p);
            emit(j);
        } else if (*distance) {
            const NetworkSpec spec = load_spec(in);
            const Partition p = load_partition(in, spec);
            const WeightSetting w = load_weights(in);
            DistanceReport r = separability_distance(matricized(spec, w, in.output, p));
            if (spec.kind == DepthKind::deep) r.lb_deep = deep_distance_lower_bound(spec, p);
            json j = distance_report_to_json(r);
            j["partition"] = partition_to_json(p);
            emit(j);
        } else if (*gen) {
            const std::size_t test = test_count ? test_count : count / 6;
            if (test >= count) throw std::invalid_argument("--test-count must be below --count");
            const LabeledDataset ds = build_split_dataset(count - test, test, side, seed);
            fs::create_directories(out_dir);
            write_dataset(ds, out_dir);
            emit({{"dataset", out_dir}, {"images", ds.size()}, {"train_images", count - test}, {"test_images", test},
                  {"side", side}, {"seed", seed}});
        } else if (*train_cmd) {
            const LabeledDataset ds = read_dataset(data_dir);
            if (ds.size() == 0) throw DatasetError("dataset is empty");
            const Task task = task_from_string(task_name);
            TrainSchedule sched = paper_scale ? TrainSchedule::paper() : TrainSchedule::desk();
            if (iterations >= 0) {
                sched.decay_at = sched.decay_at * iterations / std::max(sched.iterations, 1);
                sched.iterations = iterations;
            }
            const ModelConfig cfg = model_config(arch_name, pool_name, ds.images.front().side(), channels);
            const TrainResult res = train(cfg, ds, task, sched, seed);
            fs::create_directories(out_dir);
            save_checkpoint(res.model, sched.iterations, fs::path(out_dir) / "model");
            write_curve_csv(res.curve, fs::path(out_dir) / "curves.csv");
            const auto& last = res.curve.back();
            json j = {{"checkpoint", (fs::path(out_dir) / "model.json").string()},
                      {"curves", (fs::path(out_dir) / "curves.csv").string()},
                      {"arch", to_string(cfg.arch)},
                      {"geometry", to_string(cfg.geometry)},
                      {"task", to_string(task)},
                      {"channels", cfg.channels},
                      {"iterations", sched.iterations},
                      {"seed", seed},
                      {"train_acc", last.train_acc},
                      {"test_acc", last.test_acc}};
            write_file_atomic(fs::path(out_dir) / "train_report.json", j.dump(2) + "\n");
            emit(j);
        } else if (*eval) {
            const Model model = load_checkpoint(model_path);
            const LabeledDataset ds = read_dataset(data_dir);
            const Task task = task_from_string(task_name);
            const auto test = task_samples(ds, task, Split::test);
            emit({{"accuracy", evaluate(model, ds, task)}, {"task", to_string(task)}, {"samples", test.size()}});
        } else if (*repro) {
            const LabeledDataset ds = read_dataset(data_dir);
            if (ds.size() == 0) throw DatasetError("dataset is empty");
            GridSpec grid = figure == "fig3" ? fig3_grid() : fig4_grid();
            grid.widths = widths;
            grid.shallow_widths = shallow_widths;
            grid.seed = seed;
            grid.schedule = paper_scale ? TrainSchedule::paper() : TrainSchedule::desk();
            if (iterations >= 0) {
                grid.schedule.decay_at = grid.schedule.decay_at * iterations / std::max(grid.schedule.iterations, 1);
                grid.schedule.iterations = iterations;
            }
            fs::create_directories(out_dir);
            const auto runs = run_grid(ds, grid);
            const fs::path csv = fs::path(out_dir) / (figure + ".csv");
            write_file_atomic(csv, grid_csv(runs));
            json j = {{"figure", figure}, {"csv", csv.string()}, {"rows", runs.size()}};
            if (figure == "fig3") {
                GridSpec shallow = grid;
                shallow.archs = {Arch::shallow_cac};
                const auto sruns = run_grid(ds, shallow);
                const fs::path scsv = fs::path(out_dir) / "fig3_shallow.csv";
                write_file_atomic(scsv, grid_csv(sruns));
                j["shallow_csv"] = scsv.string();
            }
            emit(j);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return 0;
}
