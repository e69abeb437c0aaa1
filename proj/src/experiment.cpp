#include "poolrank/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace poolrank {

GridSpec fig3_grid() {
    GridSpec g;
    g.archs = {Arch::deep_cac};
    return g;
}

GridSpec fig4_grid() {
    GridSpec g;
    g.archs = {Arch::deep_relu_max, Arch::deep_relu_avg};
    return g;
}

LabeledDataset desk_dataset(std::uint64_t seed) { return build_split_dataset(6250, 1250, 16, seed); }

LabeledDataset paper_dataset(std::uint64_t seed) { return build_split_dataset(25000, 5000, 32, seed); }

unsigned thread_cap() {
    const char* env = std::getenv("POOLRANK_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) return 1;
    return static_cast<unsigned>(std::min<long>(v, 256));
}

std::vector<GridRun> run_grid(const LabeledDataset& ds, const GridSpec& spec, unsigned threads) {
    std::vector<GridRun> runs;
    for (Task task : spec.tasks)
        for (Arch arch : spec.archs) {
            if (arch == Arch::shallow_cac) {
                for (int w : spec.shallow_widths) runs.push_back({task, arch, GeometryKind::square, w, spec.seed});
                continue;
            }
            for (GeometryKind geo : spec.geometries)
                for (int w : spec.widths) runs.push_back({task, arch, geo, w, spec.seed});
        }
    if (runs.empty()) return runs;
    const int side = ds.images.empty() ? 0 : ds.images.front().side();

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= runs.size()) return;
            auto& run = runs[i];
            try {
                const ModelConfig cfg{run.arch, run.geometry, side, run.channels};
                const TrainResult res = train(cfg, ds, run.task, spec.schedule, spec.seed);
                run.train_acc = res.curve.back().train_acc;
                run.test_acc = res.curve.back().test_acc;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = runs.size();
                return;
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(runs.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return runs;
}

double best_accuracy(const std::vector<GridRun>& runs, Task task, Arch arch, GeometryKind geometry) {
    double best = -1.0;
    for (const auto& r : runs)
        if (r.task == task && r.arch == arch && r.geometry == geometry) best = std::max(best, r.test_acc);
    if (best < 0.0) throw std::out_of_range("no run for " + to_string(arch) + "/" + to_string(geometry));
    return best;
}

std::string grid_csv(const std::vector<GridRun>& runs) {
    std::ostringstream out;
    out << "task,arch,geometry,channels,seed,train_acc,test_acc\n";
    char buf[64];
    for (const auto& r : runs) {
        out << to_string(r.task) << ',' << to_string(r.arch) << ',' << to_string(r.geometry) << ',' << r.channels
            << ',' << r.seed << ',';
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", r.train_acc, r.test_acc);
        out << buf;
    }
    return out.str();
}

}  // namespace poolrank
