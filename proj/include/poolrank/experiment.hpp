#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "poolrank/blob_benchmark.hpp"
#include "poolrank/cac_trainer.hpp"

namespace poolrank {

/// One cell of an architecture x geometry x task x width training grid.
struct GridRun {
    Task task = Task::closedness;
    Arch arch = Arch::deep_cac;
    GeometryKind geometry = GeometryKind::square;
    int channels = 0;
    std::uint64_t seed = 0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct GridSpec {
    std::vector<Arch> archs;
    std::vector<GeometryKind> geometries{GeometryKind::square, GeometryKind::mirror};
    std::vector<Task> tasks{Task::closedness, Task::symmetry};
    std::vector<int> widths{16, 32};
    /// Widths for shallow_cac; its geometry is irrelevant and recorded as square.
    std::vector<int> shallow_widths{64, 256};
    TrainSchedule schedule = TrainSchedule::desk();
    std::uint64_t seed = 0;
};

/// Arithmetic-circuit grid (deep_cac) and rectifier grid (max and average).
GridSpec fig3_grid();
GridSpec fig4_grid();

/// Desk-scale dataset: 6250 train and 1250 test images at side 16, which
/// leaves 5000 / 1000 labeled samples per task.
LabeledDataset desk_dataset(std::uint64_t seed);
/// Full-scale dataset (the --paper-scale setting): 25000 + 5000 images at side
/// 32, leaving 20000 / 4000 labeled samples per task.
LabeledDataset paper_dataset(std::uint64_t seed);

/// Worker cap from POOLRANK_THREADS (default 1).
unsigned thread_cap();

/// Trains every cell; results come back in grid order regardless of the
/// number of worker threads.
std::vector<GridRun> run_grid(const LabeledDataset& ds, const GridSpec& spec, unsigned threads = thread_cap());

/// Best test accuracy over widths for one (task, arch, geometry) triple.
double best_accuracy(const std::vector<GridRun>& runs, Task task, Arch arch, GeometryKind geometry);

/// task,arch,geometry,channels,seed,train_acc,test_acc
std::string grid_csv(const std::vector<GridRun>& runs);

}  // namespace poolrank
