#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "poolrank/binary_image.hpp"

namespace poolrank {

/// Pad by one background pixel, dilate with the 4-neighbourhood, erode with
/// the 4-neighbourhood, unpad.
BinaryImage morphological_closure(const BinaryImage& img);

/// |blob| / |closure(blob)|. Throws std::invalid_argument on an empty image.
double closedness(const BinaryImage& img);

/// |blob ∩ flipLR(blob)| / |blob|, the flip taken inside the blob's bounding box.
double symmetry(const BinaryImage& img);

/// Distorted ellipse with interior holes, centred on the frame's vertical axis.
/// Deterministic in the generator state.
BinaryImage generate_blob(int side, std::mt19937_64& rng);

enum class ScoreLabel : std::uint8_t { low, high, excluded };
enum class Split : std::uint8_t { train, test };
enum class Task : std::uint8_t { closedness, symmetry };

std::string to_string(ScoreLabel label);
std::string to_string(Split split);
std::string to_string(Task task);
ScoreLabel score_label_from_string(const std::string& s);
Split split_from_string(const std::string& s);
Task task_from_string(const std::string& s);

struct LabeledDataset {
    std::vector<BinaryImage> images;
    std::vector<double> closedness;
    std::vector<double> symmetry;
    std::vector<ScoreLabel> closed_label;
    std::vector<ScoreLabel> sym_label;
    std::vector<Split> split;

    std::size_t size() const noexcept { return images.size(); }
    ScoreLabel label(Task task, std::size_t id) const {
        return task == Task::closedness ? closed_label[id] : sym_label[id];
    }

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Per-score 40/20/40 labeling: scores sorted ascending with ties broken by
/// ascending position; the first floor(0.4 n) are low, the last floor(0.4 n)
/// high, the rest excluded.
std::vector<ScoreLabel> label_by_score(const std::vector<double>& scores);

/// Renders `count` blobs (per-image seed derived from (seed, id)), scores them
/// and labels the whole set. Every image is marked as train.
LabeledDataset build_dataset(std::size_t count, int side, std::uint64_t seed);

/// Renders a train pool and a test pool, each scored and labeled on its own,
/// so that each task keeps exactly 80% of each pool. Test ids follow train ids.
LabeledDataset build_split_dataset(std::size_t train_count, std::size_t test_count, int side,
                                   std::uint64_t seed);

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// dir/manifest.csv plus dir/images/<id zero-padded to 6>.pbm.
void write_dataset(const LabeledDataset& ds, const std::filesystem::path& dir);
LabeledDataset read_dataset(const std::filesystem::path& dir);

/// Per-image generator seed; stable across platforms.
std::uint64_t image_seed(std::uint64_t master, std::uint64_t id);

}  // namespace poolrank
