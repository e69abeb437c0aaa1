#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "poolrank/blob_benchmark.hpp"
#include "poolrank/pooling_geometry.hpp"
#include "poolrank/signed_log.hpp"
#include "poolrank/tensor_core.hpp"

namespace poolrank {

enum class Arch { deep_cac, shallow_cac, deep_relu_max, deep_relu_avg };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& name);
bool is_arithmetic(Arch arch);

/// Network shape. The representation is fixed: two channels, identity and
/// negation of the binary pixel.
struct ModelConfig {
    Arch arch = Arch::deep_cac;
    GeometryKind geometry = GeometryKind::square;
    int side = 16;
    int channels = 16;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr int kRepresentationChannels = 2;
inline constexpr int kOutputs = 2;

/// Named slice of the flat parameter vector, stored row-major.
struct ParamBlock {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;

    Eigen::Index size() const noexcept { return rows * cols; }
};

/// Parameters of one network plus the pooling layout they run on.
///
/// Deep layouts: conv0 (r x 2), conv1..conv{L-1} (r x r), out (2 x r); the
/// rectifier variants append bias0..bias{L-1} (r x 1) and bias_out (2 x 1).
/// Shallow layout: conv0 (r x 2), out (2 x r). Column 0 of conv0 multiplies the
/// identity channel, column 1 the negation channel.
class Model {
public:
    using ConstBlock = Eigen::Map<const Matrix>;
    using MutableBlock = Eigen::Map<Matrix>;

    explicit Model(ModelConfig cfg);

    /// i.i.d. N(0, 0.1^2) weights, zero biases.
    static Model initialized(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return cfg_; }
    const PoolingGeometry& geometry() const noexcept { return *geometry_; }
    int depth() const noexcept { return depth_; }

    const std::vector<ParamBlock>& layout() const noexcept { return layout_; }
    const ParamBlock& block_info(const std::string& name) const;

    Eigen::VectorXd& params() noexcept { return params_; }
    const Eigen::VectorXd& params() const noexcept { return params_; }

    ConstBlock block(const std::string& name) const;
    MutableBlock block(const std::string& name);

private:
    ModelConfig cfg_;
    int depth_ = 0;
    std::shared_ptr<const PoolingGeometry> geometry_;
    std::vector<ParamBlock> layout_;
    Eigen::VectorXd params_;
};

/// Class scores for one image. For arithmetic circuits `value` holds the
/// circuit outputs h_y and `logit` is log|h_y|; for rectifier networks both
/// carry the dense-layer output.
struct OutputScores {
    std::array<SignedLog, kOutputs> value;
    std::array<double, kOutputs> logit;

    /// Index of the stronger activation; ties go to class 0.
    int predicted() const noexcept { return logit[1] > logit[0] ? 1 : 0; }
};

struct Sample {
    const BinaryImage* image = nullptr;
    int label = 0;  // 1 = high, 0 = low
    std::size_t id = 0;
};

class NonFiniteLossError : public std::runtime_error {
public:
    NonFiniteLossError(std::size_t sample_id, double loss);
    std::size_t sample_id() const noexcept { return sample_id_; }

private:
    std::size_t sample_id_;
};

struct BatchGradient {
    double loss = 0.0;  // mean cross-entropy
    Eigen::VectorXd grad;
};

/// Reusable forward/backward engine for one model shape. Not thread-safe;
/// use one per thread.
class Evaluator {
public:
    explicit Evaluator(const ModelConfig& cfg);
    ~Evaluator();
    Evaluator(Evaluator&&) noexcept;
    Evaluator& operator=(Evaluator&&) noexcept;

    OutputScores forward(const Model& model, const BinaryImage& image);

    /// Mean cross-entropy over the batch and its gradient w.r.t. every
    /// parameter, accumulated in sample order.
    BatchGradient backward(const Model& model, std::span<const Sample> batch);

    /// Adds d(loss)/d(params) for one sample into `grad`; returns the loss.
    double accumulate(const Model& model, const Sample& sample, Eigen::VectorXd& grad);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

OutputScores forward(const Model& model, const BinaryImage& image);
BatchGradient backward(const Model& model, std::span<const Sample> batch);

/// Exact products and sums in ordinary floating point; only meaningful where
/// intermediate values stay in range (small images).
std::array<double, kOutputs> forward_direct(const Model& model, const BinaryImage& image);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamHyper {
    double alpha = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.9;
    double eps = 1e-8;
    double weight_decay = 0.0;

    /// Arithmetic circuits: step 0.003, both decays 0.9, no weight decay.
    static AdamHyper arithmetic();
    /// Rectifier networks: step 0.001, decays 0.9 / 0.999, weight decay 1e-4.
    static AdamHyper rectifier();
    static AdamHyper for_arch(Arch arch);
};

struct OptimizerState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::int64_t step = 0;
    AdamHyper hyper;

    OptimizerState() = default;
    OptimizerState(Eigen::Index n, AdamHyper h);
};

/// Bias-corrected Adam update; weight decay enters as an additive L2 term on
/// the gradient. `lr_scale` multiplies alpha (step-size schedule).
void adam_step(OptimizerState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               double lr_scale = 1.0);

// ---------------------------------------------------------------------------
// Training

struct TrainSchedule {
    int iterations = 3000;
    int batch_size = 64;
    int decay_at = 2400;
    double decay_factor = 0.1;
    int eval_every = 500;
    /// Train accuracy is measured on at most this many training samples.
    std::size_t train_eval_limit = 1000;

    static TrainSchedule desk();
    static TrainSchedule paper();
};

struct CurvePoint {
    int step = 0;
    double loss = 0.0;  // mean batch loss since the previous point
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<CurvePoint> curve;
    /// Count of excluded-label samples that reached the loss or an accuracy.
    std::size_t excluded_touched = 0;
};

class EmptySplitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-excluded samples of one split for one task, in id order.
std::vector<Sample> task_samples(const LabeledDataset& ds, Task task, Split split);

TrainResult train(const ModelConfig& cfg, const LabeledDataset& ds, Task task,
                  const TrainSchedule& schedule, std::uint64_t seed);

/// Fraction of correctly classified non-excluded test samples.
double evaluate(const Model& model, const LabeledDataset& ds, Task task);
double accuracy(const Model& model, std::span<const Sample> samples);

// ---------------------------------------------------------------------------
// Checkpoints: <path>.json header + <path>.bin little-endian float64 block.

void save_checkpoint(const Model& model, std::int64_t step, const std::filesystem::path& stem);
Model load_checkpoint(const std::filesystem::path& stem, std::int64_t* step = nullptr);

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);

}  // namespace poolrank
