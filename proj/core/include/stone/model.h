#ifndef STONE_MODEL_H_
#define STONE_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "stone/geometry.h"
#include "stone/harness.h"
#include "stone/poison.h"
#include "stone/trigger.h"

namespace stone {

// Shared per-point MLP (ReLU after every layer), max-pool over points, then a
// head MLP (ReLU on hidden layers) ending in C logits.
struct ModelShape {
  std::vector<int> point_widths{32, 64};
  std::vector<int> head_widths{32};
  int num_classes = 2;

  void validate() const;
  // No hidden layers at all: max-pooled coordinates feed one linear layer.
  static ModelShape single_linear(int num_classes);
  bool operator==(const ModelShape&) const = default;
};

class MiniPointModel : public Classifier {
 public:
  // He-normal weights, zero biases. zero_head clears the output layer.
  MiniPointModel(ModelShape shape, std::uint64_t seed, bool zero_head = false);
  MiniPointModel() : MiniPointModel(ModelShape{}, 0) {}

  int num_classes() const override { return shape_.num_classes; }
  // Softmax probabilities. Throws on an empty cloud.
  std::vector<double> predict(const PointCloud& cloud) const override;
  std::vector<double> logits(const PointCloud& cloud) const;

  // Cross-entropy of one sample. When `grad` is given (sized
  // num_parameters()) the parameter gradient is added to it.
  double loss(const PointCloud& cloud, int label, std::vector<double>* grad = nullptr) const;

  const ModelShape& shape() const { return shape_; }
  std::size_t num_parameters() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  // Binary format: magic, version, layer dims, little-endian float64 values.
  void write(std::ostream& out) const;
  static MiniPointModel read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static MiniPointModel load(const std::filesystem::path& path);

 private:
  struct Layer {
    std::size_t weights = 0;  // offset of the out x in row-major matrix
    std::size_t bias = 0;
    int in = 0;
    int out = 0;
  };

  struct Cache;

  void build_layout();
  std::vector<double> forward(const PointCloud& cloud, Cache& cache) const;
  void backward(const Cache& cache, std::vector<double> dlogits,
                std::vector<double>& grad) const;

  ModelShape shape_;
  std::vector<double> params_;
  std::vector<Layer> point_layers_;
  std::vector<Layer> head_layers_;  // last one produces the logits
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 60;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  ModelShape shape{};  // num_classes is taken from the dataset
  bool zero_head = false;

  void validate() const;
};

// Held-out data scored after every epoch: ACC on the clean clouds and one
// ASR per trigger spec (implant seed `seed`).
struct ValidationSplit {
  Dataset data;
  std::vector<TriggerSpec> specs;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;  // mean over the epoch's minibatch passes
  std::optional<double> acc;
  std::vector<double> target_asr;

  // 0 when no ASR was measured.
  double mean_asr() const;
};

struct TrainResult {
  MiniPointModel model;                     // after the last epoch
  std::vector<EpochMetrics> history;
  std::vector<std::vector<double>> checkpoints;  // parameters after each epoch

  MiniPointModel checkpoint(std::size_t epoch) const;
};

// Adam on mean minibatch cross-entropy; deterministic in (dataset, config).
// Throws std::runtime_error on a non-finite loss.
TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const ValidationSplit* validation = nullptr);
TrainResult train(const PoisonedDataset& dataset, const TrainConfig& config,
                  const ValidationSplit* validation = nullptr);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_parameter = 0;
  std::size_t checked = 0;
  bool all_finite = true;
};

// Central differences on `num_params` parameters drawn without replacement
// (all of them when the model is smaller). Relative error is
// |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check(const MiniPointModel& model, const PointCloud& cloud, int label,
                           double epsilon, std::size_t num_params = 200,
                           std::uint64_t seed = 0);

// Argmax of ACC + mean ASR, ties to the earliest epoch.
std::size_t select_best_checkpoint(std::span<const EpochMetrics> history);
// Argmax of ACC alone, ties to the earliest epoch.
std::size_t select_best_acc_checkpoint(std::span<const EpochMetrics> history);

}  // namespace stone

#endif  // STONE_MODEL_H_
