#include "stone/model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "stone/rng.h"

namespace stone {
namespace {

constexpr char kMagic[8] = {'S', 'T', 'O', 'N', 'E', 'M', 'D', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

void softmax_in_place(std::vector<double>& z) {
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : z) v /= total;
}

double log_sum_exp(const std::vector<double>& z) {
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - top);
  return top + std::log(total);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("model file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("model file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

// Forward activations of one cloud, kept for the backward pass.
struct MiniPointModel::Cache {
  std::vector<double> input;                   // K x 3, mapped to [-1, 1]
  std::vector<std::vector<double>> point_act;  // per layer, K x width, post-ReLU
  std::vector<double> pooled;
  std::vector<int> argmax;                     // point index per pooled channel
  std::vector<std::vector<double>> head_act;   // per head layer; hidden ones post-ReLU
};

void ModelShape::validate() const {
  if (num_classes < 1) throw std::invalid_argument("model: need at least one class");
  for (int w : point_widths) {
    if (w < 1) throw std::invalid_argument("model: layer widths must be positive");
  }
  for (int w : head_widths) {
    if (w < 1) throw std::invalid_argument("model: layer widths must be positive");
  }
}

ModelShape ModelShape::single_linear(int num_classes) {
  return ModelShape{{}, {}, num_classes};
}

MiniPointModel::MiniPointModel(ModelShape shape, std::uint64_t seed, bool zero_head)
    : shape_(std::move(shape)) {
  shape_.validate();
  build_layout();
  Rng rng(seed);
  auto init = [&](const Layer& l) {
    const double scale = std::sqrt(2.0 / l.in);
    for (int i = 0; i < l.in * l.out; ++i) params_[l.weights + i] = scale * rng.normal();
  };
  for (const auto& l : point_layers_) init(l);
  for (const auto& l : head_layers_) init(l);
  if (zero_head) {
    const Layer& last = head_layers_.back();
    std::fill_n(params_.begin() + last.weights, last.in * last.out, 0.0);
    std::fill_n(params_.begin() + last.bias, last.out, 0.0);
  }
}

void MiniPointModel::build_layout() {
  std::size_t offset = 0;
  auto add = [&](int in, int out) {
    Layer l;
    l.in = in;
    l.out = out;
    l.weights = offset;
    offset += static_cast<std::size_t>(in) * out;
    l.bias = offset;
    offset += out;
    return l;
  };
  point_layers_.clear();
  head_layers_.clear();
  int width = 3;
  for (int w : shape_.point_widths) {
    point_layers_.push_back(add(width, w));
    width = w;
  }
  for (int w : shape_.head_widths) {
    head_layers_.push_back(add(width, w));
    width = w;
  }
  head_layers_.push_back(add(width, shape_.num_classes));
  params_.assign(offset, 0.0);
}

namespace {

// y = W x + b for one row-major layer.
void affine(const double* w, const double* b, const double* x, int in, int out, double* y) {
  for (int o = 0; o < out; ++o) {
    const double* row = w + static_cast<std::size_t>(o) * in;
    double s = b[o];
    for (int i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

}  // namespace

std::vector<double> MiniPointModel::forward(const PointCloud& cloud, Cache& cache) const {
  if (cloud.empty()) throw std::invalid_argument("model: empty cloud");
  const int k = static_cast<int>(cloud.size());
  cache.input.resize(static_cast<std::size_t>(k) * 3);
  for (int p = 0; p < k; ++p) {
    for (int a = 0; a < 3; ++a) cache.input[3 * p + a] = 2.0 * cloud.points[p][a] - 1.0;
  }

  const double* prev = cache.input.data();
  int width = 3;
  cache.point_act.resize(point_layers_.size());
  for (std::size_t l = 0; l < point_layers_.size(); ++l) {
    const Layer& layer = point_layers_[l];
    auto& act = cache.point_act[l];
    act.resize(static_cast<std::size_t>(k) * layer.out);
    for (int p = 0; p < k; ++p) {
      double* y = act.data() + static_cast<std::size_t>(p) * layer.out;
      affine(&params_[layer.weights], &params_[layer.bias],
             prev + static_cast<std::size_t>(p) * width, layer.in, layer.out, y);
      for (int o = 0; o < layer.out; ++o) y[o] = std::max(y[o], 0.0);
    }
    prev = act.data();
    width = layer.out;
  }

  // Max-pool; strict comparison routes ties to the lowest point index.
  cache.pooled.assign(prev, prev + width);
  cache.argmax.assign(width, 0);
  for (int p = 1; p < k; ++p) {
    const double* row = prev + static_cast<std::size_t>(p) * width;
    for (int f = 0; f < width; ++f) {
      if (row[f] > cache.pooled[f]) {
        cache.pooled[f] = row[f];
        cache.argmax[f] = p;
      }
    }
  }

  cache.head_act.resize(head_layers_.size());
  const std::vector<double>* h = &cache.pooled;
  for (std::size_t l = 0; l < head_layers_.size(); ++l) {
    const Layer& layer = head_layers_[l];
    auto& out = cache.head_act[l];
    out.resize(layer.out);
    affine(&params_[layer.weights], &params_[layer.bias], h->data(), layer.in, layer.out,
           out.data());
    if (l + 1 < head_layers_.size()) {
      for (double& v : out) v = std::max(v, 0.0);
    }
    h = &out;
  }
  return cache.head_act.back();
}

void MiniPointModel::backward(const Cache& cache, std::vector<double> dlogits,
                              std::vector<double>& grad) const {
  // Head, last layer first. `delta` is dLoss/d(pre-activation).
  std::vector<double> delta = std::move(dlogits);
  for (std::size_t l = head_layers_.size(); l-- > 0;) {
    const Layer& layer = head_layers_[l];
    const std::vector<double>& in = l == 0 ? cache.pooled : cache.head_act[l - 1];
    for (int o = 0; o < layer.out; ++o) {
      double* row = &grad[layer.weights + static_cast<std::size_t>(o) * layer.in];
      for (int i = 0; i < layer.in; ++i) row[i] += delta[o] * in[i];
      grad[layer.bias + o] += delta[o];
    }
    std::vector<double> din(layer.in, 0.0);
    for (int o = 0; o < layer.out; ++o) {
      const double* row = &params_[layer.weights + static_cast<std::size_t>(o) * layer.in];
      for (int i = 0; i < layer.in; ++i) din[i] += row[i] * delta[o];
    }
    if (l > 0) {
      for (int i = 0; i < layer.in; ++i) {
        if (!(in[i] > 0.0)) din[i] = 0.0;
      }
    }
    delta = std::move(din);
  }
  if (point_layers_.empty()) return;

  // Only argmax points receive gradient; visit them in index order.
  const int width = point_layers_.back().out;
  std::vector<int> points(cache.argmax.begin(), cache.argmax.end());
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  for (int p : points) {
    std::vector<double> d(width, 0.0);
    for (int f = 0; f < width; ++f) {
      if (cache.argmax[f] == p) d[f] = delta[f];
    }
    for (std::size_t l = point_layers_.size(); l-- > 0;) {
      const Layer& layer = point_layers_[l];
      const double* out = cache.point_act[l].data() + static_cast<std::size_t>(p) * layer.out;
      const double* in = l == 0
                             ? cache.input.data() + static_cast<std::size_t>(p) * 3
                             : cache.point_act[l - 1].data() +
                                   static_cast<std::size_t>(p) * layer.in;
      for (int o = 0; o < layer.out; ++o) {
        if (!(out[o] > 0.0)) d[o] = 0.0;
      }
      for (int o = 0; o < layer.out; ++o) {
        if (d[o] == 0.0) continue;
        double* row = &grad[layer.weights + static_cast<std::size_t>(o) * layer.in];
        for (int i = 0; i < layer.in; ++i) row[i] += d[o] * in[i];
        grad[layer.bias + o] += d[o];
      }
      if (l == 0) break;
      std::vector<double> din(layer.in, 0.0);
      for (int o = 0; o < layer.out; ++o) {
        if (d[o] == 0.0) continue;
        const double* row = &params_[layer.weights + static_cast<std::size_t>(o) * layer.in];
        for (int i = 0; i < layer.in; ++i) din[i] += row[i] * d[o];
      }
      d = std::move(din);
    }
  }
}

std::vector<double> MiniPointModel::logits(const PointCloud& cloud) const {
  Cache cache;
  return forward(cloud, cache);
}

std::vector<double> MiniPointModel::predict(const PointCloud& cloud) const {
  auto z = logits(cloud);
  softmax_in_place(z);
  return z;
}

double MiniPointModel::loss(const PointCloud& cloud, int label, std::vector<double>* grad) const {
  if (label < 0 || label >= shape_.num_classes) {
    throw std::invalid_argument("model: label out of range");
  }
  Cache cache;
  const auto z = forward(cloud, cache);
  const double value = log_sum_exp(z) - z[label];
  if (grad != nullptr) {
    if (grad->size() != params_.size()) throw std::invalid_argument("model: gradient size");
    auto dlogits = z;
    softmax_in_place(dlogits);
    dlogits[label] -= 1.0;
    backward(cache, std::move(dlogits), *grad);
  }
  return value;
}

void MiniPointModel::write(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(shape_.num_classes));
  put_u32(out, static_cast<std::uint32_t>(shape_.point_widths.size()));
  for (int w : shape_.point_widths) put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(shape_.head_widths.size()));
  for (int w : shape_.head_widths) put_u32(out, static_cast<std::uint32_t>(w));
  put_u64(out, params_.size());
  for (double v : params_) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw std::runtime_error("model: write failed");
}

MiniPointModel MiniPointModel::read(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("model: bad magic bytes");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kFormatVersion) {
    throw std::runtime_error("model: unsupported format version " + std::to_string(version));
  }
  constexpr std::uint32_t kMaxDim = 1u << 16;
  auto dim = [&] {
    const std::uint32_t v = get_u32(in);
    if (v > kMaxDim) throw std::runtime_error("model: implausible dimension");
    return static_cast<int>(v);
  };
  ModelShape shape;
  shape.num_classes = dim();
  shape.point_widths.resize(dim());
  for (int& w : shape.point_widths) w = dim();
  shape.head_widths.resize(dim());
  for (int& w : shape.head_widths) w = dim();
  MiniPointModel model(shape, 0);
  const std::uint64_t count = get_u64(in);
  if (count != model.params_.size()) throw std::runtime_error("model: parameter count mismatch");
  for (double& v : model.params_) v = std::bit_cast<double>(get_u64(in));
  return model;
}

void MiniPointModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write(out);
}

MiniPointModel MiniPointModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read(in);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("train: Adam epsilon must be > 0");
}

double EpochMetrics::mean_asr() const {
  if (target_asr.empty()) return 0.0;
  return std::accumulate(target_asr.begin(), target_asr.end(), 0.0) /
         static_cast<double>(target_asr.size());
}

MiniPointModel TrainResult::checkpoint(std::size_t epoch) const {
  if (epoch >= checkpoints.size()) throw std::out_of_range("no such checkpoint");
  MiniPointModel m = model;
  std::copy(checkpoints[epoch].begin(), checkpoints[epoch].end(), m.parameters().begin());
  return m;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const ValidationSplit* validation) {
  config.validate();
  if (dataset.samples.empty()) throw std::invalid_argument("train: empty dataset");
  const std::size_t k = dataset.samples.front().cloud.size();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.samples[i];
    if (s.cloud.size() != k) {
      throw std::invalid_argument("train: sample " + std::to_string(i) +
                                  " has a different point count");
    }
    if (s.label < 0 || s.label >= dataset.num_classes) {
      throw std::invalid_argument("train: sample " + std::to_string(i) + " label out of range");
    }
  }

  ModelShape shape = config.shape;
  shape.num_classes = dataset.num_classes;
  TrainResult result{MiniPointModel(shape, mix_seed(config.seed, 0), config.zero_head), {}, {}};
  MiniPointModel& model = result.model;
  const std::size_t n_params = model.num_parameters();
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0), grad(n_params);

  std::vector<std::size_t> order(dataset.size());
  Rng order_rng(mix_seed(config.seed, 1));
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = dataset.samples[order[b]];
        const double l = model.loss(s.cloud, s.label, &grad);
        if (!std::isfinite(l)) {
          std::ostringstream msg;
          msg << "train: non-finite loss at epoch " << epoch << ", sample " << order[b];
          throw std::runtime_error(msg.str());
        }
        epoch_loss += l;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      auto params = model.parameters();
      for (std::size_t j = 0; j < n_params; ++j) {
        const double g = grad[j] * inv;
        m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
        v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
        params[j] -= config.learning_rate * (m[j] / c1) /
                     (std::sqrt(v[j] / c2) + config.adam_epsilon);
      }
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.train_loss = epoch_loss / static_cast<double>(dataset.size());
    if (validation != nullptr) {
      metrics.acc = acc(model, validation->data);
      for (const auto& spec : validation->specs) {
        metrics.target_asr.push_back(asr(model, validation->data, spec, validation->seed));
      }
    }
    result.history.push_back(std::move(metrics));
    auto p = model.parameters();
    result.checkpoints.emplace_back(p.begin(), p.end());
  }
  return result;
}

TrainResult train(const PoisonedDataset& dataset, const TrainConfig& config,
                  const ValidationSplit* validation) {
  return train(dataset.data, config, validation);
}

GradCheckReport grad_check(const MiniPointModel& model, const PointCloud& cloud, int label,
                           double epsilon, std::size_t num_params, std::uint64_t seed) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) {
    throw std::invalid_argument("grad_check: epsilon must lie in [1e-6, 1e-3]");
  }
  std::vector<double> analytic(model.num_parameters(), 0.0);
  model.loss(cloud, label, &analytic);

  Rng rng(seed);
  const auto picks = rng.sample_without_replacement(
      model.num_parameters(), std::min(num_params, model.num_parameters()));
  MiniPointModel probe = model;
  auto params = probe.parameters();
  GradCheckReport report;
  for (std::size_t idx : picks) {
    const double saved = params[idx];
    params[idx] = saved + epsilon;
    const double up = probe.loss(cloud, label);
    params[idx] = saved - epsilon;
    const double down = probe.loss(cloud, label);
    params[idx] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic[idx];
    if (!std::isfinite(a) || !std::isfinite(numeric)) {
      report.all_finite = false;
      continue;
    }
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_parameter = idx;
    }
    ++report.checked;
  }
  return report;
}

namespace {

template <typename Score>
std::size_t first_argmax(std::span<const EpochMetrics> history, Score score) {
  if (history.empty()) throw std::invalid_argument("checkpoint selection: empty history");
  std::size_t best = 0;
  double best_score = score(history[0]);
  for (std::size_t i = 1; i < history.size(); ++i) {
    const double s = score(history[i]);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

}  // namespace

std::size_t select_best_checkpoint(std::span<const EpochMetrics> history) {
  return first_argmax(history, [](const EpochMetrics& e) {
    return e.acc.value_or(0.0) + e.mean_asr();
  });
}

std::size_t select_best_acc_checkpoint(std::span<const EpochMetrics> history) {
  return first_argmax(history, [](const EpochMetrics& e) { return e.acc.value_or(0.0); });
}

}  // namespace stone
