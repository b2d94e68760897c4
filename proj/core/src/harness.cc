#include "stone/harness.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "stone/rng.h"

namespace stone {
namespace {

std::string format_rate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string format_aux(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void append_unique(std::vector<std::string>& keys, const std::string& key) {
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
}

bool is_rate(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

int Classifier::classify(const PointCloud& cloud) const {
  const auto p = predict(cloud);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

RateResult evaluate_asr(const Classifier& classifier, const Dataset& test,
                        const TriggerSpec& spec, std::uint64_t seed) {
  RateResult result;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& s = test.samples[i];
    if (s.label == spec.target) continue;
    const auto triggered = implant(s.cloud, spec, mix_seed(seed, i));
    const int predicted = classifier.classify(triggered);
    result.log.push_back({static_cast<int>(i), predicted, spec.target});
    ++result.total;
    if (predicted == spec.target) ++result.hits;
  }
  if (result.total == 0) {
    throw std::invalid_argument("ASR: test set has no non-target samples");
  }
  return result;
}

double asr(const Classifier& classifier, const Dataset& test,
           const TriggerSpec& spec, std::uint64_t seed) {
  return evaluate_asr(classifier, test, spec, seed).rate();
}

RateResult evaluate_acc(const Classifier& classifier, const Dataset& test) {
  if (test.samples.empty()) throw std::invalid_argument("ACC: empty test set");
  RateResult result;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& s = test.samples[i];
    const int predicted = classifier.classify(s.cloud);
    result.log.push_back({static_cast<int>(i), predicted, s.label});
    ++result.total;
    if (predicted == s.label) ++result.hits;
  }
  return result;
}

double acc(const Classifier& classifier, const Dataset& test) {
  return evaluate_acc(classifier, test).rate();
}

std::optional<double> ReportRow::mean_asr() const {
  if (target_asr.empty()) return std::nullopt;
  double sum = 0.0;
  for (double v : target_asr) sum += v;
  return sum / static_cast<double>(target_asr.size());
}

void ExperimentReport::validate() const {
  for (const auto& row : rows) {
    for (double v : row.target_asr) {
      if (!is_rate(v)) throw std::invalid_argument("ASR outside [0, 1] in " + row.experiment);
    }
    if (row.acc && !is_rate(*row.acc)) {
      throw std::invalid_argument("ACC outside [0, 1] in " + row.experiment);
    }
  }
}

std::string report_to_csv(const ExperimentReport& report) {
  report.validate();
  std::vector<std::string> param_keys, aux_keys;
  std::size_t max_targets = 0;
  for (const auto& row : report.rows) {
    for (const auto& [k, v] : row.params) append_unique(param_keys, k);
    for (const auto& [k, v] : row.aux) append_unique(aux_keys, k);
    max_targets = std::max(max_targets, row.target_asr.size());
  }

  std::string out = "experiment";
  for (const auto& k : param_keys) out += "," + k;
  for (std::size_t t = 0; t < max_targets; ++t) out += ",asr_t" + std::to_string(t + 1);
  out += ",mean_asr,acc";
  for (const auto& k : aux_keys) out += "," + k;
  out += '\n';

  for (const auto& row : report.rows) {
    out += row.experiment;
    for (const auto& key : param_keys) {
      out += ',';
      for (const auto& [k, v] : row.params) {
        if (k == key) {
          out += v;
          break;
        }
      }
    }
    for (std::size_t t = 0; t < max_targets; ++t) {
      out += ',';
      if (t < row.target_asr.size()) out += format_rate(row.target_asr[t]);
    }
    out += ',';
    if (const auto m = row.mean_asr()) out += format_rate(*m);
    out += ',';
    if (row.acc) out += format_rate(*row.acc);
    for (const auto& key : aux_keys) {
      out += ',';
      for (const auto& [k, v] : row.aux) {
        if (k == key) {
          out += format_aux(v);
          break;
        }
      }
    }
    out += '\n';
  }
  for (const auto& note : report.notes) out += "# " + note + '\n';
  return out;
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& path) {
  write_text(path, report_to_csv(report));
}

void emit_curve_block(const std::string& title,
                      const std::vector<std::pair<double, double>>& points,
                      const std::filesystem::path& path) {
  std::string text = "# " + title + '\n';
  for (const auto& [x, y] : points) text += format_aux(x) + ' ' + format_aux(y) + '\n';
  text += "\n\n";
  write_text(path, text);
}

void emit_prediction_log(const RateResult& result, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : result.log) {
    text += std::to_string(r.sample) + ' ' + std::to_string(r.predicted) + ' ' +
            std::to_string(r.expected) + '\n';
  }
  write_text(path, text);
}

}  // namespace stone
