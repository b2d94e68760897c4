#ifndef STONE_HARNESS_H_
#define STONE_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stone/geometry.h"
#include "stone/trigger.h"

namespace stone {

// Anything that maps a cloud to a class distribution: the mini point model
// or the kernel surrogate.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int num_classes() const = 0;
  virtual std::vector<double> predict(const PointCloud& cloud) const = 0;
  // Argmax of predict(); ties go to the lowest class index.
  virtual int classify(const PointCloud& cloud) const;
};

// One evaluated input: which test sample, what was predicted, and the label
// counted as a hit (ground truth for ACC, trigger target for ASR).
struct PredictionRecord {
  int sample = 0;
  int predicted = 0;
  int expected = 0;
};

struct RateResult {
  std::size_t hits = 0;
  std::size_t total = 0;
  std::vector<PredictionRecord> log;

  double rate() const {
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  }
};

// Triggers every test cloud whose label differs from spec.target (implant
// seed mix_seed(seed, sample index)) and counts predictions equal to the
// target. Throws when the test set has no non-target sample.
RateResult evaluate_asr(const Classifier& classifier, const Dataset& test,
                        const TriggerSpec& spec, std::uint64_t seed);
double asr(const Classifier& classifier, const Dataset& test,
           const TriggerSpec& spec, std::uint64_t seed);

// Plain accuracy on untriggered clouds. Throws on an empty set.
RateResult evaluate_acc(const Classifier& classifier, const Dataset& test);
double acc(const Classifier& classifier, const Dataset& test);

struct ReportRow {
  std::string experiment;
  std::vector<std::pair<std::string, std::string>> params;
  std::vector<double> target_asr;
  std::optional<double> acc;
  std::vector<std::pair<std::string, double>> aux;

  // Arithmetic mean of target_asr; empty when there are no targets.
  std::optional<double> mean_asr() const;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  // Written after the rows as `# ...` lines.
  std::vector<std::string> notes;

  // Throws when a rate lies outside [0, 1].
  void validate() const;
};

// CSV: header `experiment,<param keys>,asr_t1..asr_tN,mean_asr,acc,<aux keys>`
// where keys are collected in first-appearance order. Rates are printed with
// 4 decimals, auxiliary values with 10 significant digits, missing cells are
// empty.
std::string report_to_csv(const ExperimentReport& report);
void emit_report(const ExperimentReport& report, const std::filesystem::path& path);

// gnuplot data block: `# <title>` then one `x y` line per point.
void emit_curve_block(const std::string& title,
                      const std::vector<std::pair<double, double>>& points,
                      const std::filesystem::path& path);

// Raw prediction log, one `sample predicted expected` line per record.
void emit_prediction_log(const RateResult& result, const std::filesystem::path& path);

}  // namespace stone

#endif  // STONE_HARNESS_H_
