#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcav/cav.hpp"
#include "tcav/dataset.hpp"
#include "tcav/model.hpp"
#include "tcav/tensor.hpp"

namespace tcav {

// One conceptual-sensitivity value: the directional derivative of the class-k
// logit along the CAV, evaluated at one input's layer activation.
struct SensitivityRecord {
  std::size_t input_index = 0;
  int class_index = 0;
  std::string layer;
  std::string concept_name;
  double value = 0.0;
};

// S = grad(h_k, activation at `layer`) · cav.direction, computed analytically.
double directional_derivative(const LayeredModel& model, const std::string& layer, const Cav& cav,
                              int class_index, const Tensor& x);

// Per-input sensitivities for a batch of inputs [n, <input shape>].
std::vector<SensitivityRecord> conceptual_sensitivities(const LayeredModel& model,
                                                        const std::string& layer, const Cav& cav,
                                                        int class_index, const Tensor& inputs);

// Fraction of inputs with strictly positive sensitivity. Exact zeros count as
// not-positive. `inputs` is [n, <input shape>], all belonging to class k.
double tcav_score(const LayeredModel& model, const std::string& layer, const Cav& cav,
                  int class_index, const Tensor& inputs);

// Fast path: grads is [n, m] of precomputed logit gradients at the layer;
// direction is [m]. Used by the significance test, which reuses one gradient
// batch across hundreds of retrained CAVs.
double tcav_score_from_grads(const Tensor& grads, const Tensor& direction);

struct SignificanceOptions {
  int runs = 500;
  double alpha = 0.05;
  int bonferroni_m = 2;
  // Negatives drawn per run from the pool (without replacement).
  // 0 = min(pool size, number of positives), or pool/4 when resampling
  // positives too.
  int negatives_per_run = 0;
  // Random-concept false-positive control: draw the positives afresh from the
  // negative pool each run, disjoint from that run's negatives. Turned on
  // automatically when `positives` and the pool are the same named set. With
  // a fixed positive set every run shares that set's sampling bias, so a
  // genuinely meaningless concept can still converge to a mean score away
  // from 0.5; redrawing positives per run makes the runs exchangeable and
  // the null exact.
  bool resample_positives = false;
  // Positives drawn per run in resample mode. 0 = same as negatives_per_run.
  int positives_per_run = 0;
  uint64_t master_seed = 1;
  ProbeConfig probe;
  // Abort if more than this fraction of CAV training runs fail.
  double max_failure_fraction = 0.10;

  void validate() const;
};

struct TcavReport {
  std::string concept_name;
  int class_index = 0;
  std::string layer;
  std::vector<double> scores;  // per-run TCAV scores, each in [0,1]
  double mean = 0.0;
  double p_value = 1.0;
  bool significant = false;
  double alpha = 0.05;
  int bonferroni_m = 2;
  int runs = 0;  // completed runs; equals scores.size()
  uint64_t master_seed = 0;
};

// Retrains the CAV `runs` times with freshly resampled negatives, scores each
// run on `class_inputs`, and applies a one-sample two-sided t-test of the
// scores against 0.5. significant <=> p < alpha / bonferroni_m. Zero-variance
// score samples decide by mean: mean != 0.5 is significant, mean == 0.5 is
// not. More than max_failure_fraction failed runs aborts.
TcavReport significance_test(const LayeredModel& model, const std::string& layer,
                             const ConceptSet& positives, const ConceptSet& negative_pool,
                             int class_index, const Tensor& class_inputs,
                             const SignificanceOptions& opts = {});

std::string report_to_json(const TcavReport& report);
TcavReport report_from_json(const std::string& text);
void save_report(const std::string& path, const TcavReport& report);
TcavReport load_report(const std::string& path);

// One CSV row per (concept, class, layer).
std::string reports_to_csv(const std::vector<TcavReport>& reports);

struct DivergenceEntry {
  std::string concept_name;
  std::string layer;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double mean_delta = 0.0;  // mean_b - mean_a
  double ks = 0.0;          // two-sample KS statistic over per-run scores
  bool flagged = false;     // ks > threshold
};

struct DivergenceSummary {
  double ks_threshold = 0.5;
  std::vector<DivergenceEntry> entries;  // sorted by (concept, layer)
};

// Compares two report sets covering the same (concept, layer) grid, e.g.
// clean inputs vs adversarial inputs. Flags concepts whose score
// distributions drift apart.
DivergenceSummary score_distribution_compare(const std::vector<TcavReport>& a,
                                             const std::vector<TcavReport>& b,
                                             double ks_threshold = 0.5);

std::string divergence_to_json(const DivergenceSummary& summary);

}  // namespace tcav
