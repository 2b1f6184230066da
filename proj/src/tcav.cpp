#include "tcav/tcav.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tcav/errors.hpp"
#include "tcav/rng.hpp"
#include "tcav/stats.hpp"

namespace tcav {

namespace {

void check_cav_for_layer(const LayeredModel& model, const std::string& layer, const Cav& cav) {
  if (cav.layer != layer) {
    throw InputError("cav was trained at layer '" + cav.layer + "', asked to score at '" + layer +
                     "'");
  }
  int64_t m = model.activation_width(layer);
  if (cav.direction.rank() != 1 || cav.direction.extent(0) != m) {
    throw InputError("cav direction is " + cav.direction.shape_str() + " but layer '" + layer +
                     "' has width " + std::to_string(m));
  }
}

void check_class(const LayeredModel& model, int k) {
  if (k < 0 || k >= model.num_classes()) {
    throw InputError("class index " + std::to_string(k) + " out of range [0," +
                     std::to_string(model.num_classes()) + ")");
  }
}

double dot(const Tensor& grads, int64_t row, const Tensor& direction) {
  int64_t m = direction.extent(0);
  const double* g = grads.data() + row * m;
  const double* v = direction.data();
  double s = 0.0;
  for (int64_t j = 0; j < m; ++j) s += g[j] * v[j];
  return s;
}

}  // namespace

double directional_derivative(const LayeredModel& model, const std::string& layer, const Cav& cav,
                              int class_index, const Tensor& x) {
  check_cav_for_layer(model, layer, cav);
  check_class(model, class_index);
  Tensor act = model.activation_at(layer, x);
  Tensor grad = model.logit_grad_at(layer, class_index, act);
  double s = dot(grad.reshaped({1, grad.extent(0)}), 0, cav.direction);
  if (!std::isfinite(s)) throw NumericError("non-finite conceptual sensitivity");
  return s;
}

std::vector<SensitivityRecord> conceptual_sensitivities(const LayeredModel& model,
                                                        const std::string& layer, const Cav& cav,
                                                        int class_index, const Tensor& inputs) {
  check_cav_for_layer(model, layer, cav);
  check_class(model, class_index);
  if (inputs.rank() < 2 || inputs.extent(0) == 0) {
    throw InputError("conceptual_sensitivities: need a non-empty batch, got " +
                     inputs.shape_str());
  }
  int64_t n = inputs.extent(0);
  std::vector<Tensor> images;
  images.reserve(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) images.push_back(row(inputs, i));
  Tensor acts = model.activations_at(layer, images);
  Tensor grads = model.logit_grads_at(layer, class_index, acts);
  std::vector<SensitivityRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    SensitivityRecord r;
    r.input_index = static_cast<std::size_t>(i);
    r.class_index = class_index;
    r.layer = layer;
    r.concept_name = cav.concept_name;
    r.value = dot(grads, i, cav.direction);
    if (!std::isfinite(r.value)) {
      throw NumericError("non-finite conceptual sensitivity at input " + std::to_string(i));
    }
    out.push_back(std::move(r));
  }
  return out;
}

double tcav_score(const LayeredModel& model, const std::string& layer, const Cav& cav,
                  int class_index, const Tensor& inputs) {
  std::vector<SensitivityRecord> sens =
      conceptual_sensitivities(model, layer, cav, class_index, inputs);
  int64_t positive = 0;
  for (const SensitivityRecord& r : sens) {
    if (r.value > 0.0) ++positive;
  }
  return static_cast<double>(positive) / static_cast<double>(sens.size());
}

double tcav_score_from_grads(const Tensor& grads, const Tensor& direction) {
  if (grads.rank() != 2 || direction.rank() != 1 || grads.extent(1) != direction.extent(0)) {
    throw InputError("tcav_score_from_grads: grads " + grads.shape_str() + " vs direction " +
                     direction.shape_str());
  }
  int64_t n = grads.extent(0);
  if (n == 0) throw InputError("tcav_score_from_grads: empty gradient batch");
  int64_t positive = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (dot(grads, i, direction) > 0.0) ++positive;
  }
  return static_cast<double>(positive) / static_cast<double>(n);
}

void SignificanceOptions::validate() const {
  if (runs < 2) throw InputError("significance test needs at least 2 runs");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must be in (0,1)");
  if (bonferroni_m < 1) throw InputError("bonferroni_m must be >= 1");
  if (negatives_per_run < 0) throw InputError("negatives_per_run must be >= 0");
  if (positives_per_run < 0) throw InputError("positives_per_run must be >= 0");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction < 1.0)) {
    throw InputError("max_failure_fraction must be in [0,1)");
  }
  probe.validate();
}

TcavReport significance_test(const LayeredModel& model, const std::string& layer,
                             const ConceptSet& positives, const ConceptSet& negative_pool,
                             int class_index, const Tensor& class_inputs,
                             const SignificanceOptions& opts) {
  opts.validate();
  positives.validate();
  negative_pool.validate();
  check_class(model, class_index);
  if (class_inputs.rank() < 2 || class_inputs.extent(0) == 0) {
    throw InputError("significance_test: need a non-empty class batch, got " +
                     class_inputs.shape_str());
  }

  int pool_size = static_cast<int>(negative_pool.examples.size());
  int n_pos = static_cast<int>(positives.examples.size());
  bool resample_pos = opts.resample_positives ||
                      (positives.name == negative_pool.name && n_pos == pool_size);
  int per_run_neg = opts.negatives_per_run > 0
                        ? opts.negatives_per_run
                        : (resample_pos ? std::max(2, pool_size / 4) : std::min(pool_size, n_pos));
  int per_run_pos = resample_pos
                        ? (opts.positives_per_run > 0 ? opts.positives_per_run : per_run_neg)
                        : n_pos;
  if (per_run_neg < 2) throw InputError("significance_test: needs at least 2 negatives per run");
  if (resample_pos && per_run_pos < 2) {
    throw InputError("significance_test: needs at least 2 positives per run");
  }
  int draw = per_run_neg + (resample_pos ? per_run_pos : 0);
  if (draw > pool_size) {
    throw InputError("significance_test: negative pool has " + std::to_string(pool_size) +
                     " examples, cannot draw " + std::to_string(draw) + " per run");
  }

  // The model is frozen, so activations and logit gradients are computed once
  // and shared across all runs; only the CAV changes per run.
  Tensor pos_acts =
      resample_pos ? Tensor() : model.activations_at(layer, positives.examples);
  Tensor pool_acts = model.activations_at(layer, negative_pool.examples);
  int64_t n_class = class_inputs.extent(0);
  std::vector<Tensor> class_images;
  class_images.reserve(static_cast<std::size_t>(n_class));
  for (int64_t i = 0; i < n_class; ++i) class_images.push_back(row(class_inputs, i));
  Tensor grads =
      model.logit_grads_at(layer, class_index, model.activations_at(layer, class_images));

  int64_t m = pool_acts.extent(1);
  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(opts.runs));
  int failed = 0;
  std::string first_failure;
  auto gather = [&](const std::vector<int>& pick, int from, int count) {
    Tensor out({static_cast<int64_t>(count), m});
    for (int i = 0; i < count; ++i) {
      const double* src = pool_acts.data() + static_cast<int64_t>(pick[from + i]) * m;
      std::copy(src, src + m, out.data() + static_cast<int64_t>(i) * m);
    }
    return out;
  };
  for (int run = 0; run < opts.runs; ++run) {
    uint64_t run_seed = derive_seed(opts.master_seed, static_cast<uint64_t>(run));
    Rng sampler(derive_seed(run_seed, 0x5a3f));
    std::vector<int> pick = sampler.sample_without_replacement(pool_size, draw);
    Tensor run_pos = resample_pos ? gather(pick, per_run_neg, per_run_pos) : pos_acts;
    Tensor neg_acts = gather(pick, 0, per_run_neg);
    ProbeConfig probe = opts.probe;
    probe.seed = derive_seed(run_seed, 0xcab);
    try {
      Cav cav = train_cav_on_activations(run_pos, neg_acts, probe, positives.name, layer,
                                         negative_pool.name + ":run" + std::to_string(run));
      scores.push_back(tcav_score_from_grads(grads, cav.direction));
    } catch (const NumericError& e) {
      ++failed;
      if (first_failure.empty()) first_failure = e.what();
    }
  }

  if (failed > opts.max_failure_fraction * opts.runs || scores.size() < 2) {
    std::ostringstream msg;
    msg << "significance test aborted: " << failed << " of " << opts.runs
        << " CAV training runs failed (limit " << opts.max_failure_fraction * 100 << "%)";
    if (!first_failure.empty()) msg << "; first failure: " << first_failure;
    throw SignificanceAbort(msg.str());
  }

  TTestResult tt = one_sample_ttest(scores, 0.5);
  TcavReport report;
  report.concept_name = positives.name;
  report.class_index = class_index;
  report.layer = layer;
  report.scores = std::move(scores);
  report.mean = tt.mean;
  report.p_value = tt.p;
  report.alpha = opts.alpha;
  report.bonferroni_m = opts.bonferroni_m;
  report.significant = tt.p < opts.alpha / opts.bonferroni_m;
  report.runs = static_cast<int>(report.scores.size());
  report.master_seed = opts.master_seed;
  return report;
}

std::string report_to_json(const TcavReport& report) {
  nlohmann::ordered_json j;
  j["concept"] = report.concept_name;
  j["class"] = report.class_index;
  j["layer"] = report.layer;
  j["scores"] = report.scores;
  j["mean"] = report.mean;
  j["p_value"] = report.p_value;
  j["significant"] = report.significant;
  j["alpha"] = report.alpha;
  j["m"] = report.bonferroni_m;
  j["runs"] = report.runs;
  j["master_seed"] = report.master_seed;
  return j.dump(2) + "\n";
}

TcavReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("bad report JSON: ") + e.what());
  }
  try {
    TcavReport r;
    r.concept_name = j.at("concept").get<std::string>();
    r.class_index = j.at("class").get<int>();
    r.layer = j.at("layer").get<std::string>();
    r.scores = j.at("scores").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.p_value = j.at("p_value").get<double>();
    r.significant = j.at("significant").get<bool>();
    r.alpha = j.at("alpha").get<double>();
    r.bonferroni_m = j.at("m").get<int>();
    r.runs = j.at("runs").get<int>();
    r.master_seed = j.at("master_seed").get<uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad report JSON: ") + e.what());
  }
}

void save_report(const std::string& path, const TcavReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << report_to_json(report);
  if (!out.flush()) throw InputError("failed writing " + path);
}

TcavReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return report_from_json(buf.str());
}

std::string reports_to_csv(const std::vector<TcavReport>& reports) {
  std::ostringstream out;
  out << "concept,class,layer,runs,mean,p_value,significant,alpha,m,master_seed\n";
  for (const TcavReport& r : reports) {
    out << r.concept_name << ',' << r.class_index << ',' << r.layer << ',' << r.runs << ','
        << r.mean << ',' << r.p_value << ',' << (r.significant ? 1 : 0) << ',' << r.alpha << ','
        << r.bonferroni_m << ',' << r.master_seed << '\n';
  }
  return out.str();
}

DivergenceSummary score_distribution_compare(const std::vector<TcavReport>& a,
                                             const std::vector<TcavReport>& b,
                                             double ks_threshold) {
  using Key = std::pair<std::string, std::string>;  // (concept, layer)
  auto index = [](const std::vector<TcavReport>& rs, const char* side) {
    std::map<Key, const TcavReport*> by_key;
    for (const TcavReport& r : rs) {
      if (!by_key.emplace(Key{r.concept_name, r.layer}, &r).second) {
        throw InputError(std::string("duplicate (concept, layer) pair in report set ") + side +
                         ": " + r.concept_name + " @ " + r.layer);
      }
    }
    return by_key;
  };
  std::map<Key, const TcavReport*> left = index(a, "a");
  std::map<Key, const TcavReport*> right = index(b, "b");
  if (left.size() != right.size()) {
    throw InputError("report sets cover different grids: " + std::to_string(left.size()) +
                     " vs " + std::to_string(right.size()) + " (concept, layer) pairs");
  }
  DivergenceSummary summary;
  summary.ks_threshold = ks_threshold;
  for (const auto& [key, ra] : left) {
    auto it = right.find(key);
    if (it == right.end()) {
      throw InputError("report sets cover different grids: " + key.first + " @ " + key.second +
                       " present on one side only");
    }
    const TcavReport* rb = it->second;
    DivergenceEntry e;
    e.concept_name = key.first;
    e.layer = key.second;
    e.mean_a = ra->mean;
    e.mean_b = rb->mean;
    e.mean_delta = rb->mean - ra->mean;
    e.ks = ks_statistic(ra->scores, rb->scores);
    e.flagged = e.ks > ks_threshold;
    summary.entries.push_back(std::move(e));
  }
  return summary;
}

std::string divergence_to_json(const DivergenceSummary& summary) {
  nlohmann::ordered_json j;
  j["ks_threshold"] = summary.ks_threshold;
  j["entries"] = nlohmann::ordered_json::array();
  for (const DivergenceEntry& e : summary.entries) {
    nlohmann::ordered_json je;
    je["concept"] = e.concept_name;
    je["layer"] = e.layer;
    je["mean_a"] = e.mean_a;
    je["mean_b"] = e.mean_b;
    je["mean_delta"] = e.mean_delta;
    je["ks"] = e.ks;
    je["flagged"] = e.flagged;
    j["entries"].push_back(std::move(je));
  }
  return j.dump(2) + "\n";
}

}  // namespace tcav
