#include "tcav/cav.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tcav/errors.hpp"
#include "tcav/rng.hpp"

using nlohmann::json;

namespace tcav {

void ProbeConfig::validate() const {
  if (epochs < 1) throw InputError("probe config: epochs must be >= 1");
  if (learning_rate <= 0.0) throw InputError("probe config: learning rate must be positive");
  if (l2 < 0.0) throw InputError("probe config: l2 must be non-negative");
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) {
    throw InputError("probe config: heldout fraction must lie in (0,1)");
  }
}

namespace {

constexpr double kProbeMomentum = 0.9;

// Stratified split: per class, a seeded shuffle sends a heldout_fraction
// prefix to the held-out side (at least one example on each side). The
// shuffle seed depends only on cfg.seed and the class's position list, so
// swapping the roles of two equally-sized sides selects mirrored splits and
// the swapped probe is the exact negation of the original.
void split_indices(const std::vector<int>& y, const ProbeConfig& cfg, std::vector<int>& train_idx,
                   std::vector<int>& held_idx) {
  for (int cls = 1; cls >= 0; --cls) {  // class 1 occupies the leading block
    std::vector<int> idx;
    for (size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) idx.push_back(static_cast<int>(i));
    }
    if (idx.size() < 2) {
      throw InputError("probe: need at least 2 examples per side to split off a held-out set");
    }
    Rng rng(derive_seed(cfg.seed, 0x5117u));
    rng.shuffle(idx);
    size_t nheld = static_cast<size_t>(
        std::nearbyint(cfg.heldout_fraction * static_cast<double>(idx.size())));
    nheld = std::max<size_t>(1, std::min(nheld, idx.size() - 1));
    for (size_t i = 0; i < idx.size(); ++i) {
      (i < nheld ? held_idx : train_idx).push_back(idx[i]);
    }
  }
}

}  // namespace

LogisticProbe fit_logistic(const Tensor& X, const std::vector<int>& y, const ProbeConfig& cfg) {
  cfg.validate();
  if (X.rank() != 2) throw InputError("probe: activations must be [n,m], got " + X.shape_str());
  int64_t n = X.extent(0), m = X.extent(1);
  if (n != static_cast<int64_t>(y.size())) throw InputError("probe: label count mismatch");
  if (n < 4) throw InputError("probe: cannot split fewer than 4 examples");
  for (int v : y) {
    if (v != 0 && v != 1) throw InputError("probe: labels must be 0/1");
  }

  // Degenerate activations: every row identical -> nothing to separate.
  bool all_rows_equal = true;
  for (int64_t i = 1; i < n && all_rows_equal; ++i) {
    for (int64_t j = 0; j < m; ++j) {
      if (X[i * m + j] != X[j]) {
        all_rows_equal = false;
        break;
      }
    }
  }
  if (all_rows_equal) {
    throw NumericError("probe: activations are inseparable (all examples identical at this layer)");
  }

  std::vector<int> train_idx, held_idx;
  split_indices(y, cfg, train_idx, held_idx);
  int64_t nt = static_cast<int64_t>(train_idx.size());

  // Center per feature and scale by one global factor (the RMS norm of the
  // centered training rows). A scalar scale keeps gradient descent stable at
  // any activation magnitude or width without distorting the learned
  // direction the way per-feature rescaling would.
  std::vector<double> mu(static_cast<size_t>(m), 0.0);
  for (int i : train_idx) {
    for (int64_t j = 0; j < m; ++j) mu[j] += X[i * m + j];
  }
  for (int64_t j = 0; j < m; ++j) mu[j] /= static_cast<double>(nt);
  double sumsq = 0.0;
  for (int i : train_idx) {
    for (int64_t j = 0; j < m; ++j) {
      double d = X[i * m + j] - mu[j];
      sumsq += d * d;
    }
  }
  double scale = std::sqrt(sumsq / static_cast<double>(nt));
  if (scale < 1e-12) {
    throw NumericError("probe: activations are inseparable (no variance in the training split)");
  }

  std::vector<double> w(static_cast<size_t>(m), 0.0), vw(static_cast<size_t>(m), 0.0);
  double b = 0.0, vb = 0.0;
  std::vector<double> gw(static_cast<size_t>(m));
  std::vector<double> xs(static_cast<size_t>(m));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (int i : train_idx) {
      const double* xi = X.data() + static_cast<int64_t>(i) * m;
      double z = b;
      for (int64_t j = 0; j < m; ++j) {
        xs[j] = (xi[j] - mu[j]) / scale;
        z += w[j] * xs[j];
      }
      double ysign = y[static_cast<size_t>(i)] == 1 ? 1.0 : -1.0;
      // d/dz of log(1+exp(-y z)) = -y * sigmoid(-y z)
      double t = -ysign * z;
      double s = t > 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
      double coeff = -ysign * s;
      for (int64_t j = 0; j < m; ++j) gw[j] += coeff * xs[j];
      gb += coeff;
    }
    double inv = 1.0 / static_cast<double>(nt);
    for (int64_t j = 0; j < m; ++j) {
      double g = gw[j] * inv + cfg.l2 * w[j];
      vw[j] = kProbeMomentum * vw[j] - cfg.learning_rate * g;
      w[j] += vw[j];
    }
    vb = kProbeMomentum * vb - cfg.learning_rate * (gb * inv);
    b += vb;
  }

  LogisticProbe probe;
  probe.weights = Tensor({m});
  // Back to raw space: w_raw = w/scale, b_raw = b - w.mu/scale.
  double braw = b;
  for (int64_t j = 0; j < m; ++j) {
    probe.weights.data()[j] = w[j] / scale;
    braw -= w[j] * mu[j] / scale;
  }
  probe.bias = braw;

  int hits = 0;
  for (int i : held_idx) {
    double z = probe.bias;
    const double* xi = X.data() + static_cast<int64_t>(i) * m;
    for (int64_t j = 0; j < m; ++j) z += probe.weights[j] * xi[j];
    int pred = z > 0.0 ? 1 : 0;
    if (pred == y[static_cast<size_t>(i)]) ++hits;
  }
  probe.heldout_accuracy = static_cast<double>(hits) / static_cast<double>(held_idx.size());
  return probe;
}

Cav train_cav_on_activations(const Tensor& pos, const Tensor& neg, const ProbeConfig& cfg,
                             std::string concept_name, std::string layer,
                             std::string negative_id) {
  if (pos.rank() != 2 || neg.rank() != 2 || pos.extent(1) != neg.extent(1)) {
    throw InputError("train_cav: activations must be [n,m] with equal m (" + pos.shape_str() +
                     " vs " + neg.shape_str() + ")");
  }
  int64_t np = pos.extent(0), nn = neg.extent(0), m = pos.extent(1);
  Tensor X({np + nn, m});
  std::copy(pos.data(), pos.data() + np * m, X.data());
  std::copy(neg.data(), neg.data() + nn * m, X.data() + np * m);
  std::vector<int> y(static_cast<size_t>(np + nn), 0);
  std::fill(y.begin(), y.begin() + static_cast<ptrdiff_t>(np), 1);

  LogisticProbe probe = fit_logistic(X, y, cfg);

  double norm = 0.0;
  for (int64_t j = 0; j < m; ++j) norm += probe.weights[j] * probe.weights[j];
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw NumericError("train_cav: probe weights degenerate (zero or non-finite norm)");
  }

  Cav cav;
  cav.concept_name = std::move(concept_name);
  cav.negative_id = std::move(negative_id);
  cav.layer = std::move(layer);
  cav.direction = Tensor({m});
  for (int64_t j = 0; j < m; ++j) cav.direction.data()[j] = probe.weights[j] / norm;
  cav.heldout_accuracy = probe.heldout_accuracy;
  cav.train_seed = cfg.seed;
  cav.probe = cfg;

  // Orientation contract: mean projection over held-out positives must exceed
  // the held-out negatives'. Recompute the same split to check, flipping if a
  // near-chance probe ended up pointed the wrong way.
  std::vector<int> train_idx, held_idx;
  split_indices(y, cfg, train_idx, held_idx);
  double mp = 0.0, mn = 0.0;
  int cp = 0, cn = 0;
  for (int i : held_idx) {
    double z = 0.0;
    for (int64_t j = 0; j < m; ++j) z += cav.direction[j] * X[static_cast<int64_t>(i) * m + j];
    if (y[static_cast<size_t>(i)] == 1) {
      mp += z;
      ++cp;
    } else {
      mn += z;
      ++cn;
    }
  }
  if (cp > 0 && cn > 0 && mp / cp < mn / cn) {
    for (int64_t j = 0; j < m; ++j) cav.direction.data()[j] = -cav.direction[j];
  }
  return cav;
}

Cav train_cav(const LayeredModel& model, const std::string& layer, const ConceptSet& positives,
              const ConceptSet& negatives, const ProbeConfig& cfg) {
  positives.validate();
  negatives.validate();
  Tensor pos = model.activations_at(layer, positives.examples);
  Tensor neg = model.activations_at(layer, negatives.examples);
  Cav cav = train_cav_on_activations(pos, neg, cfg, positives.name, layer, negatives.name);
  cav.positive_provenance = positives.provenance;
  return cav;
}

std::vector<Cav> train_relative_cav(const LayeredModel& model, const std::string& layer,
                                    const std::vector<ConceptSet>& concepts,
                                    const ProbeConfig& cfg) {
  if (concepts.size() < 2) {
    throw InputError("train_relative_cav: need at least 2 concepts, got " +
                     std::to_string(concepts.size()));
  }
  std::vector<Cav> out;
  for (size_t i = 0; i < concepts.size(); ++i) {
    ConceptSet negatives;
    std::string others;
    for (size_t j = 0; j < concepts.size(); ++j) {
      if (j == i) continue;
      negatives.examples.insert(negatives.examples.end(), concepts[j].examples.begin(),
                                concepts[j].examples.end());
      others += (others.empty() ? "" : "+") + concepts[j].name;
    }
    negatives.name = "relative:" + others;
    negatives.provenance = "complement-of:" + concepts[i].name;
    Cav cav = train_cav(model, layer, concepts[i], negatives, cfg);
    cav.relative = true;
    out.push_back(std::move(cav));
  }
  return out;
}

std::vector<std::pair<std::string, double>> probe_layers(const LayeredModel& model,
                                                         const ConceptSet& positives,
                                                         const ConceptSet& negatives,
                                                         const ProbeConfig& cfg) {
  std::vector<std::pair<std::string, double>> out;
  for (const std::string& layer : model.layer_names()) {
    Cav cav = train_cav(model, layer, positives, negatives, cfg);
    out.emplace_back(layer, cav.heldout_accuracy);
  }
  return out;
}

ConceptSet resample_negatives(const ConceptSet& pool, int size, uint64_t seed) {
  pool.validate();
  if (size < 1 || static_cast<size_t>(size) > pool.examples.size()) {
    throw InputError("resample_negatives: requested " + std::to_string(size) + " of " +
                     std::to_string(pool.examples.size()) + " pool examples");
  }
  Rng rng(seed);
  std::vector<int> idx =
      rng.sample_without_replacement(static_cast<int>(pool.examples.size()), size);
  ConceptSet out;
  out.name = pool.name + ":sub" + std::to_string(seed);
  out.provenance = "resampled:" + pool.name + ":size=" + std::to_string(size) +
                   ":seed=" + std::to_string(seed);
  for (int i : idx) out.examples.push_back(pool.examples[static_cast<size_t>(i)]);
  return out;
}

// --- store ---------------------------------------------------------------------

void save_cav(const std::string& path, const Cav& cav) {
  json j;
  j["concept"] = cav.concept_name;
  j["negative_id"] = cav.negative_id;
  j["layer"] = cav.layer;
  j["m"] = cav.direction.size();
  j["vector"] = std::vector<double>(cav.direction.data(),
                                    cav.direction.data() + cav.direction.size());
  j["heldout_accuracy"] = cav.heldout_accuracy;
  j["train_seed"] = cav.train_seed;
  j["relative"] = cav.relative;
  j["positive_provenance"] = cav.positive_provenance;
  j["probe_config"] = {{"epochs", cav.probe.epochs},
                       {"learning_rate", cav.probe.learning_rate},
                       {"l2", cav.probe.l2},
                       {"heldout_fraction", cav.probe.heldout_fraction},
                       {"seed", cav.probe.seed}};
  std::ofstream out(path);
  if (!out) throw InputError("save_cav: cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

Cav load_cav(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("load_cav: cannot open: " + path);
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw InputError("load_cav: malformed JSON in " + path);
  Cav cav;
  try {
    cav.concept_name = j.at("concept").get<std::string>();
    cav.negative_id = j.at("negative_id").get<std::string>();
    cav.layer = j.at("layer").get<std::string>();
    std::vector<double> v = j.at("vector").get<std::vector<double>>();
    cav.direction = Tensor::from_vector(std::move(v));
    cav.heldout_accuracy = j.at("heldout_accuracy").get<double>();
    cav.train_seed = j.at("train_seed").get<uint64_t>();
    cav.relative = j.value("relative", false);
    cav.positive_provenance = j.value("positive_provenance", std::string());
    const json& p = j.at("probe_config");
    cav.probe.epochs = p.at("epochs").get<int>();
    cav.probe.learning_rate = p.at("learning_rate").get<double>();
    cav.probe.l2 = p.at("l2").get<double>();
    cav.probe.heldout_fraction = p.at("heldout_fraction").get<double>();
    cav.probe.seed = p.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw InputError("load_cav: missing or mistyped field in " + path + ": " + e.what());
  }
  if (j.at("m").get<int64_t>() != cav.direction.size()) {
    throw InputError("load_cav: vector length disagrees with m in " + path);
  }
  return cav;
}

}  // namespace tcav
