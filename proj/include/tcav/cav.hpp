#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tcav/dataset.hpp"
#include "tcav/model.hpp"
#include "tcav/tensor.hpp"

namespace tcav {

struct ProbeConfig {
  int epochs = 200;
  double learning_rate = 0.5;
  double l2 = 1e-3;
  double heldout_fraction = 1.0 / 3.0;
  uint64_t seed = 1;

  void validate() const;
};

// L2-regularized logistic regression fitted by full-batch gradient descent on
// standardized features, with weights mapped back to raw activation space.
struct LogisticProbe {
  Tensor weights;  // [m], raw space
  double bias = 0.0;
  double heldout_accuracy = 0.0;
};

// Unit normal of the hyperplane separating a concept's activations from a
// negative set's activations at one layer, oriented toward the concept.
struct Cav {
  std::string concept_name;
  std::string negative_id;
  std::string layer;
  Tensor direction;  // [m], unit norm
  double heldout_accuracy = 0.0;
  uint64_t train_seed = 0;
  bool relative = false;
  std::string positive_provenance;
  ProbeConfig probe;  // config echo
};

LogisticProbe fit_logistic(const Tensor& X, const std::vector<int>& y, const ProbeConfig& cfg);

// Core path used by both the model-backed trainer and synthetic-activation
// tests: rows of pos/neg are activation vectors.
Cav train_cav_on_activations(const Tensor& pos, const Tensor& neg, const ProbeConfig& cfg,
                             std::string concept_name, std::string layer,
                             std::string negative_id);

Cav train_cav(const LayeredModel& model, const std::string& layer, const ConceptSet& positives,
              const ConceptSet& negatives, const ProbeConfig& cfg);

// One CAV per concept, negatives = union of the other concepts' examples.
std::vector<Cav> train_relative_cav(const LayeredModel& model, const std::string& layer,
                                    const std::vector<ConceptSet>& concepts,
                                    const ProbeConfig& cfg);

// Held-out probe accuracy at every capture point, in forward order.
std::vector<std::pair<std::string, double>> probe_layers(const LayeredModel& model,
                                                         const ConceptSet& positives,
                                                         const ConceptSet& negatives,
                                                         const ProbeConfig& cfg);

ConceptSet resample_negatives(const ConceptSet& pool, int size, uint64_t seed);

void save_cav(const std::string& path, const Cav& cav);
Cav load_cav(const std::string& path);

}  // namespace tcav
