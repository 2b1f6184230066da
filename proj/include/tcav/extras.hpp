#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcav/cav.hpp"
#include "tcav/dataset.hpp"
#include "tcav/model.hpp"
#include "tcav/tensor.hpp"

namespace tcav {

struct RankedImage {
  std::size_t index = 0;  // position in the input set
  double cosine = 0.0;    // cosine(f_l(x), cav direction)
};

// Ranks images by descending cosine similarity between their layer activation
// and the CAV; ties broken by input index. Refuses to rank the CAV's own
// training set (detected by provenance when both sides carry one).
std::vector<RankedImage> sort_by_concept(const LayeredModel& model, const std::string& layer,
                                         const Cav& cav, const ConceptSet& images);

enum class DreamStart { noise, image };

struct DreamConfig {
  int steps = 200;
  double step_size = 0.05;
  DreamStart start = DreamStart::noise;
  Tensor start_image;      // used when start == image
  int jitter = 2;          // max cyclic shift per axis per step; 0 disables
  double l2_penalty = 1e-3;
  uint64_t seed = 1;

  void validate() const;
};

struct DreamResult {
  Tensor image;
  // objective v·f_l(x) − λ‖x‖² of the running image: entry 0 is the start,
  // entry i the image after step i.
  std::vector<double> objective;
};

// Gradient ascent on the input maximizing the CAV projection of the layer
// activation, with cyclic-shift jitter and an L2 pull toward black as the
// only regularizers. Pixels are clamped to [0,1] after every step.
DreamResult activation_maximize(const LayeredModel& model, const std::string& layer,
                                const Cav& cav, const DreamConfig& cfg);

struct SaliencyMap {
  Tensor raw;      // d logit_k / d input, input shape
  Tensor display;  // [h,w]: per-pixel channel-summed |raw|
};

SaliencyMap saliency_map(const LayeredModel& model, int class_index, const Tensor& x);

// Grayscale heatmap of a [h,w] map, normalized so the peak is white.
void write_heatmap_ppm(const std::string& path, const Tensor& display);

struct AttackConfig {
  double epsilon = 0.05;  // per-pixel max perturbation
  int target = 0;

  void validate(int num_classes) const;
};

// Single-step targeted FGSM: x' = clip(x − ε·sign(∇_x CE(x, target)), 0, 1).
Tensor fgsm_attack(const LayeredModel& model, const Tensor& x, const AttackConfig& cfg);

// Tile [h,w,3] images left-to-right, top-to-bottom into a PPM contact sheet
// with a 1-pixel gutter.
void write_contact_sheet(const std::string& path, const std::vector<Tensor>& images, int columns);

}  // namespace tcav
