#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcav/autodiff.hpp"
#include "tcav/tensor.hpp"

namespace tcav {

enum class LayerKind { conv, relu, flatten, dense };

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  // conv parameters
  int64_t kernel_h = 0;
  int64_t kernel_w = 0;
  int64_t out_channels = 0;
  Conv2dOptions conv;
  // dense parameters
  int64_t units = 0;

  static LayerSpec make_conv(std::string name, int64_t kh, int64_t kw, int64_t out_channels,
                             int stride, Padding padding);
  static LayerSpec make_relu(std::string name);
  static LayerSpec make_flatten(std::string name);
  static LayerSpec make_dense(std::string name, int64_t units);
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double l2 = 0.0;       // weight decay on kernels/weights (not biases)
  uint64_t seed = 1;     // batch shuffling order
};

struct TrainStats {
  std::vector<double> epoch_loss;  // mean per-sample loss per epoch
  double final_train_accuracy = 0.0;
};

// A straight chain of layers ending in a dense head of width K. Activations
// can be captured after any layer (flattened to a vector), and logits can be
// recomputed from any such capture point, which is what directional
// derivatives against activation-space directions require. The pseudo-layer
// name "input" denotes the capture point before the first layer.
class LayeredModel {
 public:
  LayeredModel(std::vector<int64_t> input_shape, int num_classes, std::vector<LayerSpec> layers,
               uint64_t init_seed);

  const std::vector<int64_t>& input_shape() const { return input_shape_; }
  int num_classes() const { return num_classes_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  // Capture points: "input" followed by every layer name, in forward order.
  std::vector<std::string> layer_names() const;
  bool has_layer(const std::string& name) const;
  // Flattened activation width m at a capture point.
  int64_t activation_width(const std::string& layer) const;

  // Forward passes (pure; model is immutable during inference).
  Tensor logits(const Tensor& batch) const;                    // [n,...] -> [n,K]
  Tensor logits_one(const Tensor& x) const;                    // single input -> [K]
  Tensor predict_proba(const Tensor& x) const;                 // single input -> softmax [K]
  std::vector<int> predict(const std::vector<Tensor>& images) const;
  double evaluate(const std::vector<Tensor>& images, const std::vector<int>& labels) const;

  // Activation capture; results are flattened per sample.
  Tensor activation_at(const std::string& layer, const Tensor& x) const;  // single -> [m]
  Tensor activations_at(const std::string& layer, const std::vector<Tensor>& images) const;  // [n,m]

  // Resume the forward pass from a capture point. acts is [n,m].
  Tensor logits_from(const std::string& layer, const Tensor& acts) const;  // -> [n,K]

  // Gradient of the class-k logit w.r.t. the activation at a capture point.
  Tensor logit_grad_at(const std::string& layer, int k, const Tensor& activation) const;  // [m]->[m]
  Tensor logit_grads_at(const std::string& layer, int k, const Tensor& acts) const;  // [n,m]->[n,m]

  // Gradient of the class-k logit w.r.t. the input (saliency backbone).
  Tensor input_grad(int k, const Tensor& x) const;
  // Gradient of direction·f_l(x) w.r.t. the input (activation-maximization backbone).
  Tensor direction_input_grad(const std::string& layer, const Tensor& direction,
                              const Tensor& x) const;
  // Gradient of cross-entropy toward `target` w.r.t. the input (FGSM backbone).
  Tensor loss_input_grad(const Tensor& x, int target) const;

  TrainStats train(const std::vector<Tensor>& images, const std::vector<int>& labels,
                   const TrainConfig& cfg);

  void save(const std::string& path) const;
  static LayeredModel load(const std::string& path);

  uint64_t weight_checksum() const;
  std::vector<Tensor>& weights() { return weights_; }
  const std::vector<Tensor>& weights() const { return weights_; }

 private:
  // Capture point index: 0 = input, i = after layers_[i-1].
  int64_t point_of(const std::string& layer, const char* op) const;
  Tensor forward_range(Tensor x, int64_t from_point, int64_t to_point) const;
  ValueId forward_range(Tape& t, ValueId x, int64_t from_point, int64_t to_point,
                        std::vector<ValueId>* weight_ids) const;
  Tensor structured(const Tensor& acts, int64_t point) const;  // [n,m] -> [n,<shape at point>]
  void init_weights(uint64_t seed);

  std::vector<int64_t> input_shape_;  // per-sample shape, no batch dim
  int num_classes_ = 0;
  std::vector<LayerSpec> layers_;
  std::vector<std::vector<int64_t>> point_shape_;  // per-sample shape at each capture point
  // kernel+bias per parametric layer, in layer order
  std::vector<Tensor> weights_;
  std::vector<int> weight_slot_;  // layer index -> first weight index, -1 for weightless
};

// conv(3x3,8,s2)->relu->conv(3x3,16,s2)->relu->flatten->dense(64)->relu->dense(K),
// "same" padding, giving three interior relu capture points of widths
// (h/2*w/2*8), (h/4*w/4*16), and 64 for a h x w x c input.
LayeredModel make_reference_model(std::vector<int64_t> input_shape, int num_classes,
                                  uint64_t init_seed);

}  // namespace tcav
