#include "tcav/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "tcav/digest.hpp"
#include "tcav/errors.hpp"
#include "tcav/rng.hpp"

namespace tcav {

LayerSpec LayerSpec::make_conv(std::string name, int64_t kh, int64_t kw, int64_t out_channels,
                               int stride, Padding padding) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::conv;
  s.kernel_h = kh;
  s.kernel_w = kw;
  s.out_channels = out_channels;
  s.conv.stride = stride;
  s.conv.padding = padding;
  return s;
}

LayerSpec LayerSpec::make_relu(std::string name) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::relu;
  return s;
}

LayerSpec LayerSpec::make_flatten(std::string name) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::flatten;
  return s;
}

LayerSpec LayerSpec::make_dense(std::string name, int64_t units) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::dense;
  s.units = units;
  return s;
}

LayeredModel::LayeredModel(std::vector<int64_t> input_shape, int num_classes,
                           std::vector<LayerSpec> layers, uint64_t init_seed)
    : input_shape_(std::move(input_shape)), num_classes_(num_classes), layers_(std::move(layers)) {
  if (num_classes_ < 2) throw InputError("model: need at least 2 classes");
  if (input_shape_.empty()) throw InputError("model: input shape must be non-empty");
  if (layers_.empty()) throw InputError("model: need at least one layer");

  std::set<std::string> seen;
  for (const LayerSpec& l : layers_) {
    if (l.name.empty() || l.name == "input") {
      throw InputError("model: layer name '" + l.name + "' is reserved or empty");
    }
    if (!seen.insert(l.name).second) {
      throw InputError("model: duplicate layer name '" + l.name + "'");
    }
  }

  // Shape inference over capture points; validates the chain.
  point_shape_.push_back(input_shape_);
  weight_slot_.assign(layers_.size(), -1);
  for (size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    std::vector<int64_t> cur = point_shape_.back();
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.size() != 3) {
          throw InputError("model: conv layer '" + l.name + "' needs a HxWxC input, got " +
                           shape_to_string(cur));
        }
        int64_t oh, ow, pt, pl;
        ops::conv2d_geometry(cur[0], cur[1], l.kernel_h, l.kernel_w, l.conv, oh, ow, pt, pl);
        weight_slot_[i] = static_cast<int>(weights_.size());
        weights_.push_back(Tensor({l.kernel_h, l.kernel_w, cur[2], l.out_channels}));
        weights_.push_back(Tensor({l.out_channels}));
        cur = {oh, ow, l.out_channels};
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::flatten:
        cur = {shape_product(cur)};
        break;
      case LayerKind::dense: {
        if (cur.size() != 1) {
          throw InputError("model: dense layer '" + l.name +
                           "' needs a flat input; add a flatten layer first (got " +
                           shape_to_string(cur) + ")");
        }
        weight_slot_[i] = static_cast<int>(weights_.size());
        weights_.push_back(Tensor({cur[0], l.units}));
        weights_.push_back(Tensor({l.units}));
        cur = {l.units};
        break;
      }
    }
    point_shape_.push_back(cur);
  }
  const std::vector<int64_t>& out = point_shape_.back();
  if (out.size() != 1 || out[0] != num_classes_) {
    throw InputError("model: final layer must produce " + std::to_string(num_classes_) +
                     " logits, got " + shape_to_string(out));
  }

  init_weights(init_seed);
}

void LayeredModel::init_weights(uint64_t seed) {
  Rng rng(seed);
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (weight_slot_[i] < 0) continue;
    Tensor& w = weights_[static_cast<size_t>(weight_slot_[i])];
    int64_t fan_in = layers_[i].kind == LayerKind::conv
                         ? layers_[i].kernel_h * layers_[i].kernel_w * w.extent(2)
                         : w.extent(0);
    double limit = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (int64_t j = 0; j < w.size(); ++j) {
      w.data()[j] = snap_f32(rng.uniform(-limit, limit));
    }
    // biases stay zero
  }
}

std::vector<std::string> LayeredModel::layer_names() const {
  std::vector<std::string> names;
  names.reserve(layers_.size() + 1);
  names.push_back("input");
  for (const LayerSpec& l : layers_) names.push_back(l.name);
  return names;
}

bool LayeredModel::has_layer(const std::string& name) const {
  if (name == "input") return true;
  for (const LayerSpec& l : layers_) {
    if (l.name == name) return true;
  }
  return false;
}

int64_t LayeredModel::point_of(const std::string& layer, const char* op) const {
  if (layer == "input") return 0;
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == layer) return static_cast<int64_t>(i) + 1;
  }
  std::string valid = "input";
  for (const LayerSpec& l : layers_) valid += ", " + l.name;
  throw InputError(std::string(op) + ": unknown layer '" + layer + "' (valid: " + valid + ")");
}

int64_t LayeredModel::activation_width(const std::string& layer) const {
  return shape_product(point_shape_[static_cast<size_t>(point_of(layer, "activation_width"))]);
}

Tensor LayeredModel::forward_range(Tensor x, int64_t from_point, int64_t to_point) const {
  for (int64_t i = from_point; i < to_point; ++i) {
    const LayerSpec& l = layers_[static_cast<size_t>(i)];
    switch (l.kind) {
      case LayerKind::conv: {
        int slot = weight_slot_[static_cast<size_t>(i)];
        x = ops::add(ops::conv2d(x, weights_[slot], l.conv), weights_[slot + 1]);
        break;
      }
      case LayerKind::relu:
        x = ops::relu(x);
        break;
      case LayerKind::flatten:
        x = ops::flatten(x);
        break;
      case LayerKind::dense: {
        int slot = weight_slot_[static_cast<size_t>(i)];
        x = ops::add(ops::matmul(x, weights_[slot]), weights_[slot + 1]);
        break;
      }
    }
  }
  return x;
}

ValueId LayeredModel::forward_range(Tape& t, ValueId x, int64_t from_point, int64_t to_point,
                                    std::vector<ValueId>* weight_ids) const {
  for (int64_t i = from_point; i < to_point; ++i) {
    const LayerSpec& l = layers_[static_cast<size_t>(i)];
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::dense: {
        int slot = weight_slot_[static_cast<size_t>(i)];
        ValueId w = t.leaf(weights_[slot]);
        ValueId b = t.leaf(weights_[slot + 1]);
        if (weight_ids) {
          weight_ids->push_back(w);
          weight_ids->push_back(b);
        }
        ValueId pre = l.kind == LayerKind::conv ? t.conv2d(x, w, l.conv) : t.matmul(x, w);
        x = t.add(pre, b);
        break;
      }
      case LayerKind::relu:
        x = t.relu(x);
        break;
      case LayerKind::flatten:
        x = t.flatten(x);
        break;
    }
  }
  return x;
}

namespace {

std::vector<int64_t> with_batch(int64_t n, const std::vector<int64_t>& per_sample) {
  std::vector<int64_t> s;
  s.reserve(per_sample.size() + 1);
  s.push_back(n);
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

}  // namespace

Tensor LayeredModel::structured(const Tensor& acts, int64_t point) const {
  if (acts.rank() != 2) {
    throw InputError("activations must be [n,m], got " + acts.shape_str());
  }
  const std::vector<int64_t>& ps = point_shape_[static_cast<size_t>(point)];
  if (acts.extent(1) != shape_product(ps)) {
    throw InputError("activation width " + std::to_string(acts.extent(1)) +
                     " does not match layer width " + std::to_string(shape_product(ps)));
  }
  return acts.reshaped(with_batch(acts.extent(0), ps));
}

Tensor LayeredModel::logits(const Tensor& batch) const {
  std::vector<int64_t> want = with_batch(batch.extent(0), input_shape_);
  if (batch.shape() != want) {
    throw InputError("logits: batch shape " + batch.shape_str() + " does not match input shape " +
                     shape_to_string(input_shape_));
  }
  return forward_range(batch, 0, static_cast<int64_t>(layers_.size()));
}

Tensor LayeredModel::logits_one(const Tensor& x) const {
  Tensor batch = x.reshaped(with_batch(1, input_shape_));
  return logits(batch).reshaped({num_classes_});
}

Tensor LayeredModel::predict_proba(const Tensor& x) const { return ops::softmax(logits_one(x)); }

std::vector<int> LayeredModel::predict(const std::vector<Tensor>& images) const {
  std::vector<int> out;
  out.reserve(images.size());
  const size_t chunk = 64;
  for (size_t i = 0; i < images.size(); i += chunk) {
    size_t e = std::min(images.size(), i + chunk);
    std::vector<Tensor> part(images.begin() + static_cast<ptrdiff_t>(i),
                             images.begin() + static_cast<ptrdiff_t>(e));
    Tensor lg = logits(stack(part));
    for (int64_t r = 0; r < lg.extent(0); ++r) {
      const double* z = lg.data() + r * num_classes_;
      int best = 0;
      for (int k = 1; k < num_classes_; ++k) {
        if (z[k] > z[best]) best = k;
      }
      out.push_back(best);
    }
  }
  return out;
}

double LayeredModel::evaluate(const std::vector<Tensor>& images,
                              const std::vector<int>& labels) const {
  if (images.empty() || images.size() != labels.size()) {
    throw InputError("evaluate: need equal non-zero counts of images and labels");
  }
  std::vector<int> pred = predict(images);
  int64_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Tensor LayeredModel::activation_at(const std::string& layer, const Tensor& x) const {
  int64_t p = point_of(layer, "activation_at");
  Tensor batch = x.reshaped(with_batch(1, input_shape_));
  Tensor a = forward_range(batch, 0, p);
  return a.reshaped({a.size()});
}

Tensor LayeredModel::activations_at(const std::string& layer,
                                    const std::vector<Tensor>& images) const {
  int64_t p = point_of(layer, "activations_at");
  if (images.empty()) throw InputError("activations_at: empty image list");
  std::vector<Tensor> rows;
  rows.reserve(images.size());
  const size_t chunk = 64;
  for (size_t i = 0; i < images.size(); i += chunk) {
    size_t e = std::min(images.size(), i + chunk);
    std::vector<Tensor> part(images.begin() + static_cast<ptrdiff_t>(i),
                             images.begin() + static_cast<ptrdiff_t>(e));
    Tensor a = forward_range(stack(part), 0, p);
    Tensor flat = a.reshaped({a.extent(0), a.size() / a.extent(0)});
    for (int64_t r = 0; r < flat.extent(0); ++r) rows.push_back(row(flat, r));
  }
  return stack(rows);
}

Tensor LayeredModel::logits_from(const std::string& layer, const Tensor& acts) const {
  int64_t p = point_of(layer, "logits_from");
  return forward_range(structured(acts, p), p, static_cast<int64_t>(layers_.size()));
}

Tensor LayeredModel::logit_grads_at(const std::string& layer, int k, const Tensor& acts) const {
  int64_t p = point_of(layer, "logit_grads_at");
  if (k < 0 || k >= num_classes_) {
    throw InputError("logit_grads_at: class " + std::to_string(k) + " out of range [0," +
                     std::to_string(num_classes_) + ")");
  }
  Tensor x = structured(acts, p);
  int64_t n = acts.extent(0);

  Tape t;
  ValueId xv = t.leaf(x);
  ValueId lg = forward_range(t, xv, p, static_cast<int64_t>(layers_.size()), nullptr);
  // Rows are independent, so summing the class-k logits over the batch gives
  // each row's own gradient in one backward pass.
  Tensor mask = Tensor({n, static_cast<int64_t>(num_classes_)});
  for (int64_t i = 0; i < n; ++i) mask.data()[i * num_classes_ + k] = 1.0;
  ValueId picked = t.reduce_sum(t.mul(lg, t.leaf(mask)));
  Tensor g = t.gradient(picked, {xv})[0];
  return g.reshaped({n, acts.extent(1)});
}

Tensor LayeredModel::logit_grad_at(const std::string& layer, int k, const Tensor& activation) const {
  if (activation.rank() != 1) {
    throw InputError("logit_grad_at: activation must be rank-1, got " + activation.shape_str());
  }
  Tensor acts = activation.reshaped({1, activation.extent(0)});
  return logit_grads_at(layer, k, acts).reshaped({activation.extent(0)});
}

Tensor LayeredModel::input_grad(int k, const Tensor& x) const {
  Tensor acts = x.reshaped({1, x.size()});
  Tensor g = logit_grads_at("input", k, acts);
  return g.reshaped(x.shape());
}

Tensor LayeredModel::direction_input_grad(const std::string& layer, const Tensor& direction,
                                          const Tensor& x) const {
  int64_t point = point_of(layer, "direction_input_grad");
  int64_t m = activation_width(layer);
  if (direction.rank() != 1 || direction.extent(0) != m) {
    throw InputError("direction_input_grad: direction must be [" + std::to_string(m) +
                     "] for layer '" + layer + "', got " + direction.shape_str());
  }
  Tensor batch = x.reshaped(with_batch(1, input_shape_));
  Tape t;
  ValueId xv = t.leaf(batch);
  ValueId av = forward_range(t, xv, 0, point, nullptr);
  ValueId proj = t.matmul(t.reshape(av, {1, m}), t.leaf(direction.reshaped({m, 1})));
  return t.gradient(t.reduce_sum(proj), {xv})[0].reshaped(x.shape());
}

Tensor LayeredModel::loss_input_grad(const Tensor& x, int target) const {
  if (target < 0 || target >= num_classes_) {
    throw InputError("loss_input_grad: target class " + std::to_string(target) +
                     " out of range [0," + std::to_string(num_classes_) + ")");
  }
  Tensor batch = x.reshaped(with_batch(1, input_shape_));
  Tape t;
  ValueId xv = t.leaf(batch);
  ValueId lg = forward_range(t, xv, 0, static_cast<int64_t>(layers_.size()), nullptr);
  ValueId loss =
      t.softmax_cross_entropy(lg, t.leaf(Tensor::from_vector({static_cast<double>(target)})));
  return t.gradient(loss, {xv})[0].reshaped(x.shape());
}

TrainStats LayeredModel::train(const std::vector<Tensor>& images, const std::vector<int>& labels,
                               const TrainConfig& cfg) {
  if (images.empty() || images.size() != labels.size()) {
    throw InputError("train: need equal non-zero counts of images and labels");
  }
  for (int l : labels) {
    if (l < 0 || l >= num_classes_) {
      throw InputError("train: label " + std::to_string(l) + " out of range [0," +
                       std::to_string(num_classes_) + ")");
    }
  }
  if (cfg.epochs < 0 || cfg.batch_size <= 0 || cfg.learning_rate <= 0.0 || cfg.momentum < 0.0 ||
      cfg.l2 < 0.0) {
    throw InputError("train: invalid config (epochs/batch/lr/momentum/l2)");
  }

  TrainStats stats;
  if (cfg.epochs == 0) {
    stats.final_train_accuracy = evaluate(images, labels);
    return stats;
  }

  std::vector<Tensor> velocity;
  velocity.reserve(weights_.size());
  for (const Tensor& w : weights_) velocity.push_back(Tensor::zeros_like(w));

  std::vector<size_t> order(images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int64_t L = static_cast<int64_t>(layers_.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Tensor> batch_imgs;
      Tensor batch_labels({static_cast<int64_t>(end - start)});
      batch_imgs.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        batch_imgs.push_back(images[order[i]]);
        batch_labels.data()[i - start] = static_cast<double>(labels[order[i]]);
      }

      Tape t;
      ValueId xv = t.leaf(stack(batch_imgs));
      std::vector<ValueId> wids;
      ValueId lg = forward_range(t, xv, 0, L, &wids);
      ValueId loss = t.softmax_cross_entropy(lg, t.leaf(batch_labels));
      double loss_val = t.value(loss).item();
      if (!std::isfinite(loss_val)) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += loss_val * static_cast<double>(end - start);

      std::vector<Tensor> grads = t.gradient(loss, wids);
      for (size_t wi = 0; wi < weights_.size(); ++wi) {
        Tensor& w = weights_[wi];
        Tensor& v = velocity[wi];
        const Tensor& g = grads[wi];
        bool is_bias = w.rank() == 1;
        for (int64_t j = 0; j < w.size(); ++j) {
          double gj = g[j];
          if (cfg.l2 > 0.0 && !is_bias) gj += cfg.l2 * w[j];
          v.data()[j] = cfg.momentum * v[j] - cfg.learning_rate * gj;
          w.data()[j] += v[j];
        }
      }
    }
    stats.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }

  // Keep weights on the f32 grid so checkpoints round-trip without changing
  // a single prediction.
  for (Tensor& w : weights_) {
    for (int64_t j = 0; j < w.size(); ++j) w.data()[j] = snap_f32(w[j]);
  }
  stats.final_train_accuracy = evaluate(images, labels);
  return stats;
}

// --- checkpoint io ----------------------------------------------------------

namespace {

void put_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t get_u16(std::istream& in, const char* what) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) {
    throw InputError(std::string("checkpoint: truncated file while reading ") + what);
  }
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw InputError(std::string("checkpoint: truncated file while reading ") + what);
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

constexpr uint16_t kCheckpointVersion = 1;

}  // namespace

void LayeredModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("checkpoint: cannot open for writing: " + path);
  out.write("CAVM", 4);
  put_u16(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(input_shape_.size()));
  for (int64_t e : input_shape_) put_u32(out, static_cast<uint32_t>(e));
  put_u32(out, static_cast<uint32_t>(num_classes_));
  put_u32(out, static_cast<uint32_t>(layers_.size()));
  for (const LayerSpec& l : layers_) {
    out.put(static_cast<char>(l.kind));
    put_u16(out, static_cast<uint16_t>(l.name.size()));
    out.write(l.name.data(), static_cast<std::streamsize>(l.name.size()));
    if (l.kind == LayerKind::conv) {
      put_u32(out, static_cast<uint32_t>(l.kernel_h));
      put_u32(out, static_cast<uint32_t>(l.kernel_w));
      put_u32(out, static_cast<uint32_t>(l.out_channels));
      out.put(static_cast<char>(l.conv.stride));
      out.put(l.conv.padding == Padding::same ? 1 : 0);
    } else if (l.kind == LayerKind::dense) {
      put_u32(out, static_cast<uint32_t>(l.units));
    }
  }
  for (const Tensor& w : weights_) write_tnsr(out, w);
  if (!out) throw InputError("checkpoint: write failed: " + path);
}

LayeredModel LayeredModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot open: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "CAVM") {
    throw InputError("checkpoint: bad magic bytes (not a model checkpoint): " + path);
  }
  uint16_t version = get_u16(in, "version");
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  }
  uint32_t rank = get_u32(in, "input rank");
  if (rank == 0 || rank > 8) throw InputError("checkpoint: implausible input rank");
  std::vector<int64_t> input_shape;
  for (uint32_t i = 0; i < rank; ++i) input_shape.push_back(get_u32(in, "input extent"));
  int num_classes = static_cast<int>(get_u32(in, "class count"));
  uint32_t layer_count = get_u32(in, "layer count");
  std::vector<LayerSpec> layers;
  for (uint32_t i = 0; i < layer_count; ++i) {
    int kind = in.get();
    if (kind < 0) throw InputError("checkpoint: truncated file while reading layer kind");
    uint16_t name_len = get_u16(in, "layer name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw InputError("checkpoint: truncated file while reading layer name");
    }
    LayerSpec l;
    l.name = name;
    l.kind = static_cast<LayerKind>(kind);
    switch (l.kind) {
      case LayerKind::conv: {
        l.kernel_h = get_u32(in, "kernel height");
        l.kernel_w = get_u32(in, "kernel width");
        l.out_channels = get_u32(in, "output channels");
        int stride = in.get();
        int pad = in.get();
        if (pad < 0) throw InputError("checkpoint: truncated file while reading conv options");
        l.conv.stride = stride;
        l.conv.padding = pad ? Padding::same : Padding::valid;
        break;
      }
      case LayerKind::dense:
        l.units = get_u32(in, "dense units");
        break;
      case LayerKind::relu:
      case LayerKind::flatten:
        break;
      default:
        throw InputError("checkpoint: unknown layer kind tag " + std::to_string(kind));
    }
    layers.push_back(std::move(l));
  }

  LayeredModel model(std::move(input_shape), num_classes, std::move(layers), /*init_seed=*/0);
  for (Tensor& w : model.weights_) {
    Tensor loaded = read_tnsr(in);
    if (!loaded.same_shape(w)) {
      throw InputError("checkpoint: weight shape " + loaded.shape_str() +
                       " does not match architecture (" + w.shape_str() + ")");
    }
    w = std::move(loaded);
  }
  return model;
}

uint64_t LayeredModel::weight_checksum() const {
  Fnv1a h;
  for (const Tensor& w : weights_) {
    for (int64_t j = 0; j < w.size(); ++j) h.update_f64(w[j]);
  }
  return h.digest();
}

LayeredModel make_reference_model(std::vector<int64_t> input_shape, int num_classes,
                                  uint64_t init_seed) {
  std::vector<LayerSpec> layers;
  layers.push_back(LayerSpec::make_conv("conv1", 3, 3, 8, 2, Padding::same));
  layers.push_back(LayerSpec::make_relu("relu1"));
  layers.push_back(LayerSpec::make_conv("conv2", 3, 3, 16, 2, Padding::same));
  layers.push_back(LayerSpec::make_relu("relu2"));
  layers.push_back(LayerSpec::make_flatten("flatten"));
  layers.push_back(LayerSpec::make_dense("dense1", 64));
  layers.push_back(LayerSpec::make_relu("relu3"));
  layers.push_back(LayerSpec::make_dense("logits", num_classes));
  return LayeredModel(std::move(input_shape), num_classes, std::move(layers), init_seed);
}

}  // namespace tcav
