#include "tcav/extras.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tcav/errors.hpp"
#include "tcav/rng.hpp"

namespace tcav {

std::vector<RankedImage> sort_by_concept(const LayeredModel& model, const std::string& layer,
                                         const Cav& cav, const ConceptSet& images) {
  if (cav.layer != layer) {
    throw InputError("cav was trained at layer '" + cav.layer + "', asked to sort at '" + layer +
                     "'");
  }
  int64_t m = model.activation_width(layer);
  if (cav.direction.rank() != 1 || cav.direction.extent(0) != m) {
    throw InputError("cav direction is " + cav.direction.shape_str() + " but layer '" + layer +
                     "' has width " + std::to_string(m));
  }
  images.validate();
  if (!cav.positive_provenance.empty() && !images.provenance.empty() &&
      cav.positive_provenance == images.provenance) {
    throw InputError("refusing to sort the CAV's own training set (provenance '" +
                     images.provenance + "'); use held-out images");
  }
  Tensor acts = model.activations_at(layer, images.examples);
  std::vector<RankedImage> out(images.examples.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* a = acts.data() + static_cast<int64_t>(i) * m;
    double dot = 0.0, norm = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      dot += a[j] * cav.direction.data()[j];
      norm += a[j] * a[j];
    }
    out[i].index = i;
    out[i].cosine = norm > 0.0 ? dot / std::sqrt(norm) : 0.0;
  }
  std::sort(out.begin(), out.end(), [](const RankedImage& a, const RankedImage& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return a.index < b.index;
  });
  return out;
}

void DreamConfig::validate() const {
  if (steps < 1) throw InputError("dream needs at least 1 step");
  if (step_size < 0.0) throw InputError("dream step size must be >= 0");
  if (jitter < 0) throw InputError("dream jitter must be >= 0");
  if (l2_penalty < 0.0) throw InputError("dream l2 penalty must be >= 0");
}

namespace {

// cyclic shift of an [h,w,c] image by (dy, dx)
Tensor roll_image(const Tensor& img, int64_t dy, int64_t dx) {
  int64_t h = img.extent(0), w = img.extent(1), c = img.extent(2);
  dy = ((dy % h) + h) % h;
  dx = ((dx % w) + w) % w;
  Tensor out(img.shape());
  for (int64_t y = 0; y < h; ++y) {
    int64_t sy = (y - dy + h) % h;
    for (int64_t x = 0; x < w; ++x) {
      int64_t sx = (x - dx + w) % w;
      std::memcpy(out.data() + (y * w + x) * c, img.data() + (sy * w + sx) * c,
                  static_cast<std::size_t>(c) * sizeof(double));
    }
  }
  return out;
}

}  // namespace

DreamResult activation_maximize(const LayeredModel& model, const std::string& layer,
                                const Cav& cav, const DreamConfig& cfg) {
  cfg.validate();
  int64_t m = model.activation_width(layer);
  if (cav.direction.rank() != 1 || cav.direction.extent(0) != m) {
    throw InputError("cav direction is " + cav.direction.shape_str() + " but layer '" + layer +
                     "' has width " + std::to_string(m));
  }
  const std::vector<int64_t>& shape = model.input_shape();
  if (shape.size() != 3) {
    throw InputError("dream expects an [h,w,c] input model");
  }
  Rng rng(derive_seed(cfg.seed, 0xd8ea));
  Tensor x(shape);
  if (cfg.start == DreamStart::image) {
    if (cfg.start_image.shape() != shape) {
      throw InputError("dream start image is " + cfg.start_image.shape_str() +
                       ", model wants " + Tensor(shape).shape_str());
    }
    x = cfg.start_image;
  } else {
    for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  }

  auto objective = [&](const Tensor& img) {
    Tensor act = model.activation_at(layer, img);
    double proj = 0.0, sq = 0.0;
    for (int64_t j = 0; j < m; ++j) proj += act.data()[j] * cav.direction.data()[j];
    for (int64_t i = 0; i < img.size(); ++i) sq += img.data()[i] * img.data()[i];
    return proj - cfg.l2_penalty * sq;
  };

  DreamResult result;
  result.objective.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  result.objective.push_back(objective(x));
  for (int step = 0; step < cfg.steps; ++step) {
    int64_t dy = 0, dx = 0;
    if (cfg.jitter > 0) {
      dy = rng.uniform_int(-cfg.jitter, cfg.jitter);
      dx = rng.uniform_int(-cfg.jitter, cfg.jitter);
    }
    Tensor shifted = roll_image(x, dy, dx);
    Tensor g = model.direction_input_grad(layer, cav.direction, shifted);
    for (int64_t i = 0; i < shifted.size(); ++i) {
      double v = shifted.data()[i] +
                 cfg.step_size * (g.data()[i] - 2.0 * cfg.l2_penalty * shifted.data()[i]);
      shifted.data()[i] = std::clamp(v, 0.0, 1.0);
    }
    x = roll_image(shifted, -dy, -dx);
    double obj = objective(x);
    if (!std::isfinite(obj)) {
      throw NumericError("activation maximization diverged at step " + std::to_string(step + 1));
    }
    result.objective.push_back(obj);
  }
  result.image = std::move(x);
  return result;
}

SaliencyMap saliency_map(const LayeredModel& model, int class_index, const Tensor& x) {
  if (class_index < 0 || class_index >= model.num_classes()) {
    throw InputError("class index " + std::to_string(class_index) + " out of range [0," +
                     std::to_string(model.num_classes()) + ")");
  }
  SaliencyMap map;
  map.raw = model.input_grad(class_index, x);
  if (map.raw.rank() == 3) {
    int64_t h = map.raw.extent(0), w = map.raw.extent(1), c = map.raw.extent(2);
    map.display = Tensor({h, w});
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int64_t ch = 0; ch < c; ++ch) s += std::abs(map.raw.data()[(y * w + xx) * c + ch]);
        map.display.data()[y * w + xx] = s;
      }
    }
  } else {
    // non-image models: display is just |raw| flattened to [n,1]
    map.display = Tensor({map.raw.size(), 1});
    for (int64_t i = 0; i < map.raw.size(); ++i) map.display.data()[i] = std::abs(map.raw.data()[i]);
  }
  return map;
}

void write_heatmap_ppm(const std::string& path, const Tensor& display) {
  if (display.rank() != 2) {
    throw InputError("heatmap wants a [h,w] map, got " + display.shape_str());
  }
  double peak = 0.0;
  for (int64_t i = 0; i < display.size(); ++i) peak = std::max(peak, display.data()[i]);
  Tensor img({display.extent(0), display.extent(1), 3});
  for (int64_t i = 0; i < display.size(); ++i) {
    double v = peak > 0.0 ? display.data()[i] / peak : 0.0;
    img.data()[i * 3 + 0] = v;
    img.data()[i * 3 + 1] = v;
    img.data()[i * 3 + 2] = v;
  }
  write_ppm(path, img);
}

void AttackConfig::validate(int num_classes) const {
  if (epsilon < 0.0) throw InputError("attack epsilon must be >= 0");
  if (target < 0 || target >= num_classes) {
    throw InputError("attack target " + std::to_string(target) + " out of range [0," +
                     std::to_string(num_classes) + ")");
  }
}

Tensor fgsm_attack(const LayeredModel& model, const Tensor& x, const AttackConfig& cfg) {
  cfg.validate(model.num_classes());
  Tensor g = model.loss_input_grad(x, cfg.target);
  Tensor out = x;
  for (int64_t i = 0; i < out.size(); ++i) {
    double s = g.data()[i] > 0.0 ? 1.0 : (g.data()[i] < 0.0 ? -1.0 : 0.0);
    out.data()[i] = std::clamp(out.data()[i] - cfg.epsilon * s, 0.0, 1.0);
  }
  return out;
}

void write_contact_sheet(const std::string& path, const std::vector<Tensor>& images,
                         int columns) {
  if (images.empty()) throw InputError("contact sheet needs at least one image");
  if (columns < 1) throw InputError("contact sheet needs at least one column");
  const Tensor& first = images.front();
  if (first.rank() != 3 || first.extent(2) != 3) {
    throw InputError("contact sheet wants [h,w,3] images, got " + first.shape_str());
  }
  for (const Tensor& img : images) {
    if (img.shape() != first.shape()) {
      throw InputError("contact sheet images must share a shape; got " + img.shape_str() +
                       " vs " + first.shape_str());
    }
  }
  int64_t n = static_cast<int64_t>(images.size());
  int64_t cols = std::min<int64_t>(columns, n);
  int64_t rows = (n + cols - 1) / cols;
  int64_t h = first.extent(0), w = first.extent(1);
  Tensor sheet = Tensor::full({rows * h + (rows - 1), cols * w + (cols - 1), 3}, 1.0);
  for (int64_t i = 0; i < n; ++i) {
    int64_t r = i / cols, c = i % cols;
    int64_t y0 = r * (h + 1), x0 = c * (w + 1);
    for (int64_t y = 0; y < h; ++y) {
      std::memcpy(sheet.data() + ((y0 + y) * sheet.extent(1) + x0) * 3,
                  images[static_cast<std::size_t>(i)].data() + y * w * 3,
                  static_cast<std::size_t>(w) * 3 * sizeof(double));
    }
  }
  write_ppm(path, sheet);
}

}  // namespace tcav
