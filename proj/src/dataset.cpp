#include "tcav/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "tcav/digest.hpp"
#include "tcav/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tcav {

// --- glyphs -------------------------------------------------------------------

namespace {

struct Glyph {
  const char* word;
  const char* rows[3];  // 3x5 cells, '1' = ink
};

constexpr Glyph kGlyphs[] = {
    {"alfa", {"01110", "11011", "10001"}},     {"bravo", {"11110", "10111", "11110"}},
    {"charlie", {"01111", "10000", "01111"}},  {"delta", {"00100", "01010", "11111"}},
    {"echo", {"11111", "11100", "11111"}},     {"foxtrot", {"11111", "11100", "10000"}},
    {"golf", {"01110", "10110", "01111"}},     {"hotel", {"10001", "11111", "10001"}},
    {"india", {"11111", "00100", "11111"}},    {"juliett", {"00111", "00010", "11110"}},
    {"kilo", {"10011", "11100", "10011"}},     {"lima", {"10000", "10000", "11111"}},
    {"mike", {"11011", "10101", "10001"}},     {"november", {"10011", "10101", "11001"}},
    {"oscar", {"01110", "10001", "01110"}},    {"papa", {"11110", "10010", "11100"}},
};
constexpr int kGlyphCount = static_cast<int>(sizeof(kGlyphs) / sizeof(kGlyphs[0]));
constexpr int kGlyphRows = 3;
constexpr int kGlyphCols = 5;

}  // namespace

std::vector<std::string> glyph_vocabulary() {
  std::vector<std::string> v;
  for (const Glyph& g : kGlyphs) v.push_back(g.word);
  return v;
}

void render_caption(Tensor& image, int word, int caption_rows) {
  if (image.rank() != 3) throw InputError("render_caption: image must be [h,w,c]");
  if (word < 0 || word >= kGlyphCount) {
    throw InputError("render_caption: word index " + std::to_string(word) + " out of range [0," +
                     std::to_string(kGlyphCount) + ")");
  }
  int64_t h = image.extent(0), w = image.extent(1), c = image.extent(2);
  int64_t band = caption_rows;
  if (band < kGlyphRows || band > h) {
    throw InputError("render_caption: caption band must fit " + std::to_string(kGlyphRows) +
                     ".." + std::to_string(h) + " rows, got " + std::to_string(band));
  }
  int64_t scale = band / kGlyphRows;
  if (kGlyphCols * scale > w) scale = w / kGlyphCols;
  if (scale < 1) throw InputError("render_caption: image too narrow for a glyph");
  int64_t gh = kGlyphRows * scale, gw = kGlyphCols * scale;
  int64_t top = h - band + (band - gh) / 2;
  int64_t left = (w - gw) / 2;
  const Glyph& g = kGlyphs[word];
  for (int64_t y = h - band; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double v = 0.0;
      int64_t ry = (y - top) / scale, rx = (x - left) / scale;
      if (y >= top && ry < kGlyphRows && x >= left && rx < kGlyphCols &&
          g.rows[ry][rx] == '1') {
        v = 1.0;
      }
      for (int64_t ch = 0; ch < c; ++ch) image.data()[(y * w + x) * c + ch] = v;
    }
  }
}

// --- procedural textures --------------------------------------------------------

namespace {

struct Rgb {
  double r, g, b;
};

Rgb dark_color(Rng& rng) { return {rng.uniform(0.0, 0.35), rng.uniform(0.0, 0.35), rng.uniform(0.0, 0.35)}; }
Rgb bright_color(Rng& rng) { return {rng.uniform(0.65, 1.0), rng.uniform(0.65, 1.0), rng.uniform(0.65, 1.0)}; }

double smoothstep(double lo, double hi, double v) {
  double t = (v - lo) / (hi - lo);
  t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  return t * t * (3.0 - 2.0 * t);
}

void paint(Tensor& img, int64_t y, int64_t x, const Rgb& c1, const Rgb& c2, double t) {
  int64_t w = img.extent(1);
  double* p = img.data() + (y * w + x) * 3;
  p[0] = c1.r + (c2.r - c1.r) * t;
  p[1] = c1.g + (c2.g - c1.g) * t;
  p[2] = c1.b + (c2.b - c1.b) * t;
}

void fill_striped(Tensor& img, Rng& rng) {
  int64_t h = img.extent(0), w = img.extent(1);
  double theta = rng.uniform(0.0, 3.14159265358979);
  double lambda = rng.uniform(6.0, 10.0);
  double phase = rng.uniform(0.0, 6.28318530717959);
  double ux = std::cos(theta) / lambda, uy = std::sin(theta) / lambda;
  Rgb c1 = dark_color(rng), c2 = bright_color(rng);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double s = 0.5 + 0.5 * std::sin(6.28318530717959 * (ux * x + uy * y) + phase);
      paint(img, y, x, c1, c2, s);
    }
  }
}

void fill_checker(Tensor& img, Rng& rng) {
  int64_t h = img.extent(0), w = img.extent(1);
  int64_t cell = rng.uniform_int(4, 7);
  int64_t oy = rng.uniform_int(0, cell - 1), ox = rng.uniform_int(0, cell - 1);
  Rgb c1 = dark_color(rng), c2 = bright_color(rng);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      int64_t t = ((y + oy) / cell + (x + ox) / cell) & 1;
      paint(img, y, x, c1, c2, static_cast<double>(t));
    }
  }
}

void fill_blobs(Tensor& img, Rng& rng) {
  int64_t h = img.extent(0), w = img.extent(1);
  const int bumps = 6;
  double cx[bumps], cy[bumps], r[bumps];
  for (int i = 0; i < bumps; ++i) {
    cx[i] = rng.uniform(0.0, static_cast<double>(w));
    cy[i] = rng.uniform(0.0, static_cast<double>(h));
    r[i] = rng.uniform(3.0, 6.0);
  }
  Rgb c1 = dark_color(rng), c2 = bright_color(rng);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double f = 0.0;
      for (int i = 0; i < bumps; ++i) {
        double dx = (x - cx[i]), dy = (y - cy[i]);
        f += std::exp(-(dx * dx + dy * dy) / (2.0 * r[i] * r[i]));
      }
      paint(img, y, x, c1, c2, smoothstep(0.5, 0.7, f));
    }
  }
}

void fill_dotted(Tensor& img, Rng& rng) {
  int64_t h = img.extent(0), w = img.extent(1);
  double g = rng.uniform(6.0, 9.0);
  double ox = rng.uniform(0.0, g), oy = rng.uniform(0.0, g);
  double radius = rng.uniform(1.8, 2.8);
  Rgb c1 = dark_color(rng), c2 = bright_color(rng);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double nx = (x - ox) / g, ny = (y - oy) / g;
      double dx = (nx - std::nearbyint(nx)) * g, dy = (ny - std::nearbyint(ny)) * g;
      double d = std::sqrt(dx * dx + dy * dy);
      paint(img, y, x, c1, c2, 1.0 - smoothstep(radius - 1.0, radius, d));
    }
  }
}

void fill_meshed(Tensor& img, Rng& rng) {
  int64_t h = img.extent(0), w = img.extent(1);
  double theta = rng.uniform(0.0, 1.5707963267949);
  double lambda = rng.uniform(5.0, 8.0);
  double duty = 0.3;
  Rgb c1 = dark_color(rng), c2 = bright_color(rng);
  double dirs[2] = {theta, theta + 1.5707963267949};
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double line = 0.0;
      for (double d : dirs) {
        double proj = (std::cos(d) * x + std::sin(d) * y) / lambda;
        double f = proj - std::floor(proj);
        if (f < duty) line = 1.0;
      }
      paint(img, y, x, c1, c2, line);
    }
  }
}

void fill_solid(Tensor& img, Rng& rng, Rgb base, double jitter) {
  int64_t h = img.extent(0), w = img.extent(1);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      Rgb c = {base.r + rng.uniform(-jitter, jitter), base.g + rng.uniform(-jitter, jitter),
               base.b + rng.uniform(-jitter, jitter)};
      paint(img, y, x, c, c, 0.0);
    }
  }
}

void fill_noise(Tensor& img, Rng& rng) {
  for (int64_t i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform();
}

const std::vector<std::string>& texture_registry() {
  static const std::vector<std::string> names = {"striped", "stripes",  "checker",
                                                 "blobs",   "dotted",   "meshed",
                                                 "solid",   "solid_red", "solid_green",
                                                 "solid_blue", "noise", "random"};
  return names;
}

}  // namespace

std::vector<std::string> texture_names() { return texture_registry(); }

bool is_texture_name(const std::string& name) {
  const auto& reg = texture_registry();
  return std::find(reg.begin(), reg.end(), name) != reg.end();
}

Tensor render_texture(const std::string& name, int64_t h, int64_t w, int64_t c, Rng& rng) {
  if (c != 3) throw InputError("render_texture: only 3-channel images are supported");
  if (h < 8 || w < 8) throw InputError("render_texture: image too small (min 8x8)");
  Tensor img({h, w, c});
  if (name == "striped" || name == "stripes") {
    fill_striped(img, rng);
  } else if (name == "checker") {
    fill_checker(img, rng);
  } else if (name == "blobs") {
    fill_blobs(img, rng);
  } else if (name == "dotted") {
    fill_dotted(img, rng);
  } else if (name == "meshed") {
    fill_meshed(img, rng);
  } else if (name == "solid") {
    fill_solid(img, rng,
               {rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95)}, 0.03);
  } else if (name == "solid_red") {
    fill_solid(img, rng, {rng.uniform(0.6, 1.0), rng.uniform(0.0, 0.25), rng.uniform(0.0, 0.25)},
               0.03);
  } else if (name == "solid_green") {
    fill_solid(img, rng, {rng.uniform(0.0, 0.25), rng.uniform(0.6, 1.0), rng.uniform(0.0, 0.25)},
               0.03);
  } else if (name == "solid_blue") {
    fill_solid(img, rng, {rng.uniform(0.0, 0.25), rng.uniform(0.0, 0.25), rng.uniform(0.6, 1.0)},
               0.03);
  } else if (name == "noise") {
    fill_noise(img, rng);
  } else if (name == "random") {
    static const char* mix[] = {"striped", "dotted", "meshed", "checker", "blobs", "solid", "noise"};
    int pick = static_cast<int>(rng.uniform_int(0, 6));
    return render_texture(mix[pick], h, w, c, rng);
  } else {
    std::string valid;
    for (const auto& n : texture_registry()) valid += (valid.empty() ? "" : ", ") + n;
    throw InputError("render_texture: unknown texture '" + name + "' (valid: " + valid + ")");
  }
  for (int64_t i = 0; i < img.size(); ++i) img.data()[i] = quantize8(img[i]);
  return img;
}

// --- DatasetSpec / LabeledDataset ------------------------------------------------

std::vector<std::string> DatasetSpec::effective_vocabulary() const {
  if (!vocabulary.empty()) return vocabulary;
  std::vector<std::string> all = glyph_vocabulary();
  size_t want = std::max<size_t>(classes.size(), 4);  // a few extra wrong words available
  want = std::min(want, all.size());
  return std::vector<std::string>(all.begin(), all.begin() + static_cast<ptrdiff_t>(want));
}

void DatasetSpec::validate() const {
  if (classes.size() < 2) throw InputError("dataset spec: need at least 2 classes");
  for (const std::string& c : classes) {
    if (!is_texture_name(c)) throw InputError("dataset spec: unknown class texture '" + c + "'");
  }
  if (height < 8 || width < 8 || channels != 3) {
    throw InputError("dataset spec: image size must be at least 8x8x3");
  }
  if (train_per_class < 1 || heldout_per_class < 0) {
    throw InputError("dataset spec: sample counts must be positive");
  }
  if (!(noise_p >= 0.0 && noise_p <= 1.0)) {
    throw InputError("dataset spec: noise p must be in [0,1], got " + std::to_string(noise_p));
  }
  if (caption_rows < 3 || caption_rows >= height) {
    throw InputError("dataset spec: caption band must be in [3, height)");
  }
  std::vector<std::string> vocab = effective_vocabulary();
  if (vocab.size() < classes.size()) {
    throw InputError("dataset spec: vocabulary smaller than the number of classes");
  }
  if (vocab.size() < 2) throw InputError("dataset spec: vocabulary needs at least 2 words");
  std::set<std::string> seen;
  std::vector<std::string> known = glyph_vocabulary();
  for (const std::string& wd : vocab) {
    if (std::find(known.begin(), known.end(), wd) == known.end()) {
      throw InputError("dataset spec: unknown caption word '" + wd + "'");
    }
    if (!seen.insert(wd).second) throw InputError("dataset spec: duplicate caption word '" + wd + "'");
  }
}

double LabeledDataset::empirical_caption_agreement() const {
  if (inputs.empty()) return 0.0;
  int64_t agree = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (caption_labels[i] == labels[i]) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(inputs.size());
}

std::vector<size_t> LabeledDataset::indices_of(int k, Split s) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (labels[i] == k && split[i] == static_cast<int>(s)) out.push_back(i);
  }
  return out;
}

std::vector<Tensor> LabeledDataset::class_images(int k, Split s) const {
  std::vector<Tensor> out;
  for (size_t i : indices_of(k, s)) out.push_back(inputs[i]);
  return out;
}

std::vector<Tensor> LabeledDataset::split_images(Split s) const {
  std::vector<Tensor> out;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (split[i] == static_cast<int>(s)) out.push_back(inputs[i]);
  }
  return out;
}

std::vector<int> LabeledDataset::split_labels(Split s) const {
  std::vector<int> out;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (split[i] == static_cast<int>(s)) out.push_back(labels[i]);
  }
  return out;
}

void ConceptSet::validate() const {
  if (examples.empty()) throw InputError("concept set '" + name + "' is empty");
  for (const Tensor& e : examples) {
    if (!e.same_shape(examples.front())) {
      throw InputError("concept set '" + name + "': mixed example shapes " +
                       examples.front().shape_str() + " vs " + e.shape_str());
    }
  }
}

// --- controlled generation --------------------------------------------------------

namespace {

int word_index_of(const std::vector<std::string>& vocab, const std::string& word) {
  auto it = std::find(vocab.begin(), vocab.end(), word);
  return it == vocab.end() ? -1 : static_cast<int>(it - vocab.begin());
}

int glyph_index_of(const std::string& word) {
  std::vector<std::string> known = glyph_vocabulary();
  return word_index_of(known, word);
}

}  // namespace

LabeledDataset generate_controlled(const DatasetSpec& spec) {
  spec.validate();
  LabeledDataset ds;
  ds.spec = spec;
  std::vector<std::string> vocab = spec.effective_vocabulary();
  int K = static_cast<int>(spec.classes.size());
  int V = static_cast<int>(vocab.size());
  int per_class = spec.train_per_class + spec.heldout_per_class;

  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < per_class; ++i) {
      uint64_t tex_seed = derive_seed(spec.seed, static_cast<uint64_t>(k),
                                      static_cast<uint64_t>(i));
      Rng rng(tex_seed);
      Tensor img = render_texture(spec.classes[static_cast<size_t>(k)], spec.height, spec.width,
                                  spec.channels, rng);
      // Caption decision consumes from a separate stream so the texture is a
      // pure function of tex_seed alone (strip_captions relies on that).
      Rng caption_rng(derive_seed(spec.seed, 0x9e3779b9u + static_cast<uint64_t>(k),
                                  static_cast<uint64_t>(i)));
      int word = k;  // class k's own word is vocab[k]
      if (spec.noise_p > 0.0 && caption_rng.uniform() < spec.noise_p) {
        int other = static_cast<int>(caption_rng.uniform_int(0, V - 2));
        word = other >= k ? other + 1 : other;
      }
      render_caption(img, glyph_index_of(vocab[static_cast<size_t>(word)]), spec.caption_rows);
      for (int64_t j = 0; j < img.size(); ++j) img.data()[j] = quantize8(img[j]);

      ds.inputs.push_back(std::move(img));
      ds.labels.push_back(k);
      ds.caption_labels.push_back(word);
      ds.split.push_back(i < spec.train_per_class ? 0 : 1);
      ds.texture_seeds.push_back(tex_seed);
    }
  }
  return ds;
}

Tensor strip_caption(const DatasetSpec& spec, const Tensor& image, const std::string& texture,
                     uint64_t texture_seed) {
  Rng rng(texture_seed);
  Tensor fresh = render_texture(texture, spec.height, spec.width, spec.channels, rng);
  Tensor out = image;
  int64_t h = spec.height, w = spec.width, c = spec.channels;
  for (int64_t y = h - spec.caption_rows; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t ch = 0; ch < c; ++ch) {
        out.data()[(y * w + x) * c + ch] = fresh[(y * w + x) * c + ch];
      }
    }
  }
  return out;
}

LabeledDataset strip_captions(const LabeledDataset& ds) {
  LabeledDataset out = ds;
  for (size_t i = 0; i < ds.inputs.size(); ++i) {
    out.inputs[i] = strip_caption(ds.spec, ds.inputs[i],
                                  ds.spec.classes[static_cast<size_t>(ds.labels[i])],
                                  ds.texture_seeds[i]);
  }
  return out;
}

ConceptSet concept_image_set(const LabeledDataset& ds, int k) {
  if (k < 0 || k >= static_cast<int>(ds.spec.classes.size())) {
    throw InputError("concept_image_set: class " + std::to_string(k) + " out of range");
  }
  ConceptSet set;
  set.name = "image:" + ds.spec.classes[static_cast<size_t>(k)];
  for (size_t i : ds.indices_of(k, Split::train)) {
    set.examples.push_back(strip_caption(ds.spec, ds.inputs[i],
                                         ds.spec.classes[static_cast<size_t>(k)],
                                         ds.texture_seeds[i]));
  }
  set.provenance = "derived:image-concept:class=" + std::to_string(k) +
                   ":seed=" + std::to_string(ds.spec.seed);
  if (set.examples.empty()) throw InputError("concept_image_set: no training images for class");
  return set;
}

ConceptSet concept_caption_set(const LabeledDataset& ds, int word, uint64_t shuffle_seed) {
  std::vector<std::string> vocab = ds.spec.effective_vocabulary();
  if (word < 0 || word >= static_cast<int>(vocab.size())) {
    throw InputError("concept_caption_set: word " + std::to_string(word) + " out of range");
  }
  ConceptSet set;
  set.name = "caption:" + vocab[static_cast<size_t>(word)];
  int64_t h = ds.spec.height, w = ds.spec.width, c = ds.spec.channels;
  int64_t band_start = h - ds.spec.caption_rows;
  int count = 0;
  for (size_t i = 0; i < ds.inputs.size(); ++i) {
    if (ds.caption_labels[i] != word || ds.split[i] != 0) continue;
    Tensor img = ds.inputs[i];
    // Collect pixel triples above the band, shuffle them as units, write back.
    std::vector<std::array<double, 3>> px;
    px.reserve(static_cast<size_t>(band_start * w));
    for (int64_t y = 0; y < band_start; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const double* p = img.data() + (y * w + x) * c;
        px.push_back({p[0], p[1], p[2]});
      }
    }
    Rng rng(derive_seed(shuffle_seed, static_cast<uint64_t>(word), static_cast<uint64_t>(count)));
    rng.shuffle(px);
    size_t j = 0;
    for (int64_t y = 0; y < band_start; ++y) {
      for (int64_t x = 0; x < w; ++x, ++j) {
        double* p = img.data() + (y * w + x) * c;
        p[0] = px[j][0];
        p[1] = px[j][1];
        p[2] = px[j][2];
      }
    }
    set.examples.push_back(std::move(img));
    ++count;
  }
  set.provenance = "derived:caption-concept:word=" + vocab[static_cast<size_t>(word)] +
                   ":shuffle_seed=" + std::to_string(shuffle_seed);
  if (set.examples.empty()) {
    throw InputError("concept_caption_set: no training samples carry word '" +
                     vocab[static_cast<size_t>(word)] + "'");
  }
  return set;
}

// --- texture concepts ---------------------------------------------------------------

ConceptSet generate_texture_concept(const std::string& name, int n, uint64_t seed, int64_t h,
                                    int64_t w, int64_t c) {
  if (n < 2) throw InputError("texture concept '" + name + "': need at least 2 examples");
  if (!is_texture_name(name)) throw InputError("texture concept: unknown texture '" + name + "'");
  ConceptSet set;
  set.name = name;
  Fnv1a tag;
  tag.update(name);
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, tag.digest(), static_cast<uint64_t>(i)));
    set.examples.push_back(render_texture(name, h, w, c, rng));
  }
  set.provenance = "texture:" + name + ":seed=" + std::to_string(seed) + ":n=" + std::to_string(n);
  return set;
}

std::vector<ConceptSet> generate_texture_concepts(const std::vector<std::string>& names, int n,
                                                  uint64_t seed, int64_t h, int64_t w, int64_t c) {
  std::vector<ConceptSet> out;
  out.reserve(names.size());
  for (const std::string& name : names) {
    out.push_back(generate_texture_concept(name, n, seed, h, w, c));
  }
  return out;
}

ConceptSet merge_concepts(const std::string& name, const std::vector<ConceptSet>& parts) {
  if (parts.empty()) throw InputError("merge_concepts: no parts given");
  ConceptSet out;
  out.name = name;
  std::string prov = "union:";
  for (const ConceptSet& p : parts) {
    p.validate();
    out.examples.insert(out.examples.end(), p.examples.begin(), p.examples.end());
    prov += (prov.size() > 6 ? "+" : "") + p.name;
  }
  out.provenance = prov;
  out.validate();
  return out;
}

// --- PPM ------------------------------------------------------------------------------

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.extent(2) != 3) {
    throw InputError("write_ppm: image must be [h,w,3], got " + image.shape_str());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("write_ppm: cannot open for writing: " + path);
  int64_t h = image.extent(0), w = image.extent(1);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<size_t>(h * w * 3));
  for (int64_t i = 0; i < image.size(); ++i) {
    double v = image[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    bytes[static_cast<size_t>(i)] = static_cast<unsigned char>(std::nearbyint(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write_ppm: write failed: " + path);
}

namespace {

int ppm_next_int(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments, per the netpbm header grammar.
  int c = in.get();
  while (c == '#' || (c != EOF && std::isspace(c))) {
    if (c == '#') {
      while (c != '\n' && c != EOF) c = in.get();
    }
    c = in.get();
  }
  int v = 0;
  bool any = false;
  while (c >= '0' && c <= '9') {
    v = v * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw InputError("read_ppm: malformed header in " + path);
  return v;
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("read_ppm: cannot open: " + path);
  char m0 = static_cast<char>(in.get()), m1 = static_cast<char>(in.get());
  if (m0 != 'P' || m1 != '6') throw InputError("read_ppm: not a P6 file: " + path);
  int w = ppm_next_int(in, path);
  int h = ppm_next_int(in, path);
  int maxval = ppm_next_int(in, path);
  if (maxval != 255) throw InputError("read_ppm: only maxval 255 is supported: " + path);
  // The header grammar ends with exactly one whitespace byte, already consumed
  // by ppm_next_int's trailing get.
  std::vector<unsigned char> bytes(static_cast<size_t>(w) * h * 3);
  in.seekg(-1, std::ios::cur);
  int sep = in.get();
  if (sep == EOF || !std::isspace(sep)) throw InputError("read_ppm: malformed header in " + path);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw InputError("read_ppm: truncated pixel data in " + path);
  }
  Tensor img({h, w, 3});
  for (size_t i = 0; i < bytes.size(); ++i) {
    img.data()[i] = snap_f32(static_cast<double>(bytes[i]) / 255.0);
  }
  return img;
}

void save_concept_dir(const std::string& dir, const ConceptSet& set) {
  set.validate();
  fs::create_directories(dir);
  char name[32];
  for (size_t i = 0; i < set.examples.size(); ++i) {
    std::snprintf(name, sizeof name, "%04zu.ppm", i);
    write_ppm((fs::path(dir) / name).string(), set.examples[i]);
  }
  json meta;
  meta["name"] = set.name;
  meta["provenance"] = set.provenance;
  meta["count"] = set.examples.size();
  std::ofstream out(fs::path(dir) / "concept.json");
  out << meta.dump(2) << "\n";
}

ConceptSet load_concept_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("load_concept_dir: not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".ppm") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InputError("load_concept_dir: no .ppm files in " + dir);
  ConceptSet set;
  set.name = fs::path(dir).filename().string();
  set.provenance = "dir:" + dir;
  fs::path meta = fs::path(dir) / "concept.json";
  if (fs::exists(meta)) {
    std::ifstream in(meta);
    json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (!j.is_discarded()) {
      if (j.contains("name") && j["name"].is_string()) set.name = j["name"].get<std::string>();
      if (j.contains("provenance") && j["provenance"].is_string()) {
        set.provenance = j["provenance"].get<std::string>();
      }
    }
  }
  for (const std::string& f : files) {
    Tensor img = read_ppm(f);
    if (!set.examples.empty() && !img.same_shape(set.examples.front())) {
      throw InputError("load_concept_dir: image size mismatch in " + f + " (" + img.shape_str() +
                       " vs " + set.examples.front().shape_str() + ")");
    }
    set.examples.push_back(std::move(img));
  }
  return set;
}

// --- dataset store ------------------------------------------------------------------------

void save_dataset(const std::string& dir, const LabeledDataset& ds) {
  if (ds.inputs.empty()) throw InputError("save_dataset: empty dataset");
  fs::create_directories(dir);
  save_tnsr((fs::path(dir) / "inputs.tnsr").string(), stack(ds.inputs));
  json j;
  j["spec"] = {{"classes", ds.spec.classes},
               {"height", ds.spec.height},
               {"width", ds.spec.width},
               {"channels", ds.spec.channels},
               {"train_per_class", ds.spec.train_per_class},
               {"heldout_per_class", ds.spec.heldout_per_class},
               {"noise_p", ds.spec.noise_p},
               {"caption_rows", ds.spec.caption_rows},
               {"vocabulary", ds.spec.effective_vocabulary()},
               {"seed", ds.spec.seed}};
  j["labels"] = ds.labels;
  j["caption_labels"] = ds.caption_labels;
  j["split"] = ds.split;
  j["texture_seeds"] = ds.texture_seeds;
  j["empirical_caption_agreement"] = ds.empirical_caption_agreement();
  j["inputs"] = "inputs.tnsr";
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw InputError("save_dataset: cannot write manifest in " + dir);
  out << j.dump(2) << "\n";
}

LabeledDataset load_dataset(const std::string& dir) {
  fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw InputError("load_dataset: cannot open " + mpath.string());
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw InputError("load_dataset: malformed JSON in " + mpath.string());

  LabeledDataset ds;
  try {
    const json& s = j.at("spec");
    ds.spec.classes = s.at("classes").get<std::vector<std::string>>();
    ds.spec.height = s.at("height").get<int64_t>();
    ds.spec.width = s.at("width").get<int64_t>();
    ds.spec.channels = s.at("channels").get<int64_t>();
    ds.spec.train_per_class = s.at("train_per_class").get<int>();
    ds.spec.heldout_per_class = s.at("heldout_per_class").get<int>();
    ds.spec.noise_p = s.at("noise_p").get<double>();
    ds.spec.caption_rows = s.at("caption_rows").get<int>();
    ds.spec.vocabulary = s.at("vocabulary").get<std::vector<std::string>>();
    ds.spec.seed = s.at("seed").get<uint64_t>();
    ds.labels = j.at("labels").get<std::vector<int>>();
    ds.caption_labels = j.at("caption_labels").get<std::vector<int>>();
    ds.split = j.at("split").get<std::vector<int>>();
    ds.texture_seeds = j.at("texture_seeds").get<std::vector<uint64_t>>();
  } catch (const json::exception& e) {
    throw InputError("load_dataset: manifest missing fields in " + mpath.string() + ": " +
                     e.what());
  }

  Tensor all = load_tnsr((fs::path(dir) / j.value("inputs", "inputs.tnsr")).string());
  if (all.rank() != 4 || all.extent(0) != static_cast<int64_t>(ds.labels.size())) {
    throw InputError("load_dataset: inputs tensor does not match manifest in " + dir);
  }
  for (int64_t i = 0; i < all.extent(0); ++i) {
    Tensor r = row(all, i);
    ds.inputs.push_back(r.reshaped({all.extent(1), all.extent(2), all.extent(3)}));
  }
  if (ds.labels.size() != ds.inputs.size() || ds.caption_labels.size() != ds.inputs.size() ||
      ds.split.size() != ds.inputs.size() || ds.texture_seeds.size() != ds.inputs.size()) {
    throw InputError("load_dataset: manifest arrays disagree on sample count in " + dir);
  }
  return ds;
}

}  // namespace tcav
