#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tcav/rng.hpp"
#include "tcav/tensor.hpp"

namespace tcav {

// Captioned-texture dataset: each image is a full-frame class texture with a
// small glyph "word" written into a band at the bottom. The noise parameter
// controls how often that word disagrees with the class, which is what makes
// the caption an unreliable-by-degree concept.
struct DatasetSpec {
  std::vector<std::string> classes = {"stripes", "checker", "blobs"};  // texture generator names
  int64_t height = 32;
  int64_t width = 32;
  int64_t channels = 3;
  int train_per_class = 600;
  int heldout_per_class = 150;
  double noise_p = 0.0;    // probability the caption is replaced by a different word
  int caption_rows = 6;    // band height, bottom rows of the image
  std::vector<std::string> vocabulary;  // glyph words; defaults to one per class
  uint64_t seed = 1;

  void validate() const;  // throws InputError
  std::vector<std::string> effective_vocabulary() const;
};

enum class Split { train = 0, heldout = 1 };

struct LabeledDataset {
  DatasetSpec spec;
  std::vector<Tensor> inputs;          // each [h,w,c], pixels on the f32(k/255) grid
  std::vector<int> labels;             // class index
  std::vector<int> caption_labels;     // vocabulary index actually written
  std::vector<int> split;              // 0 train, 1 heldout
  std::vector<uint64_t> texture_seeds; // per-sample generator seed (enables caption stripping)

  size_t size() const { return inputs.size(); }
  double empirical_caption_agreement() const;
  std::vector<size_t> indices_of(int k, Split s) const;
  std::vector<Tensor> class_images(int k, Split s) const;
  std::vector<Tensor> split_images(Split s) const;
  std::vector<int> split_labels(Split s) const;
};

struct ConceptSet {
  std::string name;
  std::vector<Tensor> examples;
  std::string provenance;  // generator + seed, source directory, or derivation note

  void validate() const;  // non-empty, uniform shapes
};

// --- controlled dataset ------------------------------------------------------

LabeledDataset generate_controlled(const DatasetSpec& spec);

// Replace the caption band with the continuation of the sample's own texture
// (regenerated from the recorded per-sample seed). Idempotent.
LabeledDataset strip_captions(const LabeledDataset& ds);
Tensor strip_caption(const DatasetSpec& spec, const Tensor& image, const std::string& texture,
                     uint64_t texture_seed);

// Concept builders mirroring the controlled experiment: the image concept for
// a class is its caption-stripped training images; the caption concept for a
// word keeps the caption band and scrambles every other pixel.
ConceptSet concept_image_set(const LabeledDataset& ds, int k);
ConceptSet concept_caption_set(const LabeledDataset& ds, int word, uint64_t shuffle_seed);

// --- procedural textures and glyph captions ----------------------------------

std::vector<std::string> texture_names();
bool is_texture_name(const std::string& name);
// One image [h,w,3]; consumes the generator. Pixels land on the f32(k/255) grid.
Tensor render_texture(const std::string& name, int64_t h, int64_t w, int64_t c, Rng& rng);

std::vector<std::string> glyph_vocabulary();  // the 16 known caption words
// Draw the word's glyph into the bottom band of the image (black band, white glyph).
void render_caption(Tensor& image, int word, int caption_rows);

ConceptSet generate_texture_concept(const std::string& name, int n, uint64_t seed, int64_t h,
                                    int64_t w, int64_t c);
std::vector<ConceptSet> generate_texture_concepts(const std::vector<std::string>& names, int n,
                                                  uint64_t seed, int64_t h, int64_t w, int64_t c);
// Union of several concept sets under a new name (e.g. building a negative
// pool from every texture except the probed one).
ConceptSet merge_concepts(const std::string& name, const std::vector<ConceptSet>& parts);

// Quantize to the shared 8-bit pixel grid (exactly representable in f32 and PPM).
inline double quantize8(double v) {
  double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return snap_f32(std::nearbyint(c * 255.0) / 255.0);
}

// --- file formats -------------------------------------------------------------

void write_ppm(const std::string& path, const Tensor& image);  // [h,w,3] in [0,1]
Tensor read_ppm(const std::string& path);

void save_concept_dir(const std::string& dir, const ConceptSet& set);
ConceptSet load_concept_dir(const std::string& dir);

void save_dataset(const std::string& dir, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::string& dir);

}  // namespace tcav
