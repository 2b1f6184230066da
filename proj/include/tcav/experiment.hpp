#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcav/dataset.hpp"
#include "tcav/model.hpp"
#include "tcav/tcav.hpp"

namespace tcav {

// The controlled ground-truth experiment: for each caption-noise level p,
// generate a captioned dataset, train a fresh model, measure how much
// accuracy survives caption stripping (the ground-truth proxy for whether the
// model reads images or captions), then check that significance-tested TCAV
// scores of the per-class image and caption concepts tell the same story.
struct ExperimentConfig {
  std::vector<double> noise_levels = {0.0, 0.3, 0.7, 1.0};
  DatasetSpec dataset;        // noise_p and seed are overridden per level
  TrainConfig train;
  SignificanceOptions significance;
  // dense1 is the narrowest layer whose class gradients still vary per input
  // (the head above it is affine, so at relu3 every input shares one gradient
  // and scores collapse to 0/1).
  std::string layer = "dense1";
  int concept_examples = 100;     // cap on image/caption concept positives
  int negative_pool_size = 240;   // texture + captioned-noise pool per level
  uint64_t seed = 1;              // master: derives data/model/concept seeds
  bool save_datasets = false;     // full tensors are bulky; default manifest-only

  void validate() const;
};

struct ExperimentCell {
  double noise_p = 0.0;
  int class_index = 0;
  std::string class_name;
  double acc_clean = 0.0;     // heldout accuracy, captions intact
  double acc_stripped = 0.0;  // heldout accuracy, captions blanked
  double tcavq_image = 0.0;   // mean TCAV score of the image concept
  double tcavq_caption = 0.0;
  double p_image = 1.0;
  double p_caption = 1.0;
  bool significant_image = false;
  bool significant_caption = false;
  bool image_dominant_truth = false;  // stripped accuracy kept most of the margin
  bool image_dominant_tcav = false;   // tcavq_image > tcavq_caption
  bool consistent = false;            // the two verdicts agree
};

struct ExperimentResult {
  std::vector<ExperimentCell> cells;  // noise level major, class minor
  std::vector<std::string> class_names;
  std::vector<double> noise_levels;
};

// Ground-truth proxy verdict: the model counts as image-reading if stripping
// captions preserves at least half of its above-chance margin.
bool image_dominant_by_accuracy(double acc_clean, double acc_stripped, int num_classes);

// Runs the full grid. Writes per-level artifacts (model checkpoint, TCAV
// reports) plus summary.csv/summary.json into out_dir; returns the table.
// Progress lines go to stderr when verbose.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                bool verbose = false);

// The pinned summary table: one row per (p, class) with columns
// p,class,acc_clean,acc_stripped,tcavq_image,tcavq_caption,p_image,p_caption,consistent.
std::string experiment_summary_csv(const ExperimentResult& result);
std::string experiment_summary_json(const ExperimentResult& result);

}  // namespace tcav
