#include "tcav/experiment.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tcav/errors.hpp"
#include "tcav/rng.hpp"

namespace tcav {

void ExperimentConfig::validate() const {
  if (noise_levels.empty()) throw InputError("experiment needs at least one noise level");
  for (double p : noise_levels) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InputError("noise level " + std::to_string(p) + " outside [0,1]");
    }
  }
  dataset.validate();
  if (concept_examples < 4) throw InputError("concept_examples must be >= 4");
  if (negative_pool_size < 8) throw InputError("negative_pool_size must be >= 8");
  if (layer.empty()) throw InputError("experiment layer must be named");
  significance.validate();
}

bool image_dominant_by_accuracy(double acc_clean, double acc_stripped, int num_classes) {
  double chance = 1.0 / num_classes;
  return acc_stripped - chance >= 0.5 * (acc_clean - chance);
}

namespace {

ConceptSet cap_examples(ConceptSet set, int limit) {
  if (static_cast<int>(set.examples.size()) > limit) {
    set.examples.resize(static_cast<std::size_t>(limit));
    set.provenance += ":first" + std::to_string(limit);
  }
  return set;
}

// Negative pool spanning both families the tested concepts are drawn from:
// plain structured textures and caption bands of random words over shuffled
// pixels. Against a texture-only pool a caption probe can win on band
// presence alone — the resulting direction scores any captioned input, not
// the probed word — so half the pool carries a random caption in the same
// shuffled-pixel form the caption concepts use.
ConceptSet make_negative_pool(const DatasetSpec& sp, int n, uint64_t seed) {
  ConceptSet pool;
  pool.name = "random_pool";
  std::vector<std::string> words = glyph_vocabulary();
  int64_t h = sp.height, w = sp.width, c = sp.channels;
  int64_t band_start = h - sp.caption_rows;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, 0x9001, static_cast<uint64_t>(i)));
    Tensor img = render_texture("random", h, w, c, rng);
    if (i % 2 == 1) {
      int word = rng.uniform_int(0, static_cast<int>(words.size()) - 1);
      render_caption(img, word, sp.caption_rows);
      std::vector<std::array<double, 3>> px;
      px.reserve(static_cast<size_t>(band_start * w));
      for (int64_t y = 0; y < band_start; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          const double* p = img.data() + (y * w + x) * c;
          px.push_back({p[0], p[1], p[2]});
        }
      }
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
    }
    pool.examples.push_back(std::move(img));
  }
  pool.provenance = "derived:negative-pool:seed=" + std::to_string(seed) +
                    ":n=" + std::to_string(n);
  return pool;
}

std::string format_p(double p) {
  std::ostringstream s;
  s << p;
  return s.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                bool verbose) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  ExperimentResult result;
  result.noise_levels = cfg.noise_levels;
  result.class_names = cfg.dataset.classes;
  int num_classes = static_cast<int>(cfg.dataset.classes.size());

  for (std::size_t li = 0; li < cfg.noise_levels.size(); ++li) {
    double p = cfg.noise_levels[li];
    auto t0 = std::chrono::steady_clock::now();
    DatasetSpec sp = cfg.dataset;
    sp.noise_p = p;
    sp.seed = derive_seed(cfg.seed, 100 + li);
    LabeledDataset ds = generate_controlled(sp);
    LabeledDataset stripped = strip_captions(ds);

    LayeredModel model = make_reference_model({sp.height, sp.width, sp.channels}, num_classes,
                                              derive_seed(cfg.seed, 200 + li));
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, 300 + li);
    model.train(ds.split_images(Split::train), ds.split_labels(Split::train), tc);

    double acc_clean =
        model.evaluate(ds.split_images(Split::heldout), ds.split_labels(Split::heldout));
    double acc_stripped = model.evaluate(stripped.split_images(Split::heldout),
                                         stripped.split_labels(Split::heldout));
    bool truth_image = image_dominant_by_accuracy(acc_clean, acc_stripped, num_classes);

    std::string level_dir = out_dir + "/p" + format_p(p);
    std::filesystem::create_directories(level_dir);
    model.save(level_dir + "/model.ckpt");
    if (cfg.save_datasets) save_dataset(level_dir + "/dataset", ds);

    ConceptSet pool =
        make_negative_pool(sp, cfg.negative_pool_size, derive_seed(cfg.seed, 400 + li));

    if (verbose) {
      auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
      std::fprintf(stderr, "[experiment] p=%s: trained (clean %.3f, stripped %.3f) in %lld ms\n",
                   format_p(p).c_str(), acc_clean, acc_stripped, static_cast<long long>(ms));
    }

    std::vector<TcavReport> level_reports;
    for (int k = 0; k < num_classes; ++k) {
      ConceptSet image_concept = cap_examples(concept_image_set(ds, k), cfg.concept_examples);
      ConceptSet caption_concept = cap_examples(
          concept_caption_set(ds, k, derive_seed(cfg.seed, 500 + li, k)), cfg.concept_examples);
      Tensor class_inputs = stack(ds.class_images(k, Split::heldout));

      SignificanceOptions so = cfg.significance;
      so.master_seed = derive_seed(cfg.seed, 600 + li, 2 * k);
      TcavReport rep_image =
          significance_test(model, cfg.layer, image_concept, pool, k, class_inputs, so);
      so.master_seed = derive_seed(cfg.seed, 600 + li, 2 * k + 1);
      TcavReport rep_caption =
          significance_test(model, cfg.layer, caption_concept, pool, k, class_inputs, so);

      save_report(level_dir + "/report_image_" + cfg.dataset.classes[k] + ".json", rep_image);
      save_report(level_dir + "/report_caption_" + cfg.dataset.classes[k] + ".json", rep_caption);
      level_reports.push_back(rep_image);
      level_reports.push_back(rep_caption);

      ExperimentCell cell;
      cell.noise_p = p;
      cell.class_index = k;
      cell.class_name = cfg.dataset.classes[k];
      cell.acc_clean = acc_clean;
      cell.acc_stripped = acc_stripped;
      cell.tcavq_image = rep_image.mean;
      cell.tcavq_caption = rep_caption.mean;
      cell.p_image = rep_image.p_value;
      cell.p_caption = rep_caption.p_value;
      cell.significant_image = rep_image.significant;
      cell.significant_caption = rep_caption.significant;
      cell.image_dominant_truth = truth_image;
      cell.image_dominant_tcav = rep_image.mean > rep_caption.mean;
      cell.consistent = cell.image_dominant_truth == cell.image_dominant_tcav;
      result.cells.push_back(cell);

      if (verbose) {
        std::fprintf(stderr,
                     "[experiment] p=%s class=%s: tcavq image %.3f caption %.3f -> %s\n",
                     format_p(p).c_str(), cell.class_name.c_str(), cell.tcavq_image,
                     cell.tcavq_caption, cell.consistent ? "consistent" : "INCONSISTENT");
      }
    }
    std::ofstream csv(level_dir + "/reports.csv", std::ios::binary);
    csv << reports_to_csv(level_reports);
  }

  std::ofstream csv(out_dir + "/summary.csv", std::ios::binary);
  if (!csv) throw InputError("cannot write " + out_dir + "/summary.csv");
  csv << experiment_summary_csv(result);
  std::ofstream js(out_dir + "/summary.json", std::ios::binary);
  js << experiment_summary_json(result);
  return result;
}

std::string experiment_summary_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "p,class,acc_clean,acc_stripped,tcavq_image,tcavq_caption,p_image,p_caption,"
         "consistent\n";
  for (const ExperimentCell& c : result.cells) {
    out << c.noise_p << ',' << c.class_name << ',' << c.acc_clean << ',' << c.acc_stripped << ','
        << c.tcavq_image << ',' << c.tcavq_caption << ',' << c.p_image << ',' << c.p_caption
        << ',' << (c.consistent ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string experiment_summary_json(const ExperimentResult& result) {
  nlohmann::ordered_json j;
  j["noise_levels"] = result.noise_levels;
  j["classes"] = result.class_names;
  j["cells"] = nlohmann::ordered_json::array();
  for (const ExperimentCell& c : result.cells) {
    nlohmann::ordered_json jc;
    jc["p"] = c.noise_p;
    jc["class"] = c.class_name;
    jc["acc_clean"] = c.acc_clean;
    jc["acc_stripped"] = c.acc_stripped;
    jc["tcavq_image"] = c.tcavq_image;
    jc["tcavq_caption"] = c.tcavq_caption;
    jc["p_image"] = c.p_image;
    jc["p_caption"] = c.p_caption;
    jc["significant_image"] = c.significant_image;
    jc["significant_caption"] = c.significant_caption;
    jc["image_dominant_truth"] = c.image_dominant_truth;
    jc["image_dominant_tcav"] = c.image_dominant_tcav;
    jc["consistent"] = c.consistent;
    j["cells"].push_back(std::move(jc));
  }
  return j.dump(2) + "\n";
}

}  // namespace tcav
