// command-line front end: file-backed, seeded, manifest-writing workflows
// over the library ops. Exit codes: 0 ok, 2 bad input, 3 numeric failure,
// 4 significance-test abort.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tcav/cav.hpp"
#include "tcav/dataset.hpp"
#include "tcav/digest.hpp"
#include "tcav/errors.hpp"
#include "tcav/experiment.hpp"
#include "tcav/extras.hpp"
#include "tcav/model.hpp"
#include "tcav/rng.hpp"
#include "tcav/tcav.hpp"
#include "tcav/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kArtifactVersion = "1.0.0";

uint64_t default_seed() {
  if (const char* env = std::getenv("TCAV_SEED")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end && *end == '\0') return v;
    throw tcav::InputError(std::string("TCAV_SEED is not a number: ") + env);
  }
  return 1;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tcav::InputError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw tcav::InputError(path + ": " + e.what());
  }
}

// Collects the data every invocation records: config echo, input digests,
// output paths+digests, wall clock. Wall clock varies run to run; everything
// else is reproducible.
class Manifest {
 public:
  Manifest(std::string command, uint64_t seed) : command_(std::move(command)), seed_(seed) {
    start_ = std::chrono::steady_clock::now();
  }
  void config(ordered_json cfg) { config_ = std::move(cfg); }
  void input(const std::string& path) {
    if (fs::is_directory(path)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(path)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) inputs_[f.string()] = tcav::hex64(tcav::digest_file(f.string()));
    } else {
      inputs_[path] = tcav::hex64(tcav::digest_file(path));
    }
  }
  void output(const std::string& path) { outputs_.push_back(path); }

  void write(const std::string& path) {
    ordered_json j;
    j["command"] = command_;
    j["config"] = config_.empty() ? ordered_json::object() : config_;
    j["seed"] = seed_;
    j["inputs"] = inputs_;
    ordered_json outs = ordered_json::object();
    for (const std::string& p : outputs_) outs[p] = tcav::hex64(tcav::digest_file(p));
    j["outputs"] = outs;
    j["wall_clock_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start_)
                             .count();
    j["versions"] = {{"artifact", kArtifactVersion},
                     {"formats", {{"tnsr", 1}, {"checkpoint", 1}, {"cav", 1}, {"report", 1}}}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw tcav::InputError("cannot write " + path);
    out << j.dump(2) << "\n";
  }

 private:
  std::string command_;
  uint64_t seed_;
  ordered_json config_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point start_;
};

tcav::DatasetSpec dataset_spec_from_json(const json& j) {
  tcav::DatasetSpec spec;
  if (j.contains("classes")) spec.classes = j.at("classes").get<std::vector<std::string>>();
  if (j.contains("height")) spec.height = j.at("height").get<int64_t>();
  if (j.contains("width")) spec.width = j.at("width").get<int64_t>();
  if (j.contains("channels")) spec.channels = j.at("channels").get<int64_t>();
  if (j.contains("train_per_class")) spec.train_per_class = j.at("train_per_class").get<int>();
  if (j.contains("heldout_per_class"))
    spec.heldout_per_class = j.at("heldout_per_class").get<int>();
  if (j.contains("noise_p")) spec.noise_p = j.at("noise_p").get<double>();
  if (j.contains("caption_rows")) spec.caption_rows = j.at("caption_rows").get<int>();
  if (j.contains("vocabulary"))
    spec.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  if (j.contains("seed")) spec.seed = j.at("seed").get<uint64_t>();
  return spec;
}

ordered_json dataset_spec_to_json(const tcav::DatasetSpec& spec) {
  ordered_json j;
  j["classes"] = spec.classes;
  j["height"] = spec.height;
  j["width"] = spec.width;
  j["channels"] = spec.channels;
  j["train_per_class"] = spec.train_per_class;
  j["heldout_per_class"] = spec.heldout_per_class;
  j["noise_p"] = spec.noise_p;
  j["caption_rows"] = spec.caption_rows;
  j["vocabulary"] = spec.effective_vocabulary();
  j["seed"] = spec.seed;
  return j;
}

int parse_class(const std::string& text, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == text) return static_cast<int>(i);
  }
  try {
    std::size_t used = 0;
    int k = std::stoi(text, &used);
    if (used == text.size()) return k;
  } catch (const std::exception&) {
  }
  std::string known;
  for (const std::string& n : names) known += (known.empty() ? "" : ", ") + n;
  throw tcav::InputError("unknown class '" + text + "' (known: " + known + ")");
}

// Concept sources:
//   texture:NAME[:n=N][:seed=S]        generated texture set
//   dataset:DIR:image:CLASS            stripped training images of a class
//   dataset:DIR:caption:WORD           caption band + shuffled pixels
//   DIR                                directory of PPMs with concept.json
struct ConceptSource {
  tcav::ConceptSet set;
  std::vector<std::string> input_paths;  // for the manifest
};

ConceptSource load_concept_source(const std::string& src, int64_t h, int64_t w, int64_t c,
                                  uint64_t seed_fallback) {
  ConceptSource out;
  if (src.rfind("texture:", 0) == 0) {
    std::vector<std::string> parts;
    std::stringstream ss(src);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() < 2 || parts[1].empty()) {
      throw tcav::InputError("texture source needs a generator name: " + src);
    }
    int n = 40;
    uint64_t seed = seed_fallback;
    for (std::size_t i = 2; i < parts.size(); ++i) {
      if (parts[i].rfind("n=", 0) == 0) {
        n = std::stoi(parts[i].substr(2));
      } else if (parts[i].rfind("seed=", 0) == 0) {
        seed = std::stoull(parts[i].substr(5));
      } else {
        throw tcav::InputError("bad texture source segment '" + parts[i] + "' in " + src);
      }
    }
    out.set = tcav::generate_texture_concept(parts[1], n, seed, h, w, c);
    return out;
  }
  if (src.rfind("dataset:", 0) == 0) {
    std::string rest = src.substr(8);
    // the directory may contain ':' only if someone is being cruel; split from the right
    std::size_t kind_pos = rest.rfind(":image:");
    std::string kind = "image";
    if (kind_pos == std::string::npos) {
      kind_pos = rest.rfind(":caption:");
      kind = "caption";
    }
    if (kind_pos == std::string::npos) {
      throw tcav::InputError("dataset source wants dataset:DIR:image:CLASS or "
                             "dataset:DIR:caption:WORD, got " +
                             src);
    }
    std::string dir = rest.substr(0, kind_pos);
    std::string which = rest.substr(kind_pos + kind.size() + 2);
    tcav::LabeledDataset ds = tcav::load_dataset(dir);
    out.input_paths.push_back(dir);
    if (kind == "image") {
      out.set = tcav::concept_image_set(ds, parse_class(which, ds.spec.classes));
    } else {
      std::vector<std::string> vocab = ds.spec.effective_vocabulary();
      out.set = tcav::concept_caption_set(ds, parse_class(which, vocab),
                                          tcav::derive_seed(ds.spec.seed, 0xcab7));
    }
    return out;
  }
  out.set = tcav::load_concept_dir(src);
  out.input_paths.push_back(src);
  return out;
}

tcav::Tensor load_image_arg(const std::string& image_path, const std::string& data_dir, int index,
                            const std::string& split_name, Manifest& manifest) {
  if (!image_path.empty()) {
    manifest.input(image_path);
    return tcav::read_ppm(image_path);
  }
  if (data_dir.empty()) {
    throw tcav::InputError("pass either --image FILE or --data DIR with --index");
  }
  tcav::LabeledDataset ds = tcav::load_dataset(data_dir);
  manifest.input(data_dir);
  tcav::Split split = split_name == "train" ? tcav::Split::train : tcav::Split::heldout;
  std::vector<tcav::Tensor> images = ds.split_images(split);
  if (index < 0 || index >= static_cast<int>(images.size())) {
    throw tcav::InputError("--index " + std::to_string(index) + " out of range [0," +
                           std::to_string(images.size()) + ") for split " + split_name);
  }
  return images[static_cast<std::size_t>(index)];
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tcav::InputError("cannot write " + path);
  out << text;
  if (!out.flush()) throw tcav::InputError("failed writing " + path);
}

struct ProbeFlags {
  int epochs = -1;
  double learning_rate = -1.0;
  double l2 = -1.0;
  double heldout_fraction = -1.0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--probe-epochs", epochs, "probe gradient-descent epochs");
    cmd->add_option("--probe-lr", learning_rate, "probe learning rate");
    cmd->add_option("--probe-l2", l2, "probe L2 regularization");
    cmd->add_option("--probe-heldout", heldout_fraction, "probe held-out fraction");
  }
  tcav::ProbeConfig resolve(uint64_t seed) const {
    tcav::ProbeConfig cfg;
    if (epochs >= 0) cfg.epochs = epochs;
    if (learning_rate >= 0) cfg.learning_rate = learning_rate;
    if (l2 >= 0) cfg.l2 = l2;
    if (heldout_fraction >= 0) cfg.heldout_fraction = heldout_fraction;
    cfg.seed = seed;
    return cfg;
  }
  ordered_json echo(const tcav::ProbeConfig& cfg) const {
    return {{"epochs", cfg.epochs},
            {"learning_rate", cfg.learning_rate},
            {"l2", cfg.l2},
            {"heldout_fraction", cfg.heldout_fraction},
            {"seed", cfg.seed}};
  }
};

// ---------------------------------------------------------------- commands

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                 std::optional<uint64_t> seed_override, const std::string& manifest_path) {
  tcav::DatasetSpec spec = dataset_spec_from_json(load_json_file(spec_path));
  if (seed_override) spec.seed = *seed_override;
  Manifest manifest("gen-data", spec.seed);
  manifest.input(spec_path);
  spec.validate();
  tcav::LabeledDataset ds = tcav::generate_controlled(spec);
  tcav::save_dataset(out_dir, ds);
  manifest.config(dataset_spec_to_json(spec));
  manifest.output(out_dir + "/manifest.json");
  manifest.output(out_dir + "/inputs.tnsr");
  std::printf("wrote %s: %zu train + %zu heldout images, caption agreement %.4f\n",
              out_dir.c_str(), ds.split_labels(tcav::Split::train).size(),
              ds.split_labels(tcav::Split::heldout).size(), ds.empirical_caption_agreement());
  manifest.write(manifest_path.empty() ? out_dir + "/run_manifest.json" : manifest_path);
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& model_path,
              const std::string& config_path, tcav::TrainConfig flags, bool flags_seed_set,
              uint64_t model_seed, const std::string& manifest_path) {
  tcav::TrainConfig cfg;
  if (!config_path.empty()) {
    json j = load_json_file(config_path);
    if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("momentum")) cfg.momentum = j.at("momentum").get<double>();
    if (j.contains("l2")) cfg.l2 = j.at("l2").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  }
  // explicit flags win over the config file
  if (flags.epochs >= 0) cfg.epochs = flags.epochs;
  if (flags.batch_size > 0) cfg.batch_size = flags.batch_size;
  if (flags.learning_rate > 0) cfg.learning_rate = flags.learning_rate;
  if (flags.momentum >= 0) cfg.momentum = flags.momentum;
  if (flags.l2 >= 0) cfg.l2 = flags.l2;
  if (flags_seed_set) cfg.seed = flags.seed;

  Manifest manifest("train", cfg.seed);
  manifest.input(data_dir);
  if (!config_path.empty()) manifest.input(config_path);
  tcav::LabeledDataset ds = tcav::load_dataset(data_dir);
  tcav::LayeredModel model = tcav::make_reference_model(
      {ds.spec.height, ds.spec.width, ds.spec.channels},
      static_cast<int>(ds.spec.classes.size()), tcav::derive_seed(model_seed, 0x1417));
  tcav::TrainStats stats =
      model.train(ds.split_images(tcav::Split::train), ds.split_labels(tcav::Split::train), cfg);
  model.save(model_path);

  ordered_json echo;
  echo["epochs"] = cfg.epochs;
  echo["batch_size"] = cfg.batch_size;
  echo["learning_rate"] = cfg.learning_rate;
  echo["momentum"] = cfg.momentum;
  echo["l2"] = cfg.l2;
  echo["seed"] = cfg.seed;
  echo["model_init_seed"] = model_seed;
  manifest.config(echo);
  manifest.output(model_path);

  ordered_json stats_json;
  stats_json["epoch_loss"] = stats.epoch_loss;
  stats_json["final_train_accuracy"] = stats.final_train_accuracy;
  std::string stats_path = model_path + ".train_stats.json";
  write_text(stats_path, stats_json.dump(2) + "\n");
  manifest.output(stats_path);
  std::printf("trained %d epochs, final train accuracy %.4f, checkpoint %s\n", cfg.epochs,
              stats.final_train_accuracy, model_path.c_str());
  manifest.write(manifest_path.empty() ? model_path + ".manifest.json" : manifest_path);
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& model_path, bool strip,
             const std::string& split_name, const std::string& out_path,
             const std::string& manifest_path) {
  Manifest manifest("eval", 0);
  manifest.input(data_dir);
  manifest.input(model_path);
  tcav::LabeledDataset ds = tcav::load_dataset(data_dir);
  if (strip) ds = tcav::strip_captions(ds);
  tcav::LayeredModel model = tcav::LayeredModel::load(model_path);
  tcav::Split split = split_name == "train" ? tcav::Split::train : tcav::Split::heldout;
  double acc = model.evaluate(ds.split_images(split), ds.split_labels(split));

  ordered_json echo;
  echo["data"] = data_dir;
  echo["model"] = model_path;
  echo["split"] = split_name;
  echo["strip_captions"] = strip;
  manifest.config(echo);
  ordered_json result;
  result["accuracy"] = acc;
  result["n"] = ds.split_labels(split).size();
  result["split"] = split_name;
  result["strip_captions"] = strip;
  write_text(out_path, result.dump(2) + "\n");
  manifest.output(out_path);
  std::printf("%s accuracy%s: %.4f\n", split_name.c_str(), strip ? " (captions stripped)" : "",
              acc);
  manifest.write(manifest_path.empty() ? out_path + ".manifest.json" : manifest_path);
  return 0;
}

int cmd_learn_cav(const std::string& model_path, const std::string& layer,
                  const std::string& pos_src, const std::string& neg_src,
                  const std::string& out_path, const ProbeFlags& probe_flags, uint64_t seed,
                  const std::string& manifest_path) {
  Manifest manifest("learn-cav", seed);
  manifest.input(model_path);
  tcav::LayeredModel model = tcav::LayeredModel::load(model_path);
  const std::vector<int64_t>& in = model.input_shape();
  int64_t h = in.size() == 3 ? in[0] : 1, w = in.size() == 3 ? in[1] : in[0],
          c = in.size() == 3 ? in[2] : 1;
  ConceptSource pos = load_concept_source(pos_src, h, w, c, tcav::derive_seed(seed, 1));
  ConceptSource neg = load_concept_source(neg_src, h, w, c, tcav::derive_seed(seed, 2));
  for (const std::string& p : pos.input_paths) manifest.input(p);
  for (const std::string& p : neg.input_paths) manifest.input(p);
  tcav::ProbeConfig probe = probe_flags.resolve(seed);
  tcav::Cav cav = tcav::train_cav(model, layer, pos.set, neg.set, probe);
  tcav::save_cav(out_path, cav);

  ordered_json echo;
  echo["layer"] = layer;
  echo["positives"] = pos_src;
  echo["negatives"] = neg_src;
  echo["probe"] = probe_flags.echo(probe);
  manifest.config(echo);
  manifest.output(out_path);
  std::printf("cav '%s' @ %s: heldout probe accuracy %.4f -> %s\n", cav.concept_name.c_str(),
              layer.c_str(), cav.heldout_accuracy, out_path.c_str());
  manifest.write(manifest_path.empty() ? out_path + ".manifest.json" : manifest_path);
  return 0;
}

int cmd_probe_layers(const std::string& model_path, const std::string& pos_src,
                     const std::string& neg_src, const std::string& out_path,
                     const ProbeFlags& probe_flags, uint64_t seed,
                     const std::string& manifest_path) {
  Manifest manifest("probe-layers", seed);
  manifest.input(model_path);
  tcav::LayeredModel model = tcav::LayeredModel::load(model_path);
  const std::vector<int64_t>& in = model.input_shape();
  int64_t h = in.size() == 3 ? in[0] : 1, w = in.size() == 3 ? in[1] : in[0],
          c = in.size() == 3 ? in[2] : 1;
  ConceptSource pos = load_concept_source(pos_src, h, w, c, tcav::derive_seed(seed, 1));
  ConceptSource neg = load_concept_source(neg_src, h, w, c, tcav::derive_seed(seed, 2));
  for (const std::string& p : pos.input_paths) manifest.input(p);
  for (const std::string& p : neg.input_paths) manifest.input(p);
  tcav::ProbeConfig probe = probe_flags.resolve(seed);
  std::vector<std::pair<std::string, double>> rows =
      tcav::probe_layers(model, pos.set, neg.set, probe);
  std::ostringstream csv;
  csv << "layer,heldout_accuracy\n";
  for (const auto& [name, acc] : rows) csv << name << ',' << acc << '\n';
  write_text(out_path, csv.str());

  ordered_json echo;
  echo["positives"] = pos_src;
  echo["negatives"] = neg_src;
  echo["probe"] = probe_flags.echo(probe);
  manifest.config(echo);
  manifest.output(out_path);
  for (const auto& [name, acc] : rows) std::printf("%-10s %.4f\n", name.c_str(), acc);
  manifest.write(manifest_path.empty() ? out_path + ".manifest.json" : manifest_path);
  return 0;
}

int cmd_tcav(const std::string& model_path, const std::string& layer,
             const std::vector<std::string>& pos_srcs, const std::string& pool_src,
             const std::string& data_dir, const std::string& class_arg, int runs, double alpha,
             int bonferroni_m, int negatives_per_run, bool resample_positives,
             const ProbeFlags& probe_flags, uint64_t seed, const std::string& out_dir,
             const std::string& manifest_path) {
  Manifest manifest("tcav", seed);
  manifest.input(model_path);
  manifest.input(data_dir);
  fs::create_directories(out_dir);
  tcav::LayeredModel model = tcav::LayeredModel::load(model_path);
  tcav::LabeledDataset ds = tcav::load_dataset(data_dir);
  int k = parse_class(class_arg, ds.spec.classes);
  tcav::Tensor class_inputs = tcav::stack(ds.class_images(k, tcav::Split::heldout));
  const std::vector<int64_t>& in = model.input_shape();
  int64_t h = in.size() == 3 ? in[0] : 1, w = in.size() == 3 ? in[1] : in[0],
          c = in.size() == 3 ? in[2] : 1;
  ConceptSource pool = load_concept_source(pool_src, h, w, c, tcav::derive_seed(seed, 0xbead));
  for (const std::string& p : pool.input_paths) manifest.input(p);

  tcav::SignificanceOptions so;
  so.runs = runs;
  so.alpha = alpha;
  so.bonferroni_m = bonferroni_m;
  so.negatives_per_run = negatives_per_run;
  so.resample_positives = resample_positives;
  so.probe = probe_flags.resolve(tcav::derive_seed(seed, 0x9b0b));
  so.master_seed = seed;

  std::vector<tcav::TcavReport> reports;
  std::ostringstream bar;
  bar << "concept,layer,tcavq,p_value,significant\n";
  for (std::size_t ci = 0; ci < pos_srcs.size(); ++ci) {
    ConceptSource pos =
        load_concept_source(pos_srcs[ci], h, w, c, tcav::derive_seed(seed, 3 + ci));
    for (const std::string& p : pos.input_paths) manifest.input(p);
    tcav::SignificanceOptions so_c = so;
    so_c.master_seed = tcav::derive_seed(seed, 0x7e57, ci);
    tcav::TcavReport rep =
        tcav::significance_test(model, layer, pos.set, pool.set, k, class_inputs, so_c);
    std::string rep_path = out_dir + "/report_" + std::to_string(ci) + ".json";
    tcav::save_report(rep_path, rep);
    manifest.output(rep_path);
    bar << rep.concept_name << ',' << rep.layer << ',' << rep.mean << ',' << rep.p_value << ','
        << (rep.significant ? 1 : 0) << '\n';
    std::printf("%s @ %s class %s: TCAV_Q mean %.4f, p %.3g%s\n", rep.concept_name.c_str(),
                layer.c_str(), ds.spec.classes[static_cast<std::size_t>(k)].c_str(), rep.mean,
                rep.p_value, rep.significant ? "" : " (not significant, omit per protocol)");
    reports.push_back(std::move(rep));
  }
  std::string csv_path = out_dir + "/reports.csv";
  write_text(csv_path, tcav::reports_to_csv(reports));
  manifest.output(csv_path);
  std::string bar_path =
      out_dir + "/bar_class_" + ds.spec.classes[static_cast<std::size_t>(k)] + ".csv";
  write_text(bar_path, bar.str());
  manifest.output(bar_path);

  ordered_json echo;
  echo["layer"] = layer;
  echo["positives"] = pos_srcs;
  echo["negative_pool"] = pool_src;
  echo["class"] = class_arg;
  echo["runs"] = runs;
  echo["alpha"] = alpha;
  echo["m"] = bonferroni_m;
  echo["negatives_per_run"] = negatives_per_run;
  echo["resample_positives"] = resample_positives;
  echo["probe"] = probe_flags.echo(so.probe);
  manifest.config(echo);
  manifest.write(manifest_path.empty() ? out_dir + "/manifest.json" : manifest_path);
  return 0;
}

int cmd_sort(const std::string& model_path, const std::string& cav_path,
             const std::string& images_src, int top, const std::string& out_dir, uint64_t seed,
             const std::string& manifest_path) {
  Manifest manifest("sort", seed);
  manifest.input(model_path);
  manifest.input(cav_path);
  fs::create_directories(out_dir);
  tcav::LayeredModel model = tcav::LayeredModel::load(model_path);
  tcav::Cav cav = tcav::load_cav(cav_path);
  const std::vector<int64_t>& in = model.input_shape();
  int64_t h = in.size() == 3 ? in[0] : 1, w = in.size() == 3 ? in[1] : in[0],
          c = in.size() == 3 ? in[2] : 1;
  ConceptSource images = load_concept_source(images_src, h, w, c, tcav::derive_seed(seed, 4));
  for (const std::string& p : images.input_paths) manifest.input(p);
  std::vector<tcav::RankedImage> ranked = tcav::sort_by_concept(model, cav.layer, cav, images.set);

  std::ostringstream csv;
  csv << "rank,index,cosine\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    csv << i << ',' << ranked[i].index << ',' << ranked[i].cosine << '\n';
  }
  std::string csv_path = out_dir + "/ranking.csv";
  write_text(csv_path, csv.str());
  manifest.output(csv_path);

  int n = static_cast<int>(ranked.size());
  int strip = std::min(top, n);
  std::vector<tcav::Tensor> most, least;
  for (int i = 0; i < strip; ++i) most.push_back(images.set.examples[ranked[i].index]);
  for (int i = n - strip; i < n; ++i) least.push_back(images.set.examples[ranked[i].index]);
  tcav::write_contact_sheet(out_dir + "/most_similar.ppm", most, strip);
  tcav::write_contact_sheet(out_dir + "/least_similar.ppm", least, strip);
  manifest.output(out_dir + "/most_similar.ppm");
  manifest.output(out_dir + "/least_similar.ppm");

  ordered_json echo;
  echo["cav"] = cav_path;
  echo["images"] = images_src;
  echo["top"] = top;
  manifest.config(echo);
  std::printf("sorted %d images by '%s' @ %s; top cosine %.4f, bottom %.4f\n", n,
              cav.concept_name.c_str(), cav.layer.c_str(), ranked.front().cosine,
              ranked.back().cosine);
  manifest.write(manifest_path.empty() ? out_dir + "/manifest.json" : manifest_path);
  return 0;
}

int cmd_dream(const std::string& model_path, const std::string& cav_path, int steps,
              double step_size, int jitter, double l2_penalty, const std::string& start_image,
              const std::string& out_dir, uint64_t seed, const std::string& manifest_path) {
  Manifest manifest("dream", seed);
  manifest.input(model_path);
  manifest.input(cav_path);
  fs::create_directories(out_dir);
  tcav::LayeredModel model = tcav::LayeredModel::load(model_path);
  tcav::Cav cav = tcav::load_cav(cav_path);
  tcav::DreamConfig cfg;
  cfg.steps = steps;
  cfg.step_size = step_size;
  cfg.jitter = jitter;
  cfg.l2_penalty = l2_penalty;
  cfg.seed = seed;
  if (!start_image.empty()) {
    cfg.start = tcav::DreamStart::image;
    cfg.start_image = tcav::read_ppm(start_image);
    manifest.input(start_image);
  }
  tcav::DreamResult dream = tcav::activation_maximize(model, cav.layer, cav, cfg);
  tcav::write_ppm(out_dir + "/dream.ppm", dream.image);
  tcav::save_tnsr(out_dir + "/dream.tnsr", dream.image);
  ordered_json trace;
  trace["objective"] = dream.objective;
  write_text(out_dir + "/trace.json", trace.dump(2) + "\n");
  manifest.output(out_dir + "/dream.ppm");
  manifest.output(out_dir + "/dream.tnsr");
  manifest.output(out_dir + "/trace.json");

  ordered_json echo;
  echo["cav"] = cav_path;
  echo["steps"] = steps;
  echo["step_size"] = step_size;
  echo["jitter"] = jitter;
  echo["l2_penalty"] = l2_penalty;
  echo["start"] = start_image.empty() ? "noise" : start_image;
  manifest.config(echo);
  std::printf("dream '%s' @ %s: objective %.4f -> %.4f over %d steps\n",
              cav.concept_name.c_str(), cav.layer.c_str(), dream.objective.front(),
              dream.objective.back(), steps);
  manifest.write(manifest_path.empty() ? out_dir + "/manifest.json" : manifest_path);
  return 0;
}

int cmd_saliency(const std::string& model_path, const std::string& image_path,
                 const std::string& data_dir, int index, const std::string& split,
                 const std::string& class_arg, const std::string& out_dir,
                 const std::string& manifest_path) {
  Manifest manifest("saliency", 0);
  manifest.input(model_path);
  fs::create_directories(out_dir);
  tcav::LayeredModel model = tcav::LayeredModel::load(model_path);
  tcav::Tensor x = load_image_arg(image_path, data_dir, index, split, manifest);
  int k = parse_class(class_arg, {});
  tcav::SaliencyMap map = tcav::saliency_map(model, k, x);
  tcav::write_heatmap_ppm(out_dir + "/saliency.ppm", map.display);
  tcav::save_tnsr(out_dir + "/saliency_raw.tnsr", map.raw);
  manifest.output(out_dir + "/saliency.ppm");
  manifest.output(out_dir + "/saliency_raw.tnsr");

  ordered_json echo;
  echo["class"] = k;
  echo["image"] = image_path.empty() ? data_dir + "[" + std::to_string(index) + "]" : image_path;
  manifest.config(echo);
  std::printf("saliency for class %d -> %s\n", k, (out_dir + "/saliency.ppm").c_str());
  manifest.write(manifest_path.empty() ? out_dir + "/manifest.json" : manifest_path);
  return 0;
}

int cmd_attack(const std::string& model_path, const std::string& image_path,
               const std::string& data_dir, int index, const std::string& split,
               const std::string& target_arg, double epsilon, const std::string& out_dir,
               const std::string& manifest_path) {
  Manifest manifest("attack", 0);
  manifest.input(model_path);
  fs::create_directories(out_dir);
  tcav::LayeredModel model = tcav::LayeredModel::load(model_path);
  tcav::Tensor x = load_image_arg(image_path, data_dir, index, split, manifest);
  tcav::AttackConfig cfg;
  cfg.target = parse_class(target_arg, {});
  cfg.epsilon = epsilon;
  tcav::Tensor adv = tcav::fgsm_attack(model, x, cfg);
  int before = model.predict({x})[0];
  int after = model.predict({adv})[0];
  double linf = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    linf = std::max(linf, std::abs(adv.data()[i] - x.data()[i]));
  }
  tcav::write_ppm(out_dir + "/adversarial.ppm", adv);
  tcav::save_tnsr(out_dir + "/adversarial.tnsr", adv);
  ordered_json result;
  result["epsilon"] = epsilon;
  result["target"] = cfg.target;
  result["prediction_before"] = before;
  result["prediction_after"] = after;
  result["linf"] = linf;
  write_text(out_dir + "/attack.json", result.dump(2) + "\n");
  manifest.output(out_dir + "/adversarial.ppm");
  manifest.output(out_dir + "/adversarial.tnsr");
  manifest.output(out_dir + "/attack.json");

  ordered_json echo;
  echo["epsilon"] = epsilon;
  echo["target"] = cfg.target;
  echo["image"] = image_path.empty() ? data_dir + "[" + std::to_string(index) + "]" : image_path;
  manifest.config(echo);
  std::printf("attack eps=%.3f target=%d: prediction %d -> %d (Linf %.4f)\n", epsilon, cfg.target,
              before, after, linf);
  manifest.write(manifest_path.empty() ? out_dir + "/manifest.json" : manifest_path);
  return 0;
}

int cmd_compare(const std::vector<std::string>& a_paths, const std::vector<std::string>& b_paths,
                double threshold, const std::string& out_path,
                const std::string& manifest_path) {
  Manifest manifest("compare", 0);
  std::vector<tcav::TcavReport> a, b;
  for (const std::string& p : a_paths) {
    manifest.input(p);
    a.push_back(tcav::load_report(p));
  }
  for (const std::string& p : b_paths) {
    manifest.input(p);
    b.push_back(tcav::load_report(p));
  }
  tcav::DivergenceSummary summary = tcav::score_distribution_compare(a, b, threshold);
  write_text(out_path, tcav::divergence_to_json(summary));
  manifest.output(out_path);

  ordered_json echo;
  echo["a"] = a_paths;
  echo["b"] = b_paths;
  echo["ks_threshold"] = threshold;
  manifest.config(echo);
  for (const tcav::DivergenceEntry& e : summary.entries) {
    std::printf("%s @ %s: mean %.4f -> %.4f, KS %.4f%s\n", e.concept_name.c_str(),
                e.layer.c_str(), e.mean_a, e.mean_b, e.ks, e.flagged ? "  [FLAGGED]" : "");
  }
  manifest.write(manifest_path.empty() ? out_path + ".manifest.json" : manifest_path);
  return 0;
}

int cmd_experiment(const std::string& noise_list, const std::string& out_dir,
                   tcav::ExperimentConfig cfg, const std::string& manifest_path, bool quiet) {
  Manifest manifest("experiment", cfg.seed);
  std::stringstream ss(noise_list);
  std::string item;
  cfg.noise_levels.clear();
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      double p = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      cfg.noise_levels.push_back(p);
    } catch (const std::exception&) {
      throw tcav::InputError("bad noise level '" + item + "' in --noise-list");
    }
  }
  tcav::ExperimentResult result = run_experiment(cfg, out_dir, !quiet);

  ordered_json echo;
  echo["noise_levels"] = cfg.noise_levels;
  echo["dataset"] = dataset_spec_to_json(cfg.dataset);
  echo["epochs"] = cfg.train.epochs;
  echo["runs"] = cfg.significance.runs;
  echo["layer"] = cfg.layer;
  echo["concept_examples"] = cfg.concept_examples;
  echo["negative_pool_size"] = cfg.negative_pool_size;
  echo["save_datasets"] = cfg.save_datasets;
  manifest.config(echo);
  manifest.output(out_dir + "/summary.csv");
  manifest.output(out_dir + "/summary.json");

  int consistent = 0;
  for (const tcav::ExperimentCell& cell : result.cells) consistent += cell.consistent ? 1 : 0;
  std::printf("%s\n", tcav::experiment_summary_csv(result).c_str());
  std::printf("consistent cells: %d / %zu\n", consistent, result.cells.size());
  manifest.write(manifest_path.empty() ? out_dir + "/manifest.json" : manifest_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"concept activation vectors on a toy convolutional stack"};
  app.require_subcommand(1);
  std::string manifest_path;
  app.add_option("--manifest", manifest_path,
                 "run-manifest path (default: next to the main output)");

  try {
    uint64_t seed = default_seed();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the controlled captioned dataset");
    std::string gen_spec, gen_out;
    std::optional<uint64_t> gen_seed;
    gen->add_option("--spec", gen_spec, "dataset spec JSON")->required();
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    uint64_t gen_seed_val = 0;
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed_val, "override the spec's seed");

    // train
    auto* train = app.add_subcommand("train", "train the reference model on a dataset");
    std::string train_data, train_model, train_config;
    tcav::TrainConfig train_flags;
    train_flags.epochs = -1;
    train_flags.batch_size = 0;
    train_flags.learning_rate = 0;
    train_flags.momentum = -1;
    train_flags.l2 = -1;
    uint64_t train_model_seed = seed;
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--model", train_model, "output checkpoint path")->required();
    train->add_option("--config", train_config, "training config JSON");
    train->add_option("--epochs", train_flags.epochs, "training epochs");
    train->add_option("--batch-size", train_flags.batch_size, "minibatch size");
    train->add_option("--lr", train_flags.learning_rate, "learning rate");
    train->add_option("--momentum", train_flags.momentum, "momentum coefficient");
    train->add_option("--l2", train_flags.l2, "weight decay");
    auto* train_seed_opt = train->add_option("--seed", train_flags.seed, "batch-order seed");
    train->add_option("--init-seed", train_model_seed, "weight init seed");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    std::string eval_data, eval_model, eval_split = "heldout", eval_out = "eval.json";
    bool eval_strip = false;
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--model", eval_model, "checkpoint path")->required();
    eval->add_flag("--strip-captions", eval_strip, "blank the caption band first");
    eval->add_option("--split", eval_split, "train or heldout")
        ->check(CLI::IsMember({"train", "heldout"}));
    eval->add_option("--out", eval_out, "result JSON path");

    // learn-cav
    auto* learn = app.add_subcommand("learn-cav", "train a concept activation vector");
    std::string learn_model, learn_layer, learn_pos, learn_neg, learn_out;
    ProbeFlags learn_probe;
    uint64_t learn_seed = seed;
    learn->add_option("--model", learn_model, "checkpoint path")->required();
    learn->add_option("--layer", learn_layer, "capture point name")->required();
    learn->add_option("--pos", learn_pos, "positive concept source")->required();
    learn->add_option("--neg", learn_neg, "negative concept source")->required();
    learn->add_option("--out", learn_out, "output CAV JSON")->required();
    learn->add_option("--seed", learn_seed, "probe seed");
    learn_probe.add_to(learn);

    // probe-layers
    auto* probe = app.add_subcommand("probe-layers", "probe accuracy at every capture point");
    std::string probe_model, probe_pos, probe_neg, probe_out;
    ProbeFlags probe_probe;
    uint64_t probe_seed = seed;
    probe->add_option("--model", probe_model, "checkpoint path")->required();
    probe->add_option("--pos", probe_pos, "positive concept source")->required();
    probe->add_option("--neg", probe_neg, "negative concept source")->required();
    probe->add_option("--out", probe_out, "output CSV")->required();
    probe->add_option("--seed", probe_seed, "probe seed");
    probe_probe.add_to(probe);

    // tcav
    auto* tc = app.add_subcommand("tcav", "significance-tested TCAV scores for concepts");
    std::string tc_model, tc_layer, tc_pool, tc_data, tc_class, tc_out;
    std::vector<std::string> tc_pos;
    int tc_runs = 500, tc_m = 2, tc_npr = 0;
    double tc_alpha = 0.05;
    bool tc_resample = false;
    ProbeFlags tc_probe;
    uint64_t tc_seed = seed;
    tc->add_option("--model", tc_model, "checkpoint path")->required();
    tc->add_option("--layer", tc_layer, "capture point name")->required();
    tc->add_option("--pos", tc_pos, "positive concept source (repeatable)")->required();
    tc->add_option("--neg-pool", tc_pool, "negative pool source")->required();
    tc->add_option("--data", tc_data, "dataset directory for class inputs")->required();
    tc->add_option("--class", tc_class, "class name or index")->required();
    tc->add_option("--out-dir", tc_out, "output directory")->required();
    tc->add_option("--runs", tc_runs, "CAV retraining runs");
    tc->add_option("--alpha", tc_alpha, "significance level");
    tc->add_option("--m", tc_m, "Bonferroni correction factor");
    tc->add_option("--negatives-per-run", tc_npr, "negatives drawn per run (0 = auto)");
    tc->add_flag("--resample-positives", tc_resample,
                 "redraw positives from the pool each run (random-concept control)");
    tc->add_option("--seed", tc_seed, "master seed");
    tc_probe.add_to(tc);

    // sort
    auto* sort_cmd = app.add_subcommand("sort", "rank images by cosine similarity to a CAV");
    std::string sort_model, sort_cav, sort_images, sort_out;
    int sort_top = 5;
    uint64_t sort_seed = seed;
    sort_cmd->add_option("--model", sort_model, "checkpoint path")->required();
    sort_cmd->add_option("--cav", sort_cav, "CAV JSON path")->required();
    sort_cmd->add_option("--images", sort_images, "image set source")->required();
    sort_cmd->add_option("--out-dir", sort_out, "output directory")->required();
    sort_cmd->add_option("--top", sort_top, "contact sheet size");
    sort_cmd->add_option("--seed", sort_seed, "source generation seed");

    // dream
    auto* dream = app.add_subcommand("dream", "activation maximization along a CAV");
    std::string dream_model, dream_cav, dream_start, dream_out;
    int dream_steps = 200, dream_jitter = 2;
    double dream_step = 0.05, dream_l2 = 1e-3;
    uint64_t dream_seed = seed;
    dream->add_option("--model", dream_model, "checkpoint path")->required();
    dream->add_option("--cav", dream_cav, "CAV JSON path")->required();
    dream->add_option("--out-dir", dream_out, "output directory")->required();
    dream->add_option("--steps", dream_steps, "ascent steps");
    dream->add_option("--step-size", dream_step, "ascent step size");
    dream->add_option("--jitter", dream_jitter, "max cyclic shift per step");
    dream->add_option("--l2-penalty", dream_l2, "image L2 penalty");
    dream->add_option("--start-image", dream_start, "PPM start image (default noise)");
    dream->add_option("--seed", dream_seed, "noise/jitter seed");

    // saliency
    auto* sal = app.add_subcommand("saliency", "pixel saliency map of a class logit");
    std::string sal_model, sal_image, sal_data, sal_split = "heldout", sal_class, sal_out;
    int sal_index = 0;
    sal->add_option("--model", sal_model, "checkpoint path")->required();
    sal->add_option("--image", sal_image, "input PPM");
    sal->add_option("--data", sal_data, "dataset directory (with --index)");
    sal->add_option("--index", sal_index, "sample index within --split");
    sal->add_option("--split", sal_split, "train or heldout")
        ->check(CLI::IsMember({"train", "heldout"}));
    sal->add_option("--class", sal_class, "class index")->required();
    sal->add_option("--out-dir", sal_out, "output directory")->required();

    // attack
    auto* atk = app.add_subcommand("attack", "single-step targeted FGSM");
    std::string atk_model, atk_image, atk_data, atk_split = "heldout", atk_target, atk_out;
    int atk_index = 0;
    double atk_eps = 0.05;
    atk->add_option("--model", atk_model, "checkpoint path")->required();
    atk->add_option("--image", atk_image, "input PPM");
    atk->add_option("--data", atk_data, "dataset directory (with --index)");
    atk->add_option("--index", atk_index, "sample index within --split");
    atk->add_option("--split", atk_split, "train or heldout")
        ->check(CLI::IsMember({"train", "heldout"}));
    atk->add_option("--target", atk_target, "target class")->required();
    atk->add_option("--epsilon", atk_eps, "per-pixel perturbation bound");
    atk->add_option("--out-dir", atk_out, "output directory")->required();

    // compare
    auto* cmp = app.add_subcommand("compare", "compare two TCAV report sets");
    std::vector<std::string> cmp_a, cmp_b;
    double cmp_threshold = 0.5;
    std::string cmp_out = "compare.json";
    cmp->add_option("--a", cmp_a, "baseline report JSONs")->required();
    cmp->add_option("--b", cmp_b, "comparison report JSONs")->required();
    cmp->add_option("--threshold", cmp_threshold, "KS flag threshold");
    cmp->add_option("--out", cmp_out, "output JSON");

    // experiment
    auto* exp = app.add_subcommand("experiment", "the controlled ground-truth experiment");
    tcav::ExperimentConfig exp_cfg;
    std::string exp_noise = "0,0.3,0.7,1.0", exp_out;
    bool exp_quiet = false;
    exp->add_option("--noise-list", exp_noise, "comma-separated caption noise levels");
    exp->add_option("--out", exp_out, "output directory")->required();
    exp->add_option("--train-per-class", exp_cfg.dataset.train_per_class, "train images/class");
    exp->add_option("--heldout-per-class", exp_cfg.dataset.heldout_per_class,
                    "heldout images/class");
    exp->add_option("--epochs", exp_cfg.train.epochs, "training epochs per model");
    exp->add_option("--runs", exp_cfg.significance.runs, "significance runs per concept");
    exp->add_option("--layer", exp_cfg.layer, "capture point for CAVs");
    exp->add_option("--concept-examples", exp_cfg.concept_examples, "concept positives cap");
    exp->add_option("--pool", exp_cfg.negative_pool_size, "negative pool size");
    exp->add_option("--seed", exp_cfg.seed, "experiment master seed");
    exp->add_flag("--save-data", exp_cfg.save_datasets, "also save full datasets");
    exp->add_flag("--quiet", exp_quiet, "suppress progress lines");
    exp_cfg.seed = seed;

    app.parse(argc, argv);

    if (gen->parsed()) {
      if (gen_seed_opt->count() > 0) gen_seed = gen_seed_val;
      return cmd_gen_data(gen_spec, gen_out, gen_seed, manifest_path);
    }
    if (train->parsed()) {
      return cmd_train(train_data, train_model, train_config, train_flags,
                       train_seed_opt->count() > 0, train_model_seed, manifest_path);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_data, eval_model, eval_strip, eval_split, eval_out, manifest_path);
    }
    if (learn->parsed()) {
      return cmd_learn_cav(learn_model, learn_layer, learn_pos, learn_neg, learn_out, learn_probe,
                           learn_seed, manifest_path);
    }
    if (probe->parsed()) {
      return cmd_probe_layers(probe_model, probe_pos, probe_neg, probe_out, probe_probe,
                              probe_seed, manifest_path);
    }
    if (tc->parsed()) {
      return cmd_tcav(tc_model, tc_layer, tc_pos, tc_pool, tc_data, tc_class, tc_runs, tc_alpha,
                      tc_m, tc_npr, tc_resample, tc_probe, tc_seed, tc_out, manifest_path);
    }
    if (sort_cmd->parsed()) {
      return cmd_sort(sort_model, sort_cav, sort_images, sort_top, sort_out, sort_seed,
                      manifest_path);
    }
    if (dream->parsed()) {
      return cmd_dream(dream_model, dream_cav, dream_steps, dream_step, dream_jitter, dream_l2,
                       dream_start, dream_out, dream_seed, manifest_path);
    }
    if (sal->parsed()) {
      return cmd_saliency(sal_model, sal_image, sal_data, sal_index, sal_split, sal_class,
                          sal_out, manifest_path);
    }
    if (atk->parsed()) {
      return cmd_attack(atk_model, atk_image, atk_data, atk_index, atk_split, atk_target, atk_eps,
                        atk_out, manifest_path);
    }
    if (cmp->parsed()) {
      return cmd_compare(cmp_a, cmp_b, cmp_threshold, cmp_out, manifest_path);
    }
    if (exp->parsed()) {
      return cmd_experiment(exp_noise, exp_out, exp_cfg, manifest_path, exp_quiet);
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const tcav::SignificanceAbort& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const tcav::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const tcav::InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
