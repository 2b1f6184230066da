// End-to-end checks of the command-line tool. Every case here spawns the real
// binary (path in TCAV_CLI_BIN) and inspects exit codes and artifacts; the
// library is linked in only to read those artifacts back and to fabricate a
// couple of fixture inputs.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include <tcav/cav.hpp>
#include <tcav/dataset.hpp>
#include <tcav/tcav.hpp>
#include <tcav/tensor.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_bin;
fs::path g_root;

std::string q(const std::string& s) { return "'" + s + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "cannot open " << p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

json jload(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args, const std::string& env_prefix = "") {
  static int n = 0;
  fs::path cap = g_root / ("cap" + std::to_string(n++) + ".txt");
  std::string cmd;
  if (!env_prefix.empty()) cmd += env_prefix + " ";
  cmd += q(g_bin);
  if (!args.empty()) cmd += " " + args;
  cmd += " >" + q(cap.string()) + " 2>&1";
  int rc = std::system(cmd.c_str());
  Run r;
  if (WIFEXITED(rc)) r.code = WEXITSTATUS(rc);
  r.out = slurp(cap);
  return r;
}

// One small dataset and trained checkpoint, built once through the CLI itself
// and shared by every case.
struct Fixture {
  std::string spec;
  std::string data;
  std::string model;
};

const Fixture& fx() {
  static Fixture f = [] {
    const char* bin = std::getenv("TCAV_CLI_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "set TCAV_CLI_BIN to the tcav binary path");
    g_bin = bin;
    g_root = fs::absolute("cli_scratch");
    fs::remove_all(g_root);
    fs::create_directories(g_root);

    Fixture v;
    v.spec = (g_root / "spec.json").string();
    v.data = (g_root / "data").string();
    v.model = (g_root / "model.ckpt").string();
    {
      std::ofstream spec(v.spec, std::ios::binary);
      spec << R"({"train_per_class": 15, "heldout_per_class": 6, "noise_p": 0.0, "seed": 9})"
           << "\n";
    }
    Run gen = run("gen-data --spec " + q(v.spec) + " --out " + q(v.data));
    REQUIRE_MESSAGE(gen.code == 0, gen.out);
    Run train = run("train --data " + q(v.data) + " --model " + q(v.model) +
                    " --epochs 2 --seed 1 --init-seed 17");
    REQUIRE_MESSAGE(train.code == 0, train.out);
    return v;
  }();
  return f;
}

}  // namespace

TEST_CASE("cli: help text and usage errors") {
  fx();
  Run help = run("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("concept activation") != std::string::npos);

  Run sub_help = run("tcav --help");
  CHECK(sub_help.code == 0);
  CHECK(sub_help.out.find("--neg-pool") != std::string::npos);

  CHECK(run("").code == 2);            // a subcommand is required
  CHECK(run("frobnicate").code == 2);  // unknown subcommand
  CHECK(run("gen-data --no-such-flag x").code == 2);
  CHECK(run("learn-cav --model " + q(fx().model)).code == 2);  // missing required flags
}

TEST_CASE("cli: gen-data is deterministic and seed-overridable") {
  const Fixture& f = fx();
  fs::path again = g_root / "data_again";
  Run r = run("gen-data --spec " + q(f.spec) + " --out " + q(again.string()));
  CHECK(r.code == 0);
  CHECK(r.out.find("caption agreement") != std::string::npos);
  CHECK(same_bytes(fs::path(f.data) / "inputs.tnsr", again / "inputs.tnsr"));
  CHECK(fs::exists(again / "manifest.json"));
  CHECK(fs::exists(again / "run_manifest.json"));

  json manifest = jload(again / "run_manifest.json");
  CHECK(manifest["command"] == "gen-data");
  CHECK(manifest["versions"]["artifact"] == "1.0.0");
  CHECK(manifest["versions"]["formats"]["tnsr"] == 1);
  CHECK(manifest["inputs"].size() >= 1);
  CHECK(manifest["outputs"].size() >= 2);
  CHECK(manifest["wall_clock_ms"].get<int64_t>() >= 0);

  fs::path other = g_root / "data_other";
  CHECK(run("gen-data --spec " + q(f.spec) + " --out " + q(other.string()) + " --seed 10").code ==
        0);
  CHECK_FALSE(same_bytes(fs::path(f.data) / "inputs.tnsr", other / "inputs.tnsr"));

  fs::path custom = g_root / "custom_manifest.json";
  fs::path third = g_root / "data_third";
  CHECK(run("--manifest " + q(custom.string()) + " gen-data --spec " + q(f.spec) + " --out " +
            q(third.string()))
            .code == 0);
  CHECK(fs::exists(custom));
  CHECK_FALSE(fs::exists(third / "run_manifest.json"));

  CHECK(run("gen-data --spec " + q((g_root / "missing.json").string()) + " --out " +
            q((g_root / "nope").string()))
            .code == 2);
}

TEST_CASE("cli: train writes checkpoint, stats, and manifest") {
  const Fixture& f = fx();
  CHECK(fs::exists(f.model));

  json stats = jload(f.model + ".train_stats.json");
  REQUIRE(stats.contains("epoch_loss"));
  CHECK(stats["epoch_loss"].size() == 2);
  double acc = stats["final_train_accuracy"].get<double>();
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  json manifest = jload(f.model + ".manifest.json");
  CHECK(manifest["command"] == "train");
  CHECK(manifest["versions"]["formats"]["checkpoint"] == 1);

  CHECK(run("train --data " + q((g_root / "absent").string()) + " --model " +
            q((g_root / "m2.ckpt").string()))
            .code == 2);
}

TEST_CASE("cli: eval reports split accuracy") {
  const Fixture& f = fx();
  fs::path out = g_root / "eval.json";
  Run r = run("eval --data " + q(f.data) + " --model " + q(f.model) +
              " --split heldout --out " + q(out.string()));
  CHECK(r.code == 0);
  json res = jload(out);
  CHECK(res["n"] == 18);  // 3 classes x 6 heldout
  CHECK(res["split"] == "heldout");
  CHECK(res["strip_captions"] == false);
  double acc = res["accuracy"].get<double>();
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  fs::path stripped = g_root / "eval_stripped.json";
  Run rs = run("eval --data " + q(f.data) + " --model " + q(f.model) +
               " --split heldout --strip-captions --out " + q(stripped.string()));
  CHECK(rs.code == 0);
  CHECK(jload(stripped)["strip_captions"] == true);

  CHECK(run("eval --data " + q(f.data) + " --model " + q(f.model) + " --split bogus --out " +
            q((g_root / "e2.json").string()))
            .code == 2);
}

TEST_CASE("cli: learn-cav reproduces byte-identical output") {
  const Fixture& f = fx();
  std::string common = "learn-cav --model " + q(f.model) +
                       " --layer relu2 --pos texture:striped:n=16:seed=5"
                       " --neg texture:solid:n=16:seed=6 --probe-epochs 80 --seed 3 --out ";
  fs::path a = g_root / "cav_a.json";
  fs::path b = g_root / "cav_b.json";
  REQUIRE_MESSAGE(run(common + q(a.string())).code == 0, "learn-cav failed");
  REQUIRE(run(common + q(b.string())).code == 0);
  CHECK(same_bytes(a, b));

  tcav::Cav cav = tcav::load_cav(a.string());
  CHECK(cav.concept_name == "striped");
  CHECK(cav.layer == "relu2");
  CHECK(cav.positive_provenance == "texture:striped:seed=5:n=16");
  double norm = 0.0;
  for (int64_t i = 0; i < cav.direction.size(); ++i) {
    norm += cav.direction.data()[i] * cav.direction.data()[i];
  }
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-10));

  CHECK(run("learn-cav --model " + q(f.model) +
            " --layer nowhere --pos texture:striped:n=8:seed=5"
            " --neg texture:solid:n=8:seed=6 --out " +
            q((g_root / "cav_err.json").string()))
            .code == 2);
}

TEST_CASE("cli: seed falls back to the environment") {
  const Fixture& f = fx();
  std::string common = "learn-cav --model " + q(f.model) +
                       " --layer relu1 --pos texture:dotted:n=12:seed=7"
                       " --neg texture:solid:n=12:seed=8 --probe-epochs 60 --out ";
  fs::path via_flag = g_root / "cav_seed_flag.json";
  fs::path via_env = g_root / "cav_seed_env.json";
  REQUIRE(run(common + q(via_flag.string()) + " --seed 42").code == 0);
  REQUIRE(run(common + q(via_env.string()), "TCAV_SEED=42").code == 0);
  CHECK(same_bytes(via_flag, via_env));

  Run bad = run("eval --data " + q(f.data) + " --model " + q(f.model), "TCAV_SEED=abc");
  CHECK(bad.code == 2);
  CHECK(bad.out.find("TCAV_SEED") != std::string::npos);
}

TEST_CASE("cli: an inseparable probe exits with the numeric-error code") {
  const Fixture& f = fx();
  // Four copies of one image as both sides: every activation row is identical,
  // which the probe must reject rather than fit.
  tcav::ConceptSet constant;
  constant.name = "constant";
  constant.provenance = "test:constant";
  tcav::Rng rng(5);
  tcav::Tensor one = tcav::render_texture("checker", 32, 32, 3, rng);
  for (int i = 0; i < 4; ++i) constant.examples.push_back(one);
  fs::path dir = g_root / "constant_concept";
  tcav::save_concept_dir(dir.string(), constant);

  Run r = run("learn-cav --model " + q(f.model) + " --layer input --pos " + q(dir.string()) +
              " --neg " + q(dir.string()) + " --out " + q((g_root / "cav_degen.json").string()));
  CHECK(r.code == 3);
  CHECK(r.out.find("inseparable") != std::string::npos);
}

TEST_CASE("cli: probe-layers emits one row per capture point") {
  const Fixture& f = fx();
  fs::path out = g_root / "probe.csv";
  Run r = run("probe-layers --model " + q(f.model) +
              " --pos texture:striped:n=12:seed=5 --neg texture:solid:n=12:seed=6"
              " --probe-epochs 60 --seed 2 --out " +
              q(out.string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);

  std::vector<std::string> rows = lines_of(slurp(out));
  REQUIRE(rows.size() == 10);
  CHECK(rows[0] == "layer,heldout_accuracy");
  const char* expected[] = {"input", "conv1", "relu1",  "conv2", "relu2",
                            "flatten", "dense1", "relu3", "logits"};
  for (int i = 0; i < 9; ++i) {
    std::string row = rows[static_cast<std::size_t>(i) + 1];
    auto comma = row.find(',');
    REQUIRE(comma != std::string::npos);
    CHECK(row.substr(0, comma) == expected[i]);
    double acc = std::stod(row.substr(comma + 1));
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
}

TEST_CASE("cli: tcav writes reports, csv, and bar data deterministically") {
  const Fixture& f = fx();
  std::string common = "tcav --model " + q(f.model) +
                       " --layer relu2 --pos texture:striped:n=16:seed=7"
                       " --pos texture:dotted:n=16:seed=8 --neg-pool texture:random:n=32:seed=9"
                       " --data " +
                       q(f.data) + " --runs 10 --probe-epochs 60 --seed 21 ";
  fs::path td = g_root / "tcav_out";
  Run r = run(common + "--class stripes --out-dir " + q(td.string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);

  tcav::TcavReport rep0 = tcav::load_report((td / "report_0.json").string());
  CHECK(rep0.concept_name == "striped");
  CHECK(rep0.class_index == 0);
  CHECK(rep0.layer == "relu2");
  CHECK(rep0.runs == 10);
  CHECK(rep0.scores.size() == 10);
  tcav::TcavReport rep1 = tcav::load_report((td / "report_1.json").string());
  CHECK(rep1.concept_name == "dotted");

  std::vector<std::string> csv = lines_of(slurp(td / "reports.csv"));
  REQUIRE(csv.size() == 3);
  CHECK(csv[0] == "concept,class,layer,runs,mean,p_value,significant,alpha,m,master_seed");
  CHECK(csv[1].rfind("striped,", 0) == 0);
  CHECK(csv[2].rfind("dotted,", 0) == 0);

  std::vector<std::string> bar = lines_of(slurp(td / "bar_class_stripes.csv"));
  REQUIRE(bar.size() == 3);
  CHECK(bar[0] == "concept,layer,tcavq,p_value,significant");
  CHECK(jload(td / "manifest.json")["command"] == "tcav");

  // Same seed, fresh directory: the reports must come out byte-identical.
  fs::path td2 = g_root / "tcav_again";
  REQUIRE(run(common + "--class stripes --out-dir " + q(td2.string())).code == 0);
  CHECK(same_bytes(td / "report_0.json", td2 / "report_0.json"));
  CHECK(same_bytes(td / "report_1.json", td2 / "report_1.json"));

  // Class by index resolves like the name.
  fs::path td3 = g_root / "tcav_byindex";
  REQUIRE(run(common + "--class 0 --out-dir " + q(td3.string())).code == 0);
  CHECK(same_bytes(td / "report_0.json", td3 / "report_0.json"));

  CHECK(run(common + "--class nosuch --out-dir " + q((g_root / "t4").string())).code == 2);
  CHECK(run(common + "--negatives-per-run 40 --class stripes --out-dir " +
            q((g_root / "t5").string()))
            .code == 2);
}

TEST_CASE("cli: sort ranks images and refuses the cav's own examples") {
  const Fixture& f = fx();
  fs::path cav = g_root / "cav_a.json";  // written by the learn-cav case
  REQUIRE(fs::exists(cav));
  fs::path sd = g_root / "sort_out";
  Run r = run("sort --model " + q(f.model) + " --cav " + q(cav.string()) +
              " --images texture:striped:n=8:seed=30 --top 3 --out-dir " + q(sd.string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);

  std::vector<std::string> rows = lines_of(slurp(sd / "ranking.csv"));
  REQUIRE(rows.size() == 9);
  CHECK(rows[0] == "rank,index,cosine");
  double prev = 1e9;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto comma = rows[i].rfind(',');
    REQUIRE(comma != std::string::npos);
    double cosine = std::stod(rows[i].substr(comma + 1));
    CHECK(cosine <= prev + 1e-12);
    prev = cosine;
  }
  tcav::Tensor sheet = tcav::read_ppm((sd / "most_similar.ppm").string());
  CHECK(sheet.rank() == 3);
  CHECK(fs::exists(sd / "least_similar.ppm"));

  // The images source matches the cav's positive provenance exactly.
  Run self = run("sort --model " + q(f.model) + " --cav " + q(cav.string()) +
                 " --images texture:striped:n=16:seed=5 --out-dir " +
                 q((g_root / "sort_self").string()));
  CHECK(self.code == 2);
}

TEST_CASE("cli: dream ascends and records its trace") {
  const Fixture& f = fx();
  fs::path cav = g_root / "cav_a.json";
  REQUIRE(fs::exists(cav));
  fs::path dd = g_root / "dream_out";
  Run r = run("dream --model " + q(f.model) + " --cav " + q(cav.string()) +
              " --steps 3 --step-size 0.05 --jitter 1 --l2-penalty 1e-3 --seed 11 --out-dir " +
              q(dd.string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);

  json trace = jload(dd / "trace.json");
  REQUIRE(trace.contains("objective"));
  CHECK(trace["objective"].size() == 4);  // start plus one entry per step
  tcav::Tensor img = tcav::load_tnsr((dd / "dream.tnsr").string());
  REQUIRE(img.rank() == 3);
  CHECK(img.extent(0) == 32);
  CHECK(img.extent(2) == 3);
  for (int64_t i = 0; i < img.size(); ++i) {
    CHECK(img.data()[i] >= 0.0f);
    CHECK(img.data()[i] <= 1.0f);
  }
  CHECK(fs::exists(dd / "dream.ppm"));

  CHECK(run("dream --model " + q(f.model) + " --cav " + q(cav.string()) +
            " --steps 0 --out-dir " + q((g_root / "dream_zero").string()))
            .code == 2);
}

TEST_CASE("cli: saliency writes the map and its raw tensor") {
  const Fixture& f = fx();
  fs::path sal = g_root / "saliency_out";
  Run r = run("saliency --model " + q(f.model) + " --data " + q(f.data) +
              " --index 0 --split heldout --class 2 --out-dir " + q(sal.string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(fs::exists(sal / "saliency.ppm"));
  tcav::Tensor raw = tcav::load_tnsr((sal / "saliency_raw.tnsr").string());
  CHECK(raw.rank() == 3);

  CHECK(run("saliency --model " + q(f.model) + " --data " + q(f.data) +
            " --index 0 --class 9 --out-dir " + q((g_root / "sal2").string()))
            .code == 2);
  CHECK(run("saliency --model " + q(f.model) + " --class 0 --out-dir " +
            q((g_root / "sal3").string()))
            .code == 2);  // neither --image nor --data
}

TEST_CASE("cli: attack stays inside the perturbation bound") {
  const Fixture& f = fx();
  fs::path ad = g_root / "attack_out";
  Run r = run("attack --model " + q(f.model) + " --data " + q(f.data) +
              " --index 1 --split heldout --target 2 --epsilon 0.1 --out-dir " + q(ad.string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);

  json res = jload(ad / "attack.json");
  CHECK(res["epsilon"].get<double>() == doctest::Approx(0.1));
  CHECK(res["target"] == 2);
  CHECK(res["linf"].get<double>() <= 0.1 + 1e-9);
  CHECK(res["prediction_before"].get<int>() >= 0);
  CHECK(res["prediction_after"].get<int>() >= 0);

  tcav::Tensor adv = tcav::load_tnsr((ad / "adversarial.tnsr").string());
  tcav::LabeledDataset ds = tcav::load_dataset(f.data);
  tcav::Tensor orig = ds.split_images(tcav::Split::heldout)[1];
  REQUIRE(adv.size() == orig.size());
  for (int64_t i = 0; i < adv.size(); ++i) {
    CHECK(std::abs(adv.data()[i] - orig.data()[i]) <= 0.1f + 1e-6f);
    CHECK(adv.data()[i] >= 0.0f);
    CHECK(adv.data()[i] <= 1.0f);
  }

  CHECK(run("attack --model " + q(f.model) + " --data " + q(f.data) +
            " --target 2 --epsilon -1 --out-dir " + q((g_root / "atk2").string()))
            .code == 2);
  CHECK(run("attack --model " + q(f.model) + " --data " + q(f.data) +
            " --target 7 --out-dir " + q((g_root / "atk3").string()))
            .code == 2);
}

TEST_CASE("cli: compare flags distribution shifts and rejects mismatched grids") {
  const Fixture& f = fx();
  (void)f;
  fs::path td = g_root / "tcav_out";
  fs::path td2 = g_root / "tcav_again";
  REQUIRE(fs::exists(td / "report_0.json"));
  REQUIRE(fs::exists(td2 / "report_0.json"));

  fs::path out = g_root / "compare.json";
  Run r = run("compare --a " + q((td / "report_0.json").string()) + " --b " +
              q((td2 / "report_0.json").string()) + " --threshold 0.5 --out " + q(out.string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.find("KS 0.0000") != std::string::npos);
  json cmp = jload(out);
  REQUIRE(cmp.contains("entries"));
  REQUIRE(cmp["entries"].size() == 1);
  CHECK(cmp["entries"][0]["ks"].get<double>() == doctest::Approx(0.0));
  CHECK(cmp["entries"][0]["flagged"] == false);

  // report_0 and report_1 cover different concepts: not comparable.
  CHECK(run("compare --a " + q((td / "report_0.json").string()) + " --b " +
            q((td / "report_1.json").string()) + " --out " + q((g_root / "c2.json").string()))
            .code == 2);
  CHECK(run("compare --a " + q((g_root / "absent.json").string()) + " --b " +
            q((td / "report_0.json").string()) + " --out " + q((g_root / "c3.json").string()))
            .code == 2);
}

TEST_CASE("cli: experiment sweeps noise levels end to end") {
  fx();
  fs::path exp = g_root / "experiment_out";
  Run r = run(
      "experiment --noise-list 0,1 --train-per-class 15 --heldout-per-class 6 --epochs 1"
      " --runs 4 --pool 16 --concept-examples 8 --seed 13 --quiet --out " +
      q(exp.string()));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.find("consistent cells:") != std::string::npos);

  for (const char* level : {"p0", "p1"}) {
    fs::path dir = exp / level;
    CHECK(fs::exists(dir / "model.ckpt"));
    CHECK(fs::exists(dir / "reports.csv"));
    for (const char* cls : {"stripes", "checker", "blobs"}) {
      CHECK(fs::exists(dir / ("report_image_" + std::string(cls) + ".json")));
      CHECK(fs::exists(dir / ("report_caption_" + std::string(cls) + ".json")));
    }
  }

  std::vector<std::string> summary = lines_of(slurp(exp / "summary.csv"));
  REQUIRE(summary.size() == 7);  // header + 2 levels x 3 classes
  CHECK(summary[0] ==
        "p,class,acc_clean,acc_stripped,tcavq_image,tcavq_caption,p_image,p_caption,consistent");

  json js = jload(exp / "summary.json");
  CHECK(js["noise_levels"].size() == 2);
  CHECK(js["classes"].size() == 3);
  REQUIRE(js["cells"].size() == 6);
  for (const json& cell : js["cells"]) {
    CHECK(cell["tcavq_image"].get<double>() >= 0.0);
    CHECK(cell["tcavq_image"].get<double>() <= 1.0);
    CHECK(cell["tcavq_caption"].get<double>() >= 0.0);
    CHECK(cell["tcavq_caption"].get<double>() <= 1.0);
    CHECK(cell.contains("consistent"));
  }
  CHECK(jload(exp / "manifest.json")["command"] == "experiment");

  CHECK(run("experiment --noise-list 0,abc --out " + q((g_root / "exp2").string())).code == 2);
}
