#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "tcav/errors.hpp"
#include "tcav/extras.hpp"
#include "tcav/rng.hpp"

using namespace tcav;

namespace {

std::string temp_path(const std::string& leaf) {
  return (std::filesystem::temp_directory_path() / leaf).string();
}

Cav input_cav(int64_t width, int64_t hot) {
  Cav cav;
  cav.concept_name = "c";
  cav.layer = "input";
  cav.direction = Tensor({width});
  cav.direction.data()[hot] = 1.0;
  return cav;
}

Tensor uniform_image(Rng& rng, std::vector<int64_t> shape) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("sort ranks by cosine against the direction") {
  // At the input capture point the activation is the image itself, so the
  // cosines have a paper-and-pencil oracle.
  LayeredModel m({2, 2, 1}, 2, {LayerSpec::make_flatten("flat"), LayerSpec::make_dense("out", 2)},
                 1);
  Cav cav = input_cav(4, 0);

  ConceptSet images;
  images.name = "probe";
  images.examples.push_back(Tensor({2, 2, 1}, {1, 0, 0, 0}));    // cos 1
  images.examples.push_back(Tensor({2, 2, 1}, {0, 1, 0, 0}));    // cos 0
  images.examples.push_back(Tensor({2, 2, 1}, {1, 1, 1, 1}));    // cos 1/2
  images.examples.push_back(Tensor({2, 2, 1}, {0, 0, 1, 1}));    // cos 0, ties index 1
  images.examples.push_back(Tensor({2, 2, 1}, {1, 1, 0, 0}));    // cos 1/sqrt(2)

  std::vector<RankedImage> ranked = sort_by_concept(m, "input", cav, images);
  REQUIRE(ranked.size() == 5);
  CHECK(ranked[0].index == 0);
  CHECK(ranked[0].cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ranked[1].index == 4);
  CHECK(ranked[1].cosine == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(ranked[2].index == 2);
  CHECK(ranked[2].cosine == doctest::Approx(0.5).epsilon(1e-12));
  // The two zero-cosine images keep input order.
  CHECK(ranked[3].index == 1);
  CHECK(ranked[4].index == 3);
  for (size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1].cosine >= ranked[i].cosine);
}

TEST_CASE("sort refuses the CAV's own training set") {
  LayeredModel m = make_reference_model({16, 16, 3}, 2, 3);
  ConceptSet pos = generate_texture_concept("striped", 10, 123, 16, 16, 3);
  ConceptSet neg = generate_texture_concept("solid", 10, 124, 16, 16, 3);
  ProbeConfig pc;
  pc.epochs = 50;
  Cav cav = train_cav(m, "relu2", pos, neg, pc);

  CHECK_THROWS_AS(sort_by_concept(m, "relu2", cav, pos), InputError);

  // Fresh draws of the same texture have different provenance and sort fine.
  ConceptSet fresh = generate_texture_concept("striped", 6, 125, 16, 16, 3);
  CHECK(sort_by_concept(m, "relu2", cav, fresh).size() == 6);

  // Layer/width mismatches.
  CHECK_THROWS_AS(sort_by_concept(m, "relu1", cav, fresh), InputError);
  Cav narrow = cav;
  narrow.direction = Tensor({3}, {1, 0, 0});
  CHECK_THROWS_AS(sort_by_concept(m, "relu2", narrow, fresh), InputError);
  ConceptSet empty;
  empty.name = "empty";
  CHECK_THROWS_AS(sort_by_concept(m, "relu2", cav, empty), InputError);
}

TEST_CASE("dream at the input layer follows the exact gradient") {
  // Activation at "input" is the image, so the objective is v·x - l2·|x|² and
  // one step with jitter off moves exactly step_size along v (clamped).
  LayeredModel m = make_reference_model({8, 8, 3}, 2, 9);
  Cav cav = input_cav(8 * 8 * 3, 0);

  DreamConfig cfg;
  cfg.steps = 1;
  cfg.step_size = 0.1;
  cfg.jitter = 0;
  cfg.l2_penalty = 0.0;
  cfg.start = DreamStart::image;
  cfg.start_image = Tensor::full({8, 8, 3}, 0.5);

  DreamResult r = activation_maximize(m, "input", cav, cfg);
  REQUIRE(r.objective.size() == 2);
  CHECK(r.objective[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.objective[1] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(r.image[0] == doctest::Approx(0.6).epsilon(1e-12));
  for (int64_t i = 1; i < r.image.size(); ++i) CHECK(r.image[i] == 0.5);

  // Zero step size: the image is exactly the start, objective flat.
  DreamConfig still = cfg;
  still.step_size = 0.0;
  DreamResult r0 = activation_maximize(m, "input", cav, still);
  CHECK(r0.objective[0] == r0.objective[1]);
  for (int64_t i = 0; i < r0.image.size(); ++i) CHECK(r0.image[i] == 0.5);
}

TEST_CASE("dream ascends and stays in pixel range") {
  LayeredModel m = make_reference_model({16, 16, 3}, 3, 5);
  Rng rng(21);
  Tensor v({m.activation_width("relu2")});
  double n = 0;
  for (int64_t j = 0; j < v.size(); ++j) {
    v.data()[j] = rng.normal();
    n += v[j] * v[j];
  }
  for (int64_t j = 0; j < v.size(); ++j) v.data()[j] /= std::sqrt(n);
  Cav cav;
  cav.concept_name = "c";
  cav.layer = "relu2";
  cav.direction = v;

  DreamConfig cfg;
  cfg.steps = 40;
  cfg.step_size = 0.05;
  cfg.seed = 4;
  DreamResult r = activation_maximize(m, "relu2", cav, cfg);
  CHECK(static_cast<int>(r.objective.size()) == cfg.steps + 1);
  CHECK(r.objective.back() > r.objective.front());
  for (int64_t i = 0; i < r.image.size(); ++i) {
    CHECK(r.image[i] >= 0.0);
    CHECK(r.image[i] <= 1.0);
  }

  // Deterministic per seed; a different seed starts from different noise.
  DreamResult again = activation_maximize(m, "relu2", cav, cfg);
  CHECK(std::equal(r.image.data(), r.image.data() + r.image.size(), again.image.data()));
  DreamConfig other = cfg;
  other.seed = 5;
  DreamResult diff = activation_maximize(m, "relu2", cav, other);
  CHECK_FALSE(std::equal(r.image.data(), r.image.data() + r.image.size(), diff.image.data()));
}

TEST_CASE("dream config validation") {
  LayeredModel m = make_reference_model({8, 8, 3}, 2, 9);
  Cav cav = input_cav(8 * 8 * 3, 0);

  DreamConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(activation_maximize(m, "input", cav, cfg), InputError);
  cfg = DreamConfig{};
  cfg.step_size = -0.1;
  CHECK_THROWS_AS(activation_maximize(m, "input", cav, cfg), InputError);
  cfg = DreamConfig{};
  cfg.jitter = -1;
  CHECK_THROWS_AS(activation_maximize(m, "input", cav, cfg), InputError);
  cfg = DreamConfig{};
  cfg.l2_penalty = -1e-9;
  CHECK_THROWS_AS(activation_maximize(m, "input", cav, cfg), InputError);

  cfg = DreamConfig{};
  cfg.start = DreamStart::image;
  cfg.start_image = Tensor::full({4, 4, 3}, 0.5);  // wrong shape
  CHECK_THROWS_AS(activation_maximize(m, "input", cav, cfg), InputError);

  Cav wrong = input_cav(7, 0);
  CHECK_THROWS_AS(activation_maximize(m, "input", wrong, DreamConfig{}), InputError);

  // Non-image model: dreaming needs an [h,w,c] input.
  LayeredModel flat({6}, 2, {LayerSpec::make_dense("out", 2)}, 1);
  Cav fc = input_cav(6, 0);
  CHECK_THROWS_AS(activation_maximize(flat, "input", fc, DreamConfig{}), InputError);
}

TEST_CASE("saliency of a linear pixel model is exact") {
  LayeredModel m({2, 2, 1}, 2, {LayerSpec::make_flatten("flat"), LayerSpec::make_dense("out", 2)},
                 1);
  m.weights()[0] = Tensor({4, 2}, {5, 0, 0, 0, 0, 0, 0, 0});
  m.weights()[1] = Tensor({2}, {0, 0});
  Tensor x({2, 2, 1}, {0.3, 0.9, 0.1, 0.5});

  SaliencyMap sm = saliency_map(m, 0, x);
  CHECK(sm.raw.shape() == x.shape());
  CHECK(sm.raw[0] == 5.0);
  CHECK(sm.raw[1] == 0.0);
  REQUIRE(sm.display.rank() == 2);
  CHECK(sm.display.extent(0) == 2);
  CHECK(sm.display.extent(1) == 2);
  CHECK(sm.display[0] == 5.0);
  CHECK(sm.display[1] == 0.0);
  CHECK(sm.display[2] == 0.0);
  CHECK(sm.display[3] == 0.0);

  CHECK_THROWS_AS(saliency_map(m, 2, x), InputError);
  CHECK_THROWS_AS(saliency_map(m, -1, x), InputError);
}

TEST_CASE("saliency matches finite differences on the conv net") {
  LayeredModel m = make_reference_model({12, 12, 3}, 3, 7);
  Rng rng(3);
  Tensor x = uniform_image(rng, {12, 12, 3});
  SaliencyMap sm = saliency_map(m, 1, x);

  double worst = 0;
  for (int check = 0; check < 40; ++check) {
    int64_t i = static_cast<int64_t>(rng.uniform() * static_cast<double>(x.size()));
    double eps = 1e-5;
    Tensor xp = x, xm = x;
    xp.data()[i] += eps;
    xm.data()[i] -= eps;
    double fd = (m.logits_one(xp)[1] - m.logits_one(xm)[1]) / (2 * eps);
    worst = std::max(worst, std::fabs(fd - sm.raw[i]) / std::max(1e-4, std::fabs(fd)));
  }
  CHECK(worst < 1e-4);

  // display is the channel-wise absolute sum of raw.
  for (int64_t y = 0; y < 12; ++y) {
    for (int64_t xx = 0; xx < 12; ++xx) {
      double s = 0;
      for (int64_t c = 0; c < 3; ++c) s += std::fabs(sm.raw[(y * 12 + xx) * 3 + c]);
      CHECK(sm.display[y * 12 + xx] == doctest::Approx(s).epsilon(1e-15));
    }
  }
}

TEST_CASE("heatmap ppm is peak-normalized grayscale") {
  Tensor display({2, 3}, {0.0, 1.0, 2.0, 4.0, 0.5, 1.0});
  std::string path = temp_path("tcav_test_heat.ppm");
  write_heatmap_ppm(path, display);
  Tensor img = read_ppm(path);
  REQUIRE(img.shape() == std::vector<int64_t>{2, 3, 3});
  // Peak maps to pure white; everything else to v/peak on the 8-bit grid.
  for (int64_t i = 0; i < display.size(); ++i) {
    double want = quantize8(display[i] / 4.0);
    for (int64_t c = 0; c < 3; ++c) {
      CHECK(img[i * 3 + c] == doctest::Approx(want).epsilon(1e-12));
    }
  }
  std::filesystem::remove(path);

  // All-zero map: defined (all black), not a division by zero.
  write_heatmap_ppm(path, Tensor({2, 2}));
  Tensor black = read_ppm(path);
  for (int64_t i = 0; i < black.size(); ++i) CHECK(black[i] == 0.0);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(write_heatmap_ppm(path, Tensor({2, 2, 3})), InputError);
}

TEST_CASE("fgsm perturbs within the epsilon ball") {
  LayeredModel m = make_reference_model({12, 12, 3}, 3, 17);
  Rng rng(8);

  Tensor x = uniform_image(rng, {12, 12, 3});
  AttackConfig zero{0.0, 1};
  Tensor same = fgsm_attack(m, x, zero);
  CHECK(std::equal(same.data(), same.data() + same.size(), x.data()));

  AttackConfig cfg{0.07, 2};
  for (int trial = 0; trial < 5; ++trial) {
    Tensor img = uniform_image(rng, {12, 12, 3});
    Tensor adv = fgsm_attack(m, img, cfg);
    double linf = 0;
    for (int64_t i = 0; i < img.size(); ++i) {
      CHECK(adv[i] >= 0.0);
      CHECK(adv[i] <= 1.0);
      linf = std::max(linf, std::fabs(adv[i] - img[i]));
    }
    CHECK(linf <= cfg.epsilon + 1e-12);
    CHECK(linf > 0.0);

    // One signed step down the loss gradient lowers the targeted
    // cross-entropy for a small epsilon.
    double before = -std::log(m.predict_proba({img})[cfg.target]);
    double after = -std::log(m.predict_proba({adv})[cfg.target]);
    CHECK(after < before);
  }

  CHECK_THROWS_AS(fgsm_attack(m, x, AttackConfig{-0.1, 0}), InputError);
  CHECK_THROWS_AS(fgsm_attack(m, x, AttackConfig{0.1, 3}), InputError);
  CHECK_THROWS_AS(fgsm_attack(m, x, AttackConfig{0.1, -1}), InputError);
}

TEST_CASE("contact sheet tiles images with a gutter") {
  ConceptSet imgs = generate_texture_concept("checker", 3, 55, 32, 32, 3);
  std::string path = temp_path("tcav_test_sheet.ppm");
  write_contact_sheet(path, imgs.examples, 2);
  Tensor sheet = read_ppm(path);
  // 2 rows x 2 cols of 32px tiles plus a 1px gutter between them.
  REQUIRE(sheet.extent(0) == 65);
  REQUIRE(sheet.extent(1) == 65);

  auto tile_equal = [&](int64_t y0, int64_t x0, const Tensor& img) {
    for (int64_t y = 0; y < 32; ++y) {
      for (int64_t x = 0; x < 32; ++x) {
        for (int64_t c = 0; c < 3; ++c) {
          if (sheet[((y0 + y) * 65 + (x0 + x)) * 3 + c] != img[(y * 32 + x) * 3 + c]) {
            return false;
          }
        }
      }
    }
    return true;
  };
  // Texture pixels sit on the 8-bit grid, so PPM round-trips them exactly.
  CHECK(tile_equal(0, 0, imgs.examples[0]));
  CHECK(tile_equal(0, 33, imgs.examples[1]));
  CHECK(tile_equal(33, 0, imgs.examples[2]));

  // Gutter column and the unfilled fourth cell stay white.
  for (int64_t y = 0; y < 65; ++y) {
    for (int64_t c = 0; c < 3; ++c) CHECK(sheet[(y * 65 + 32) * 3 + c] == 1.0);
  }
  for (int64_t y = 40; y < 50; ++y) {
    for (int64_t x = 40; x < 50; ++x) {
      for (int64_t c = 0; c < 3; ++c) CHECK(sheet[(y * 65 + x) * 3 + c] == 1.0);
    }
  }
  std::filesystem::remove(path);

  // More columns than images collapses to one row.
  write_contact_sheet(path, {imgs.examples[0], imgs.examples[1]}, 5);
  Tensor rowsheet = read_ppm(path);
  CHECK(rowsheet.extent(0) == 32);
  CHECK(rowsheet.extent(1) == 65);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(write_contact_sheet(path, {}, 2), InputError);
  CHECK_THROWS_AS(write_contact_sheet(path, {imgs.examples[0]}, 0), InputError);
  CHECK_THROWS_AS(write_contact_sheet(path, {Tensor({4, 4})}, 1), InputError);
  CHECK_THROWS_AS(
      write_contact_sheet(path, {imgs.examples[0], Tensor({4, 4, 3})}, 2), InputError);
}
