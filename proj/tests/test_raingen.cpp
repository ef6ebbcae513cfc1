#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "derain/raingen.hpp"

using namespace derain;
namespace fs = std::filesystem;

namespace {

Tensor<float> card(int h, int w, uint64_t seed = 5) { return make_clean_image(h, w, seed); }

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(), size_t(a.size()) * sizeof(float)) == 0;
}

std::string fresh_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("raingen_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("switched-off degradations return the input bit for bit") {
  const Tensor<float> clean = card(40, 56);
  StreakParams sp;
  sp.intensity = 0.0;
  CHECK(bit_equal(synth_streaks(clean, sp), clean));
  DropParams dp;
  dp.density = 0.0;
  CHECK(bit_equal(synth_drops(clean, dp), clean));
}

TEST_CASE("generation is a pure function of its parameters") {
  const Tensor<float> clean = card(32, 32);
  StreakParams sp;
  DropParams dp;
  CHECK(bit_equal(synth_streaks(clean, sp), synth_streaks(clean, sp)));
  CHECK(bit_equal(synth_drops(clean, dp), synth_drops(clean, dp)));
  sp.seed = 2;
  CHECK(!bit_equal(synth_streaks(clean, StreakParams{}), synth_streaks(clean, sp)));
  CHECK(bit_equal(make_clean_image(32, 32, 9), make_clean_image(32, 32, 9)));
  CHECK(!bit_equal(make_clean_image(32, 32, 9), make_clean_image(32, 32, 10)));
}

TEST_CASE("heavier settings add more rain") {
  const Tensor<float> clean = card(48, 48);
  double prev = -1.0;
  for (double intensity : {0.1, 0.3, 0.6}) {
    StreakParams sp;
    sp.intensity = intensity;
    const Tensor<float> rainy = synth_streaks(clean, sp);
    const double added = mean_value(rainy) - mean_value(clean);
    CHECK(added > prev);
    prev = added;
  }
  CHECK(prev > 0.0);
}

TEST_CASE("streak layer stays inside its advertised range") {
  StreakParams sp;
  sp.brightness = 0.8;
  const Tensor<float> layer = streak_layer(40, 40, sp);
  REQUIRE(layer.shape == Shape::image(40, 40, 1));
  float mx = 0;
  for (int64_t i = 0; i < layer.size(); ++i) {
    CHECK(layer[i] >= 0.0f);
    CHECK(layer[i] <= 0.8f);
    mx = std::max(mx, layer[i]);
  }
  CHECK(mx == doctest::Approx(0.8f));  // max-normalized before scaling
}

TEST_CASE("drops only touch pixels under some ellipse") {
  const Tensor<float> clean = card(64, 64);
  DropParams dp;
  dp.density = 400.0;
  const Tensor<float> rainy = synth_drops(clean, dp);
  const auto geoms = sample_drops(64, 64, dp);
  REQUIRE(!geoms.empty());

  auto covered = [&](int y, int x) {
    for (const auto& g : geoms) {
      const double dx = (x - g.cx) / double(g.rx), dy = (y - g.cy) / double(g.ry);
      if (dx * dx + dy * dy <= 1.0) return true;
    }
    return false;
  };
  int changed = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool same = clean.at(y, x, 0) == rainy.at(y, x, 0) &&
                        clean.at(y, x, 1) == rainy.at(y, x, 1) &&
                        clean.at(y, x, 2) == rainy.at(y, x, 2);
      if (!covered(y, x)) CHECK(same);
      if (!same) ++changed;
    }
  CHECK(changed > 0);
}

TEST_CASE("drop radii respect their bounds") {
  DropParams dp;
  dp.density = 500.0;
  dp.radius_min = 4;
  dp.radius_max = 7;
  for (const auto& g : sample_drops(96, 96, dp)) {
    CHECK(g.rx >= 4);
    CHECK(g.rx <= 7);
    CHECK(g.ry >= 4);
    CHECK(g.ry <= 7);
  }
}

TEST_CASE("soft masks flag exactly the altered pixels") {
  const Tensor<float> a = card(24, 24, 11);
  Tensor<float> b = a;
  b.at(3, 4, 0) += 0.2f;
  b.at(10, 15, 2) -= 0.1f;
  const Tensor<float> m = compute_soft_mask(a, b);
  REQUIRE(m.shape == Shape::image(24, 24, 1));
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      const bool altered = (y == 3 && x == 4) || (y == 10 && x == 15);
      if (altered)
        CHECK(m.at(y, x, 0) > 0.0f);
      else
        CHECK(m.at(y, x, 0) == 0.0f);
      CHECK(m.at(y, x, 0) <= 1.0f);
    }
  // identical inputs give an all-zero mask, not 0/0
  const Tensor<float> z = compute_soft_mask(a, a);
  for (int64_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0f);
}

TEST_CASE("a joint pair carries consistent pieces") {
  const Tensor<float> clean = card(48, 40, 3);
  SamplePair p = synth_joint(clean, "t0", StreakParams{}, DropParams{});
  CHECK(p.id == "t0");
  CHECK(bit_equal(p.clean, clean));
  CHECK(p.rainy.shape == clean.shape);
  CHECK(p.mask_streak.shape == Shape::image(48, 40, 1));
  CHECK(p.mask_drop.shape == Shape::image(48, 40, 1));
  CHECK(all_finite(p.rainy));
  for (int64_t i = 0; i < p.rainy.size(); ++i) {
    CHECK(p.rainy[i] >= 0.0f);
    CHECK(p.rainy[i] <= 1.0f);
  }
  CHECK(max_abs_diff(p.rainy, clean) > 0.0f);
}

TEST_CASE("test cards are well-formed and distinct") {
  auto set = make_clean_set(3, 20, 28, 77);
  REQUIRE(set.size() == 3);
  for (const auto& img : set) {
    REQUIRE(img.shape == Shape::image(20, 28, 3));
    for (int64_t i = 0; i < img.size(); ++i) {
      CHECK(img[i] > 0.0f);
      CHECK(img[i] < 1.0f);
    }
  }
  CHECK(!bit_equal(set[0], set[1]));
  CHECK(!bit_equal(set[1], set[2]));
  // element i matches the single-image derivation the tools use
  CHECK(bit_equal(set[1], make_clean_set(2, 20, 28, 77)[1]));
}

TEST_CASE("level ladders hit both endpoints") {
  auto l = intensity_levels(0.2, 0.6, 5);
  REQUIRE(l.size() == 5);
  CHECK(l.front() == doctest::Approx(0.2));
  CHECK(l.back() == doctest::Approx(0.6));
  for (size_t i = 1; i < l.size(); ++i) CHECK(l[i] > l[i - 1]);
  auto one = intensity_levels(0.3, 0.9, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == doctest::Approx(0.3));
}

TEST_CASE("a corpus enumerates image times level with stable splits") {
  auto cleans = make_clean_set(4, 24, 24, 13);
  std::vector<std::string> names;
  for (int i = 0; i < 4; ++i) names.push_back(clean_image_name(i));
  SynthConfig cfg;
  cfg.levels = 3;
  cfg.test_fraction = 0.25;
  Corpus c = synth_corpus(cleans, names, cfg);
  REQUIRE(c.pairs.size() == 12);
  REQUIRE(c.infos.size() == 12);

  int n_test = 0;
  for (size_t i = 0; i < c.infos.size(); ++i) {
    CHECK(c.infos[i].id == c.pairs[i].id);
    CHECK((c.infos[i].split == "train" || c.infos[i].split == "test"));
    if (c.infos[i].split == "test") ++n_test;
  }
  CHECK(n_test % 3 == 0);  // whole images only, never single levels

  // the fraction knob has teeth at its extremes
  SynthConfig all_test = cfg;
  all_test.test_fraction = 1.0;
  for (const auto& info : synth_corpus(cleans, names, all_test).infos)
    CHECK(info.split == "test");
  SynthConfig all_train = cfg;
  all_train.test_fraction = 0.0;
  for (const auto& info : synth_corpus(cleans, names, all_train).infos)
    CHECK(info.split == "train");

  // all levels of one clean image stay on the same side of the split
  for (size_t i = 0; i < c.infos.size(); ++i)
    for (size_t j = 0; j < c.infos.size(); ++j) {
      const auto stem = [](const std::string& id) { return id.substr(0, id.find('_')); };
      if (stem(c.infos[i].id) == stem(c.infos[j].id))
        CHECK(c.infos[i].split == c.infos[j].split);
    }

  // same config, same corpus
  Corpus c2 = synth_corpus(cleans, names, cfg);
  for (size_t i = 0; i < c.pairs.size(); ++i) {
    CHECK(c.infos[i].split == c2.infos[i].split);
    CHECK(bit_equal(c.pairs[i].rainy, c2.pairs[i].rainy));
  }
}

TEST_CASE("datasets survive the disk round trip") {
  const std::string root = fresh_dir("roundtrip");
  auto cleans = make_clean_set(2, 24, 24, 23);
  SynthConfig cfg;
  cfg.levels = 2;
  cfg.test_fraction = 0.5;
  Corpus c = synth_corpus(cleans, {clean_image_name(0), clean_image_name(1)}, cfg);
  write_dataset(root, c.pairs, c.infos);

  Dataset d = read_dataset(root);
  REQUIRE(d.pairs.size() == c.pairs.size());
  REQUIRE(d.infos.size() == c.infos.size());
  for (size_t i = 0; i < c.pairs.size(); ++i) {
    CHECK(d.pairs[i].id == c.pairs[i].id);
    CHECK(d.infos[i].split == c.infos[i].split);
    CHECK(d.infos[i].sp.intensity == c.infos[i].sp.intensity);
    CHECK(d.infos[i].sp.seed == c.infos[i].sp.seed);
    CHECK(d.infos[i].dp.seed == c.infos[i].dp.seed);
    // 8-bit storage: half a quantization step, plus float rounding slack
    CHECK(max_abs_diff(d.pairs[i].clean, c.pairs[i].clean) <= 0.5f / 255.0f + 1e-6f);
    CHECK(max_abs_diff(d.pairs[i].rainy, c.pairs[i].rainy) <= 0.5f / 255.0f + 1e-6f);
    CHECK(max_abs_diff(d.pairs[i].mask_streak, c.pairs[i].mask_streak) <= 0.5f / 255.0f + 1e-6f);
    CHECK(max_abs_diff(d.pairs[i].mask_drop, c.pairs[i].mask_drop) <= 0.5f / 255.0f + 1e-6f);
  }
  fs::remove_all(root);
}

TEST_CASE("unreadable dataset roots are reported") {
  CHECK_THROWS_AS(read_dataset("/nonexistent/derain_ds"), Error);
  const std::string root = fresh_dir("empty");
  CHECK_THROWS_AS(read_dataset(root), Error);  // no manifest
  fs::remove_all(root);
}

TEST_CASE("parameter validation rejects nonsense") {
  const Tensor<float> clean = card(16, 16);
  StreakParams sp;
  sp.intensity = 1.5;
  CHECK_THROWS_AS(synth_streaks(clean, sp), Error);
  StreakParams sp2;
  sp2.length_px = 0;
  CHECK_THROWS_AS(synth_streaks(clean, sp2), Error);
  DropParams dp;
  dp.radius_min = 9;
  dp.radius_max = 3;
  CHECK_THROWS_AS(synth_drops(clean, dp), Error);
  DropParams dp2;
  dp2.density = -1.0;
  CHECK_THROWS_AS(synth_drops(clean, dp2), Error);
}
