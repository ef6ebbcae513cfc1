#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "derain/config.hpp"
#include "derain/train.hpp"

using namespace derain;
namespace fs = std::filesystem;

namespace {

RunConfig exercised() {
  RunConfig c;
  c.variant = "ddaiam";
  c.model.feat_ch = 24;
  c.model.dec_ch = 48;
  c.model.recurrence_R = 2;
  c.model.stages_T = 3;
  c.model.filternet_ch = 8;
  c.model.lrelu_slope = 0.1;
  c.model.fusion_w = 0.25;
  c.optimizer = "sgd";
  c.batch_size = 2;
  c.crop = 48;
  c.lr_start = 5e-3;
  c.lr_end = 1e-7;
  c.lr_factor = 0.25;
  c.lr_decay = "step:100,200,300";
  c.plateau_window = 50;
  c.plateau_improve = 0.02;
  c.max_iters = 123456789012345LL;
  c.seed = 18446744073709551615ULL;  // uint64 max survives the text form
  c.alpha = 0.5;
  c.beta1 = 0.9;
  c.beta2 = 0.1;
  c.clip_norm = 2.5;
  c.fp64 = true;
  c.log_every = 7;
  c.checkpoint_every = 0;
  c.eval_every = 33;
  c.levels = 2;
  c.intensity_min = 0.11;
  c.intensity_max = 0.77;
  c.angle_min = -12.0;
  c.angle_max = 12.0;
  c.streak_length = 9;
  c.streak_brightness = 0.6;
  c.drop_density = 42.0;
  c.drop_radius_min = 2;
  c.drop_radius_max = 5;
  c.drop_refraction = 0.9;
  c.test_fraction = 0.2;
  return c;
}

}  // namespace

TEST_CASE("defaults survive a dump and parse cycle") {
  RunConfig c;
  CHECK(config_parse_text(config_dump(c)) == c);
}

TEST_CASE("every key changed still round-trips exactly") {
  const RunConfig c = exercised();
  CHECK(config_parse_text(config_dump(c)) == c);
}

TEST_CASE("files behave like the in-memory text form") {
  const RunConfig c = exercised();
  const std::string path = (fs::temp_directory_path() / "derain_cfg_test.cfg").string();
  config_save(c, path);
  CHECK(config_load(path) == c);
  fs::remove(path);
  CHECK_THROWS_AS(config_load("/nonexistent/derain.cfg"), Error);
}

TEST_CASE("parsing tolerates comments and blank lines only") {
  RunConfig c;
  config_apply_text(c, "# comment\n\n  crop = 64  \nvariant=daiam\n");
  CHECK(c.crop == 64);
  CHECK(c.variant == "daiam");
  CHECK_THROWS_AS(config_apply_text(c, "crop 64\n"), Error);
  CHECK_THROWS_AS(config_apply_text(c, "= 64\n"), Error);
}

TEST_CASE("unknown keys and malformed values are rejected loudly") {
  RunConfig c;
  CHECK_THROWS_WITH_AS(config_apply_kv(c, "learning_rate", "0.1"),
                       doctest::Contains("learning_rate"), Error);
  CHECK_THROWS_WITH_AS(config_apply_kv(c, "crop", "abc"), doctest::Contains("crop"), Error);
  CHECK_THROWS_AS(config_apply_kv(c, "crop", "64x"), Error);
  CHECK_THROWS_AS(config_apply_kv(c, "lr_start", "fast"), Error);
  CHECK_THROWS_AS(config_apply_kv(c, "fp64", "maybe"), Error);
  // errors leave earlier assignments in place but report before applying
  CHECK(c.crop == RunConfig{}.crop);
}

TEST_CASE("the advertised key list is complete and ordered like the dump") {
  const auto keys = config_keys();
  std::istringstream is(config_dump(RunConfig{}));
  std::string line;
  size_t i = 0;
  while (std::getline(is, line)) {
    REQUIRE(i < keys.size());
    CHECK(line.rfind(keys[i] + " = ", 0) == 0);
    ++i;
  }
  CHECK(i == keys.size());
  // a couple of spot checks against renames
  CHECK(std::count(keys.begin(), keys.end(), "feat_ch") == 1);
  CHECK(std::count(keys.begin(), keys.end(), "w") == 1);
  CHECK(std::count(keys.begin(), keys.end(), "seed") == 1);
}

TEST_CASE("decay schedules parse the documented forms") {
  RunConfig c;
  c.lr_start = 1e-3;
  c.lr_end = 1e-6;

  c.lr_decay = "plateau";
  CHECK_NOTHROW(LrSched::from(c));
  c.lr_decay = "none";
  CHECK_NOTHROW(LrSched::from(c));
  c.lr_decay = "step:10,20,30";
  LrSched s = LrSched::from(c);
  REQUIRE(s.milestones.size() == 3);
  CHECK(s.milestones[0] == 10);
  CHECK(s.milestones[2] == 30);

  c.lr_decay = "step:";
  CHECK_THROWS_AS(LrSched::from(c), Error);
  c.lr_decay = "step:5,abc";
  CHECK_THROWS_AS(LrSched::from(c), Error);
  c.lr_decay = "exponential";
  CHECK_THROWS_AS(LrSched::from(c), Error);

  c.lr_decay = "plateau";
  c.lr_factor = 1.5;  // growth is not decay
  CHECK_THROWS_AS(LrSched::from(c), Error);
  c.lr_factor = 0.5;
  c.lr_start = 0.0;
  CHECK_THROWS_AS(LrSched::from(c), Error);
}
