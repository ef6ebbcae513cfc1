#pragma once

#include <string>
#include <vector>

#include "derain/blocks.hpp"

namespace derain {

// Every tunable knob of the pipeline in one flat struct. Serialized as
// ordered "key = value" lines; unknown keys are rejected and a dump/load
// cycle reproduces the struct exactly.
struct RunConfig {
  // model
  ModelConfig model;
  std::string variant = "dam_dual";

  // training
  std::string optimizer = "adam";
  int batch_size = 4;
  int crop = 112;
  double lr_start = 1e-4;
  double lr_end = 1e-6;
  double lr_factor = 0.5;
  std::string lr_decay = "plateau";  // plateau | step:<i1,i2,...> | none
  int plateau_window = 1000;
  double plateau_improve = 0.01;
  long long max_iters = 0;
  unsigned long long seed = 1;
  double alpha = 0.8;
  double beta1 = 1.0;
  double beta2 = 0.3;
  double clip_norm = 5.0;
  bool fp64 = false;
  int log_every = 10;
  int checkpoint_every = 1000;
  int eval_every = 0;

  // synthesis
  int levels = 4;
  double intensity_min = 0.2;
  double intensity_max = 0.6;
  double angle_min = -30.0;
  double angle_max = 30.0;
  int streak_length = 12;
  double streak_brightness = 0.8;
  double drop_density = 100.0;
  int drop_radius_min = 3;
  int drop_radius_max = 9;
  double drop_refraction = 0.6;
  double test_fraction = 0.1;

  bool operator==(const RunConfig&) const = default;
};

// key=value text round-trip
std::string config_dump(const RunConfig& c);
void config_apply_text(RunConfig& c, const std::string& text);
RunConfig config_parse_text(const std::string& text);
void config_apply_kv(RunConfig& c, const std::string& key, const std::string& value);

RunConfig config_load(const std::string& path);
void config_save(const RunConfig& c, const std::string& path);

std::vector<std::string> config_keys();

}  // namespace derain
