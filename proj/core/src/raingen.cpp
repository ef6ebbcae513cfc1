#include "derain/raingen.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "derain/png_io.hpp"

namespace fs = std::filesystem;

namespace derain {

namespace {

void validate_clean(const Tensor<float>& clean, const char* who) {
  require(clean.shape.ndim == 3 && clean.c() == 3, who, ": expected (h,w,3) image, got ",
          clean.shape.str());
  for (auto v : clean.data)
    require(v >= -1e-6f && v <= 1.0f + 1e-6f, who, ": input values must lie in [0,1]");
}

float bilinear(const Tensor<float>& img, double y, double x, int ch) {
  const int h = img.h(), w = img.w();
  if (y < 0) y = 0;
  if (x < 0) x = 0;
  if (y > h - 1) y = h - 1;
  if (x > w - 1) x = w - 1;
  const int y0 = int(y), x0 = int(x);
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  return float((1 - fy) * ((1 - fx) * img.at(y0, x0, ch) + fx * img.at(y0, x1, ch)) +
               fy * ((1 - fx) * img.at(y1, x0, ch) + fx * img.at(y1, x1, ch)));
}

// 5x5 box blur with clamped borders; cheap stand-in for the out-of-focus
// background seen through an adherent drop.
Tensor<float> box_blur5(const Tensor<float>& img) {
  const int h = img.h(), w = img.w(), c = img.c();
  Tensor<float> tmp(img.shape), out(img.shape);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        float s = 0;
        for (int k = -2; k <= 2; ++k) {
          int xx = std::min(w - 1, std::max(0, x + k));
          s += img.at(y, xx, ch);
        }
        tmp.at(y, x, ch) = s / 5.0f;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        float s = 0;
        for (int k = -2; k <= 2; ++k) {
          int yy = std::min(h - 1, std::max(0, y + k));
          s += tmp.at(yy, x, ch);
        }
        out.at(y, x, ch) = s / 5.0f;
      }
  return out;
}

std::string sanitize_id(const std::string& s) {
  std::string out;
  for (char ch : s)
    out += (std::isalnum((unsigned char)ch) || ch == '-' || ch == '_') ? ch : '_';
  require(!out.empty(), "empty sample id");
  return out;
}

}  // namespace

Tensor<float> streak_layer(int h, int w, const StreakParams& p) {
  require(p.intensity >= 0.0 && p.intensity <= 1.0, "intensity out of [0,1]: ", p.intensity);
  require(p.length_px >= 1, "length_px must be >= 1, got ", p.length_px);
  require(std::abs(p.angle_deg) <= 45.0, "angle_deg out of [-45,45]: ", p.angle_deg);
  require(p.brightness >= 0.0, "brightness must be >= 0, got ", p.brightness);
  require(h >= p.length_px && w >= p.length_px, "image ", h, "x", w,
          " smaller than streak length ", p.length_px);

  Tensor<float> layer(Shape::image(h, w, 1));
  if (p.intensity == 0.0) return layer;

  // seed field: uniform noise thresholded so a `intensity` fraction survives,
  // rescaled to [0,1]; pointwise non-decreasing in intensity for a fixed seed
  Rng rng(p.seed);
  Tensor<float> noise(Shape::image(h, w, 1));
  const double t = 1.0 - p.intensity;
  for (auto& v : noise.data) {
    const double u = rng.uniform();
    v = u > t ? float((u - t) / p.intensity) : 0.0f;
  }

  // motion blur along the fall direction
  const double a = p.angle_deg * M_PI / 180.0;
  const double dy = std::cos(a), dx = std::sin(a);
  const int L = p.length_px;
  const double c0 = (L - 1) / 2.0;
  double maxv = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = 0; i < L; ++i) {
        const double sy = y + (i - c0) * dy;
        const double sx = x + (i - c0) * dx;
        if (sy < 0 || sy > h - 1 || sx < 0 || sx > w - 1) continue;
        s += bilinear(noise, sy, sx, 0);
      }
      s /= L;
      layer.at(y, x, 0) = float(s);
      maxv = std::max(maxv, s);
    }
  }

  if (maxv > 0)
    for (auto& v : layer.data) v = float(double(v) / maxv * p.brightness);
  return layer;
}

Tensor<float> synth_streaks(const Tensor<float>& clean, const StreakParams& p) {
  validate_clean(clean, "synth_streaks");
  Tensor<float> layer = streak_layer(clean.h(), clean.w(), p);
  Tensor<float> rainy = clean;
  for (int y = 0; y < clean.h(); ++y)
    for (int x = 0; x < clean.w(); ++x) {
      const float l = layer.at(y, x, 0);
      for (int ch = 0; ch < 3; ++ch) {
        float v = rainy.at(y, x, ch) + l;
        rainy.at(y, x, ch) = std::min(1.0f, std::max(0.0f, v));
      }
    }
  return rainy;
}

std::vector<DropGeom> sample_drops(int h, int w, const DropParams& p) {
  require(p.density >= 0.0, "density must be >= 0, got ", p.density);
  require(p.radius_min >= 2, "radius_min must be >= 2, got ", p.radius_min);
  require(p.radius_max >= p.radius_min, "radius_max < radius_min");
  require(p.radius_max <= std::min(h, w) / 2, "radius_max ", p.radius_max,
          " too large for ", h, "x", w);

  Rng rng(p.seed);
  const double lambda = p.density * double(h) * double(w) / 1e6;
  int n = int(std::floor(lambda));
  if (rng.uniform() < lambda - std::floor(lambda)) ++n;

  std::vector<DropGeom> geoms;
  geoms.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    DropGeom g;
    g.cx = rng.uniform(0, w);
    g.cy = rng.uniform(0, h);
    g.rx = rng.uniform_int(p.radius_min, p.radius_max);
    g.ry = rng.uniform_int(p.radius_min, p.radius_max);
    geoms.push_back(g);
  }
  return geoms;
}

Tensor<float> synth_drops(const Tensor<float>& clean, const DropParams& p) {
  validate_clean(clean, "synth_drops");
  const int h = clean.h(), w = clean.w();
  std::vector<DropGeom> geoms = sample_drops(h, w, p);
  Tensor<float> out = clean;
  if (geoms.empty()) return out;

  Tensor<float> blurred = box_blur5(clean);
  for (const DropGeom& g : geoms) {
    const int y0 = std::max(0, int(std::floor(g.cy - g.ry)));
    const int y1 = std::min(h - 1, int(std::ceil(g.cy + g.ry)));
    const int x0 = std::max(0, int(std::floor(g.cx - g.rx)));
    const int x1 = std::min(w - 1, int(std::ceil(g.cx + g.rx)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double ny = (y - g.cy) / g.ry;
        const double nx = (x - g.cx) / g.rx;
        const double r2 = nx * nx + ny * ny;
        if (r2 > 1.0) continue;
        // lens warp: pull samples toward the drop center, strongest in the
        // middle, continuous at the rim
        const double warp = 1.0 - p.refraction * 0.75 * (1.0 - r2);
        const double sy = g.cy + (y - g.cy) * warp;
        const double sx = g.cx + (x - g.cx) * warp;
        // specular highlight offset toward the upper-left
        const double hx = (nx + 0.35) / 0.45;
        const double hy = (ny + 0.35) / 0.45;
        const float glow = float(0.55 * std::exp(-(hx * hx + hy * hy)));
        for (int ch = 0; ch < 3; ++ch) {
          float v = bilinear(blurred, sy, sx, ch) + glow;
          out.at(y, x, ch) = std::min(1.0f, std::max(0.0f, v));
        }
      }
    }
  }
  return out;
}

Tensor<float> compute_soft_mask(const Tensor<float>& a, const Tensor<float>& b) {
  require(a.shape == b.shape, "compute_soft_mask: shape mismatch ", a.shape.str(), " vs ",
          b.shape.str());
  require(a.shape.ndim == 3 && (a.c() == 1 || a.c() == 3),
          "compute_soft_mask: expected 1- or 3-channel images");
  const int h = a.h(), w = a.w(), c = a.c();
  Tensor<float> mask(Shape::image(h, w, 1));
  float maxv = 0.0f;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float m;
      if (c == 1) {
        m = std::abs(a.at(y, x, 0) - b.at(y, x, 0));
      } else {
        m = 0.299f * std::abs(a.at(y, x, 0) - b.at(y, x, 0)) +
            0.587f * std::abs(a.at(y, x, 1) - b.at(y, x, 1)) +
            0.114f * std::abs(a.at(y, x, 2) - b.at(y, x, 2));
      }
      mask.at(y, x, 0) = m;
      maxv = std::max(maxv, m);
    }
  const float denom = std::max(maxv, 1e-6f);
  for (auto& v : mask.data) v /= denom;
  return mask;
}

SamplePair synth_joint(const Tensor<float>& clean, const std::string& id,
                       const StreakParams& sp, const DropParams& dp) {
  SamplePair pair;
  pair.id = id;
  pair.clean = clean;
  Tensor<float> drops = synth_drops(clean, dp);
  pair.rainy = synth_streaks(drops, sp);
  pair.mask_streak = compute_soft_mask(pair.rainy, drops);
  pair.mask_drop = compute_soft_mask(drops, clean);
  return pair;
}

Tensor<float> make_clean_image(int h, int w, uint64_t seed) {
  require(h >= 1 && w >= 1, "bad image size ", h, "x", w);
  Rng rng(seed);
  Tensor<float> img(Shape::image(h, w, 3));

  // smooth base: per-channel offset plus two low-frequency waves
  double off[3], amp[3][2], fy[3][2], fx[3][2], ph[3][2];
  for (int c = 0; c < 3; ++c) {
    off[c] = rng.uniform(0.25, 0.75);
    for (int k = 0; k < 2; ++k) {
      amp[c][k] = rng.uniform(0.05, 0.18);
      fy[c][k] = rng.uniform(-3.0, 3.0);
      fx[c][k] = rng.uniform(-3.0, 3.0);
      ph[c][k] = rng.uniform(0, 2 * M_PI);
    }
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = off[c];
        for (int k = 0; k < 2; ++k)
          v += amp[c][k] *
               std::cos(2 * M_PI * (fy[c][k] * y / h + fx[c][k] * x / w) + ph[c][k]);
        img.at(y, x, c) = float(v);
      }

  // a few soft-edged shapes to provide structure
  const int n_shapes = rng.uniform_int(4, 7);
  for (int s = 0; s < n_shapes; ++s) {
    const bool ellipse = rng.uniform() < 0.5;
    const double cy = rng.uniform(0, h), cx = rng.uniform(0, w);
    const double ry = rng.uniform(h * 0.08, h * 0.35), rx = rng.uniform(w * 0.08, w * 0.35);
    const double alpha = rng.uniform(0.55, 0.9);
    double col[3];
    for (double& cc : col) cc = rng.uniform(0.05, 0.95);
    const int y0 = std::max(0, int(cy - ry)), y1 = std::min(h - 1, int(cy + ry));
    const int x0 = std::max(0, int(cx - rx)), x1 = std::min(w - 1, int(cx + rx));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double inside;
        if (ellipse) {
          const double d2 = std::pow((y - cy) / ry, 2) + std::pow((x - cx) / rx, 2);
          if (d2 > 1.0) continue;
          inside = std::min(1.0, 4.0 * (1.0 - d2));
        } else {
          inside = 1.0;
        }
        const double a = alpha * inside;
        for (int c = 0; c < 3; ++c)
          img.at(y, x, c) = float((1 - a) * img.at(y, x, c) + a * col[c]);
      }
  }

  for (auto& v : img.data) v = 0.03f + 0.94f * std::min(1.0f, std::max(0.0f, v));
  return img;
}

std::vector<Tensor<float>> make_clean_set(int n, int h, int w, uint64_t seed) {
  require(n >= 1, "need at least one clean image");
  std::vector<Tensor<float>> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i)
    out.push_back(make_clean_image(h, w, mix_seed(seed, 0xc1ea0000ull + uint64_t(i))));
  return out;
}

std::vector<double> intensity_levels(double lo, double hi, int n) {
  require(n >= 1, "need at least one level");
  require(lo <= hi && lo >= 0 && hi <= 1, "bad intensity range [", lo, ",", hi, "]");
  std::vector<double> out;
  if (n == 1) {
    out.push_back(lo);
    return out;
  }
  for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * i / (n - 1));
  return out;
}

Corpus synth_corpus(const std::vector<Tensor<float>>& cleans,
                    const std::vector<std::string>& names, const SynthConfig& cfg) {
  require(cleans.size() == names.size(), "cleans/names size mismatch");
  require(!cleans.empty(), "no clean images given");
  require(cfg.test_fraction >= 0 && cfg.test_fraction <= 1, "bad test_fraction");
  const std::vector<double> levels =
      intensity_levels(cfg.intensity_min, cfg.intensity_max, cfg.levels);

  Corpus corpus;
  for (size_t i = 0; i < cleans.size(); ++i) {
    const std::string base = sanitize_id(names[i]);
    // all levels of one clean image stay on the same side of the split
    const bool is_test =
        (splitmix64(mix_seed(cfg.seed, i)) >> 11) * 0x1.0p-53 < cfg.test_fraction;

    DropParams dp;
    dp.density = cfg.drop_density;
    dp.radius_min = cfg.drop_radius_min;
    dp.radius_max = cfg.drop_radius_max;
    dp.refraction = cfg.drop_refraction;
    dp.seed = mix_seed(cfg.seed, i * 2 + 1);

    Rng angle_rng(mix_seed(cfg.seed, i * 2 + 2));
    Tensor<float> drops = synth_drops(cleans[i], dp);

    for (size_t l = 0; l < levels.size(); ++l) {
      StreakParams sp;
      sp.intensity = levels[l];
      sp.angle_deg = angle_rng.uniform(cfg.angle_min, cfg.angle_max);
      sp.length_px = cfg.streak_length;
      sp.brightness = cfg.streak_brightness;
      sp.seed = mix_seed(cfg.seed, (i << 8) + l + 3);

      SamplePair pair;
      pair.id = concat(base, "_l", l);
      pair.clean = cleans[i];
      pair.rainy = synth_streaks(drops, sp);
      pair.mask_streak = compute_soft_mask(pair.rainy, drops);
      pair.mask_drop = compute_soft_mask(drops, cleans[i]);

      SampleInfo info;
      info.id = pair.id;
      info.split = is_test ? "test" : "train";
      info.sp = sp;
      info.dp = dp;
      corpus.pairs.push_back(std::move(pair));
      corpus.infos.push_back(std::move(info));
    }
  }
  return corpus;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* kManifestHeader = "# derain dataset manifest v1";
const char* kComposeNote = "# compose_order=streaks_over_drops";

}  // namespace

void write_dataset(const std::string& root, const std::vector<SamplePair>& pairs,
                   const std::vector<SampleInfo>& infos) {
  require(pairs.size() == infos.size(), "pairs/infos size mismatch");
  for (const char* sub : {"clean", "rainy", "mask_streak", "mask_drop"})
    fs::create_directories(fs::path(root) / sub);

  std::ofstream mf(fs::path(root) / "manifest.txt");
  require(mf.good(), "cannot write manifest under ", root);
  mf << kManifestHeader << "\n" << kComposeNote << "\n";
  for (size_t i = 0; i < pairs.size(); ++i) {
    const SamplePair& p = pairs[i];
    const SampleInfo& in = infos[i];
    require(p.id == in.id, "pair/info id mismatch at index ", i);
    require(in.split == "train" || in.split == "test", "bad split for ", in.id);
    write_png((fs::path(root) / "clean" / (p.id + ".png")).string(), p.clean);
    write_png((fs::path(root) / "rainy" / (p.id + ".png")).string(), p.rainy);
    write_png((fs::path(root) / "mask_streak" / (p.id + ".png")).string(), p.mask_streak);
    write_png((fs::path(root) / "mask_drop" / (p.id + ".png")).string(), p.mask_drop);
    mf << "id=" << p.id << " split=" << in.split
       << " intensity=" << fmt_double(in.sp.intensity)
       << " angle_deg=" << fmt_double(in.sp.angle_deg) << " length_px=" << in.sp.length_px
       << " brightness=" << fmt_double(in.sp.brightness) << " streak_seed=" << in.sp.seed
       << " density=" << fmt_double(in.dp.density) << " radius_min=" << in.dp.radius_min
       << " radius_max=" << in.dp.radius_max
       << " refraction=" << fmt_double(in.dp.refraction) << " drop_seed=" << in.dp.seed
       << "\n";
  }
  require(mf.good(), "manifest write failed under ", root);
}

Dataset read_dataset(const std::string& root) {
  const fs::path mpath = fs::path(root) / "manifest.txt";
  std::ifstream mf(mpath);
  require(mf.good(), "cannot open manifest: ", mpath.string());

  Dataset ds;
  std::set<std::string> ids;
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::map<std::string, std::string> kv;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
      auto eq = tok.find('=');
      require(eq != std::string::npos, "bad manifest token '", tok, "'");
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto want = [&](const std::string& k) {
      auto it = kv.find(k);
      require(it != kv.end(), "manifest line missing key '", k, "': ", line);
      return it->second;
    };

    SampleInfo info;
    info.id = want("id");
    info.split = want("split");
    require(info.split == "train" || info.split == "test", "bad split '", info.split,
            "' for id ", info.id);
    require(ids.insert(info.id).second, "duplicate id in manifest: ", info.id);
    info.sp.intensity = std::stod(want("intensity"));
    info.sp.angle_deg = std::stod(want("angle_deg"));
    info.sp.length_px = std::stoi(want("length_px"));
    info.sp.brightness = std::stod(want("brightness"));
    info.sp.seed = std::stoull(want("streak_seed"));
    info.dp.density = std::stod(want("density"));
    info.dp.radius_min = std::stoi(want("radius_min"));
    info.dp.radius_max = std::stoi(want("radius_max"));
    info.dp.refraction = std::stod(want("refraction"));
    info.dp.seed = std::stoull(want("drop_seed"));

    SamplePair pair;
    pair.id = info.id;
    for (auto [sub, dst] :
         std::initializer_list<std::pair<const char*, Tensor<float>*>>{
             {"clean", &pair.clean},
             {"rainy", &pair.rainy},
             {"mask_streak", &pair.mask_streak},
             {"mask_drop", &pair.mask_drop}}) {
      const fs::path p = fs::path(root) / sub / (info.id + ".png");
      require(fs::exists(p), "dataset file missing for id ", info.id, ": ", p.string());
      *dst = read_png(p.string());
    }
    require(pair.clean.shape == pair.rainy.shape && pair.clean.c() == 3,
            "clean/rainy shape mismatch for id ", info.id);
    require(pair.mask_streak.c() == 1 && pair.mask_drop.c() == 1 &&
                pair.mask_streak.h() == pair.clean.h() &&
                pair.mask_streak.w() == pair.clean.w() &&
                pair.mask_drop.shape == pair.mask_streak.shape,
            "mask shape mismatch for id ", info.id);

    ds.pairs.push_back(std::move(pair));
    ds.infos.push_back(std::move(info));
  }
  require(!ds.pairs.empty(), "manifest lists no samples: ", mpath.string());

  // catch files that drifted in without a manifest entry
  for (const char* sub : {"clean", "rainy", "mask_streak", "mask_drop"}) {
    const fs::path dir = fs::path(root) / sub;
    require(fs::exists(dir), "dataset directory missing: ", dir.string());
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      const std::string stem = e.path().stem().string();
      require(ids.count(stem) > 0, "file without manifest entry: ", e.path().string());
    }
  }
  return ds;
}

}  // namespace derain
