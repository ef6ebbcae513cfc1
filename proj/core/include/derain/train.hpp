#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "derain/config.hpp"
#include "derain/metrics.hpp"
#include "derain/net.hpp"
#include "derain/raingen.hpp"

namespace derain {

// ---------------------------------------------------------------- init

template <typename T>
void init_gaussian(ParamStore<T>& ps, uint64_t seed, double stddev) {
  Rng rng(seed);
  for (auto& e : ps.entries) {
    if (e.is_bias) {
      e.value.fill(T(0));
      continue;
    }
    for (auto& v : e.value.data) v = T(stddev * rng.normal());
  }
}

// Fan-in-scaled init. Gradient probes use this instead of the narrow
// training init so signals stay well above the finite-difference noise
// floor.
template <typename T>
void init_fanin(ParamStore<T>& ps, uint64_t seed) {
  Rng rng(seed);
  for (auto& e : ps.entries) {
    if (e.is_bias) {
      e.value.fill(T(0));
      continue;
    }
    const double s = 1.0 / std::sqrt(double(std::max(1, e.fan_in)));
    for (auto& v : e.value.data) v = T(s * rng.normal());
  }
}

// ---------------------------------------------------------------- augment

// Synchronized random crop plus horizontal flip over all four planes of a
// pair. Draw order is fixed (y, x, flip) so data consumption is reproducible.
inline SamplePair augment(const SamplePair& in, int crop, Rng& rng) {
  const int h = in.clean.h(), w = in.clean.w();
  require(crop >= 1 && crop <= h && crop <= w, "crop ", crop, " does not fit ", h, "x", w);
  const int oy = rng.uniform_int(0, h - crop);
  const int ox = rng.uniform_int(0, w - crop);
  const bool flip = rng.uniform() < 0.5;

  auto cut = [&](const Tensor<float>& src) {
    const int c = src.c();
    Tensor<float> dst(Shape::image(crop, crop, c));
    for (int y = 0; y < crop; ++y)
      for (int x = 0; x < crop; ++x) {
        const int sx = flip ? (ox + crop - 1 - x) : (ox + x);
        for (int ch = 0; ch < c; ++ch) dst.at(y, x, ch) = src.at(oy + y, sx, ch);
      }
    return dst;
  };

  SamplePair out;
  out.id = in.id;
  out.clean = cut(in.clean);
  out.rainy = cut(in.rainy);
  out.mask_streak = cut(in.mask_streak);
  out.mask_drop = cut(in.mask_drop);
  return out;
}

// ---------------------------------------------------------------- optimizer

template <typename T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  bool plain_sgd = false;
  int64_t steps = 0;
  std::vector<Tensor<T>> m, v;

  void init(const ParamStore<T>& ps) {
    steps = 0;
    m.clear();
    v.clear();
    for (const auto& e : ps.entries) {
      m.push_back(Tensor<T>(e.value.shape));
      v.push_back(Tensor<T>(e.value.shape));
    }
  }

  void step(ParamStore<T>& ps, const std::vector<Tensor<T>>& grads, double lr) {
    require(grads.size() == ps.entries.size() && m.size() == ps.entries.size(),
            "optimizer state does not match parameter store");
    ++steps;
    if (plain_sgd) {
      for (size_t i = 0; i < grads.size(); ++i)
        for (int64_t j = 0; j < grads[i].size(); ++j)
          ps.entries[i].value[j] -= T(lr) * grads[i][j];
      return;
    }
    const double bc1 = 1.0 - std::pow(beta1, double(steps));
    const double bc2 = 1.0 - std::pow(beta2, double(steps));
    for (size_t i = 0; i < grads.size(); ++i) {
      Tensor<T>& mi = m[i];
      Tensor<T>& vi = v[i];
      Tensor<T>& p = ps.entries[i].value;
      for (int64_t j = 0; j < grads[i].size(); ++j) {
        const double g = double(grads[i][j]);
        const double mn = beta1 * double(mi[j]) + (1.0 - beta1) * g;
        const double vn = beta2 * double(vi[j]) + (1.0 - beta2) * g * g;
        mi[j] = T(mn);
        vi[j] = T(vn);
        p[j] -= T(lr * (mn / bc1) / (std::sqrt(vn / bc2) + eps));
      }
    }
  }
};

// Global-norm gradient clip; a bound <= 0 disables it.
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double bound) {
  double sq = 0;
  for (const auto& g : grads)
    for (auto v : g.data) sq += double(v) * double(v);
  const double norm = std::sqrt(sq);
  if (bound > 0 && norm > bound) {
    const T s = T(bound / norm);
    for (auto& g : grads)
      for (auto& v : g.data) v *= s;
  }
  return norm;
}

// ---------------------------------------------------------------- schedule

// Learning-rate schedule. "plateau" halves the rate whenever the windowed
// mean loss fails to improve on the previous window by `improve`; "step"
// scales at fixed iterations; "none" keeps lr_start. The floor is lr_end.
struct LrSched {
  double lr = 1e-4;
  double lr_end = 1e-6;
  double factor = 0.5;
  enum class Mode { none, plateau, step } mode = Mode::plateau;
  std::vector<int64_t> milestones;
  int64_t window = 1000;
  double improve = 0.01;

  // plateau accumulator
  double cur_sum = 0;
  int64_t cur_n = 0;
  double prev_mean = std::numeric_limits<double>::infinity();

  static LrSched from(const RunConfig& c) {
    LrSched s;
    s.lr = c.lr_start;
    s.lr_end = c.lr_end;
    s.factor = c.lr_factor;
    s.window = c.plateau_window;
    s.improve = c.plateau_improve;
    require(s.lr > 0 && s.lr_end > 0 && s.lr_end <= s.lr, "bad lr range [", c.lr_end, ",",
            c.lr_start, "]");
    require(s.factor > 0 && s.factor < 1, "lr_factor must be in (0,1), got ", s.factor);
    if (c.lr_decay == "none") {
      s.mode = Mode::none;
    } else if (c.lr_decay == "plateau") {
      s.mode = Mode::plateau;
      require(s.window >= 1, "plateau_window must be >= 1");
    } else if (c.lr_decay.rfind("step:", 0) == 0) {
      s.mode = Mode::step;
      std::string rest = c.lr_decay.substr(5);
      size_t pos = 0;
      while (pos < rest.size()) {
        size_t comma = rest.find(',', pos);
        if (comma == std::string::npos) comma = rest.size();
        const std::string tok = rest.substr(pos, comma - pos);
        require(!tok.empty() && tok.find_first_not_of("0123456789") == std::string::npos,
                "bad lr_decay milestone '", tok, "'");
        s.milestones.push_back(std::stoll(tok));
        pos = comma + 1;
      }
      require(!s.milestones.empty(), "lr_decay=step: needs milestones");
    } else {
      fail("bad lr_decay '", c.lr_decay, "' (expected plateau|step:<iters>|none)");
    }
    return s;
  }

  void observe(int64_t iter, double loss) {
    switch (mode) {
      case Mode::none:
        return;
      case Mode::step:
        for (int64_t ms : milestones)
          if (ms == iter) lr = std::max(lr * factor, lr_end);
        return;
      case Mode::plateau:
        cur_sum += loss;
        if (++cur_n < window) return;
        {
          const double mean = cur_sum / double(window);
          if (std::isfinite(prev_mean) && mean > prev_mean * (1.0 - improve))
            lr = std::max(lr * factor, lr_end);
          prev_mean = mean;
          cur_sum = 0;
          cur_n = 0;
        }
        return;
    }
  }
};

// ---------------------------------------------------------------- checkpoint

namespace ckpt {

inline void wr_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), std::streamsize(n));
}
inline void rd_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), std::streamsize(n));
  require(is.good(), "checkpoint truncated");
}
template <typename V>
void wr(std::ostream& os, V v) {
  wr_bytes(os, &v, sizeof v);
}
template <typename V>
V rd(std::istream& is) {
  V v;
  rd_bytes(is, &v, sizeof v);
  return v;
}
inline void wr_str(std::ostream& os, const std::string& s) {
  wr<uint32_t>(os, uint32_t(s.size()));
  wr_bytes(os, s.data(), s.size());
}
inline std::string rd_str(std::istream& is) {
  const uint32_t n = rd<uint32_t>(is);
  require(n < (1u << 20), "checkpoint string too long");
  std::string s(n, '\0');
  rd_bytes(is, s.data(), n);
  return s;
}

inline constexpr char kMagic[4] = {'D', 'R', 'N', '1'};
inline constexpr uint32_t kVersion = 1;

}  // namespace ckpt

// Snapshot of everything a run needs to continue bit-exactly: parameters,
// optimizer moments, schedule state, data-order RNG and iteration count.
template <typename T>
void save_checkpoint(const std::string& path, const Net<T>& net, int64_t iter,
                     const Adam<T>& opt, const LrSched& sched, const Rng& rng) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot write checkpoint: ", path);
  ckpt::wr_bytes(os, ckpt::kMagic, 4);
  ckpt::wr<uint32_t>(os, ckpt::kVersion);
  ckpt::wr<uint8_t>(os, sizeof(T) == 4 ? 'f' : 'd');
  ckpt::wr_str(os, variant_name(net.variant));
  ckpt::wr<int32_t>(os, net.cfg.feat_ch);
  ckpt::wr<int32_t>(os, net.cfg.dec_ch);
  ckpt::wr<int32_t>(os, net.cfg.recurrence_R);
  ckpt::wr<int32_t>(os, net.cfg.stages_T);
  ckpt::wr<int32_t>(os, net.cfg.filternet_ch);
  ckpt::wr<double>(os, net.cfg.lrelu_slope);
  ckpt::wr<double>(os, net.cfg.fusion_w);
  ckpt::wr<int64_t>(os, iter);
  ckpt::wr_str(os, rng.state());
  ckpt::wr<double>(os, sched.lr);
  ckpt::wr<double>(os, sched.cur_sum);
  ckpt::wr<int64_t>(os, sched.cur_n);
  ckpt::wr<double>(os, sched.prev_mean);
  ckpt::wr<uint32_t>(os, uint32_t(net.ps.entries.size()));
  for (const auto& e : net.ps.entries) {
    ckpt::wr_str(os, e.name);
    ckpt::wr<uint8_t>(os, uint8_t(e.value.shape.ndim));
    for (int i = 0; i < 4; ++i) ckpt::wr<int32_t>(os, e.value.shape.d[size_t(i)]);
    ckpt::wr_bytes(os, e.value.data.data(), sizeof(T) * e.value.data.size());
  }
  const bool has_opt = !opt.m.empty();
  ckpt::wr<uint8_t>(os, has_opt ? 1 : 0);
  if (has_opt) {
    require(opt.m.size() == net.ps.entries.size(), "optimizer state size mismatch");
    ckpt::wr<int64_t>(os, opt.steps);
    for (const auto& t : opt.m) ckpt::wr_bytes(os, t.data.data(), sizeof(T) * t.data.size());
    for (const auto& t : opt.v) ckpt::wr_bytes(os, t.data.data(), sizeof(T) * t.data.size());
  }
  require(os.good(), "checkpoint write failed: ", path);
}

// Header summary, enough to build a matching net before a full load.
struct CheckpointInfo {
  char dtype = 'f';  // 'f' float, 'd' double
  std::string variant;
  ModelConfig cfg;
  int64_t iteration = 0;
};

inline CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open checkpoint: ", path);
  char magic[4];
  ckpt::rd_bytes(is, magic, 4);
  require(std::memcmp(magic, ckpt::kMagic, 4) == 0, "not a checkpoint file: ", path);
  require(ckpt::rd<uint32_t>(is) == ckpt::kVersion, "unsupported checkpoint version in ", path);
  CheckpointInfo info;
  info.dtype = char(ckpt::rd<uint8_t>(is));
  info.variant = ckpt::rd_str(is);
  info.cfg.feat_ch = ckpt::rd<int32_t>(is);
  info.cfg.dec_ch = ckpt::rd<int32_t>(is);
  info.cfg.recurrence_R = ckpt::rd<int32_t>(is);
  info.cfg.stages_T = ckpt::rd<int32_t>(is);
  info.cfg.filternet_ch = ckpt::rd<int32_t>(is);
  info.cfg.lrelu_slope = ckpt::rd<double>(is);
  info.cfg.fusion_w = ckpt::rd<double>(is);
  info.iteration = ckpt::rd<int64_t>(is);
  return info;
}

template <typename T>
void load_checkpoint(const std::string& path, Net<T>& net, int64_t& iter, Adam<T>* opt = nullptr,
                     LrSched* sched = nullptr, Rng* rng = nullptr) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open checkpoint: ", path);
  char magic[4];
  ckpt::rd_bytes(is, magic, 4);
  require(std::memcmp(magic, ckpt::kMagic, 4) == 0, "not a checkpoint file: ", path);
  require(ckpt::rd<uint32_t>(is) == ckpt::kVersion, "unsupported checkpoint version in ", path);
  const uint8_t dtype = ckpt::rd<uint8_t>(is);
  const uint8_t want = sizeof(T) == 4 ? 'f' : 'd';
  require(dtype == want, "checkpoint precision '", char(dtype), "' does not match build '",
          char(want), "'");
  const std::string var = ckpt::rd_str(is);
  require(var == variant_name(net.variant), "checkpoint variant '", var,
          "' does not match model '", variant_name(net.variant), "'");
  ModelConfig mc;
  mc.feat_ch = ckpt::rd<int32_t>(is);
  mc.dec_ch = ckpt::rd<int32_t>(is);
  mc.recurrence_R = ckpt::rd<int32_t>(is);
  mc.stages_T = ckpt::rd<int32_t>(is);
  mc.filternet_ch = ckpt::rd<int32_t>(is);
  mc.lrelu_slope = ckpt::rd<double>(is);
  mc.fusion_w = ckpt::rd<double>(is);
  require(mc == net.cfg, "checkpoint model config does not match the built model");
  iter = ckpt::rd<int64_t>(is);
  const std::string rng_state = ckpt::rd_str(is);
  if (rng) rng->set_state(rng_state);
  const double lr = ckpt::rd<double>(is);
  const double cur_sum = ckpt::rd<double>(is);
  const int64_t cur_n = ckpt::rd<int64_t>(is);
  const double prev_mean = ckpt::rd<double>(is);
  if (sched) {
    sched->lr = lr;
    sched->cur_sum = cur_sum;
    sched->cur_n = cur_n;
    sched->prev_mean = prev_mean;
  }
  const uint32_t n = ckpt::rd<uint32_t>(is);
  require(n == net.ps.entries.size(), "checkpoint has ", n, " tensors, model has ",
          net.ps.entries.size());
  for (auto& e : net.ps.entries) {
    const std::string name = ckpt::rd_str(is);
    require(name == e.name, "checkpoint tensor '", name, "' where '", e.name, "' expected");
    Shape s;
    s.ndim = ckpt::rd<uint8_t>(is);
    for (int i = 0; i < 4; ++i) s.d[size_t(i)] = ckpt::rd<int32_t>(is);
    require(s == e.value.shape, "checkpoint tensor '", name, "' has shape ", s.str(),
            ", model expects ", e.value.shape.str());
    ckpt::rd_bytes(is, e.value.data.data(), sizeof(T) * e.value.data.size());
  }
  const uint8_t has_opt = ckpt::rd<uint8_t>(is);
  if (opt) {
    opt->init(net.ps);
    if (has_opt) {
      opt->steps = ckpt::rd<int64_t>(is);
      for (auto& t : opt->m) ckpt::rd_bytes(is, t.data.data(), sizeof(T) * t.data.size());
      for (auto& t : opt->v) ckpt::rd_bytes(is, t.data.data(), sizeof(T) * t.data.size());
    }
  }
}

// ---------------------------------------------------------------- loop

struct TrainResult {
  int64_t iters = 0;
  double final_loss = 0;
  double final_train_psnr = 0;
  std::string checkpoint_path;
  std::string log_path;
};

namespace detail {
inline std::string fmt_metric(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace detail

// One full training run. Appends nothing volatile to the log (no timestamps),
// so identical configs and seeds produce byte-identical logs.
template <typename T>
TrainResult train_loop(const RunConfig& cfg, const std::vector<SamplePair>& data,
                       const std::string& out_dir, const std::string& resume = "") {
  require(!data.empty(), "training set is empty");
  require(cfg.max_iters > 0, "max_iters must be set (> 0) for training");
  require(cfg.batch_size >= 1, "batch_size must be >= 1");
  require(cfg.optimizer == "adam" || cfg.optimizer == "sgd", "unknown optimizer '",
          cfg.optimizer, "'");
  for (const auto& p : data)
    require(p.clean.h() >= cfg.crop && p.clean.w() >= cfg.crop, "sample ", p.id,
            " smaller than crop ", cfg.crop);

  const ParsedVariant pv = parse_variant(cfg.variant);
  ModelConfig mc = cfg.model;
  if (pv.stages > 0) mc.stages_T = pv.stages;
  Net<T> net = Net<T>::build(pv.v, mc);
  init_gaussian(net.ps, mix_seed(cfg.seed, 0x1717), 0.01);

  Adam<T> opt;
  opt.plain_sgd = (cfg.optimizer == "sgd");
  opt.init(net.ps);
  LrSched sched = LrSched::from(cfg);
  Rng rng(mix_seed(cfg.seed, 0xda7a));
  int64_t start_iter = 0;
  if (!resume.empty()) load_checkpoint(resume, net, start_iter, &opt, &sched, &rng);
  require(start_iter < cfg.max_iters, "checkpoint already at iteration ", start_iter);

  std::filesystem::create_directories(out_dir);
  const std::string log_path = (std::filesystem::path(out_dir) / "metrics.log").string();
  std::ofstream log(log_path, start_iter == 0 ? std::ios::trunc : std::ios::app);
  require(log.good(), "cannot write training log: ", log_path);
  if (start_iter == 0)
    log << "# variant=" << cfg.variant << " seed=" << cfg.seed
        << " params=" << net.ps.param_count() << "\n";

  LossWeights lw{cfg.alpha, cfg.beta1, cfg.beta2};
  std::vector<Tensor<T>> grads;
  for (const auto& e : net.ps.entries) grads.push_back(Tensor<T>(e.value.shape));

  auto train_psnr = [&]() {
    const size_t n_eval = std::min<size_t>(data.size(), 8);
    double acc = 0;
    for (size_t i = 0; i < n_eval; ++i) {
      Tensor<T> out = net.infer(tensor_cast<T>(data[i].rainy));
      acc += psnr(clamp01(tensor_cast<float>(out)), data[i].clean);
    }
    return acc / double(n_eval);
  };

  TrainResult res;
  double last_loss = 0;
  for (int64_t it = start_iter + 1; it <= cfg.max_iters; ++it) {
    for (auto& g : grads) g.fill(T(0));
    double loss_acc = 0;
    std::vector<std::pair<std::string, double>> comp_acc;

    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = rng.uniform_int(0, int(data.size()) - 1);
      const SamplePair s = augment(data[size_t(idx)], cfg.crop, rng);

      Tape<T> tape;
      Var rainy = tape.input(tensor_cast<T>(s.rainy));
      Var clean = tape.input(tensor_cast<T>(s.clean));
      Var m_streak = tape.input(tensor_cast<T>(s.mask_streak));
      Var m_drop = tape.input(tensor_cast<T>(s.mask_drop));
      Var m_comb = tape.input(tensor_cast<T>(compute_soft_mask(s.rainy, s.clean)));

      auto fwd = net.forward(tape, rainy);
      LossBreakdown lb = net.loss(tape, fwd, clean, m_streak, m_drop, m_comb, lw);
      const double lv = double(tape.val(lb.total)[0]);
      require(std::isfinite(lv), "non-finite loss at iteration ", it, " on sample ", s.id);
      loss_acc += lv;
      if (comp_acc.empty())
        comp_acc = lb.components;
      else
        for (size_t k = 0; k < comp_acc.size(); ++k)
          comp_acc[k].second += lb.components[k].second;

      tape.backward(lb.total);
      for (size_t pi = 0; pi < net.ps.entries.size(); ++pi) {
        const Tensor<T>* g = tape.param_grad(net.ps, int(pi));
        if (!g) continue;
        for (int64_t j = 0; j < g->size(); ++j) grads[pi][j] += (*g)[j];
      }
    }

    const T inv_b = T(1.0 / cfg.batch_size);
    for (auto& g : grads)
      for (auto& v : g.data) v *= inv_b;
    clip_global_norm(grads, cfg.clip_norm);
    const double lr_used = sched.lr;
    opt.step(net.ps, grads, lr_used);

    last_loss = loss_acc / cfg.batch_size;
    sched.observe(it, last_loss);

    if (it % std::max(1, cfg.log_every) == 0 || it == cfg.max_iters) {
      log << "iter=" << it << " lr=" << detail::fmt_metric(lr_used)
          << " loss=" << detail::fmt_metric(last_loss);
      for (const auto& [k, v] : comp_acc)
        log << " " << k << "=" << detail::fmt_metric(v / cfg.batch_size);
      log << "\n";
    }
    if (cfg.eval_every > 0 && it % cfg.eval_every == 0 && it != cfg.max_iters)
      log << "iter=" << it << " train_psnr=" << detail::fmt_metric(train_psnr()) << "\n";
    if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it != cfg.max_iters)
      save_checkpoint((std::filesystem::path(out_dir) / "ckpt_latest.bin").string(), net, it,
                      opt, sched, rng);
  }

  res.iters = cfg.max_iters;
  res.final_loss = last_loss;
  res.final_train_psnr = train_psnr();
  res.checkpoint_path = (std::filesystem::path(out_dir) / "ckpt_final.bin").string();
  res.log_path = log_path;
  save_checkpoint(res.checkpoint_path, net, cfg.max_iters, opt, sched, rng);
  log << "final loss=" << detail::fmt_metric(res.final_loss)
      << " train_psnr=" << detail::fmt_metric(res.final_train_psnr) << "\n";
  require(log.good(), "training log write failed");
  return res;
}

}  // namespace derain
