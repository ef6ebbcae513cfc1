#pragma once

#include <chrono>
#include <numeric>

#include "derain/metrics.hpp"
#include "derain/net.hpp"
#include "derain/train.hpp"

namespace derain {

// ---------------------------------------------------------------- evaluate

struct EvalRecord {
  std::string id;
  double psnr_in = 0, ssim_in = 0;
  double psnr_out = 0, ssim_out = 0;
  double ms = 0;
};

struct MetricReport {
  std::vector<EvalRecord> records;
  double mean_psnr_in = 0, mean_ssim_in = 0;
  double mean_psnr_out = 0, mean_ssim_out = 0;
  double mean_ms = 0;
};

template <typename T>
MetricReport evaluate(Net<T>& net, const std::vector<SamplePair>& pairs) {
  require(!pairs.empty(), "nothing to evaluate");
  MetricReport rep;
  for (const auto& p : pairs) {
    EvalRecord r;
    r.id = p.id;
    const auto t0 = std::chrono::steady_clock::now();
    Tensor<T> out = net.infer(tensor_cast<T>(p.rainy));
    const auto t1 = std::chrono::steady_clock::now();
    r.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    const Tensor<float> outf = clamp01(tensor_cast<float>(out));
    r.psnr_in = psnr(p.rainy, p.clean);
    r.ssim_in = ssim(p.rainy, p.clean);
    r.psnr_out = psnr(outf, p.clean);
    r.ssim_out = ssim(outf, p.clean);
    rep.records.push_back(r);
    rep.mean_psnr_in += r.psnr_in;
    rep.mean_ssim_in += r.ssim_in;
    rep.mean_psnr_out += r.psnr_out;
    rep.mean_ssim_out += r.ssim_out;
    rep.mean_ms += r.ms;
  }
  const double n = double(rep.records.size());
  rep.mean_psnr_in /= n;
  rep.mean_ssim_in /= n;
  rep.mean_psnr_out /= n;
  rep.mean_ssim_out /= n;
  rep.mean_ms /= n;
  return rep;
}

inline std::string report_table(const MetricReport& rep) {
  std::string s;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %9s %7s %9s %7s %8s\n", "id", "psnr_in", "ssim_in",
                "psnr_out", "ssim_out", "ms");
  s += line;
  for (const auto& r : rep.records) {
    std::snprintf(line, sizeof line, "%-20s %9.3f %7.4f %9.3f %7.4f %8.1f\n", r.id.c_str(),
                  r.psnr_in, r.ssim_in, r.psnr_out, r.ssim_out, r.ms);
    s += line;
  }
  std::snprintf(line, sizeof line, "%-20s %9.3f %7.4f %9.3f %7.4f %8.1f\n", "mean",
                rep.mean_psnr_in, rep.mean_ssim_in, rep.mean_psnr_out, rep.mean_ssim_out,
                rep.mean_ms);
  s += line;
  return s;
}

// ---------------------------------------------------------------- ablation

struct AblationRow {
  std::string variant;
  std::vector<double> psnr_per_seed;
  double median_psnr = 0;
  double mean_ssim = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

inline double median_of(std::vector<double> v) {
  require(!v.empty(), "median of empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Trains each variant from scratch under an identical small budget and seed
// set, then scores on the supplied held-out pairs. Everything that lands in
// the report is deterministic; wall time is not recorded.
template <typename T>
AblationReport ablation_run(const RunConfig& base, const std::vector<std::string>& variants,
                            const std::vector<uint64_t>& seeds,
                            const std::vector<SamplePair>& train_set,
                            const std::vector<SamplePair>& test_set,
                            const std::string& work_dir) {
  require(!variants.empty() && !seeds.empty(), "ablation needs variants and seeds");
  AblationReport rep;
  for (const auto& vname : variants) {
    AblationRow row;
    row.variant = vname;
    double ssim_acc = 0;
    for (uint64_t sd : seeds) {
      RunConfig c = base;
      c.variant = vname;
      c.seed = sd;
      const std::string dir = concat(work_dir, "/", vname, "_s", sd);
      train_loop<T>(c, train_set, dir);

      const ParsedVariant pv = parse_variant(c.variant);
      ModelConfig mc = c.model;
      if (pv.stages > 0) mc.stages_T = pv.stages;
      Net<T> net = Net<T>::build(pv.v, mc);
      int64_t it = 0;
      load_checkpoint<T>(concat(dir, "/ckpt_final.bin"), net, it, nullptr, nullptr, nullptr);
      MetricReport mr = evaluate(net, test_set);
      row.psnr_per_seed.push_back(mr.mean_psnr_out);
      ssim_acc += mr.mean_ssim_out;
    }
    row.median_psnr = median_of(row.psnr_per_seed);
    row.mean_ssim = ssim_acc / double(seeds.size());
    rep.rows.push_back(row);
  }
  return rep;
}

inline std::string ablation_table(const AblationReport& rep) {
  std::string s;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %12s %9s  %s\n", "variant", "median_psnr",
                "mean_ssim", "psnr_per_seed");
  s += line;
  for (const auto& r : rep.rows) {
    std::string per;
    for (double v : r.psnr_per_seed) {
      char b[32];
      std::snprintf(b, sizeof b, "%s%.3f", per.empty() ? "" : " ", v);
      per += b;
    }
    std::snprintf(line, sizeof line, "%-14s %12.3f %9.4f  [%s]\n", r.variant.c_str(),
                  r.median_psnr, r.mean_ssim, per.c_str());
    s += line;
  }
  return s;
}

// ---------------------------------------------------------------- grad check

struct GradCheckOptions {
  // Step small enough that no leaky-relu pre-activation crosses its kink;
  // larger steps pick up a piecewise-linear error that never shrinks.
  double eps = 1e-6;
  double tol = 1e-4;
  int max_params_per_tensor = 4;
  uint64_t seed = 7;
  // Negative control: perturb the backward result for one tensor so the
  // harness can prove it would notice a wrong gradient.
  std::string corrupt_name;
  double corrupt_scale = 1.0;
};

struct GradCheckResult {
  int checked = 0;
  int failed = 0;
  double worst_rel = 0;
  std::string worst_name;
  std::vector<std::string> failures;
};

// Central finite differences against the reverse pass, always in double.
// Probe indices are drawn per tensor; the loss is rebuilt on a value-only
// tape for each probe so FD costs no graph bookkeeping.
template <typename LossFn>
GradCheckResult grad_check(Net<double>& net, LossFn&& loss_of, const GradCheckOptions& opt) {
  GradCheckResult res;
  Rng rng(opt.seed);

  Tape<double> tape;
  Var loss = loss_of(tape, net);
  tape.backward(loss);

  for (size_t pi = 0; pi < net.ps.entries.size(); ++pi) {
    auto& e = net.ps.entries[pi];
    const Tensor<double>* g = tape.param_grad(net.ps, int(pi));
    const bool corrupt = (e.name == opt.corrupt_name);
    const int n_probe = int(std::min<int64_t>(opt.max_params_per_tensor, e.value.size()));
    for (int k = 0; k < n_probe; ++k) {
      const int64_t j = rng.uniform_int(0, int(e.value.size()) - 1);
      double analytic = g ? double((*g)[j]) : 0.0;
      if (corrupt) analytic = analytic * opt.corrupt_scale + 1e-3;

      const double keep = e.value[j];
      auto eval = [&](double v) {
        e.value[j] = v;
        Tape<double> t2(false);
        Var l2 = loss_of(t2, net);
        return double(t2.val(l2)[0]);
      };
      const double fp = eval(keep + opt.eps);
      const double fm = eval(keep - opt.eps);
      e.value[j] = keep;
      const double fd = (fp - fm) / (2 * opt.eps);

      // Floor the denominator: a gradient this small is below what central
      // differences can resolve to the stated tolerance in fp64.
      const double denom = std::max({std::fabs(analytic), std::fabs(fd), 1e-5});
      const double rel = std::fabs(analytic - fd) / denom;
      ++res.checked;
      if (rel > res.worst_rel) {
        res.worst_rel = rel;
        res.worst_name = concat(e.name, "[", j, "]");
      }
      if (rel > opt.tol) {
        ++res.failed;
        if (res.failures.size() < 20)
          res.failures.push_back(concat(e.name, "[", j, "] analytic=", analytic, " fd=", fd,
                                        " rel=", rel));
      }
    }
  }
  return res;
}

}  // namespace derain
