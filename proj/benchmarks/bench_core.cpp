#include <benchmark/benchmark.h>

#include "derain/eval.hpp"
#include "derain/metrics.hpp"
#include "derain/net.hpp"
#include "derain/raingen.hpp"

using namespace derain;

namespace {

ModelConfig small_cfg() {
  ModelConfig c;
  c.feat_ch = 16;
  c.dec_ch = 32;
  c.recurrence_R = 1;
  return c;
}

void bm_conv_forward(benchmark::State& state) {
  const int hw = int(state.range(0));
  ParamStore<float> ps;
  ps.add("w", Shape::kernel(3, 3, 32, 32), false, 9 * 32);
  ps.add("b", Shape::vec(32), true, 0);
  Rng rng(1);
  for (auto& v : ps.entries[0].value.data) v = float(0.05 * rng.normal());
  const Tensor<float> x = random01<float>(Shape::image(hw, hw, 32), rng);
  for (auto _ : state) {
    Tape<float> t(false);
    benchmark::DoNotOptimize(t.val(conv2d(t, t.input(x), t.param(ps, 0), t.param(ps, 1))));
  }
  state.SetItemsProcessed(state.iterations() * int64_t(hw) * hw);
}
BENCHMARK(bm_conv_forward)->Arg(64)->Arg(128);

void bm_conv_backward(benchmark::State& state) {
  const int hw = int(state.range(0));
  ParamStore<float> ps;
  ps.add("w", Shape::kernel(3, 3, 32, 32), false, 9 * 32);
  ps.add("b", Shape::vec(32), true, 0);
  Rng rng(1);
  for (auto& v : ps.entries[0].value.data) v = float(0.05 * rng.normal());
  const Tensor<float> x = random01<float>(Shape::image(hw, hw, 32), rng);
  const Tensor<float> tgt = random01<float>(Shape::image(hw, hw, 32), rng);
  for (auto _ : state) {
    Tape<float> t;
    Var loss = mse(t, conv2d(t, t.input(x), t.param(ps, 0), t.param(ps, 1)), t.input(tgt));
    t.backward(loss);
    benchmark::DoNotOptimize(t.param_grad(ps, 0));
  }
  state.SetItemsProcessed(state.iterations() * int64_t(hw) * hw);
}
BENCHMARK(bm_conv_backward)->Arg(64);

void bm_single_branch_forward(benchmark::State& state) {
  const int hw = int(state.range(0));
  Net<float> net = Net<float>::build(Variant::dam_dual, small_cfg());
  init_fanin(net.ps, 3);
  Rng rng(2);
  const Tensor<float> img = random01<float>(Shape::image(hw, hw, 3), rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.infer(img));
  state.SetItemsProcessed(state.iterations() * int64_t(hw) * hw);
}
BENCHMARK(bm_single_branch_forward)->Arg(64)->Arg(112);

void bm_two_branch_forward(benchmark::State& state) {
  const int hw = int(state.range(0));
  Net<float> net = Net<float>::build(Variant::daiam, small_cfg());
  init_fanin(net.ps, 3);
  Rng rng(2);
  const Tensor<float> img = random01<float>(Shape::image(hw, hw, 3), rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.infer(img));
  state.SetItemsProcessed(state.iterations() * int64_t(hw) * hw);
}
BENCHMARK(bm_two_branch_forward)->Arg(64);

void bm_psnr(benchmark::State& state) {
  Rng rng(3);
  const Tensor<float> a = random01<float>(Shape::image(256, 256, 3), rng);
  const Tensor<float> b = random01<float>(Shape::image(256, 256, 3), rng);
  for (auto _ : state) benchmark::DoNotOptimize(psnr(a, b));
}
BENCHMARK(bm_psnr);

void bm_ssim(benchmark::State& state) {
  Rng rng(3);
  const Tensor<float> a = random01<float>(Shape::image(256, 256, 3), rng);
  const Tensor<float> b = random01<float>(Shape::image(256, 256, 3), rng);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(bm_ssim);

void bm_synth_pair(benchmark::State& state) {
  const Tensor<float> clean = make_clean_image(128, 128, 5);
  StreakParams sp;
  sp.intensity = 0.4;
  DropParams dp;
  dp.density = 100;
  for (auto _ : state) benchmark::DoNotOptimize(synth_joint(clean, "bench", sp, dp));
}
BENCHMARK(bm_synth_pair);

}  // namespace

BENCHMARK_MAIN();
