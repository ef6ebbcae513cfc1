#include <doctest.h>

#include "derain/blocks.hpp"
#include "derain/net.hpp"
#include "derain/train.hpp"

using namespace derain;

namespace {

ModelConfig reference_cfg() {
  ModelConfig c;  // feat 32, dec 64
  return c;
}

int64_t conv_params(int k, int cin, int cout) { return int64_t(k) * k * cin * cout + cout; }

int64_t store_params(const ParamStore<float>& ps, const std::string& prefix) {
  int64_t n = 0;
  for (const auto& e : ps.entries)
    if (e.name.rfind(prefix, 0) == 0) n += e.value.size();
  return n;
}

}  // namespace

TEST_CASE("encoder parameter count matches the hand count") {
  // head 3x3 conv, three residual blocks (two convs each), lstm gate conv
  auto expected = [](int in_ch, int f) {
    return conv_params(3, in_ch, f) + 3 * 2 * conv_params(3, f, f) +
           conv_params(3, 2 * f, 4 * f);
  };
  CHECK(expected(3, 32) == 130240);

  ParamStore<float> ps;
  Encoder<float>::build(ps, "e", reference_cfg(), 3);
  CHECK(ps.param_count() == 130240);

  ParamStore<float> ps6;
  Encoder<float>::build(ps6, "e", reference_cfg(), 6);
  CHECK(ps6.param_count() == expected(6, 32));
}

TEST_CASE("region decoder parameter count matches the hand count") {
  // widening conv from (feat+3), five residual blocks, linear conv out
  const int64_t expected =
      conv_params(3, 35, 64) + 5 * 2 * conv_params(3, 64, 64) + conv_params(3, 64, 3);
  CHECK(expected == 391235);

  ParamStore<float> ps;
  RegionalDecoder<float>::build(ps, "d", reference_cfg());
  CHECK(ps.param_count() == 391235);
}

TEST_CASE("fusion decoder width follows its input count") {
  for (int n : {2, 3, 5}) {
    ParamStore<float> ps;
    GlobalDecoder<float>::build(ps, "g", reference_cfg(), n);
    const int64_t expected =
        conv_params(3, 3 * n, 64) + 2 * 2 * conv_params(3, 64, 64) + conv_params(3, 64, 3);
    CHECK(ps.param_count() == expected);
  }
  ParamStore<float> ps;
  CHECK_THROWS_AS(GlobalDecoder<float>::build(ps, "g", reference_cfg(), 1), Error);
}

TEST_CASE("doubling the decoder width quadruples the residual blocks") {
  ParamStore<float> a, b;
  ResBlock<float>::build(a, "r", 64, 0.2);
  ResBlock<float>::build(b, "r", 128, 0.2);
  // bias terms only double, so compare the weight tensors
  const int64_t wa = a.entries[size_t(a.find("r.c1.w"))].value.size();
  const int64_t wb = b.entries[size_t(b.find("r.c1.w"))].value.size();
  CHECK(wb == 4 * wa);
}

TEST_CASE("whole-model parameter counts at reference widths") {
  const int64_t enc6 = conv_params(3, 6, 32) + 3 * 2 * conv_params(3, 32, 32) +
                       conv_params(3, 64, 128);
  const int64_t attn = conv_params(3, 32, 1);
  const int64_t dec = 391235;
  auto fusion = [&](int n) {
    return conv_params(3, 3 * n, 64) + 2 * 2 * conv_params(3, 64, 64) + conv_params(3, 64, 3);
  };

  Net<float> dual = Net<float>::build(Variant::dam_dual, reference_cfg());
  CHECK(dual.ps.param_count() == enc6 + attn + 2 * dec + fusion(3));

  Net<float> zero = Net<float>::build(Variant::dam_zero, reference_cfg());
  CHECK(zero.ps.param_count() == enc6 + dec + fusion(2));
  CHECK(zero.ps.find("s1.branch.attn.w") == -1);
  CHECK(zero.ps.find("s1.branch.dec_light.head.w") == -1);

  Net<float> odd = Net<float>::build(Variant::dam_odd, reference_cfg());
  CHECK(odd.ps.param_count() == enc6 + attn + dec + fusion(2));
  CHECK(odd.ps.find("s1.branch.attn.w") != -1);
  CHECK(odd.ps.find("s1.branch.dec_light.head.w") == -1);

  Net<float> two = Net<float>::build(Variant::daiam, reference_cfg());
  const int64_t branch = enc6 + attn + 2 * dec;
  CHECK(two.ps.param_count() == 2 * branch + fusion(5));
  // a couple of million parameters, same ballpark as full-scale deraining nets
  CHECK(two.ps.param_count() > 1000000);
  CHECK(two.ps.param_count() < 10000000);
}

TEST_CASE("filter net stays narrow and 2x2") {
  ParamStore<float> ps;
  FilterNet<float>::build(ps, "f", reference_cfg());
  CHECK(ps.param_count() ==
        conv_params(2, 3, 16) + conv_params(2, 16, 16) + conv_params(2, 16, 1));
  CHECK(ps.entries[size_t(ps.find("f.c1.w"))].value.shape == Shape::kernel(2, 2, 3, 16));
}

TEST_CASE("residual block at zero weights is the identity") {
  ParamStore<float> ps;  // fresh parameters are zero-filled
  ResBlock<float> r = ResBlock<float>::build(ps, "r", 4, 0.2);
  Rng rng(3);
  const Tensor<float> x = random01<float>(Shape::image(9, 7, 4), rng);
  Tape<float> t(false);
  const Tensor<float>& y = t.val(r(t, ps, t.input(x)));
  REQUIRE(y.shape == x.shape);
  CHECK(std::memcmp(y.data.data(), x.data.data(), sizeof(float) * x.data.size()) == 0);
}

TEST_CASE("conv layer preserves spatial size on odd rectangles") {
  ParamStore<float> ps;
  Conv2dLayer<float> l = Conv2dLayer<float>::build(ps, "c", {3, 5, 3, Act::lrelu, 0.2});
  init_fanin(ps, 4);
  Rng rng(5);
  Tape<float> t(false);
  const Tensor<float>& y = t.val(l(t, ps, t.input(random01<float>(Shape::image(13, 9, 3), rng))));
  CHECK(y.shape == Shape::image(13, 9, 5));
}

TEST_CASE("decoders end without an activation") {
  ParamStore<float> ps;
  RegionalDecoder<float> d = RegionalDecoder<float>::build(ps, "d", reference_cfg());
  GlobalDecoder<float> g = GlobalDecoder<float>::build(ps, "g", reference_cfg(), 3);
  CHECK(d.tail.spec.act == Act::none);
  CHECK(g.tail.spec.act == Act::none);
  CHECK(d.head.spec.act == Act::none);
}

TEST_CASE("lstm state carries information across steps") {
  ModelConfig cfg;
  cfg.feat_ch = 4;
  ParamStore<float> ps;
  ConvLstm<float> lstm = ConvLstm<float>::build(ps, "l", 4, 0.2);
  init_fanin(ps, 8);
  Rng rng(6);
  const Tensor<float> x = random01<float>(Shape::image(8, 8, 4), rng);

  Tape<float> t(false);
  Var xv = t.input(x);
  auto s0 = lstm.zero_state(t, 8, 8);
  auto [h1, s1] = lstm.step(t, ps, xv, s0);
  auto [h2, s2] = lstm.step(t, ps, xv, s1);

  // same input, different state, so the outputs must differ
  CHECK(max_abs_diff(t.val(h1), t.val(h2)) > 0.0f);

  // and replaying from scratch reproduces the first step bitwise
  Tape<float> t2(false);
  Var xv2 = t2.input(x);
  auto z = lstm.zero_state(t2, 8, 8);
  auto [h1b, s1b] = lstm.step(t2, ps, xv2, z);
  CHECK(std::memcmp(t.val(h1).data.data(), t2.val(h1b).data.data(),
                    sizeof(float) * t2.val(h1b).data.size()) == 0);
}
