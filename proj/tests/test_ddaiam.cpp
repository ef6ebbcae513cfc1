#include <doctest.h>

#include "derain/net.hpp"
#include "derain/train.hpp"

using namespace derain;

namespace {

ModelConfig tiny_cfg(int T) {
  ModelConfig c;
  c.feat_ch = 6;
  c.dec_ch = 6;
  c.filternet_ch = 4;
  c.recurrence_R = 1;
  c.stages_T = T;
  return c;
}

bool has_prefix(const ParamStore<float>& ps, const std::string& p) {
  for (const auto& e : ps.entries)
    if (e.name.rfind(p, 0) == 0) return true;
  return false;
}

}  // namespace

TEST_CASE("differential fusion is the advertised pixel formula") {
  Tape<double> t;
  Rng rng(17);
  const Tensor<double> io = random01<double>(Shape::image(6, 7, 3), rng);
  const Tensor<double> ii = random01<double>(Shape::image(6, 7, 3), rng);
  const Tensor<double> a = random01<double>(Shape::image(6, 7, 1), rng);
  const Tensor<double> b = random01<double>(Shape::image(6, 7, 1), rng);
  const double w = 0.37;

  typename DiffModule<double>::Maps m{t.input(a), t.input(b)};
  Var fused = DiffModule<double>::fuse(t, t.input(io), t.input(ii), m, w);
  const Tensor<double>& got = t.val(fused);
  REQUIRE(got.shape == io.shape);
  for (int64_t p = 0; p < int64_t(io.h()) * io.w(); ++p)
    for (int c = 0; c < 3; ++c) {
      const double want = io[p * 3 + c] * a[p] + w * (ii[p * 3 + c] * b[p]);
      CHECK(got[p * 3 + c] == want);
    }
}

TEST_CASE("a single differential stage degenerates to the two-branch model") {
  Net<float> a = Net<float>::build(Variant::daiam, tiny_cfg(1));
  Net<float> b = Net<float>::build(Variant::ddaiam, tiny_cfg(1));
  REQUIRE(a.ps.entries.size() == b.ps.entries.size());
  for (size_t i = 0; i < a.ps.entries.size(); ++i)
    CHECK(a.ps.entries[i].name == b.ps.entries[i].name);
  init_fanin(a.ps, 45);
  init_fanin(b.ps, 45);
  Rng rng(18);
  const Tensor<float> x = random01<float>(Shape::image(12, 12, 3), rng);
  CHECK(max_abs_diff(a.infer(x), b.infer(x)) == 0.0f);
}

TEST_CASE("stages and hand-off filters get their own parameter namespaces") {
  Net<float> diff3 = Net<float>::build(Variant::ddaiam, tiny_cfg(3));
  for (const char* p : {"s1.", "s2.", "s3.", "d1.", "d2."}) CHECK(has_prefix(diff3.ps, p));
  CHECK(!has_prefix(diff3.ps, "s4."));
  CHECK(!has_prefix(diff3.ps, "d3."));

  Net<float> stack3 = Net<float>::build(Variant::daiam_stack, tiny_cfg(3));
  CHECK(has_prefix(stack3.ps, "s3."));
  CHECK(!has_prefix(stack3.ps, "d1."));

  // per-stage parameters are not shared
  CHECK(diff3.ps.param_count() >
        3 * Net<float>::build(Variant::daiam, tiny_cfg(1)).ps.param_count());
}

TEST_CASE("the hand-off changes what later stages consume") {
  Net<float> stack = Net<float>::build(Variant::daiam_stack, tiny_cfg(2));
  Net<float> diff = Net<float>::build(Variant::ddaiam, tiny_cfg(2));
  init_fanin(stack.ps, 46);
  init_fanin(diff.ps, 46);  // stage entries line up, filters draw afterwards
  Rng rng(19);
  const Tensor<float> x = random01<float>(Shape::image(10, 10, 3), rng);

  InferTrace<float> ts = stack.trace(x);
  InferTrace<float> td = diff.trace(x);
  REQUIRE(ts.stages.size() == 2);
  REQUIRE(td.stages.size() == 2);
  // identical first stages
  CHECK(max_abs_diff(ts.stages[0].i_out, td.stages[0].i_out) == 0.0f);
  CHECK(!ts.stages[0].fused.has_value());
  REQUIRE(td.stages[0].fused.has_value());
  REQUIRE(td.stages[0].map_a.has_value());
  // the filtered hand-off is not the raw estimate, so stage two diverges
  CHECK(max_abs_diff(*td.stages[0].fused, td.stages[0].i_out) > 0.0f);
  CHECK(max_abs_diff(ts.i_out, td.i_out) > 0.0f);
}

TEST_CASE("filter stack reads a 4x4 window reaching back toward lower indices") {
  ParamStore<float> ps;
  FilterNet<float> fn = FilterNet<float>::build(ps, "f", tiny_cfg(1));
  init_fanin(ps, 47);
  Rng rng(20);
  const Tensor<float> base = random01<float>(Shape::image(16, 16, 3), rng);
  Tensor<float> poked = base;
  poked.at(5, 5, 1) += 0.25f;

  auto run = [&](const Tensor<float>& x) {
    Tape<float> t(false);
    return t.val(fn(t, ps, t.input(x)));
  };
  const Tensor<float> o1 = run(base), o2 = run(poked);
  REQUIRE(o1.shape == Shape::image(16, 16, 1));
  bool touched = false;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const bool inside = y >= 5 && y <= 8 && x >= 5 && x <= 8;
      const float d = std::fabs(o1.at(y, x, 0) - o2.at(y, x, 0));
      if (!inside) CHECK(d == 0.0f);
      if (inside && d > 0) touched = true;
    }
  CHECK(touched);
}

TEST_CASE("a vanished difference yields a flat map away from the border") {
  ParamStore<float> ps;
  FilterNet<float> fn = FilterNet<float>::build(ps, "f", tiny_cfg(1));
  init_fanin(ps, 48);
  for (auto& e : ps.entries)  // nonzero biases so the map is not trivially 0.5
    if (e.is_bias) e.value.fill(0.3f);
  Tape<float> t(false);
  const Tensor<float> out = t.val(fn(t, ps, t.input(Tensor<float>(Shape::image(12, 12, 3)))));
  const float inner = out.at(2, 2, 0);
  CHECK(inner > 0.0f);
  CHECK(inner < 1.0f);
  for (int y = 2; y < 12; ++y)
    for (int x = 2; x < 12; ++x) CHECK(out.at(y, x, 0) == inner);
}

TEST_CASE("supervising only the last stage still trains the first") {
  Net<double> net = Net<double>::build(Variant::ddaiam, tiny_cfg(2));
  init_fanin(net.ps, 49);
  Rng rng(21);
  const Tensor<double> rainy = random01<double>(Shape::image(8, 8, 3), rng);
  const Tensor<double> clean = random01<double>(Shape::image(8, 8, 3), rng);

  Tape<double> t;
  auto f = net.forward(t, t.input(rainy));
  REQUIRE(f.multi.has_value());
  t.backward(mse(t, f.multi->trace[1].out.i_out, t.input(clean)));

  auto max_grad_under = [&](const std::string& prefix) {
    double m = 0;
    for (size_t i = 0; i < net.ps.entries.size(); ++i) {
      if (net.ps.entries[i].name.rfind(prefix, 0) != 0) continue;
      if (const Tensor<double>* g = t.param_grad(net.ps, int(i)))
        for (int64_t j = 0; j < g->size(); ++j) m = std::max(m, std::fabs((*g)[j]));
    }
    return m;
  };
  CHECK(max_grad_under("s2.") > 0.0);
  CHECK(max_grad_under("d1.") > 0.0);
  CHECK(max_grad_under("s1.") > 0.0);
}

TEST_CASE("deep supervision sums one reconstruction term per stage") {
  Net<double> net = Net<double>::build(Variant::ddaiam, tiny_cfg(3));
  init_fanin(net.ps, 50);
  Rng rng(22);
  const Tensor<double> rainy = random01<double>(Shape::image(8, 8, 3), rng);
  const Tensor<double> clean = random01<double>(Shape::image(8, 8, 3), rng);

  Tape<double> t(false);
  auto f = net.forward(t, t.input(rainy));
  LossBreakdown lb = net.loss(t, f, t.input(clean), Var{}, Var{}, Var{}, LossWeights{});
  REQUIRE(lb.components.size() == 3);
  double sum = 0;
  for (size_t s = 0; s < 3; ++s) {
    CHECK(lb.components[s].first == concat("stage", s + 1));
    sum += lb.components[s].second;
  }
  CHECK(t.val(lb.total)[0] == doctest::Approx(sum).epsilon(1e-12));
}
