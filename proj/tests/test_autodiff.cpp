#include <cmath>

#include "derain/autodiff.hpp"
#include "doctest.h"

using namespace derain;

namespace {

// Central finite differences over every registered probe tensor. The builder
// must reconstruct the full scalar from the current store values so it can be
// re-evaluated on value-only tapes.
template <typename Fn>
void fd_check(ParamStore<double>& ps, Fn&& build, double tol = 1e-5) {
  Tape<double> tape;
  Var loss = build(tape);
  REQUIRE(tape.val(loss).size() == 1);
  tape.backward(loss);

  const double eps = 1e-6;
  for (size_t i = 0; i < ps.entries.size(); ++i) {
    const Tensor<double>* g = tape.param_grad(ps, int(i));
    auto& val = ps.entries[i].value;
    for (int64_t j = 0; j < val.size(); ++j) {
      const double analytic = g ? (*g)[j] : 0.0;
      const double keep = val[j];
      auto eval = [&](double v) {
        val[j] = v;
        Tape<double> t2(false);
        return t2.val(build(t2))[0];
      };
      const double fd = (eval(keep + eps) - eval(keep - eps)) / (2 * eps);
      val[j] = keep;
      const double rel =
          std::fabs(analytic - fd) / std::max({std::fabs(analytic), std::fabs(fd), 1e-8});
      INFO(ps.entries[i].name, "[", j, "] analytic=", analytic, " fd=", fd);
      CHECK(rel < tol);
    }
  }
}

ParamStore<double> store_with(std::initializer_list<std::pair<const char*, Shape>> specs,
                              uint64_t seed) {
  ParamStore<double> ps;
  Rng rng(seed);
  for (const auto& [name, shape] : specs) {
    const int idx = ps.add(name, shape, false, 1);
    for (auto& v : ps.entries[size_t(idx)].value.data) v = rng.uniform(-1.0, 1.0);
  }
  return ps;
}

}  // namespace

TEST_CASE("conv2d matches finite differences and keeps spatial size") {
  ParamStore<double> ps = store_with({{"x", Shape::image(5, 6, 3)},
                                      {"w", Shape::kernel(3, 3, 3, 4)},
                                      {"b", Shape::vec(4)}},
                                     7);
  Rng rng(8);
  const Tensor<double> target = random01<double>(Shape::image(5, 6, 4), rng);
  fd_check(ps, [&](Tape<double>& t) {
    Var y = conv2d(t, t.param(ps, 0), t.param(ps, 1), t.param(ps, 2));
    CHECK(t.val(y).shape == Shape::image(5, 6, 4));
    return mse(t, y, t.input(target));
  });
}

TEST_CASE("conv2d with 2x2 kernel pads top-left and preserves size") {
  ParamStore<double> ps = store_with({{"x", Shape::image(4, 5, 2)},
                                      {"w", Shape::kernel(2, 2, 2, 3)},
                                      {"b", Shape::vec(3)}},
                                     9);
  Rng rng(10);
  const Tensor<double> target = random01<double>(Shape::image(4, 5, 3), rng);
  fd_check(ps, [&](Tape<double>& t) {
    Var y = conv2d(t, t.param(ps, 0), t.param(ps, 1), t.param(ps, 2));
    CHECK(t.val(y).shape == Shape::image(4, 5, 3));
    return mse(t, y, t.input(target));
  });

  // output at (0,0) must see x(-1,-1..0), i.e. only the bottom-right kernel
  // taps touch real pixels
  Tape<double> t;
  Tensor<double> x(Shape::image(3, 3, 1));
  x.at(0, 0, 0) = 1.0;
  Tensor<double> w(Shape::kernel(2, 2, 1, 1));
  w.at(0, 0, 0) = 100.0;  // (ky=0,kx=0) tap, reads the padded row
  Tensor<double> wb(Shape::vec(1));
  Var y = conv2d(t, t.input(x), t.input(w), t.input(wb));
  CHECK(t.val(y).at(0, 0, 0) == 0.0);   // tap (0,0) fell on padding
  CHECK(t.val(y).at(1, 1, 0) == 100.0); // tap (0,0) sees x(0,0)
}

TEST_CASE("pointwise and reduction ops match finite differences") {
  ParamStore<double> ps =
      store_with({{"a", Shape::image(3, 4, 2)}, {"b", Shape::image(3, 4, 2)}}, 11);
  Rng rng(12);
  const Tensor<double> target = random01<double>(Shape::image(3, 4, 2), rng);

  SUBCASE("lrelu") {
    fd_check(ps, [&](Tape<double>& t) {
      return mse(t, lrelu(t, t.param(ps, 0), 0.2), t.input(target));
    });
  }
  SUBCASE("sigmoid") {
    fd_check(ps, [&](Tape<double>& t) {
      return mse(t, sigmoid(t, t.param(ps, 0)), t.input(target));
    });
  }
  SUBCASE("tanh") {
    fd_check(ps, [&](Tape<double>& t) {
      return mse(t, tanh_op(t, t.param(ps, 0)), t.input(target));
    });
  }
  SUBCASE("add sub mul") {
    fd_check(ps, [&](Tape<double>& t) {
      Var a = t.param(ps, 0), b = t.param(ps, 1);
      Var y = mul(t, add(t, a, b), sub(t, a, b));
      return mse(t, y, t.input(target));
    });
  }
  SUBCASE("scale and one_minus") {
    fd_check(ps, [&](Tape<double>& t) {
      Var y = scale(t, one_minus(t, t.param(ps, 0)), 0.7);
      return mse(t, y, t.input(target));
    });
  }
  SUBCASE("weighted_sum of scalars") {
    fd_check(ps, [&](Tape<double>& t) {
      Var l1 = mse(t, t.param(ps, 0), t.input(target));
      Var l2 = mse(t, t.param(ps, 1), t.input(target));
      return weighted_sum(t, {l1, l2}, {0.8, 0.3});
    });
  }
}

TEST_CASE("broadcast_mul applies one map channel across all feature channels") {
  ParamStore<double> ps =
      store_with({{"f", Shape::image(3, 4, 5)}, {"m", Shape::image(3, 4, 1)}}, 13);
  Rng rng(14);
  const Tensor<double> target = random01<double>(Shape::image(3, 4, 5), rng);
  fd_check(ps, [&](Tape<double>& t) {
    return mse(t, broadcast_mul(t, t.param(ps, 0), t.param(ps, 1)), t.input(target));
  });

  Tape<double> t;
  const Tensor<double>& f = ps.entries[0].value;
  const Tensor<double>& m = ps.entries[1].value;
  const Tensor<double>& y = t.val(broadcast_mul(t, t.input(f), t.input(m)));
  for (int yy = 0; yy < 3; ++yy)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 5; ++c)
        CHECK(y.at(yy, x, c) == f.at(yy, x, c) * m.at(yy, x, 0));
}

TEST_CASE("concat and slice route values and gradients to the right channels") {
  ParamStore<double> ps =
      store_with({{"a", Shape::image(2, 3, 2)}, {"b", Shape::image(2, 3, 3)}}, 15);
  Rng rng(16);
  const Tensor<double> target = random01<double>(Shape::image(2, 3, 3), rng);
  fd_check(ps, [&](Tape<double>& t) {
    Var cat = concat_channels(t, {t.param(ps, 0), t.param(ps, 1)});
    CHECK(t.val(cat).c() == 5);
    return mse(t, slice_channels(t, cat, 1, 3), t.input(target));
  });

  Tape<double> t;
  Var cat = concat_channels(t, {t.input(ps.entries[0].value), t.input(ps.entries[1].value)});
  const Tensor<double>& cv = t.val(cat);
  CHECK(cv.at(1, 2, 0) == ps.entries[0].value.at(1, 2, 0));
  CHECK(cv.at(1, 2, 3) == ps.entries[1].value.at(1, 2, 1));
  const Tensor<double>& sv = t.val(slice_channels(t, cat, 2, 2));
  CHECK(sv.at(0, 1, 0) == ps.entries[1].value.at(0, 1, 0));
}

TEST_CASE("mse matches a scalar loop and its gradient is 2(a-b)/n") {
  Rng rng(17);
  const Tensor<double> a = random01<double>(Shape::image(4, 4, 3), rng);
  const Tensor<double> b = random01<double>(Shape::image(4, 4, 3), rng);
  double want = 0;
  for (int64_t i = 0; i < a.size(); ++i) want += (a[i] - b[i]) * (a[i] - b[i]);
  want /= double(a.size());

  ParamStore<double> ps;
  ps.add("a", a.shape, false, 1);
  ps.entries[0].value = a;
  Tape<double> t;
  Var av = t.param(ps, 0);
  Var loss = mse(t, av, t.input(b));
  CHECK(t.val(loss)[0] == doctest::Approx(want).epsilon(1e-12));
  t.backward(loss);
  const Tensor<double>* g = t.param_grad(ps, 0);
  REQUIRE(g != nullptr);
  for (int64_t i = 0; i < a.size(); ++i)
    CHECK((*g)[i] == doctest::Approx(2.0 * (a[i] - b[i]) / double(a.size())).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar targets and double invocation") {
  Tape<double> t;
  Rng rng(18);
  Var v = t.input(random01<double>(Shape::image(2, 2, 1), rng));
  CHECK_THROWS_AS(t.backward(v), Error);

  ParamStore<double> ps;
  ps.add("x", Shape::vec(3), false, 1);
  ps.entries[0].value.fill(0.5);
  Tape<double> t2;
  Var loss = mse(t2, t2.param(ps, 0), t2.input(Tensor<double>(Shape::vec(3))));
  t2.backward(loss);
  CHECK_THROWS_AS(t2.backward(loss), Error);
}

TEST_CASE("value-only tapes refuse gradient bookkeeping") {
  ParamStore<double> ps;
  ps.add("x", Shape::vec(2), false, 1);
  ps.entries[0].value.fill(0.25);
  Tape<double> t(false);
  Var loss = mse(t, t.param(ps, 0), t.input(Tensor<double>(Shape::vec(2))));
  CHECK(t.val(loss)[0] == doctest::Approx(0.0625));
  CHECK_THROWS_AS(t.backward(loss), Error);
}

TEST_CASE("parameter nodes are cached per store entry within one tape") {
  ParamStore<double> ps;
  ps.add("x", Shape::vec(2), false, 1);
  ps.entries[0].value.fill(1.0);
  Tape<double> t;
  Var a = t.param(ps, 0);
  Var b = t.param(ps, 0);
  CHECK(a.id == b.id);
}

TEST_CASE("check_finite names the offending tensor") {
  Tape<double> t;
  Tensor<double> bad(Shape::vec(3));
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  Var v = t.input(bad);
  CHECK_THROWS_WITH_AS(check_finite(t, v, "encoder output"),
                       doctest::Contains("encoder output"), Error);
  Var ok = t.input(Tensor<double>::full(Shape::vec(2), 1.0));
  CHECK_NOTHROW(check_finite(t, ok, "fine"));
}
