#include <doctest.h>

#include "derain/eval.hpp"
#include "derain/raingen.hpp"

using namespace derain;

namespace {

ModelConfig nano_cfg() {
  ModelConfig c;
  c.feat_ch = 4;
  c.dec_ch = 4;
  c.recurrence_R = 1;
  return c;
}

std::vector<SamplePair> tiny_pairs(int n) {
  auto cleans = make_clean_set(n, 24, 24, 91);
  std::vector<SamplePair> out;
  for (int i = 0; i < n; ++i)
    out.push_back(synth_joint(cleans[size_t(i)], clean_image_name(i), StreakParams{},
                              DropParams{}));
  return out;
}

}  // namespace

TEST_CASE("evaluation scores every sample and averages the columns") {
  Net<float> net = Net<float>::build(Variant::dam_zero, nano_cfg());
  init_gaussian(net.ps, 8, 0.01);
  const auto pairs = tiny_pairs(3);

  MetricReport rep = evaluate(net, pairs);
  REQUIRE(rep.records.size() == 3);
  double pin = 0, pout = 0, sin_ = 0, sout = 0;
  for (size_t i = 0; i < 3; ++i) {
    const EvalRecord& r = rep.records[i];
    CHECK(r.id == pairs[i].id);
    // scores must be recomputable from the stored pair
    CHECK(r.psnr_in == psnr(pairs[i].rainy, pairs[i].clean));
    CHECK(r.ssim_in == ssim(pairs[i].rainy, pairs[i].clean));
    CHECK(r.psnr_out > 0.0);
    CHECK(r.ssim_out >= -1.0);
    CHECK(r.ssim_out <= 1.0);
    CHECK(r.ms >= 0.0);
    pin += r.psnr_in;
    pout += r.psnr_out;
    sin_ += r.ssim_in;
    sout += r.ssim_out;
  }
  CHECK(rep.mean_psnr_in == doctest::Approx(pin / 3).epsilon(1e-12));
  CHECK(rep.mean_psnr_out == doctest::Approx(pout / 3).epsilon(1e-12));
  CHECK(rep.mean_ssim_in == doctest::Approx(sin_ / 3).epsilon(1e-12));
  CHECK(rep.mean_ssim_out == doctest::Approx(sout / 3).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate(net, {}), Error);

  const std::string table = report_table(rep);
  CHECK(table.find("img000") != std::string::npos);
  CHECK(table.find("mean") != std::string::npos);
  CHECK(table.find("psnr_out") != std::string::npos);
}

TEST_CASE("median handles odd, even and single-element sets") {
  CHECK(median_of({3.0}) == 3.0);
  CHECK(median_of({5.0, 1.0, 3.0}) == 3.0);
  CHECK(median_of({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK(median_of({2.0, 2.0, 9.0, 2.0}) == 2.0);
  CHECK_THROWS_AS(median_of({}), Error);
}

TEST_CASE("reverse-mode gradients agree with finite differences end to end") {
  Net<double> net = Net<double>::build(Variant::dam_dual, nano_cfg());
  init_fanin(net.ps, 93);
  Rng rng(94);
  const Tensor<double> rainy = random01<double>(Shape::image(10, 10, 3), rng);
  const Tensor<double> clean = random01<double>(Shape::image(10, 10, 3), rng);
  const Tensor<double> mask = random01<double>(Shape::image(10, 10, 1), rng);

  auto loss_of = [&](Tape<double>& t, Net<double>& n) {
    auto f = n.forward(t, t.input(rainy));
    return n.loss(t, f, t.input(clean), Var{}, Var{}, t.input(mask), LossWeights{}).total;
  };

  GradCheckOptions opt;
  opt.max_params_per_tensor = 2;
  GradCheckResult res = grad_check(net, loss_of, opt);
  CHECK(res.checked > 20);
  CHECK(res.failed == 0);
  CHECK(res.worst_rel < opt.tol);
}

TEST_CASE("the checker catches a gradient that is wrong on purpose") {
  Net<double> net = Net<double>::build(Variant::dam_zero, nano_cfg());
  init_fanin(net.ps, 95);
  Rng rng(96);
  const Tensor<double> rainy = random01<double>(Shape::image(9, 9, 3), rng);
  const Tensor<double> clean = random01<double>(Shape::image(9, 9, 3), rng);

  auto loss_of = [&](Tape<double>& t, Net<double>& n) {
    auto f = n.forward(t, t.input(rainy));
    return n.loss(t, f, t.input(clean), Var{}, Var{}, Var{}, LossWeights{}).total;
  };

  GradCheckOptions opt;
  opt.max_params_per_tensor = 2;
  opt.corrupt_name = net.ps.entries[0].name;
  opt.corrupt_scale = 2.0;
  GradCheckResult res = grad_check(net, loss_of, opt);
  CHECK(res.failed > 0);
  REQUIRE(!res.failures.empty());
  CHECK(res.failures[0].find(net.ps.entries[0].name) != std::string::npos);
}
