#include "derain/metrics.hpp"

#include <cmath>
#include <vector>

namespace derain {

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  require(a.shape == b.shape, "psnr: shape mismatch ", a.shape.str(), " vs ", b.shape.str());
  require(a.size() > 0, "psnr: empty images");
  double se = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double av = std::min(1.0, std::max(0.0, double(a[i])));
    const double bv = std::min(1.0, std::max(0.0, double(b[i])));
    se += (av - bv) * (av - bv);
  }
  const double mse = se / double(a.size());
  if (mse < 1e-10) return kPsnrCap;
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

std::vector<double> gaussian_taps() {
  std::vector<double> g(kSsimWindow);
  const int half = kSsimWindow / 2;
  double sum = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - half;
    g[size_t(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[size_t(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// separable valid-only filter: (h,w) -> (h, w-win+1) horizontally,
// then (h-win+1, w-win+1) vertically
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w,
                                 const std::vector<double>& taps, int& oh, int& ow) {
  const int win = int(taps.size());
  ow = w - win + 1;
  std::vector<double> mid(size_t(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < win; ++k) s += taps[size_t(k)] * in[size_t(y) * w + x + k];
      mid[size_t(y) * ow + x] = s;
    }
  oh = h - win + 1;
  std::vector<double> out(size_t(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < win; ++k) s += taps[size_t(k)] * mid[size_t(y + k) * ow + x];
      out[size_t(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  require(a.shape == b.shape, "ssim: shape mismatch ", a.shape.str(), " vs ", b.shape.str());
  const int h = a.h(), w = a.w();
  require(h >= kSsimWindow && w >= kSsimWindow, "ssim: image ", h, "x", w,
          " smaller than the ", kSsimWindow, "x", kSsimWindow, " window");

  const Tensor<float> la = luminance(clamp01(a));
  const Tensor<float> lb = luminance(clamp01(b));
  const int64_t n = int64_t(h) * w;
  const size_t sn = size_t(n);
  std::vector<double> x(sn), y(sn), xx(sn), yy(sn), xy(sn);
  for (int64_t i = 0; i < n; ++i) {
    x[size_t(i)] = double(la[i]);
    y[size_t(i)] = double(lb[i]);
    xx[size_t(i)] = x[size_t(i)] * x[size_t(i)];
    yy[size_t(i)] = y[size_t(i)] * y[size_t(i)];
    xy[size_t(i)] = x[size_t(i)] * y[size_t(i)];
  }

  const std::vector<double> taps = gaussian_taps();
  int oh = 0, ow = 0;
  const std::vector<double> mx = filter_valid(x, h, w, taps, oh, ow);
  const std::vector<double> my = filter_valid(y, h, w, taps, oh, ow);
  const std::vector<double> mxx = filter_valid(xx, h, w, taps, oh, ow);
  const std::vector<double> myy = filter_valid(yy, h, w, taps, oh, ow);
  const std::vector<double> mxy = filter_valid(xy, h, w, taps, oh, ow);

  const double c1 = 0.01 * 0.01;  // (K1*L)^2 with L = 1
  const double c2 = 0.03 * 0.03;
  double total = 0;
  const int64_t m = int64_t(oh) * ow;
  for (int64_t i = 0; i < m; ++i) {
    const double ux = mx[size_t(i)], uy = my[size_t(i)];
    const double vx = mxx[size_t(i)] - ux * ux;
    const double vy = myy[size_t(i)] - uy * uy;
    const double cxy = mxy[size_t(i)] - ux * uy;
    total += ((2 * ux * uy + c1) * (2 * cxy + c2)) /
             ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return total / double(m);
}

}  // namespace derain
