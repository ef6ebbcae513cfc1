#pragma once

#include "derain/tensor.hpp"

namespace derain {

// Peak signal-to-noise ratio over all channels with peak 1.0. Inputs are
// clamped to [0,1] first; identical images report the 100 dB cap.
double psnr(const Tensor<float>& a, const Tensor<float>& b);

// Mean structural similarity on the luma channel: 11x11 Gaussian window
// (sigma 1.5), K1=0.01, K2=0.03, dynamic range 1, averaged over fully valid
// window positions. Images smaller than the window are an error.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kPsnrCap = 100.0;

}  // namespace derain
