#pragma once

#include <array>
#include <optional>
#include <string>

#include "derain/autodiff.hpp"

namespace derain {

enum class Act { none, lrelu, sigmoid, tanh };

struct ConvSpec {
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 3;
  Act act = Act::none;
  double slope = 0.2;  // lrelu only
};

// Width/depth knobs shared by every network variant.
struct ModelConfig {
  int feat_ch = 32;       // encoder feature width
  int dec_ch = 64;        // decoder trunk width
  int recurrence_R = 4;   // progressive passes per stage
  int stages_T = 1;       // chained refinement stages
  int filternet_ch = 16;  // hidden width of the fusion filter nets
  double lrelu_slope = 0.2;
  double fusion_w = 0.5;  // weight on the re-injected input when fusing stages

  bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& c) {
  require(c.feat_ch >= 1 && c.dec_ch >= 1 && c.filternet_ch >= 1, "channel widths must be >= 1");
  require(c.recurrence_R >= 1, "recurrence_R must be >= 1, got ", c.recurrence_R);
  require(c.stages_T >= 1, "stages_T must be >= 1, got ", c.stages_T);
  require(c.lrelu_slope >= 0 && c.lrelu_slope < 1, "lrelu_slope out of range: ", c.lrelu_slope);
  require(c.fusion_w >= 0, "fusion_w must be non-negative, got ", c.fusion_w);
}

template <typename T>
struct Conv2dLayer {
  ConvSpec spec;
  int w = -1, b = -1;

  static Conv2dLayer build(ParamStore<T>& ps, const std::string& name, ConvSpec s) {
    require(s.in_ch > 0 && s.out_ch > 0 && s.kernel > 0, "bad conv spec for ", name);
    Conv2dLayer l;
    l.spec = s;
    l.w = ps.add(name + ".w", Shape::kernel(s.kernel, s.kernel, s.in_ch, s.out_ch), false,
                 s.kernel * s.kernel * s.in_ch);
    l.b = ps.add(name + ".b", Shape::vec(s.out_ch), true, s.kernel * s.kernel * s.in_ch);
    return l;
  }

  Var operator()(Tape<T>& t, const ParamStore<T>& ps, Var x) const {
    Var y = conv2d(t, x, t.param(ps, w), t.param(ps, b));
    switch (spec.act) {
      case Act::none: return y;
      case Act::lrelu: return lrelu(t, y, spec.slope);
      case Act::sigmoid: return sigmoid(t, y);
      case Act::tanh: return tanh_op(t, y);
    }
    fail("unreachable activation");
  }
};

// Two 3x3 convs with leaky-relu plus an identity skip. With all residual
// weights and biases at zero this is exactly the identity map.
template <typename T>
struct ResBlock {
  Conv2dLayer<T> c1, c2;

  static ResBlock build(ParamStore<T>& ps, const std::string& name, int ch, double slope) {
    ResBlock r;
    r.c1 = Conv2dLayer<T>::build(ps, name + ".c1", {ch, ch, 3, Act::lrelu, slope});
    r.c2 = Conv2dLayer<T>::build(ps, name + ".c2", {ch, ch, 3, Act::lrelu, slope});
    return r;
  }

  Var operator()(Tape<T>& t, const ParamStore<T>& ps, Var x) const {
    return add(t, x, c2(t, ps, c1(t, ps, x)));
  }
};

// Convolutional LSTM cell. The four gates come from one 3x3 conv over
// [x, h]; input/forget/output gates are sigmoid, the candidate is tanh.
template <typename T>
struct ConvLstm {
  int ch = 0;
  Conv2dLayer<T> gates;

  struct State {
    Var h, c;
  };

  static ConvLstm build(ParamStore<T>& ps, const std::string& name, int ch, double slope) {
    (void)slope;
    ConvLstm l;
    l.ch = ch;
    l.gates = Conv2dLayer<T>::build(ps, name + ".gates", {2 * ch, 4 * ch, 3, Act::none});
    return l;
  }

  State zero_state(Tape<T>& t, int h, int w) const {
    Tensor<T> z(Shape::image(h, w, ch));
    return State{t.input(z), t.input(z)};
  }

  std::pair<Var, State> step(Tape<T>& t, const ParamStore<T>& ps, Var x, State s) const {
    Var pre = gates(t, ps, concat_channels(t, {x, s.h}));
    Var gi = sigmoid(t, slice_channels(t, pre, 0, ch));
    Var gf = sigmoid(t, slice_channels(t, pre, ch, ch));
    Var gc = tanh_op(t, slice_channels(t, pre, 2 * ch, ch));
    Var go = sigmoid(t, slice_channels(t, pre, 3 * ch, ch));
    Var c_new = add(t, mul(t, gf, s.c), mul(t, gi, gc));
    Var h_new = mul(t, go, tanh_op(t, c_new));
    return {h_new, State{h_new, c_new}};
  }
};

// Feature extractor: one plain conv, three residual blocks, one recurrent
// cell whose hidden state carries information across progressive passes.
template <typename T>
struct Encoder {
  Conv2dLayer<T> head;
  std::array<ResBlock<T>, 3> res;
  ConvLstm<T> lstm;

  using State = typename ConvLstm<T>::State;

  static Encoder build(ParamStore<T>& ps, const std::string& name, const ModelConfig& cfg,
                       int in_ch) {
    Encoder e;
    e.head = Conv2dLayer<T>::build(ps, name + ".head", {in_ch, cfg.feat_ch, 3, Act::none});
    for (int i = 0; i < 3; ++i)
      e.res[size_t(i)] =
          ResBlock<T>::build(ps, name + ".res" + std::to_string(i + 1), cfg.feat_ch,
                             cfg.lrelu_slope);
    e.lstm = ConvLstm<T>::build(ps, name + ".lstm", cfg.feat_ch, cfg.lrelu_slope);
    return e;
  }

  State zero_state(Tape<T>& t, int h, int w) const { return lstm.zero_state(t, h, w); }

  std::pair<Var, State> operator()(Tape<T>& t, const ParamStore<T>& ps, Var x,
                                   State s) const {
    Var f = head(t, ps, x);
    for (const auto& r : res) f = r(t, ps, f);
    return lstm.step(t, ps, f, s);
  }
};

// Region decoder: reconstructs a full image from reweighted features plus the
// raw input. One widening conv, five residual blocks, one linear conv out.
template <typename T>
struct RegionalDecoder {
  Conv2dLayer<T> head;
  std::array<ResBlock<T>, 5> res;
  Conv2dLayer<T> tail;

  static RegionalDecoder build(ParamStore<T>& ps, const std::string& name,
                               const ModelConfig& cfg) {
    RegionalDecoder d;
    d.head = Conv2dLayer<T>::build(ps, name + ".head",
                                   {cfg.feat_ch + 3, cfg.dec_ch, 3, Act::none});
    for (int i = 0; i < 5; ++i)
      d.res[size_t(i)] =
          ResBlock<T>::build(ps, name + ".res" + std::to_string(i + 1), cfg.dec_ch,
                             cfg.lrelu_slope);
    d.tail = Conv2dLayer<T>::build(ps, name + ".tail", {cfg.dec_ch, 3, 3, Act::none});
    return d;
  }

  Var operator()(Tape<T>& t, const ParamStore<T>& ps, Var feat, Var img) const {
    Var x = head(t, ps, concat_channels(t, {feat, img}));
    for (const auto& r : res) x = r(t, ps, x);
    return tail(t, ps, x);
  }
};

// Fusion decoder over n_inputs images (region estimates plus the input).
template <typename T>
struct GlobalDecoder {
  int n_inputs = 0;
  Conv2dLayer<T> head;
  std::array<ResBlock<T>, 2> res;
  Conv2dLayer<T> tail;

  static GlobalDecoder build(ParamStore<T>& ps, const std::string& name,
                             const ModelConfig& cfg, int n_inputs) {
    require(n_inputs >= 2, "fusion decoder needs at least 2 inputs, got ", n_inputs);
    GlobalDecoder d;
    d.n_inputs = n_inputs;
    d.head = Conv2dLayer<T>::build(ps, name + ".head",
                                   {3 * n_inputs, cfg.dec_ch, 3, Act::none});
    for (int i = 0; i < 2; ++i)
      d.res[size_t(i)] =
          ResBlock<T>::build(ps, name + ".res" + std::to_string(i + 1), cfg.dec_ch,
                             cfg.lrelu_slope);
    d.tail = Conv2dLayer<T>::build(ps, name + ".tail", {cfg.dec_ch, 3, 3, Act::none});
    return d;
  }

  Var operator()(Tape<T>& t, const ParamStore<T>& ps, const std::vector<Var>& images) const {
    require(int(images.size()) == n_inputs, "fusion decoder built for ", n_inputs,
            " inputs, got ", images.size());
    for (Var v : images)
      require(t.val(v).c() == 3, "fusion decoder inputs must be 3-channel images");
    Var x = head(t, ps, concat_channels(t, images));
    for (const auto& r : res) x = r(t, ps, x);
    return tail(t, ps, x);
  }
};

// Small 2x2-kernel net turning a signed difference image into a soft map in
// (0,1). Three stacked 2x2 convs see at most a 4x4 input neighborhood.
template <typename T>
struct FilterNet {
  Conv2dLayer<T> c1, c2, c3;

  static FilterNet build(ParamStore<T>& ps, const std::string& name, const ModelConfig& cfg) {
    FilterNet f;
    f.c1 = Conv2dLayer<T>::build(ps, name + ".c1",
                                 {3, cfg.filternet_ch, 2, Act::lrelu, cfg.lrelu_slope});
    f.c2 = Conv2dLayer<T>::build(
        ps, name + ".c2", {cfg.filternet_ch, cfg.filternet_ch, 2, Act::lrelu, cfg.lrelu_slope});
    f.c3 = Conv2dLayer<T>::build(ps, name + ".c3", {cfg.filternet_ch, 1, 2, Act::sigmoid});
    return f;
  }

  Var operator()(Tape<T>& t, const ParamStore<T>& ps, Var diff) const {
    return c3(t, ps, c2(t, ps, c1(t, ps, diff)));
  }
};

template <typename T>
int64_t param_count_prefix(const ParamStore<T>& ps, const std::string& prefix) {
  int64_t n = 0;
  for (const auto& e : ps.entries)
    if (e.name.rfind(prefix, 0) == 0) n += e.value.size();
  return n;
}

}  // namespace derain
