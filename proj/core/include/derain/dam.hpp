#pragma once

#include <vector>

#include "derain/blocks.hpp"

namespace derain {

// Branch behavior: `zero` decodes raw features with no attention, `odd` keeps
// only the rain-aware map, `dual` splits features into complementary
// rain-aware and rain-free streams.
enum class DamKind { zero, odd, dual };

struct LossWeights {
  double alpha = 0.8;   // attention supervision
  double beta1 = 1.0;   // rain-aware region reconstruction
  double beta2 = 0.3;   // rain-free region reconstruction
};

// Scalar loss with named summands, values read off the tape.
struct LossBreakdown {
  Var total;
  std::vector<std::pair<std::string, double>> components;
};

// One attentive encoder-decoder branch. The rain-aware map S+ comes from a
// sigmoid conv over the features; the complementary map is 1 - S+ by
// construction. Each map reweights the features fed to its region decoder.
template <typename T>
struct DamBranch {
  DamKind kind = DamKind::dual;
  Encoder<T> enc;
  Conv2dLayer<T> attn;
  RegionalDecoder<T> dec_heavy;
  RegionalDecoder<T> dec_light;

  static DamBranch build(ParamStore<T>& ps, const std::string& prefix, const ModelConfig& cfg,
                         DamKind kind) {
    DamBranch b;
    b.kind = kind;
    // the image travels with the previous pass's estimate, hence 6 input channels
    b.enc = Encoder<T>::build(ps, prefix + "enc", cfg, 6);
    if (kind != DamKind::zero)
      b.attn = Conv2dLayer<T>::build(ps, prefix + "attn", {cfg.feat_ch, 1, 3, Act::sigmoid});
    b.dec_heavy = RegionalDecoder<T>::build(ps, prefix + "dec_heavy", cfg);
    if (kind == DamKind::dual)
      b.dec_light = RegionalDecoder<T>::build(ps, prefix + "dec_light", cfg);
    return b;
  }

  struct Out {
    Var feat;
    Var s_plus, s_minus;             // invalid when the kind omits them
    std::vector<Var> intermediates;  // heavy estimate, then light for dual
  };

  Out run(Tape<T>& t, const ParamStore<T>& ps, Var img, Var ctx,
          typename Encoder<T>::State& state) const {
    Out o;
    auto [f, st] = enc(t, ps, concat_channels(t, {img, ctx}), state);
    state = st;
    o.feat = f;
    if (kind == DamKind::zero) {
      o.intermediates.push_back(dec_heavy(t, ps, f, img));
      return o;
    }
    o.s_plus = attn(t, ps, f);
    o.intermediates.push_back(dec_heavy(t, ps, broadcast_mul(t, f, o.s_plus), img));
    if (kind == DamKind::dual) {
      o.s_minus = one_minus(t, o.s_plus);
      o.intermediates.push_back(dec_light(t, ps, broadcast_mul(t, f, o.s_minus), img));
    }
    return o;
  }
};

// Single-branch model: branch plus a fusion decoder over the region
// estimates and the input. The whole thing is applied recurrence_R times;
// each pass consumes the previous estimate as context and the LSTM state
// carries over. Loss targets the final pass.
template <typename T>
struct DamNet {
  DamKind kind = DamKind::dual;
  ModelConfig cfg;
  DamBranch<T> branch;
  GlobalDecoder<T> global;

  static DamNet build(ParamStore<T>& ps, const std::string& prefix, const ModelConfig& cfg,
                      DamKind kind) {
    DamNet n;
    n.kind = kind;
    n.cfg = cfg;
    n.branch = DamBranch<T>::build(ps, prefix + "branch.", cfg, kind);
    int n_inputs = (kind == DamKind::dual) ? 3 : 2;
    n.global = GlobalDecoder<T>::build(ps, prefix + "fusion", cfg, n_inputs);
    return n;
  }

  struct Out {
    typename DamBranch<T>::Out b;  // final pass
    Var i_out;
  };

  Out forward(Tape<T>& t, const ParamStore<T>& ps, Var i_in) const {
    // copy dims out: node storage may move as later ops grow the tape
    const Shape in_shape = t.val(i_in).shape;
    require(in_shape.ndim == 3 && in_shape.d[2] == 3, "expected (h,w,3) input, got ",
            in_shape.str());
    require(in_shape.d[0] >= 8 && in_shape.d[1] >= 8, "input too small: ", in_shape.str());
    auto state = branch.enc.zero_state(t, in_shape.d[0], in_shape.d[1]);
    Var ctx = i_in;
    Out o;
    for (int r = 0; r < cfg.recurrence_R; ++r) {
      o.b = branch.run(t, ps, i_in, ctx, state);
      std::vector<Var> fused = o.b.intermediates;
      fused.push_back(i_in);
      o.i_out = global(t, ps, fused);
      ctx = o.i_out;
    }
    check_finite(t, o.b.feat, "branch features");
    check_finite(t, o.i_out, "fused output");
    return o;
  }
};

// Attention supervision: mean squared error between the rain-aware map and a
// soft rain mask.
template <typename T>
Var attention_loss(Tape<T>& t, Var s_plus, Var mask) {
  return mse(t, s_plus, mask);
}

template <typename T>
LossBreakdown dam_loss(Tape<T>& t, DamKind kind, const typename DamNet<T>::Out& o, Var clean,
                       Var mask, const LossWeights& w) {
  LossBreakdown lb;
  std::vector<Var> terms;
  std::vector<double> weights;
  auto push = [&](const std::string& name, Var v, double wt) {
    terms.push_back(v);
    weights.push_back(wt);
    lb.components.push_back({name, double(t.val(v)[0])});
  };
  if (kind != DamKind::zero) push("att", attention_loss(t, o.b.s_plus, mask), w.alpha);
  push("heavy", mse(t, o.b.intermediates[0], clean), w.beta1);
  if (kind == DamKind::dual) push("light", mse(t, o.b.intermediates[1], clean), w.beta2);
  push("global", mse(t, o.i_out, clean), 1.0);
  lb.total = weighted_sum(t, terms, weights);
  return lb;
}

}  // namespace derain
