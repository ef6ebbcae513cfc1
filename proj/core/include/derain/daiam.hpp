#pragma once

#include "derain/dam.hpp"

namespace derain {

// Two independent dual-attention branches, one treating streak-like rain and
// one treating drop-like rain, fused by a shared decoder that sees all four
// region estimates plus the input. Branch parameter sets are disjoint.
template <typename T>
struct DaiamNet {
  ModelConfig cfg;
  DamBranch<T> streak, drop;
  GlobalDecoder<T> fusion;

  static DaiamNet build(ParamStore<T>& ps, const std::string& prefix, const ModelConfig& cfg) {
    DaiamNet n;
    n.cfg = cfg;
    n.streak = DamBranch<T>::build(ps, prefix + "streak.", cfg, DamKind::dual);
    n.drop = DamBranch<T>::build(ps, prefix + "drop.", cfg, DamKind::dual);
    n.fusion = GlobalDecoder<T>::build(ps, prefix + "fusion", cfg, 5);
    return n;
  }

  struct Out {
    typename DamBranch<T>::Out streak, drop;  // final pass
    Var i_out;
  };

  Out forward(Tape<T>& t, const ParamStore<T>& ps, Var i_in) const {
    // copy dims out: node storage may move as later ops grow the tape
    const Shape in_shape = t.val(i_in).shape;
    require(in_shape.ndim == 3 && in_shape.d[2] == 3, "expected (h,w,3) input, got ",
            in_shape.str());
    require(in_shape.d[0] >= 8 && in_shape.d[1] >= 8, "input too small: ", in_shape.str());
    auto st_s = streak.enc.zero_state(t, in_shape.d[0], in_shape.d[1]);
    auto st_d = drop.enc.zero_state(t, in_shape.d[0], in_shape.d[1]);
    Var ctx = i_in;
    Out o;
    for (int r = 0; r < cfg.recurrence_R; ++r) {
      o.streak = streak.run(t, ps, i_in, ctx, st_s);
      o.drop = drop.run(t, ps, i_in, ctx, st_d);
      o.i_out = fusion(t, ps,
                       {o.streak.intermediates[0], o.streak.intermediates[1],
                        o.drop.intermediates[0], o.drop.intermediates[1], i_in});
      ctx = o.i_out;
    }
    check_finite(t, o.i_out, "fused output");
    return o;
  }
};

// Sum of both branch losses (attention + two region reconstructions each)
// plus the fusion reconstruction.
template <typename T>
LossBreakdown daiam_loss(Tape<T>& t, const typename DaiamNet<T>::Out& o, Var clean,
                         Var mask_streak, Var mask_drop, const LossWeights& w) {
  LossBreakdown lb;
  std::vector<Var> terms;
  std::vector<double> weights;
  auto push = [&](const std::string& name, Var v, double wt) {
    terms.push_back(v);
    weights.push_back(wt);
    lb.components.push_back({name, double(t.val(v)[0])});
  };
  push("att_streak", attention_loss(t, o.streak.s_plus, mask_streak), w.alpha);
  push("heavy_streak", mse(t, o.streak.intermediates[0], clean), w.beta1);
  push("light_streak", mse(t, o.streak.intermediates[1], clean), w.beta2);
  push("att_drop", attention_loss(t, o.drop.s_plus, mask_drop), w.alpha);
  push("heavy_drop", mse(t, o.drop.intermediates[0], clean), w.beta1);
  push("light_drop", mse(t, o.drop.intermediates[1], clean), w.beta2);
  push("global", mse(t, o.i_out, clean), 1.0);
  lb.total = weighted_sum(t, terms, weights);
  return lb;
}

}  // namespace derain
