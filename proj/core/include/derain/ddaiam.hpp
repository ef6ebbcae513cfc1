#pragma once

#include "derain/daiam.hpp"

namespace derain {

// Differential hand-off between consecutive stages. Map A filters the
// step-to-step change of the running estimate; map B filters what the
// estimate has changed relative to the original input. The next stage
// consumes i_out*A + i_in*B*w, deliberately unclamped.
template <typename T>
struct DiffModule {
  FilterNet<T> net_a, net_b;

  static DiffModule build(ParamStore<T>& ps, const std::string& prefix,
                          const ModelConfig& cfg) {
    DiffModule m;
    m.net_a = FilterNet<T>::build(ps, prefix + "a", cfg);
    m.net_b = FilterNet<T>::build(ps, prefix + "b", cfg);
    return m;
  }

  struct Maps {
    Var a, b;
  };

  Maps maps(Tape<T>& t, const ParamStore<T>& ps, Var i_out_t, Var i_out_prev, Var i_in) const {
    return Maps{net_a(t, ps, sub(t, i_out_t, i_out_prev)),
                net_b(t, ps, sub(t, i_out_t, i_in))};
  }

  static Var fuse(Tape<T>& t, Var i_out_t, Var i_in, const Maps& m, double w) {
    return add(t, broadcast_mul(t, i_out_t, m.a),
               scale(t, broadcast_mul(t, i_in, m.b), w));
  }
};

// Chain of dual-branch stages. With diff modules present each hand-off is the
// differential fusion above; without them the stages consume the previous
// estimate directly. Every stage output is traced so the multi-stage loss and
// the exporters can reach them.
template <typename T>
struct MultiStageNet {
  ModelConfig cfg;
  std::vector<DaiamNet<T>> stages;
  std::vector<DiffModule<T>> diffs;  // empty means plain chaining

  static MultiStageNet build(ParamStore<T>& ps, const ModelConfig& cfg, int n_stages,
                             bool differential) {
    require(n_stages >= 1, "need at least one stage, got ", n_stages);
    MultiStageNet n;
    n.cfg = cfg;
    for (int s = 0; s < n_stages; ++s)
      n.stages.push_back(DaiamNet<T>::build(ps, concat("s", s + 1, "."), cfg));
    if (differential)
      for (int s = 0; s + 1 < n_stages; ++s)
        n.diffs.push_back(DiffModule<T>::build(ps, concat("d", s + 1, "."), cfg));
    return n;
  }

  struct StageTrace {
    Var input;  // what this stage consumed
    typename DaiamNet<T>::Out out;
    Var map_a, map_b, fused;  // valid when a diff module follows this stage
  };

  struct Out {
    std::vector<StageTrace> trace;
    Var i_out;
  };

  Out forward(Tape<T>& t, const ParamStore<T>& ps, Var i_in) const {
    Out o;
    Var cur = i_in;
    Var prev_out = i_in;  // the zeroth estimate is the input itself
    for (size_t s = 0; s < stages.size(); ++s) {
      StageTrace tr;
      tr.input = cur;
      tr.out = stages[s].forward(t, ps, cur);
      if (s + 1 < stages.size()) {
        if (diffs.empty()) {
          cur = tr.out.i_out;
        } else {
          auto m = diffs[s].maps(t, ps, tr.out.i_out, prev_out, i_in);
          tr.map_a = m.a;
          tr.map_b = m.b;
          tr.fused = DiffModule<T>::fuse(t, tr.out.i_out, i_in, m, cfg.fusion_w);
          check_finite(t, tr.fused, concat("stage ", s + 1, " fusion"));
          cur = tr.fused;
        }
        prev_out = tr.out.i_out;
      }
      o.trace.push_back(tr);
    }
    o.i_out = o.trace.back().out.i_out;
    return o;
  }
};

// Deep-supervision objective: mean squared error of every stage estimate
// against the clean target, summed.
template <typename T>
LossBreakdown multistage_loss(Tape<T>& t, const typename MultiStageNet<T>::Out& o, Var clean) {
  LossBreakdown lb;
  std::vector<Var> terms;
  std::vector<double> weights;
  for (size_t s = 0; s < o.trace.size(); ++s) {
    Var l = mse(t, o.trace[s].out.i_out, clean);
    terms.push_back(l);
    weights.push_back(1.0);
    lb.components.push_back({concat("stage", s + 1), double(t.val(l)[0])});
  }
  lb.total = weighted_sum(t, terms, weights);
  return lb;
}

}  // namespace derain
