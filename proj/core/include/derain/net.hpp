#pragma once

#include <optional>

#include "derain/ddaiam.hpp"

namespace derain {

// Model family. dam_* are single-branch ablations (no attention, rain-aware
// map only, complementary pair). daiam is the two-branch model; daiam_stack
// chains stages with no differential hand-off; ddaiam chains them through the
// differential modules. Stage count for the chained variants comes from
// ModelConfig::stages_T.
enum class Variant { dam_zero, dam_odd, dam_dual, daiam, daiam_stack, ddaiam };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::dam_zero: return "dam_zero";
    case Variant::dam_odd: return "dam_odd";
    case Variant::dam_dual: return "dam_dual";
    case Variant::daiam: return "daiam";
    case Variant::daiam_stack: return "daiam_stack";
    case Variant::ddaiam: return "ddaiam";
  }
  fail("unreachable variant");
}

// Accepts canonical names plus "ddaiam2"/"ddaiam(2)" sugar; the sugar also
// pins the stage count (returned as second member, 0 = unspecified).
struct ParsedVariant {
  Variant v;
  int stages = 0;
};

inline ParsedVariant parse_variant(const std::string& s) {
  for (Variant v : {Variant::dam_zero, Variant::dam_odd, Variant::dam_dual, Variant::daiam,
                    Variant::daiam_stack, Variant::ddaiam})
    if (s == variant_name(v)) return {v, 0};
  if (s.rfind("ddaiam", 0) == 0) {
    std::string rest = s.substr(6);
    if (rest.size() >= 3 && rest.front() == '(' && rest.back() == ')')
      rest = rest.substr(1, rest.size() - 2);
    if (!rest.empty() && rest.find_first_not_of("0123456789") == std::string::npos) {
      int n = std::stoi(rest);
      require(n >= 1, "bad stage count in variant: ", s);
      return {Variant::ddaiam, n};
    }
  }
  fail("unknown variant: ", s,
       " (expected dam_zero|dam_odd|dam_dual|daiam|daiam_stack|ddaiam[N])");
}

inline bool variant_is_dam(Variant v) {
  return v == Variant::dam_zero || v == Variant::dam_odd || v == Variant::dam_dual;
}

inline bool variant_is_chained(Variant v) {
  return v == Variant::daiam_stack || v == Variant::ddaiam;
}

// Stage count actually built for a (variant, config) pair.
inline int effective_stages(Variant v, const ModelConfig& cfg) {
  return variant_is_chained(v) ? cfg.stages_T : 1;
}

// Per-branch tensors pulled off a value-only forward pass.
template <typename T>
struct BranchTrace {
  Tensor<T> feat;
  std::optional<Tensor<T>> s_plus, s_minus;
  std::vector<Tensor<T>> intermediates;
};

template <typename T>
struct StageTensors {
  std::vector<BranchTrace<T>> branches;
  Tensor<T> i_out;
  std::optional<Tensor<T>> map_a, map_b, fused;
};

template <typename T>
struct InferTrace {
  Tensor<T> i_out;
  std::vector<StageTensors<T>> stages;
};

// One model, any variant. Parameters live in a single flat store so the
// optimizer, checkpoints and gradient probes are variant-agnostic.
template <typename T>
struct Net {
  Variant variant = Variant::dam_dual;
  ModelConfig cfg;
  ParamStore<T> ps;
  std::optional<DamNet<T>> dam;
  std::optional<MultiStageNet<T>> multi;

  static Net build(Variant v, const ModelConfig& cfg) {
    validate(cfg);
    Net n;
    n.variant = v;
    n.cfg = cfg;
    switch (v) {
      case Variant::dam_zero:
        n.dam = DamNet<T>::build(n.ps, "s1.", cfg, DamKind::zero);
        break;
      case Variant::dam_odd:
        n.dam = DamNet<T>::build(n.ps, "s1.", cfg, DamKind::odd);
        break;
      case Variant::dam_dual:
        n.dam = DamNet<T>::build(n.ps, "s1.", cfg, DamKind::dual);
        break;
      case Variant::daiam:
        n.multi = MultiStageNet<T>::build(n.ps, cfg, 1, false);
        break;
      case Variant::daiam_stack:
        n.multi = MultiStageNet<T>::build(n.ps, cfg, cfg.stages_T, false);
        break;
      case Variant::ddaiam:
        n.multi = MultiStageNet<T>::build(n.ps, cfg, cfg.stages_T, true);
        break;
    }
    return n;
  }

  struct Fwd {
    std::optional<typename DamNet<T>::Out> dam;
    std::optional<typename MultiStageNet<T>::Out> multi;
    Var i_out;
  };

  Fwd forward(Tape<T>& t, Var i_in) const {
    Fwd f;
    if (dam) {
      f.dam = dam->forward(t, ps, i_in);
      f.i_out = f.dam->i_out;
    } else {
      f.multi = multi->forward(t, ps, i_in);
      f.i_out = f.multi->i_out;
    }
    return f;
  }

  // Training objective. dam_* variants supervise the rain-aware map with the
  // combined mask; daiam supervises each branch with its own mask; the
  // chained variants use the per-stage reconstruction sum.
  LossBreakdown loss(Tape<T>& t, const Fwd& f, Var clean, Var mask_streak, Var mask_drop,
                     Var mask_combined, const LossWeights& w) const {
    if (dam) return dam_loss<T>(t, dam->kind, *f.dam, clean, mask_combined, w);
    if (variant == Variant::daiam)
      return daiam_loss<T>(t, f.multi->trace[0].out, clean, mask_streak, mask_drop, w);
    return multistage_loss<T>(t, *f.multi, clean);
  }

  Tensor<T> infer(const Tensor<T>& rainy) const {
    Tape<T> t(false);
    Fwd f = forward(t, t.input(rainy));
    return t.val(f.i_out);
  }

  InferTrace<T> trace(const Tensor<T>& rainy) const {
    Tape<T> t(false);
    Fwd f = forward(t, t.input(rainy));
    InferTrace<T> tr;
    tr.i_out = t.val(f.i_out);
    auto pull_branch = [&](const typename DamBranch<T>::Out& b) {
      BranchTrace<T> bt;
      bt.feat = t.val(b.feat);
      if (b.s_plus.valid()) bt.s_plus = t.val(b.s_plus);
      if (b.s_minus.valid()) bt.s_minus = t.val(b.s_minus);
      for (Var v : b.intermediates) bt.intermediates.push_back(t.val(v));
      return bt;
    };
    if (dam) {
      StageTensors<T> st;
      st.branches.push_back(pull_branch(f.dam->b));
      st.i_out = t.val(f.dam->i_out);
      tr.stages.push_back(std::move(st));
    } else {
      for (const auto& s : f.multi->trace) {
        StageTensors<T> st;
        st.branches.push_back(pull_branch(s.out.streak));
        st.branches.push_back(pull_branch(s.out.drop));
        st.i_out = t.val(s.out.i_out);
        if (s.map_a.valid()) st.map_a = t.val(s.map_a);
        if (s.map_b.valid()) st.map_b = t.val(s.map_b);
        if (s.fused.valid()) st.fused = t.val(s.fused);
        tr.stages.push_back(std::move(st));
      }
    }
    return tr;
  }
};

}  // namespace derain
