#pragma once

#include <Eigen/Core>

#include <cstring>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "derain/tensor.hpp"

namespace derain {

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Named learnable tensors. One flat store backs a whole model so the
// optimizer, checkpoints and finite-difference probes see a single ordered
// parameter list.
template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool is_bias = false;
    int fan_in = 0;  // receptive volume feeding one output unit (conv: kh*kw*in_ch)
  };
  std::vector<Entry> entries;

  int add(const std::string& name, Shape shape, bool is_bias, int fan_in) {
    for (const auto& e : entries)
      require(e.name != name, "duplicate parameter name: ", name);
    entries.push_back(Entry{name, Tensor<T>(shape), is_bias, fan_in});
    return int(entries.size()) - 1;
  }

  int find(const std::string& name) const {
    for (size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == name) return int(i);
    return -1;
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }

  // Maps a flat scalar index over the ordered entries to (entry, offset).
  std::pair<int, int64_t> locate(int64_t flat) const {
    for (size_t i = 0; i < entries.size(); ++i) {
      if (flat < entries[i].value.size()) return {int(i), flat};
      flat -= entries[i].value.size();
    }
    fail("parameter scalar index out of range");
  }
};

// Reverse-mode tape. Nodes are created in forward order; backward walks ids
// in reverse and accumulates into parent gradients. Constructing with
// enable_grads=false records values only, which keeps repeated forward passes
// (finite differences, inference) cheap.
template <typename T>
class Tape {
 public:
  explicit Tape(bool enable_grads = true) : grads_(enable_grads) {}

  Var input(Tensor<T> v) { return add_node(std::move(v), false, nullptr); }

  Var param(const ParamStore<T>& ps, int idx) {
    require(idx >= 0 && idx < int(ps.entries.size()), "param index out of range: ", idx);
    auto key = std::make_pair(static_cast<const void*>(&ps), idx);
    auto it = param_nodes_.find(key);
    if (it != param_nodes_.end()) return Var{it->second};
    Var v = add_node(ps.entries[idx].value, grads_, nullptr);
    param_nodes_.emplace(key, v.id);
    return v;
  }

  const Tensor<T>& val(Var v) const { return node(v).value; }
  bool needs_grad(Var v) const { return node(v).needs_grad; }

  // Gradient of a node, or nullptr if nothing flowed into it.
  const Tensor<T>* grad_if_any(Var v) const {
    const Node& n = node(v);
    return n.grad.empty() ? nullptr : &n.grad;
  }

  const Tensor<T>* param_grad(const ParamStore<T>& ps, int idx) const {
    auto it = param_nodes_.find({static_cast<const void*>(&ps), idx});
    if (it == param_nodes_.end()) return nullptr;
    return grad_if_any(Var{it->second});
  }

  Tensor<T>& ensure_grad(Var v) {
    Node& n = node(v);
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  void backward(Var loss) {
    require(grads_, "backward called on a value-only tape");
    require(!ran_backward_, "backward called twice on one tape");
    require(val(loss).shape == Shape::scalar(), "backward target must be a scalar");
    ran_backward_ = true;
    ensure_grad(loss)[0] = T(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[size_t(id)];
      if (n.back && n.needs_grad && !n.grad.empty()) n.back(*this);
    }
  }

  Var add_node(Tensor<T> value, bool needs_grad, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), std::move(back),
                          needs_grad && grads_});
    return Var{int(nodes_.size()) - 1};
  }

  void set_back(Var v, std::function<void(Tape&)> back) { node(v).back = std::move(back); }

  size_t node_count() const { return nodes_.size(); }
  bool grads_enabled() const { return grads_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&)> back;
    bool needs_grad = false;
  };

  Node& node(Var v) {
    require(v.id >= 0 && v.id < int(nodes_.size()), "invalid Var");
    return nodes_[size_t(v.id)];
  }
  const Node& node(Var v) const {
    require(v.id >= 0 && v.id < int(nodes_.size()), "invalid Var");
    return nodes_[size_t(v.id)];
  }

  std::vector<Node> nodes_;
  std::map<std::pair<const void*, int>, int> param_nodes_;
  bool grads_ = true;
  bool ran_backward_ = false;
};

namespace detail {

template <typename T>
std::vector<T, AlignedAllocator<T>>& conv_scratch(int which) {
  static thread_local std::vector<T, AlignedAllocator<T>> bufs[3];
  return bufs[which];
}

// Same-size convolution lowering. Padding splits as before = k/2,
// after = (k-1)/2, so even kernels pad one extra row/column at the
// top-left and none at the bottom-right.
template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, T* cols) {
  const int H = x.h(), W = x.w(), C = x.c();
  const int pt = kh / 2, pl = kw / 2;
  const int K = kh * kw * C;
  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      T* row = cols + (int64_t(y) * W + xx) * K;
      int o = 0;
      for (int ky = 0; ky < kh; ++ky) {
        const int sy = y + ky - pt;
        for (int kx = 0; kx < kw; ++kx, o += C) {
          const int sx = xx + kx - pl;
          if (sy < 0 || sy >= H || sx < 0 || sx >= W)
            std::fill(row + o, row + o + C, T(0));
          else
            std::memcpy(row + o, &x.at(sy, sx, 0), sizeof(T) * size_t(C));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int H, int W, int C, int kh, int kw, Tensor<T>& gx) {
  const int pt = kh / 2, pl = kw / 2;
  const int K = kh * kw * C;
  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      const T* row = cols + (int64_t(y) * W + xx) * K;
      int o = 0;
      for (int ky = 0; ky < kh; ++ky) {
        const int sy = y + ky - pt;
        for (int kx = 0; kx < kw; ++kx, o += C) {
          const int sx = xx + kx - pl;
          if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
          T* dst = &gx.at(sy, sx, 0);
          for (int c = 0; c < C; ++c) dst[c] += row[o + c];
        }
      }
    }
  }
}

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

// y = conv(x, w) + b with same-size output. x: (h,w,cin); w: (kh,kw,cin,cout);
// b: (cout). Lowered to a (h*w) x (kh*kw*cin) patch matrix times the kernel
// matrix.
template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b) {
  const Tensor<T>& xv = t.val(x);
  const Tensor<T>& wv = t.val(w);
  const Tensor<T>& bv = t.val(b);
  require(xv.shape.ndim == 3, "conv2d: input must be (h,w,c), got ", xv.shape.str());
  require(wv.shape.ndim == 4, "conv2d: kernel must be (kh,kw,in,out), got ", wv.shape.str());
  const int H = xv.h(), W = xv.w();
  const int kh = wv.shape.d[0], kw = wv.shape.d[1];
  const int cin = wv.shape.d[2], cout = wv.shape.d[3];
  require(cin == xv.c(), "conv2d: kernel expects ", cin, " input channels, image has ", xv.c());
  require(bv.shape == Shape::vec(cout), "conv2d: bias shape ", bv.shape.str(),
          " does not match ", cout, " output channels");

  const int64_t P = int64_t(H) * W;
  const int K = kh * kw * cin;
  auto& cols = detail::conv_scratch<T>(0);
  cols.resize(size_t(P * K));
  detail::im2col(xv, kh, kw, cols.data());

  Tensor<T> y(Shape::image(H, W, cout));
  {
    Eigen::Map<const detail::MatRM<T>> A(cols.data(), P, K);
    Eigen::Map<const detail::MatRM<T>> B(wv.data.data(), K, cout);
    Eigen::Map<detail::MatRM<T>> C(y.data.data(), P, cout);
    C.noalias() = A * B;
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(bv.data.data(), cout);
    C.rowwise() += bias;
  }

  bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [x, w, b, out, H, W, kh, kw, cin, cout, P, K](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    Eigen::Map<const detail::MatRM<T>> dY(gy.data.data(), P, cout);
    auto& cols2 = detail::conv_scratch<T>(1);
    cols2.resize(size_t(P * K));
    detail::im2col(tp.val(x), kh, kw, cols2.data());
    Eigen::Map<const detail::MatRM<T>> A(cols2.data(), P, K);
    if (tp.needs_grad(w)) {
      Tensor<T>& gw = tp.ensure_grad(w);
      Eigen::Map<detail::MatRM<T>> dW(gw.data.data(), K, cout);
      dW.noalias() += A.transpose() * dY;
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.ensure_grad(b);
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(gb.data.data(), cout);
      db += dY.colwise().sum();
    }
    if (tp.needs_grad(x)) {
      auto& dcols = detail::conv_scratch<T>(2);
      dcols.resize(size_t(P * K));
      Eigen::Map<const detail::MatRM<T>> Wm(tp.val(w).data.data(), K, cout);
      Eigen::Map<detail::MatRM<T>> dC(dcols.data(), P, K);
      dC.noalias() = dY * Wm.transpose();
      detail::col2im_add(dcols.data(), H, W, cin, kh, kw, tp.ensure_grad(x));
    }
  });
  return out;
}

template <typename T>
Var lrelu(Tape<T>& t, Var x, double slope) {
  const Tensor<T>& xv = t.val(x);
  Tensor<T> y(xv.shape);
  const T s = T(slope);
  for (int64_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : s * xv[i];
  bool ng = t.needs_grad(x);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [x, out, s](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    const Tensor<T>& xv2 = tp.val(x);
    Tensor<T>& gx = tp.ensure_grad(x);
    for (int64_t i = 0; i < gy.size(); ++i) gx[i] += xv2[i] > T(0) ? gy[i] : s * gy[i];
  });
  return out;
}

template <typename T>
Var sigmoid(Tape<T>& t, Var x) {
  const Tensor<T>& xv = t.val(x);
  Tensor<T> y(xv.shape);
  for (int64_t i = 0; i < xv.size(); ++i) {
    T v = xv[i];
    if (v >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
  }
  bool ng = t.needs_grad(x);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [x, out](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    const Tensor<T>& yv = tp.val(out);
    Tensor<T>& gx = tp.ensure_grad(x);
    for (int64_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * yv[i] * (T(1) - yv[i]);
  });
  return out;
}

template <typename T>
Var tanh_op(Tape<T>& t, Var x) {
  const Tensor<T>& xv = t.val(x);
  Tensor<T> y(xv.shape);
  for (int64_t i = 0; i < xv.size(); ++i) y[i] = std::tanh(xv[i]);
  bool ng = t.needs_grad(x);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [x, out](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    const Tensor<T>& yv = tp.val(out);
    Tensor<T>& gx = tp.ensure_grad(x);
    for (int64_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * (T(1) - yv[i] * yv[i]);
  });
  return out;
}

namespace detail {
template <typename T>
void check_same_shape(const Tape<T>& t, Var a, Var b, const char* op) {
  require(t.val(a).shape == t.val(b).shape, op, ": shape mismatch ", t.val(a).shape.str(),
          " vs ", t.val(b).shape.str());
}
}  // namespace detail

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  detail::check_same_shape(t, a, b, "add");
  const Tensor<T>& av = t.val(a);
  const Tensor<T>& bv = t.val(b);
  Tensor<T> y(av.shape);
  for (int64_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [a, b, out](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    if (tp.needs_grad(a)) {
      Tensor<T>& ga = tp.ensure_grad(a);
      for (int64_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.ensure_grad(b);
      for (int64_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
    }
  });
  return out;
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
  detail::check_same_shape(t, a, b, "sub");
  const Tensor<T>& av = t.val(a);
  const Tensor<T>& bv = t.val(b);
  Tensor<T> y(av.shape);
  for (int64_t i = 0; i < av.size(); ++i) y[i] = av[i] - bv[i];
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [a, b, out](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    if (tp.needs_grad(a)) {
      Tensor<T>& ga = tp.ensure_grad(a);
      for (int64_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.ensure_grad(b);
      for (int64_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
    }
  });
  return out;
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
  detail::check_same_shape(t, a, b, "mul");
  const Tensor<T>& av = t.val(a);
  const Tensor<T>& bv = t.val(b);
  Tensor<T> y(av.shape);
  for (int64_t i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i];
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [a, b, out](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    const Tensor<T>& av2 = tp.val(a);
    const Tensor<T>& bv2 = tp.val(b);
    if (tp.needs_grad(a)) {
      Tensor<T>& ga = tp.ensure_grad(a);
      for (int64_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv2[i];
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.ensure_grad(b);
      for (int64_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av2[i];
    }
  });
  return out;
}

template <typename T>
Var scale(Tape<T>& t, Var a, double k) {
  const Tensor<T>& av = t.val(a);
  Tensor<T> y(av.shape);
  const T kk = T(k);
  for (int64_t i = 0; i < av.size(); ++i) y[i] = kk * av[i];
  bool ng = t.needs_grad(a);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [a, out, kk](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    Tensor<T>& ga = tp.ensure_grad(a);
    for (int64_t i = 0; i < gy.size(); ++i) ga[i] += kk * gy[i];
  });
  return out;
}

template <typename T>
Var one_minus(Tape<T>& t, Var a) {
  const Tensor<T>& av = t.val(a);
  Tensor<T> y(av.shape);
  for (int64_t i = 0; i < av.size(); ++i) y[i] = T(1) - av[i];
  bool ng = t.needs_grad(a);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [a, out](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    Tensor<T>& ga = tp.ensure_grad(a);
    for (int64_t i = 0; i < gy.size(); ++i) ga[i] -= gy[i];
  });
  return out;
}

// x: (h,w,c) scaled per pixel by m: (h,w,1).
template <typename T>
Var broadcast_mul(Tape<T>& t, Var x, Var m) {
  const Tensor<T>& xv = t.val(x);
  const Tensor<T>& mv = t.val(m);
  require(xv.shape.ndim == 3 && mv.shape.ndim == 3, "broadcast_mul: expected images");
  require(mv.c() == 1, "broadcast_mul: map must have one channel, got ", mv.c());
  require(mv.h() == xv.h() && mv.w() == xv.w(), "broadcast_mul: spatial mismatch ",
          xv.shape.str(), " vs ", mv.shape.str());
  const int C = xv.c();
  const int64_t P = int64_t(xv.h()) * xv.w();
  Tensor<T> y(xv.shape);
  for (int64_t p = 0; p < P; ++p) {
    const T mp = mv[p];
    for (int c = 0; c < C; ++c) y[p * C + c] = xv[p * C + c] * mp;
  }
  bool ng = t.needs_grad(x) || t.needs_grad(m);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [x, m, out, P, C](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    const Tensor<T>& xv2 = tp.val(x);
    const Tensor<T>& mv2 = tp.val(m);
    if (tp.needs_grad(x)) {
      Tensor<T>& gx = tp.ensure_grad(x);
      for (int64_t p = 0; p < P; ++p) {
        const T mp = mv2[p];
        for (int c = 0; c < C; ++c) gx[p * C + c] += gy[p * C + c] * mp;
      }
    }
    if (tp.needs_grad(m)) {
      Tensor<T>& gm = tp.ensure_grad(m);
      for (int64_t p = 0; p < P; ++p) {
        T s = T(0);
        for (int c = 0; c < C; ++c) s += gy[p * C + c] * xv2[p * C + c];
        gm[p] += s;
      }
    }
  });
  return out;
}

template <typename T>
Var concat_channels(Tape<T>& t, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Tensor<T>& first = t.val(parts[0]);
  require(first.shape.ndim == 3, "concat_channels: expected images");
  const int H = first.h(), W = first.w();
  int total_c = 0;
  bool ng = false;
  for (Var p : parts) {
    const Tensor<T>& v = t.val(p);
    require(v.shape.ndim == 3 && v.h() == H && v.w() == W,
            "concat_channels: spatial mismatch ", v.shape.str());
    total_c += v.c();
    ng = ng || t.needs_grad(p);
  }
  Tensor<T> y(Shape::image(H, W, total_c));
  const int64_t P = int64_t(H) * W;
  int off = 0;
  for (Var p : parts) {
    const Tensor<T>& v = t.val(p);
    const int c = v.c();
    for (int64_t px = 0; px < P; ++px)
      std::memcpy(&y[px * total_c + off], &v[px * c], sizeof(T) * size_t(c));
    off += c;
  }
  std::vector<std::pair<Var, int>> layout;
  off = 0;
  for (Var p : parts) {
    layout.push_back({p, off});
    off += t.val(p).c();
  }
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [layout, out, P, total_c](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    for (const auto& [p, o] : layout) {
      if (!tp.needs_grad(p)) continue;
      Tensor<T>& gp = tp.ensure_grad(p);
      const int c = tp.val(p).c();
      for (int64_t px = 0; px < P; ++px)
        for (int cc = 0; cc < c; ++cc) gp[px * c + cc] += gy[px * total_c + o + cc];
    }
  });
  return out;
}

template <typename T>
Var slice_channels(Tape<T>& t, Var x, int c0, int n) {
  const Tensor<T>& xv = t.val(x);
  require(xv.shape.ndim == 3, "slice_channels: expected image");
  const int C = xv.c();
  require(c0 >= 0 && n > 0 && c0 + n <= C, "slice_channels: bad range [", c0, ",", c0 + n,
          ") for ", C, " channels");
  const int64_t P = int64_t(xv.h()) * xv.w();
  Tensor<T> y(Shape::image(xv.h(), xv.w(), n));
  for (int64_t p = 0; p < P; ++p)
    std::memcpy(&y[p * n], &xv[p * C + c0], sizeof(T) * size_t(n));
  bool ng = t.needs_grad(x);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [x, out, c0, n, C, P](Tape<T>& tp) {
    const Tensor<T>& gy = *tp.grad_if_any(out);
    Tensor<T>& gx = tp.ensure_grad(x);
    for (int64_t p = 0; p < P; ++p)
      for (int cc = 0; cc < n; ++cc) gx[p * C + c0 + cc] += gy[p * n + cc];
  });
  return out;
}

// Mean squared error over all elements, as a scalar node.
template <typename T>
Var mse(Tape<T>& t, Var a, Var b) {
  detail::check_same_shape(t, a, b, "mse");
  const Tensor<T>& av = t.val(a);
  const Tensor<T>& bv = t.val(b);
  const int64_t N = av.size();
  require(N > 0, "mse: empty tensors");
  double s = 0;
  for (int64_t i = 0; i < N; ++i) {
    const double d = double(av[i]) - double(bv[i]);
    s += d * d;
  }
  Tensor<T> y = Tensor<T>::scalar(T(s / double(N)));
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var out = t.add_node(std::move(y), ng, nullptr);
  if (!ng) return out;
  t.set_back(out, [a, b, out, N](Tape<T>& tp) {
    const T g = (*tp.grad_if_any(out))[0];
    const Tensor<T>& av2 = tp.val(a);
    const Tensor<T>& bv2 = tp.val(b);
    const T coef = g * T(2) / T(N);
    if (tp.needs_grad(a)) {
      Tensor<T>& ga = tp.ensure_grad(a);
      for (int64_t i = 0; i < N; ++i) ga[i] += coef * (av2[i] - bv2[i]);
    }
    if (tp.needs_grad(b)) {
      Tensor<T>& gb = tp.ensure_grad(b);
      for (int64_t i = 0; i < N; ++i) gb[i] -= coef * (av2[i] - bv2[i]);
    }
  });
  return out;
}

// Scalar combination sum_i w_i * v_i of scalar nodes.
template <typename T>
Var weighted_sum(Tape<T>& t, const std::vector<Var>& vars, const std::vector<double>& ws) {
  require(!vars.empty() && vars.size() == ws.size(), "weighted_sum: size mismatch");
  double s = 0;
  bool ng = false;
  for (size_t i = 0; i < vars.size(); ++i) {
    require(t.val(vars[i]).shape == Shape::scalar(), "weighted_sum: inputs must be scalars");
    s += ws[i] * double(t.val(vars[i])[0]);
    ng = ng || t.needs_grad(vars[i]);
  }
  Var out = t.add_node(Tensor<T>::scalar(T(s)), ng, nullptr);
  if (!ng) return out;
  auto vars2 = vars;
  auto ws2 = ws;
  t.set_back(out, [vars2, ws2, out](Tape<T>& tp) {
    const T g = (*tp.grad_if_any(out))[0];
    for (size_t i = 0; i < vars2.size(); ++i) {
      if (!tp.needs_grad(vars2[i])) continue;
      tp.ensure_grad(vars2[i])[0] += T(ws2[i]) * g;
    }
  });
  return out;
}

template <typename T>
void check_finite(const Tape<T>& t, Var v, const std::string& where) {
  const Tensor<T>& tv = t.val(v);
  for (int64_t i = 0; i < tv.size(); ++i) {
    if (!std::isfinite(double(tv[i])))
      fail("non-finite activation in ", where, " at flat index ", i);
  }
}

}  // namespace derain
