#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <new>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace derain {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void concat_into(std::ostringstream&) {}
template <typename A, typename... Rest>
void concat_into(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  concat_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  detail::concat_into(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(concat(args...));
}

template <typename... Args>
void require(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

// Allocator pinning every buffer to one cache-line alignment. SIMD kernels
// peel loop heads based on the address they are handed; if addresses moved
// with heap history, float reductions would sum in a different order from
// run to run. A fixed alignment keeps results bit-identical across processes.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kAlign)));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t(kAlign));
  }
  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

// Dense tensor extents, up to four axes. Images are (h, w, c); conv kernels
// are (kh, kw, in_ch, out_ch); vectors are (n).
struct Shape {
  std::array<int, 4> d{1, 1, 1, 1};
  int ndim = 0;

  static Shape vec(int n) { return Shape{{n, 1, 1, 1}, 1}; }
  static Shape scalar() { return vec(1); }
  static Shape image(int h, int w, int c) { return Shape{{h, w, c, 1}, 3}; }
  static Shape kernel(int kh, int kw, int in_ch, int out_ch) {
    return Shape{{kh, kw, in_ch, out_ch}, 4};
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < ndim; ++i) n *= d[i];
    return ndim == 0 ? 0 : n;
  }
  bool operator==(const Shape& o) const {
    if (ndim != o.ndim) return false;
    for (int i = 0; i < ndim; ++i)
      if (d[i] != o.d[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < ndim; ++i) s += (i ? "," : "") + std::to_string(d[i]);
    return s + ")";
  }
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable derivation of per-item seeds from a base seed.
inline uint64_t mix_seed(uint64_t base, uint64_t salt) {
  return splitmix64(base ^ splitmix64(salt + 0x632be59bd9b4e019ull));
}

// Deterministic random source. All draws are computed directly from raw
// mt19937_64 output with no hidden distribution state, so serializing the
// engine captures the full generator state.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  // [0, 1)
  double uniform() {
    return double(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    require(hi >= lo, "uniform_int: bad range [", lo, ",", hi, "]");
    uint64_t span = uint64_t(hi) - uint64_t(lo) + 1;
    return lo + int(gen_() % span);
  }

  // Box-Muller, recomputed every call; no cached spare value.
  double normal() {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    require(!is.fail(), "invalid rng state string");
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace derain
