#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace layerforge::nn {

/// 64-byte aligned storage, so vectorised kernels see the same alignment for every buffer
/// and results do not depend on where an allocation lands.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

/// Dense NCHW batch of feature maps.
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  Buffer data;

  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0)
      : n(n), c(c), h(h), w(w), data(std::size_t(n) * c * h * w, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return std::size_t(h) * w; }
  std::size_t sample_size() const { return std::size_t(c) * h * w; }

  double& at(int in, int ic, int y, int x) {
    return data[((std::size_t(in) * c + ic) * h + y) * w + x];
  }
  double at(int in, int ic, int y, int x) const {
    return data[((std::size_t(in) * c + ic) * h + y) * w + x];
  }
  double* sample(int in) { return data.data() + std::size_t(in) * sample_size(); }
  const double* sample(int in) const { return data.data() + std::size_t(in) * sample_size(); }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_string() const;
};

/// Channel-wise concatenation [a | b]; batch and spatial dims must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Inverse of concat_channels for gradients: first `ca` channels go to `da`.
void split_channels(const Tensor& x, int ca, Tensor& da, Tensor& db);

/// Learnable array with its accumulated gradient.
struct Parameter {
  std::string name;
  std::vector<int> shape;
  Buffer value;
  Buffer grad;

  Parameter() = default;
  Parameter(std::string name, std::vector<int> shape);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

}  // namespace layerforge::nn
