#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tcav {

/// Dense n-dimensional array of doubles, row-major. The universal numeric
/// carrier: images are [h,w,c], batches [n,h,w,c], activation matrices [n,m],
/// scalars rank-0. Values are immutable by convention once an op returns them.
class Tensor {
 public:
  Tensor() = default;  // empty placeholder, distinct from a rank-0 scalar

  explicit Tensor(std::vector<int64_t> shape);  // zero-filled
  Tensor(std::vector<int64_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor full(std::vector<int64_t> shape, double v);
  static Tensor from_vector(std::vector<double> values);  // rank-1
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  bool empty() const { return data_.empty(); }
  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  double item() const;  // value of a 1-element tensor

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<int64_t> shape) const;

  std::string shape_str() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

std::string shape_to_string(const std::vector<int64_t>& shape);
int64_t shape_product(const std::vector<int64_t>& shape);

// --- TNSR binary format ---------------------------------------------------
// magic "TNSR", u32le rank, rank x u32le extents, row-major f32le payload.
// Doubles are narrowed to f32 on write and widened on read; values that are
// exactly representable in f32 round-trip losslessly.

void write_tnsr(std::ostream& out, const Tensor& t);
Tensor read_tnsr(std::istream& in);
void save_tnsr(const std::string& path, const Tensor& t);
Tensor load_tnsr(const std::string& path);

// Round a double to the nearest f32-representable value. Generated pixels and
// trained weights are snapped onto this grid so the TNSR narrowing is exact.
inline double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Stack equally-shaped tensors along a new leading axis: n x [d...] -> [n,d...].
Tensor stack(const std::vector<Tensor>& items);
// Row i of a rank>=1 tensor as a tensor of the remaining shape.
Tensor row(const Tensor& t, int64_t i);

}  // namespace tcav
