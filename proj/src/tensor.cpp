#include "tcav/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tcav/errors.hpp"

namespace tcav {

int64_t shape_product(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

static void check_shape(const std::vector<int64_t>& shape) {
  for (int64_t e : shape) {
    if (e <= 0) throw InputError("tensor extents must be positive, got " + shape_to_string(shape));
  }
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_product(shape_) != static_cast<int64_t>(data_.size())) {
    throw InputError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data_.assign(1, v);
  return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
  Tensor t(std::move(shape));
  for (double& x : t.data_) x = v;
  return t;
}

Tensor Tensor::from_vector(std::vector<double> values) {
  auto n = static_cast<int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw InputError("item() requires a 1-element tensor, got shape " + shape_str());
  }
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
  check_shape(shape);
  if (shape_product(shape) != size()) {
    throw InputError("reshape " + shape_str() + " -> " + shape_to_string(shape) +
                     " changes element count");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

// --- TNSR io ----------------------------------------------------------------

namespace {

void put_u32le(std::ostream& out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

uint32_t get_u32le(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw InputError(std::string("TNSR: truncated file while reading ") + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tnsr(std::ostream& out, const Tensor& t) {
  out.write("TNSR", 4);
  put_u32le(out, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32le(out, static_cast<uint32_t>(t.extent(i)));
  for (int64_t i = 0; i < t.size(); ++i) {
    float f = static_cast<float>(t[i]);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32le(out, bits);
  }
}

Tensor read_tnsr(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TNSR", 4) != 0) {
    throw InputError("TNSR: bad magic bytes (not a tensor file)");
  }
  uint32_t rank = get_u32le(in, "rank");
  if (rank > 8) throw InputError("TNSR: implausible rank " + std::to_string(rank));
  std::vector<int64_t> shape(rank);
  for (uint32_t i = 0; i < rank; ++i) {
    uint32_t e = get_u32le(in, "extent");
    if (e == 0) throw InputError("TNSR: zero extent");
    shape[i] = static_cast<int64_t>(e);
  }
  int64_t n = shape_product(shape);
  std::vector<double> data(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    uint32_t bits = get_u32le(in, "payload");
    float f;
    std::memcpy(&f, &bits, 4);
    data[static_cast<size_t>(i)] = static_cast<double>(f);
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_tnsr(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open for writing: " + path);
  write_tnsr(f, t);
  if (!f) throw InputError("write failed: " + path);
}

Tensor load_tnsr(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open: " + path);
  return read_tnsr(f);
}

Tensor stack(const std::vector<Tensor>& items) {
  if (items.empty()) throw InputError("stack: no tensors given");
  const Tensor& first = items.front();
  std::vector<int64_t> shape;
  shape.push_back(static_cast<int64_t>(items.size()));
  for (int64_t e : first.shape()) shape.push_back(e);
  Tensor out(std::move(shape));
  int64_t step = first.size();
  for (size_t i = 0; i < items.size(); ++i) {
    if (!items[i].same_shape(first)) {
      throw InputError("stack: mismatched shapes " + first.shape_str() + " vs " +
                       items[i].shape_str());
    }
    std::memcpy(out.data() + static_cast<int64_t>(i) * step, items[i].data(),
                static_cast<size_t>(step) * sizeof(double));
  }
  return out;
}

Tensor row(const Tensor& t, int64_t i) {
  if (t.rank() < 1) throw InputError("row: tensor must have rank >= 1");
  if (i < 0 || i >= t.extent(0)) throw InputError("row: index out of range");
  std::vector<int64_t> shape(t.shape().begin() + 1, t.shape().end());
  int64_t step = shape_product(shape);
  std::vector<double> data(t.data() + i * step, t.data() + (i + 1) * step);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace tcav
