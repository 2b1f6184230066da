#pragma once

#include <cstdint>
#include <vector>

#include "tcav/tensor.hpp"

namespace tcav {

enum class Padding : uint8_t { valid = 0, same = 1 };

struct Conv2dOptions {
  int stride = 1;  // 1 or 2
  Padding padding = Padding::valid;
};

// Pure forward ops, shape-checked, no graph recording. NHWC images, HWIO
// kernels. Every op raises InputError naming itself and both shapes on a
// mismatch, and produces finite values for finite inputs.
namespace ops {

// Same shape, or b rank-1 broadcast across the trailing axis (bias add).
Tensor add(const Tensor& a, const Tensor& b);
// Elementwise product, same shape.
Tensor mul(const Tensor& a, const Tensor& b);
// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [n,h,w,c], kernel [kh,kw,c,oc] -> [n,oh,ow,oc]
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Conv2dOptions& opt);
Tensor relu(const Tensor& a);
// [d0, d1, ...] -> [d0, d1*...]; rank >= 2
Tensor flatten(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int64_t> shape);
// sum of all elements -> rank-0 scalar
Tensor reduce_sum(const Tensor& a);
// logits [n,K], labels [n] (integral values in [0,K)) -> scalar mean loss.
// Computed as logsumexp(z) - z_true, finite for any finite logits.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& labels);
// row-wise softmax of [n,K] or of a rank-1 [K]
Tensor softmax(const Tensor& logits);

// Shapes produced by conv2d for given input/kernel/options.
void conv2d_geometry(int64_t h, int64_t w, int64_t kh, int64_t kw, const Conv2dOptions& opt,
                     int64_t& oh, int64_t& ow, int64_t& pad_top, int64_t& pad_left);

}  // namespace ops

// Handle into a Tape. Carries the owning tape's id so a value recorded on one
// tape cannot be silently used with another.
struct ValueId {
  uint32_t index = 0;
  uint64_t tape = 0;
};

/// Explicit, per-computation recording of forward ops for reverse-mode
/// differentiation. One TapeNode per op call; the graph is acyclic by
/// construction (inputs always precede outputs). A tape is confined to one
/// thread; independent tapes may run concurrently.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  ValueId leaf(Tensor value);

  ValueId add(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);
  ValueId matmul(ValueId a, ValueId b);
  ValueId conv2d(ValueId x, ValueId kernel, const Conv2dOptions& opt);
  ValueId relu(ValueId a);
  ValueId flatten(ValueId a);
  ValueId reshape(ValueId a, std::vector<int64_t> shape);
  ValueId reduce_sum(ValueId a);
  ValueId softmax_cross_entropy(ValueId logits, ValueId labels);

  const Tensor& value(ValueId id) const;
  size_t node_count() const { return nodes_.size(); }

  // d(output)/d(wrt) for a scalar output recorded on this tape. A wrt tensor
  // that does not influence the output gets a zero gradient of its own shape.
  std::vector<Tensor> gradient(ValueId output, const std::vector<ValueId>& wrt) const;

 private:
  enum class OpKind : uint8_t {
    leaf,
    add,
    mul,
    matmul,
    conv2d,
    relu,
    flatten,
    reshape,
    reduce_sum,
    softmax_xent,
  };

  struct Node {
    OpKind kind = OpKind::leaf;
    int a = -1;
    int b = -1;
    Tensor value;
    Tensor aux;  // softmax_xent: cached probabilities
    Conv2dOptions conv;
  };

  uint32_t check(ValueId id, const char* op) const;
  ValueId push(Node n);

  std::vector<Node> nodes_;
  uint64_t tape_id_;
};

}  // namespace tcav
