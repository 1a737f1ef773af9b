// Reference implementation of the layout/relation conditioning math:
//
//   Hb = MLP([Fourier(b_i) ; label_i])                  two layers, tanh
//   V' = V + beta * tanh(gamma) * TS(SelfAttn([V; Hb]))  first n_v rows kept
//   O  = M V'                                            M_i = box mask row
//   V* = V' + M^T diag(1/|M_i|) CrossAttn(O, Hr, Hr)
//
// The attended object vectors are n x d while V' is n_v x d; they are spread
// back over each object's mask cells with mean normalization. That residual
// wiring is our reading, not something the source pins down.
//
// Single-head attention, plain loops, double precision. Meant for checking
// the equations and their gradients at toy sizes, not for speed.
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "layoutplan/layout.hpp"
#include "layoutplan/numeric.hpp"
#include "layoutplan/tensor.hpp"

namespace layoutplan {

class GridMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AttentionProjections {
  Tensor2D wq, wk, wv, wo;  // d x d each
};

struct GateParams {
  double gamma = 0.0;
  double beta = 1.0;
  FourierConfig fourier{4};
  // Layout MLP: (8 * bands + label_dim) -> d -> d.
  Tensor2D w1, b1, w2, b2;
  AttentionProjections self_attn;
  AttentionProjections cross_attn;

  std::size_t model_dim() const { return w2.cols(); }
  std::size_t label_dim() const;
  /// Throws ShapeMismatch unless every matrix agrees on d and the MLP input width.
  void validate() const;

  /// Gaussian weights with std `scale / sqrt(fan_in)`.
  static GateParams random(std::size_t d, std::size_t label_dim, std::size_t bands, std::uint64_t seed,
                           double scale = 1.0);
};

/// Binary h_g x w_g grid, row-major; cell (r, c) is visual token r * w_g + c.
struct BoxMask {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<std::uint8_t> cells;

  /// A cell is inside when its center lies in the (closed) box. An empty
  /// result is repaired by marking the cell that contains the box center.
  static BoxMask rasterize(const BoundingBox& box, std::size_t grid_h, std::size_t grid_w);

  std::size_t count() const;
  bool at(std::size_t r, std::size_t c) const { return cells[r * grid_w + c] != 0; }
};

/// n x n_v matrix whose row i is mask i flattened; throws GridMismatch when
/// a mask is not grid_h x grid_w.
Tensor2D mask_matrix(const std::vector<BoxMask>& masks, std::size_t grid_h, std::size_t grid_w);

/// Row i: [Fourier(box_i), label_embeddings row i].
Tensor2D layout_features(const std::vector<BoundingBox>& boxes, const Tensor2D& label_embeddings,
                         const GateParams& p);

Tensor2D encode_layout(const std::vector<BoundingBox>& boxes, const Tensor2D& label_embeddings,
                       const GateParams& p);

/// Row-stochastic attention weights softmax(Q K^T / sqrt(d)).
Tensor2D attention_weights(const Tensor2D& queries, const Tensor2D& keys, const AttentionProjections& proj);

Tensor2D gated_self_attention(const Tensor2D& v, const Tensor2D& hb, const GateParams& p);

Tensor2D pool_objects(const Tensor2D& v_prime, const std::vector<BoxMask>& masks, std::size_t grid_h,
                      std::size_t grid_w);

/// Hr may have zero rows (no relations), in which case V* == V'.
Tensor2D relation_cross_attention(const Tensor2D& v_prime, const Tensor2D& objects, const Tensor2D& hr,
                                  const std::vector<BoxMask>& masks, const GateParams& p);

struct KernelInputs {
  Tensor2D v;  // n_v x d visual tokens, n_v = grid_h * grid_w
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<BoundingBox> boxes;
  Tensor2D label_embeddings;  // n x label_dim
  Tensor2D hr;                // m x d relation embeddings
};

/// Every intermediate of one forward pass; the backward pass reads these.
struct KernelForward {
  Tensor2D features, hidden, hb;
  Tensor2D tokens;  // [V; Hb]
  Tensor2D self_q, self_k, self_v, self_attn, self_mixed, self_out;
  Tensor2D v_prime;
  Tensor2D masks;  // n x n_v
  std::vector<double> mask_counts;
  Tensor2D objects;
  Tensor2D hr;
  Tensor2D cross_q, cross_k, cross_v, cross_attn, cross_mixed, cross_out;
  Tensor2D v_star;
};

/// Full pipeline from boxes and labels.
KernelForward kernel_forward(const KernelInputs& in, const GateParams& p);
/// Attention part only, with Hb given directly (features/hidden left empty).
KernelForward kernel_forward_from_hb(const Tensor2D& v, const Tensor2D& hb, const Tensor2D& hr,
                                     const std::vector<BoxMask>& masks, std::size_t grid_h,
                                     std::size_t grid_w, const GateParams& p);

struct KernelGradients {
  Tensor2D v, hb, hr, label_embeddings;
  Tensor2D w1, b1, w2, b2;
  AttentionProjections self_attn;
  AttentionProjections cross_attn;
  double gamma = 0.0;
};

/// Reverse-mode gradients of a scalar loss given dLoss/dV*. Label-embedding
/// and MLP gradients are filled only when `fwd` came from kernel_forward.
/// Throws NonFiniteGradient if any gradient is NaN or infinite.
KernelGradients kernel_gradients(const KernelForward& fwd, const Tensor2D& upstream, const GateParams& p);

struct KernelCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Invariant suite run by `kernel-check`: gate identities, shape contracts,
/// softmax normalization, finite-difference gradients, key permutation.
std::vector<KernelCheck> run_kernel_checks(std::uint64_t seed = 0);

}  // namespace layoutplan
