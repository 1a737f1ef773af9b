#include "layoutplan/relation_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

namespace layoutplan {

// ---- parameters -----------------------------------------------------------

std::size_t GateParams::label_dim() const {
  const std::size_t fourier_width = 8 * static_cast<std::size_t>(fourier.bands);
  return w1.rows() > fourier_width ? w1.rows() - fourier_width : 0;
}

void GateParams::validate() const {
  const std::size_t d = model_dim();
  if (d == 0) throw ShapeMismatch("GateParams: model dimension is zero");
  if (fourier.bands <= 0) throw ShapeMismatch("GateParams: Fourier bands must be positive");
  if (w1.rows() < 8 * static_cast<std::size_t>(fourier.bands))
    throw ShapeMismatch("GateParams: w1 has fewer rows than the Fourier width");
  require_shape(w1, w1.rows(), d, "GateParams.w1");
  require_shape(b1, 1, d, "GateParams.b1");
  require_shape(w2, d, d, "GateParams.w2");
  require_shape(b2, 1, d, "GateParams.b2");
  for (const auto* proj : {&self_attn, &cross_attn}) {
    require_shape(proj->wq, d, d, "GateParams.wq");
    require_shape(proj->wk, d, d, "GateParams.wk");
    require_shape(proj->wv, d, d, "GateParams.wv");
    require_shape(proj->wo, d, d, "GateParams.wo");
  }
}

GateParams GateParams::random(std::size_t d, std::size_t label_dim, std::size_t bands, std::uint64_t seed,
                              double scale) {
  Rng rng(seed);
  auto gaussian = [&](std::size_t rows, std::size_t cols) {
    Tensor2D t(rows, cols);
    const double sd = scale / std::sqrt(static_cast<double>(rows));
    for (double& v : t.data()) v = sd * rng.normal();
    return t;
  };
  GateParams p;
  p.fourier.bands = static_cast<int>(bands);
  p.gamma = 0.5;
  p.w1 = gaussian(8 * bands + label_dim, d);
  p.b1 = gaussian(1, d);
  p.w2 = gaussian(d, d);
  p.b2 = gaussian(1, d);
  for (auto* proj : {&p.self_attn, &p.cross_attn}) {
    proj->wq = gaussian(d, d);
    proj->wk = gaussian(d, d);
    proj->wv = gaussian(d, d);
    proj->wo = gaussian(d, d);
  }
  return p;
}

// ---- masks ----------------------------------------------------------------

BoxMask BoxMask::rasterize(const BoundingBox& box, std::size_t grid_h, std::size_t grid_w) {
  if (grid_h == 0 || grid_w == 0) throw GridMismatch("BoxMask: empty grid");
  BoxMask m{grid_h, grid_w, std::vector<std::uint8_t>(grid_h * grid_w, 0)};
  std::size_t marked = 0;
  for (std::size_t r = 0; r < grid_h; ++r) {
    const double cy = (static_cast<double>(r) + 0.5) / static_cast<double>(grid_h);
    if (cy < box.y || cy > box.bottom()) continue;
    for (std::size_t c = 0; c < grid_w; ++c) {
      const double cx = (static_cast<double>(c) + 0.5) / static_cast<double>(grid_w);
      if (cx < box.x || cx > box.right()) continue;
      m.cells[r * grid_w + c] = 1;
      ++marked;
    }
  }
  if (marked == 0) {
    auto cell = [](double center, std::size_t n) {
      const double scaled = std::floor(center * static_cast<double>(n));
      return static_cast<std::size_t>(std::clamp(scaled, 0.0, static_cast<double>(n - 1)));
    };
    m.cells[cell(box.center_y(), grid_h) * grid_w + cell(box.center_x(), grid_w)] = 1;
  }
  return m;
}

std::size_t BoxMask::count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

Tensor2D mask_matrix(const std::vector<BoxMask>& masks, std::size_t grid_h, std::size_t grid_w) {
  Tensor2D m(masks.size(), grid_h * grid_w);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto& mask = masks[i];
    if (mask.grid_h != grid_h || mask.grid_w != grid_w || mask.cells.size() != grid_h * grid_w) {
      throw GridMismatch("mask " + std::to_string(i) + " is " + std::to_string(mask.grid_h) + "x" +
                         std::to_string(mask.grid_w) + ", visual grid is " + std::to_string(grid_h) + "x" +
                         std::to_string(grid_w));
    }
    for (std::size_t j = 0; j < mask.cells.size(); ++j) m(i, j) = mask.cells[j] ? 1.0 : 0.0;
  }
  return m;
}

// ---- forward --------------------------------------------------------------

namespace {

Tensor2D add_row(Tensor2D x, const Tensor2D& bias) {
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) += bias(0, c);
  return x;
}

Tensor2D tanh_of(Tensor2D x) {
  for (double& v : x.data()) v = std::tanh(v);
  return x;
}

double inv_sqrt_dim(const GateParams& p) { return 1.0 / std::sqrt(static_cast<double>(p.model_dim())); }

void check_tokens(const Tensor2D& t, std::size_t d, const char* what) {
  if (t.cols() != d && !(t.rows() == 0 && t.cols() == 0)) {
    throw ShapeMismatch(std::string(what) + " has " + std::to_string(t.cols()) + " columns, model dim is " +
                        std::to_string(d));
  }
}

struct AttentionTrace {
  Tensor2D q, k, v, weights, mixed, out;
};

AttentionTrace attend(const Tensor2D& queries, const Tensor2D& keys, const AttentionProjections& proj,
                      double scale) {
  AttentionTrace t;
  t.q = matmul(queries, proj.wq);
  t.k = matmul(keys, proj.wk);
  t.v = matmul(keys, proj.wv);
  t.weights = softmax_rows(matmul_nt(t.q, t.k) * scale);
  t.mixed = matmul(t.weights, t.v);
  t.out = matmul(t.mixed, proj.wo);
  return t;
}

// V' + M^T diag(1/count) Z
Tensor2D scatter_objects(Tensor2D v_prime, const Tensor2D& masks, const std::vector<double>& counts,
                         const Tensor2D& z) {
  for (std::size_t i = 0; i < masks.rows(); ++i)
    for (std::size_t j = 0; j < masks.cols(); ++j) {
      if (masks(i, j) == 0.0) continue;
      for (std::size_t c = 0; c < z.cols(); ++c) v_prime(j, c) += z(i, c) / counts[i];
    }
  return v_prime;
}

std::vector<double> row_counts(const Tensor2D& masks) {
  std::vector<double> counts(masks.rows(), 0.0);
  for (std::size_t i = 0; i < masks.rows(); ++i)
    for (std::size_t j = 0; j < masks.cols(); ++j) counts[i] += masks(i, j);
  return counts;
}

}  // namespace

Tensor2D layout_features(const std::vector<BoundingBox>& boxes, const Tensor2D& label_embeddings,
                         const GateParams& p) {
  if (label_embeddings.rows() != boxes.size()) {
    throw ShapeMismatch("encode_layout: " + std::to_string(boxes.size()) + " boxes but " +
                        std::to_string(label_embeddings.rows()) + " label embeddings");
  }
  const std::size_t fw = 8 * static_cast<std::size_t>(p.fourier.bands);
  if (!boxes.empty() && fw + label_embeddings.cols() != p.w1.rows()) {
    throw ShapeMismatch("encode_layout: feature width " + std::to_string(fw + label_embeddings.cols()) +
                        " does not match the MLP input " + std::to_string(p.w1.rows()));
  }
  Tensor2D f(boxes.size(), p.w1.rows());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto four = fourier_encode(boxes[i], p.fourier);
    std::copy(four.begin(), four.end(), f.row(i).begin());
    const auto lab = label_embeddings.row(i);
    std::copy(lab.begin(), lab.end(), f.row(i).begin() + static_cast<std::ptrdiff_t>(fw));
  }
  return f;
}

Tensor2D encode_layout(const std::vector<BoundingBox>& boxes, const Tensor2D& label_embeddings,
                       const GateParams& p) {
  p.validate();
  const Tensor2D f = layout_features(boxes, label_embeddings, p);
  const Tensor2D h = tanh_of(add_row(matmul(f, p.w1), p.b1));
  return add_row(matmul(h, p.w2), p.b2);
}

Tensor2D attention_weights(const Tensor2D& queries, const Tensor2D& keys, const AttentionProjections& proj) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(proj.wq.cols()));
  return softmax_rows(matmul_nt(matmul(queries, proj.wq), matmul(keys, proj.wk)) * scale);
}

Tensor2D gated_self_attention(const Tensor2D& v, const Tensor2D& hb, const GateParams& p) {
  p.validate();
  const std::size_t d = p.model_dim();
  check_tokens(v, d, "V");
  check_tokens(hb, d, "Hb");
  const double gate = p.beta * std::tanh(p.gamma);
  if (gate == 0.0) return v;
  const Tensor2D tokens = hb.rows() ? vstack(v, hb) : v;
  const auto trace = attend(tokens, tokens, p.self_attn, inv_sqrt_dim(p));
  return v + trace.out.slice_rows(0, v.rows()) * gate;
}

Tensor2D pool_objects(const Tensor2D& v_prime, const std::vector<BoxMask>& masks, std::size_t grid_h,
                      std::size_t grid_w) {
  if (v_prime.rows() != grid_h * grid_w) {
    throw GridMismatch("V' has " + std::to_string(v_prime.rows()) + " tokens, grid has " +
                       std::to_string(grid_h * grid_w));
  }
  return matmul(mask_matrix(masks, grid_h, grid_w), v_prime);
}

Tensor2D relation_cross_attention(const Tensor2D& v_prime, const Tensor2D& objects, const Tensor2D& hr,
                                  const std::vector<BoxMask>& masks, const GateParams& p) {
  p.validate();
  const std::size_t d = p.model_dim();
  check_tokens(v_prime, d, "V'");
  check_tokens(objects, d, "O");
  check_tokens(hr, d, "Hr");
  if (objects.rows() != masks.size()) throw ShapeMismatch("relation_cross_attention: one mask per object required");
  if (hr.rows() == 0 || objects.rows() == 0) return v_prime;
  const std::size_t gh = masks.front().grid_h, gw = masks.front().grid_w;
  if (v_prime.rows() != gh * gw) throw GridMismatch("V' token count does not match the mask grid");
  const Tensor2D m = mask_matrix(masks, gh, gw);
  const auto trace = attend(objects, hr, p.cross_attn, inv_sqrt_dim(p));
  return scatter_objects(v_prime, m, row_counts(m), trace.out);
}

KernelForward kernel_forward_from_hb(const Tensor2D& v, const Tensor2D& hb, const Tensor2D& hr,
                                     const std::vector<BoxMask>& masks, std::size_t grid_h, std::size_t grid_w,
                                     const GateParams& p) {
  p.validate();
  const std::size_t d = p.model_dim();
  check_tokens(v, d, "V");
  check_tokens(hb, d, "Hb");
  check_tokens(hr, d, "Hr");
  if (v.rows() != grid_h * grid_w) {
    throw GridMismatch("V has " + std::to_string(v.rows()) + " tokens, grid has " + std::to_string(grid_h * grid_w));
  }
  if (hb.rows() != masks.size()) throw ShapeMismatch("one mask per layout token required");
  const double scale = inv_sqrt_dim(p);

  KernelForward f;
  f.hb = hb;
  f.tokens = hb.rows() ? vstack(v, hb) : v;
  {
    auto t = attend(f.tokens, f.tokens, p.self_attn, scale);
    f.self_q = std::move(t.q);
    f.self_k = std::move(t.k);
    f.self_v = std::move(t.v);
    f.self_attn = std::move(t.weights);
    f.self_mixed = std::move(t.mixed);
    f.self_out = std::move(t.out);
  }
  const double gate = p.beta * std::tanh(p.gamma);
  f.v_prime = v + f.self_out.slice_rows(0, v.rows()) * gate;

  f.masks = mask_matrix(masks, grid_h, grid_w);
  f.mask_counts = row_counts(f.masks);
  f.objects = matmul(f.masks, f.v_prime);
  f.hr = hr.rows() ? hr : Tensor2D(0, d);
  if (hr.rows() == 0 || f.objects.rows() == 0) {
    f.cross_k = Tensor2D(0, d);
    f.v_star = f.v_prime;
    return f;
  }
  {
    auto t = attend(f.objects, hr, p.cross_attn, scale);
    f.cross_q = std::move(t.q);
    f.cross_k = std::move(t.k);
    f.cross_v = std::move(t.v);
    f.cross_attn = std::move(t.weights);
    f.cross_mixed = std::move(t.mixed);
    f.cross_out = std::move(t.out);
  }
  f.v_star = scatter_objects(f.v_prime, f.masks, f.mask_counts, f.cross_out);
  return f;
}

KernelForward kernel_forward(const KernelInputs& in, const GateParams& p) {
  p.validate();
  std::vector<BoxMask> masks;
  masks.reserve(in.boxes.size());
  for (const auto& b : in.boxes) masks.push_back(BoxMask::rasterize(b, in.grid_h, in.grid_w));
  const Tensor2D features = layout_features(in.boxes, in.label_embeddings, p);
  const Tensor2D hidden = tanh_of(add_row(matmul(features, p.w1), p.b1));
  const Tensor2D hb = add_row(matmul(hidden, p.w2), p.b2);
  KernelForward f = kernel_forward_from_hb(in.v, hb, in.hr, masks, in.grid_h, in.grid_w, p);
  f.features = features;
  f.hidden = hidden;
  return f;
}

// ---- backward -------------------------------------------------------------

namespace {

// Gradient of the pre-softmax scores given the gradient of the weights.
Tensor2D softmax_backward(const Tensor2D& weights, const Tensor2D& d_weights) {
  Tensor2D out(weights.rows(), weights.cols());
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < weights.cols(); ++c) dot += weights(r, c) * d_weights(r, c);
    for (std::size_t c = 0; c < weights.cols(); ++c) out(r, c) = weights(r, c) * (d_weights(r, c) - dot);
  }
  return out;
}

struct AttentionGrads {
  Tensor2D d_queries, d_keys;
  AttentionProjections d_proj;
};

// Backward through out = softmax(scale * (Xq Wq)(Xk Wk)^T) (Xk Wv) Wo.
AttentionGrads attention_backward(const Tensor2D& queries, const Tensor2D& keys, const Tensor2D& q,
                                  const Tensor2D& k, const Tensor2D& v, const Tensor2D& weights,
                                  const Tensor2D& mixed, const AttentionProjections& proj, double scale,
                                  const Tensor2D& d_out) {
  AttentionGrads g;
  g.d_proj.wo = matmul_tn(mixed, d_out);
  const Tensor2D d_mixed = matmul_nt(d_out, proj.wo);
  const Tensor2D d_weights = matmul_nt(d_mixed, v);
  const Tensor2D d_v = matmul_tn(weights, d_mixed);
  const Tensor2D d_scores = softmax_backward(weights, d_weights) * scale;
  const Tensor2D d_q = matmul(d_scores, k);
  const Tensor2D d_k = matmul_tn(d_scores, q);
  g.d_proj.wq = matmul_tn(queries, d_q);
  g.d_proj.wk = matmul_tn(keys, d_k);
  g.d_proj.wv = matmul_tn(keys, d_v);
  g.d_queries = matmul_nt(d_q, proj.wq);
  g.d_keys = matmul_nt(d_k, proj.wk) + matmul_nt(d_v, proj.wv);
  return g;
}

AttentionProjections zero_projections(std::size_t d) {
  return {Tensor2D(d, d), Tensor2D(d, d), Tensor2D(d, d), Tensor2D(d, d)};
}

}  // namespace

KernelGradients kernel_gradients(const KernelForward& fwd, const Tensor2D& upstream, const GateParams& p) {
  const std::size_t d = p.model_dim();
  const std::size_t nv = fwd.v_prime.rows();
  const std::size_t n = fwd.hb.rows();
  require_shape(upstream, nv, d, "kernel_gradients upstream");
  const double scale = inv_sqrt_dim(p);

  KernelGradients g;
  g.cross_attn = zero_projections(d);
  g.self_attn = zero_projections(d);
  g.hr = Tensor2D(fwd.hr.rows(), d);

  // V* = V' + S Z, S = M^T diag(1/count); O = M V'.
  Tensor2D d_vp = upstream;
  if (!fwd.cross_out.empty()) {
    Tensor2D d_z(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < nv; ++j) {
        if (fwd.masks(i, j) == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) d_z(i, c) += upstream(j, c) / fwd.mask_counts[i];
      }
    auto ag = attention_backward(fwd.objects, fwd.hr, fwd.cross_q, fwd.cross_k, fwd.cross_v, fwd.cross_attn,
                                 fwd.cross_mixed, p.cross_attn, scale, d_z);
    g.cross_attn = std::move(ag.d_proj);
    g.hr = std::move(ag.d_keys);
    d_vp += matmul_tn(fwd.masks, ag.d_queries);
  }

  // V' = V + beta tanh(gamma) TS(Y).
  const double t = std::tanh(p.gamma);
  const double gate = p.beta * t;
  g.v = d_vp;
  g.hb = Tensor2D(n, d);
  double d_gate = 0.0;
  for (std::size_t r = 0; r < nv; ++r)
    for (std::size_t c = 0; c < d; ++c) d_gate += d_vp(r, c) * fwd.self_out(r, c);
  g.gamma = p.beta * (1.0 - t * t) * d_gate;

  if (gate != 0.0) {
    Tensor2D d_out(fwd.tokens.rows(), d);
    for (std::size_t r = 0; r < nv; ++r)
      for (std::size_t c = 0; c < d; ++c) d_out(r, c) = gate * d_vp(r, c);
    auto ag = attention_backward(fwd.tokens, fwd.tokens, fwd.self_q, fwd.self_k, fwd.self_v, fwd.self_attn,
                                 fwd.self_mixed, p.self_attn, scale, d_out);
    g.self_attn = std::move(ag.d_proj);
    const Tensor2D d_tokens = ag.d_queries + ag.d_keys;
    g.v += d_tokens.slice_rows(0, nv);
    g.hb = d_tokens.slice_rows(nv, nv + n);
  }

  // Hb = tanh(F W1 + b1) W2 + b2.
  if (fwd.hidden.cols() > 0) {
    g.w2 = matmul_tn(fwd.hidden, g.hb);
    g.b2 = column_sums(g.hb);
    Tensor2D d_pre = matmul_nt(g.hb, p.w2);
    for (std::size_t i = 0; i < d_pre.size(); ++i) {
      const double h = fwd.hidden.data()[i];
      d_pre.data()[i] *= 1.0 - h * h;
    }
    g.w1 = matmul_tn(fwd.features, d_pre);
    g.b1 = column_sums(d_pre);
    const Tensor2D d_features = matmul_nt(d_pre, p.w1);
    const std::size_t fw = 8 * static_cast<std::size_t>(p.fourier.bands);
    g.label_embeddings = Tensor2D(n, d_features.cols() - fw);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = fw; c < d_features.cols(); ++c) g.label_embeddings(r, c - fw) = d_features(r, c);
  }

  bool finite = std::isfinite(g.gamma);
  for (const Tensor2D* t : {&g.v, &g.hb, &g.hr, &g.label_embeddings, &g.w1, &g.b1, &g.w2, &g.b2,
                            &g.self_attn.wq, &g.self_attn.wk, &g.self_attn.wv, &g.self_attn.wo,
                            &g.cross_attn.wq, &g.cross_attn.wk, &g.cross_attn.wv, &g.cross_attn.wo}) {
    finite = finite && t->all_finite();
  }
  if (!finite) throw NonFiniteGradient("kernel_gradients: non-finite gradient");
  return g;
}

// ---- invariant suite ------------------------------------------------------

namespace {

Tensor2D gaussian_tensor(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.0) {
  Tensor2D t(rows, cols);
  for (double& v : t.data()) v = sd * rng.normal();
  return t;
}

struct RandomCase {
  KernelInputs in;
  GateParams p;
  Tensor2D weights;  // loss = sum(weights * V*) + 0.5 * sum(V*^2)
};

RandomCase random_case(Rng& rng) {
  RandomCase rc;
  const std::size_t d = 2 + rng.index(7);  // 2..8
  const std::size_t gh = 1 + rng.index(4), gw = 1 + rng.index(4);
  const std::size_t n = 1 + rng.index(3), m = rng.index(4), label_dim = 1 + rng.index(3);
  rc.p = GateParams::random(d, label_dim, 1 + rng.index(2), rng.next(), 0.8);
  rc.p.gamma = 0.2 + 0.8 * rng.uniform();
  rc.p.beta = 0.3 + 0.7 * rng.uniform();
  rc.in.grid_h = gh;
  rc.in.grid_w = gw;
  rc.in.v = gaussian_tensor(gh * gw, d, rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.1 + 0.6 * rng.uniform(), h = 0.1 + 0.6 * rng.uniform();
    rc.in.boxes.push_back({(1.0 - w) * rng.uniform(), (1.0 - h) * rng.uniform(), w, h});
  }
  rc.in.label_embeddings = gaussian_tensor(n, label_dim, rng);
  rc.in.hr = gaussian_tensor(m, d, rng);
  rc.weights = gaussian_tensor(gh * gw, d, rng);
  return rc;
}

double loss_of(const KernelInputs& in, const GateParams& p, const Tensor2D& w) {
  const Tensor2D vs = kernel_forward(in, p).v_star;
  double l = 0.0;
  for (std::size_t i = 0; i < vs.size(); ++i) l += w.data()[i] * vs.data()[i] + 0.5 * vs.data()[i] * vs.data()[i];
  return l;
}

Tensor2D loss_upstream(const Tensor2D& v_star, const Tensor2D& w) { return w + v_star; }

// Worst norm-wise relative error over every differentiable tensor.
double worst_fd_error(RandomCase rc, double h) {
  const KernelForward fwd = kernel_forward(rc.in, rc.p);
  const KernelGradients g = kernel_gradients(fwd, loss_upstream(fwd.v_star, rc.weights), rc.p);
  const std::vector<std::pair<Tensor2D*, const Tensor2D*>> slots = {
      {&rc.in.v, &g.v},
      {&rc.in.hr, &g.hr},
      {&rc.in.label_embeddings, &g.label_embeddings},
      {&rc.p.w1, &g.w1},
      {&rc.p.b1, &g.b1},
      {&rc.p.w2, &g.w2},
      {&rc.p.b2, &g.b2},
      {&rc.p.self_attn.wq, &g.self_attn.wq},
      {&rc.p.self_attn.wk, &g.self_attn.wk},
      {&rc.p.self_attn.wv, &g.self_attn.wv},
      {&rc.p.self_attn.wo, &g.self_attn.wo},
      {&rc.p.cross_attn.wq, &g.cross_attn.wq},
      {&rc.p.cross_attn.wk, &g.cross_attn.wk},
      {&rc.p.cross_attn.wv, &g.cross_attn.wv},
      {&rc.p.cross_attn.wo, &g.cross_attn.wo},
  };
  auto relative = [](double diff2, double a2, double b2) {
    const double denom = std::max({std::sqrt(a2), std::sqrt(b2), 1e-8});
    return std::sqrt(diff2) / denom;
  };
  double worst = 0.0;
  for (auto [param, grad] : slots) {
    double diff2 = 0.0, a2 = 0.0, b2 = 0.0;
    for (std::size_t i = 0; i < param->size(); ++i) {
      const double keep = param->data()[i];
      param->data()[i] = keep + h;
      const double up = loss_of(rc.in, rc.p, rc.weights);
      param->data()[i] = keep - h;
      const double down = loss_of(rc.in, rc.p, rc.weights);
      param->data()[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grad->data()[i];
      diff2 += (numeric - analytic) * (numeric - analytic);
      a2 += analytic * analytic;
      b2 += numeric * numeric;
    }
    worst = std::max(worst, relative(diff2, a2, b2));
  }
  const double keep = rc.p.gamma;
  rc.p.gamma = keep + h;
  const double up = loss_of(rc.in, rc.p, rc.weights);
  rc.p.gamma = keep - h;
  const double down = loss_of(rc.in, rc.p, rc.weights);
  const double numeric = (up - down) / (2.0 * h);
  const double diff = numeric - g.gamma;
  return std::max(worst, relative(diff * diff, g.gamma * g.gamma, numeric * numeric));
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

std::vector<KernelCheck> run_kernel_checks(std::uint64_t seed) {
  std::vector<KernelCheck> out;
  auto record = [&](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };
  Rng rng(seed);

  {
    bool ok = true;
    for (int i = 0; i < 16; ++i) {
      RandomCase rc = random_case(rng);
      const Tensor2D hb = encode_layout(rc.in.boxes, rc.in.label_embeddings, rc.p);
      rc.p.beta = 0.0;
      ok = ok && gated_self_attention(rc.in.v, hb, rc.p) == rc.in.v;
      rc.p.beta = 1.0;
      rc.p.gamma = 0.0;
      ok = ok && gated_self_attention(rc.in.v, hb, rc.p) == rc.in.v;
    }
    record("gate identity (beta=0, gamma=0)", ok, "exact equality on 16 cases");
  }

  {
    bool ok = true;
    for (int i = 0; i < 32; ++i) {
      const RandomCase rc = random_case(rng);
      const auto f = kernel_forward(rc.in, rc.p);
      const std::size_t nv = rc.in.grid_h * rc.in.grid_w, n = rc.in.boxes.size(), d = rc.p.model_dim();
      ok = ok && f.hb.rows() == n && f.hb.cols() == d && f.v_prime.rows() == nv && f.v_prime.cols() == d &&
           f.objects.rows() == n && f.objects.cols() == d && f.v_star.rows() == nv && f.v_star.cols() == d;
    }
    record("shape contracts", ok, "Hb n x d, V' n_v x d, O n x d, V* n_v x d on 32 cases");
  }

  {
    double worst = 0.0;
    for (int i = 0; i < 32; ++i) {
      const RandomCase rc = random_case(rng);
      const auto f = kernel_forward(rc.in, rc.p);
      for (const Tensor2D* a : {&f.self_attn, &f.cross_attn})
        for (std::size_t r = 0; r < a->rows(); ++r) {
          double s = 0.0;
          for (double v : a->row(r)) s += v;
          worst = std::max(worst, std::abs(s - 1.0));
        }
    }
    record("softmax rows sum to 1", worst <= 1e-9, "max deviation " + format_number(worst));
  }

  {
    double worst = 0.0;
    for (int i = 0; i < 32; ++i) worst = std::max(worst, worst_fd_error(random_case(rng), 1e-5));
    record("gradients vs central differences", worst <= 1e-4,
           "worst relative error " + format_number(worst) + " over 32 cases");
  }

  {
    bool zero = true, gamma_closed = true;
    for (int i = 0; i < 8; ++i) {
      RandomCase rc = random_case(rng);
      const auto f = kernel_forward(rc.in, rc.p);
      const auto g = kernel_gradients(f, Tensor2D(f.v_star.rows(), f.v_star.cols()), rc.p);
      for (const Tensor2D* t : {&g.v, &g.hr, &g.w1, &g.w2, &g.self_attn.wq, &g.cross_attn.wo})
        zero = zero && frobenius_norm(*t) == 0.0;
      zero = zero && g.gamma == 0.0;
      rc.p.beta = 0.0;
      const auto f0 = kernel_forward(rc.in, rc.p);
      gamma_closed = gamma_closed && kernel_gradients(f0, loss_upstream(f0.v_star, rc.weights), rc.p).gamma == 0.0;
    }
    record("zero upstream -> zero gradients", zero, "8 cases");
    record("closed gate -> zero gamma gradient", gamma_closed, "8 cases");
  }

  {
    double worst = 0.0;
    for (int i = 0; i < 32; ++i) {
      RandomCase rc = random_case(rng);
      if (rc.in.hr.rows() < 2) rc.in.hr = gaussian_tensor(3, rc.p.model_dim(), rng);
      const Tensor2D before = kernel_forward(rc.in, rc.p).v_star;
      const std::size_t m = rc.in.hr.rows();
      Tensor2D permuted(m, rc.in.hr.cols());
      for (std::size_t r = 0; r < m; ++r) {
        const auto src = rc.in.hr.row((r + 1) % m);
        std::copy(src.begin(), src.end(), permuted.row(r).begin());
      }
      rc.in.hr = permuted;
      worst = std::max(worst, max_abs_diff(before, kernel_forward(rc.in, rc.p).v_star));
    }
    record("relation key permutation invariance", worst <= 1e-10, "max deviation " + format_number(worst));
  }

  {
    RandomCase rc = random_case(rng);
    rc.in.hr = Tensor2D(0, rc.p.model_dim());
    const auto f = kernel_forward(rc.in, rc.p);
    record("no relations -> V* == V'", f.v_star == f.v_prime, "exact equality");
  }

  return out;
}

}  // namespace layoutplan
