#include "conrad/pipeline.hpp"

#include <utility>

namespace conrad {

template <typename T>
NodeId<T> record_field(Tape<T>& tape, const RadianceField<T>& field, std::span<const T> params,
                       std::vector<Vec3<T>> points, bool with_color) {
  auto cache = std::make_shared<FieldCache<T>>();
  auto pts = std::make_shared<std::vector<Vec3<T>>>(std::move(points));
  field.forward(*pts, params, with_color, *cache);
  const std::size_t n = pts->size();
  std::vector<T> value(with_color ? 4 * n : n);
  std::copy(cache->sigma.begin(), cache->sigma.end(), value.begin());
  if (with_color) std::copy(cache->rgb.begin(), cache->rgb.end(), value.begin() + n);
  const RadianceField<T>* f = &field;
  return tape.record(std::move(value), [f, params, pts, cache, with_color, n](std::span<const T> adj, Tape<T>&,
                                                                               std::span<T> grads) {
    const auto dsigma = adj.subspan(0, n);
    const auto drgb = with_color ? adj.subspan(n, 3 * n) : std::span<const T>();
    f->backward(*pts, params, *cache, dsigma, drgb, grads);
  });
}

template <typename T>
NodeId<T> record_constraint(Tape<T>& tape, NodeId<T> field_node, std::vector<ConstraintTerms<T>> terms,
                            bool with_color) {
  const auto in = tape.value(field_node);
  const std::size_t n = terms.size();
  if (in.size() != (with_color ? 4 * n : n)) throw GraphError("constraint terms do not match the field node");
  std::vector<T> value(in.begin(), in.end());
  for (std::size_t i = 0; i < n; ++i) {
    value[i] *= terms[i].density_scale;
    if (with_color) {
      const T b = terms[i].color_blend;
      for (int c = 0; c < 3; ++c) {
        T& v = value[n + 3 * i + c];
        v = b * terms[i].image_color[c] + (T(1) - b) * v;
      }
    }
  }
  auto k = std::make_shared<std::vector<ConstraintTerms<T>>>(std::move(terms));
  return tape.record(std::move(value), [field_node, k, with_color, n](std::span<const T> adj, Tape<T>& t,
                                                                     std::span<T>) {
    auto out = t.adjoint(field_node);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] += adj[i] * (*k)[i].density_scale;
      if (with_color) {
        const T keep = T(1) - (*k)[i].color_blend;
        for (int c = 0; c < 3; ++c) out[n + 3 * i + c] += adj[n + 3 * i + c] * keep;
      }
    }
  });
}

template <typename T>
NodeId<T> record_march(Tape<T>& tape, std::shared_ptr<const RaySamples<T>> samples, NodeId<T> field_node,
                       const Vec3<T>& background, bool with_color) {
  const std::size_t n = samples->size();
  const auto in = tape.value(field_node);
  if (in.size() != (with_color ? 4 * n : n)) throw GraphError("field node does not match the ray samples");
  const auto sigma = in.subspan(0, n);
  const auto rgb = with_color ? in.subspan(n, 3 * n) : std::span<const T>();
  auto fwd = std::make_shared<MarchBuffers<T>>();
  march_forward<T>(*samples, sigma, rgb, background, *fwd);
  const MarchLayout layout{samples->n_rays, samples->n_samples};
  std::vector<T> value(layout.total());
  std::copy(fwd->color.begin(), fwd->color.end(), value.begin() + layout.color());
  std::copy(fwd->depth.begin(), fwd->depth.end(), value.begin() + layout.depth());
  std::copy(fwd->alpha.begin(), fwd->alpha.end(), value.begin() + layout.alpha());
  std::copy(fwd->weights.begin(), fwd->weights.end(), value.begin() + layout.weights());
  std::copy(fwd->alphas.begin(), fwd->alphas.end(), value.begin() + layout.alphas());
  return tape.record(std::move(value), [samples, field_node, fwd, background, with_color, layout, n](
                                           std::span<const T> adj, Tape<T>& t, std::span<T>) {
    const auto in = t.value(field_node);
    const auto sigma = in.subspan(0, n);
    const auto rgb = with_color ? in.subspan(n, 3 * n) : std::span<const T>();
    const std::size_t R = layout.n_rays;
    const std::size_t RS = R * layout.n_samples;
    MarchAdjoint<T> a;
    a.color = adj.subspan(layout.color(), 3 * R);
    a.depth = adj.subspan(layout.depth(), R);
    a.alpha = adj.subspan(layout.alpha(), R);
    a.weights = adj.subspan(layout.weights(), RS);
    a.alphas = adj.subspan(layout.alphas(), RS);
    auto out = t.adjoint(field_node);
    march_backward<T>(*samples, sigma, rgb, background, *fwd, a, out.subspan(0, n),
                      with_color ? out.subspan(n, 3 * n) : std::span<T>());
  });
}

template <typename T>
NodeId<T> record_normals(Tape<T>& tape, NodeId<T> stencil_node, T h, std::vector<std::uint8_t>* degenerate) {
  const auto sigma = tape.value(stencil_node);
  if (sigma.size() % 6 != 0) throw GraphError("normal stencil node must hold 6 densities per point");
  auto batch = std::make_shared<NormalBatch<T>>(normals_from_stencil<T>(sigma, h));
  const std::size_t n = batch->normals.size();
  std::vector<T> value(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) value[3 * i + c] = batch->normals[i][c];
  }
  if (degenerate) *degenerate = batch->degenerate;
  return tape.record(std::move(value), [stencil_node, batch, h, n](std::span<const T> adj, Tape<T>& t,
                                                                  std::span<T>) {
    std::vector<Vec3<T>> dn(n);
    for (std::size_t i = 0; i < n; ++i) dn[i] = Vec3<T>(adj[3 * i], adj[3 * i + 1], adj[3 * i + 2]);
    normals_backward<T>(*batch, dn, h, t.adjoint(stencil_node));
  });
}

template <typename T>
NodeId<T> record_depth_loss(Tape<T>& tape, NodeId<T> march_node, const MarchLayout& layout, std::vector<T> d_hat,
                            std::vector<std::uint8_t> selected, bool* degenerate) {
  const auto depth = tape.value(march_node).subspan(layout.depth(), layout.n_rays);
  auto res = std::make_shared<ScalarGrad<T>>(depth_loss<T>(depth, d_hat, selected));
  if (degenerate) *degenerate = res->degenerate;
  return tape.record({res->value}, [march_node, layout, res](std::span<const T> adj, Tape<T>& t, std::span<T>) {
    auto out = t.adjoint(march_node).subspan(layout.depth(), layout.n_rays);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += adj[0] * res->grad[i];
  });
}

template <typename T>
NodeId<T> record_entropy(Tape<T>& tape, NodeId<T> march_node, const MarchLayout& layout) {
  const std::size_t RS = layout.n_rays * layout.n_samples;
  const auto alphas = tape.value(march_node).subspan(layout.alphas(), RS);
  auto res = std::make_shared<ScalarGrad<T>>(entropy_reg<T>(alphas));
  return tape.record({res->value}, [march_node, layout, res, RS](std::span<const T> adj, Tape<T>& t,
                                                                 std::span<T>) {
    auto out = t.adjoint(march_node).subspan(layout.alphas(), RS);
    for (std::size_t i = 0; i < RS; ++i) out[i] += adj[0] * res->grad[i];
  });
}

template <typename T>
NodeId<T> record_orientation(Tape<T>& tape, NodeId<T> march_node, const MarchLayout& layout,
                             std::vector<std::size_t> rays, std::vector<Vec3<T>> directions, NodeId<T> normals_node,
                             std::vector<std::uint8_t> degenerate) {
  const std::size_t S = layout.n_samples;
  const auto all_weights = tape.value(march_node).subspan(layout.weights(), layout.n_rays * S);
  const auto nvals = tape.value(normals_node);
  if (directions.size() != rays.size() || nvals.size() != 3 * rays.size() * S) {
    throw GraphError("orientation inputs do not match the selected rays");
  }
  std::vector<T> w(rays.size() * S);
  std::vector<Vec3<T>> normals(rays.size() * S);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (std::size_t s = 0; s < S; ++s) {
      const std::size_t k = r * S + s;
      w[k] = all_weights[rays[r] * S + s];
      normals[k] = Vec3<T>(nvals[3 * k], nvals[3 * k + 1], nvals[3 * k + 2]);
    }
  }
  auto res = std::make_shared<OrientationResult<T>>(orientation_reg<T>(w, normals, degenerate, directions, S));
  auto ray_ids = std::make_shared<std::vector<std::size_t>>(std::move(rays));
  return tape.record({res->value}, [march_node, normals_node, layout, res, ray_ids, S](std::span<const T> adj,
                                                                                       Tape<T>& t, std::span<T>) {
    auto dw = t.adjoint(march_node).subspan(layout.weights(), layout.n_rays * S);
    auto dn = t.adjoint(normals_node);
    for (std::size_t r = 0; r < ray_ids->size(); ++r) {
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t k = r * S + s;
        dw[(*ray_ids)[r] * S + s] += adj[0] * res->weight_grad[k];
        for (int c = 0; c < 3; ++c) dn[3 * k + c] += adj[0] * res->normal_grad[k][c];
      }
    }
  });
}

template <typename T>
NodeId<T> record_smoothness(Tape<T>& tape, NodeId<T> normals_a, std::vector<std::uint8_t> degenerate_a,
                            NodeId<T> normals_b, std::vector<std::uint8_t> degenerate_b) {
  const auto to_vec = [](std::span<const T> v) {
    std::vector<Vec3<T>> out(v.size() / 3);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = Vec3<T>(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
    return out;
  };
  const auto na = to_vec(tape.value(normals_a));
  const auto nb = to_vec(tape.value(normals_b));
  auto res = std::make_shared<SmoothnessResult<T>>(smoothness_reg<T>(na, degenerate_a, nb, degenerate_b));
  return tape.record({res->value}, [normals_a, normals_b, res](std::span<const T> adj, Tape<T>& t, std::span<T>) {
    auto da = t.adjoint(normals_a);
    for (std::size_t i = 0; i < res->grad_a.size(); ++i) {
      for (int c = 0; c < 3; ++c) da[3 * i + c] += adj[0] * res->grad_a[i][c];
    }
    auto db = t.adjoint(normals_b);
    for (std::size_t i = 0; i < res->grad_b.size(); ++i) {
      for (int c = 0; c < 3; ++c) db[3 * i + c] += adj[0] * res->grad_b[i][c];
    }
  });
}

template <typename T>
NodeId<T> record_weighted_sum(Tape<T>& tape, std::vector<NodeId<T>> nodes, std::vector<T> weights) {
  if (nodes.size() != weights.size()) throw GraphError("weighted sum needs one weight per node");
  T total = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto v = tape.value(nodes[k]);
    if (v.size() != 1) throw GraphError("weighted sum over a non-scalar node");
    total += weights[k] * v[0];
  }
  return tape.record({total}, [nodes = std::move(nodes), weights = std::move(weights)](
                                  std::span<const T> adj, Tape<T>& t, std::span<T>) {
    for (std::size_t k = 0; k < nodes.size(); ++k) t.adjoint(nodes[k])[0] += adj[0] * weights[k];
  });
}

template <typename T>
std::vector<ConstraintTerms<T>> constraint_terms(const Constraint& constraint, std::span<const Vec3<T>> points,
                                                 bool with_color) {
  return constraint.terms<T>(points, with_color);
}

#define CONRAD_INSTANTIATE_PIPELINE(T)                                                                           \
  template NodeId<T> record_field<T>(Tape<T>&, const RadianceField<T>&, std::span<const T>,                       \
                                     std::vector<Vec3<T>>, bool);                                                 \
  template NodeId<T> record_constraint<T>(Tape<T>&, NodeId<T>, std::vector<ConstraintTerms<T>>, bool);          \
  template NodeId<T> record_march<T>(Tape<T>&, std::shared_ptr<const RaySamples<T>>, NodeId<T>, const Vec3<T>&, \
                                     bool);                                                                       \
  template NodeId<T> record_normals<T>(Tape<T>&, NodeId<T>, T, std::vector<std::uint8_t>*);                     \
  template NodeId<T> record_depth_loss<T>(Tape<T>&, NodeId<T>, const MarchLayout&, std::vector<T>,              \
                                          std::vector<std::uint8_t>, bool*);                                      \
  template NodeId<T> record_entropy<T>(Tape<T>&, NodeId<T>, const MarchLayout&);                                \
  template NodeId<T> record_orientation<T>(Tape<T>&, NodeId<T>, const MarchLayout&, std::vector<std::size_t>,   \
                                           std::vector<Vec3<T>>, NodeId<T>, std::vector<std::uint8_t>);           \
  template NodeId<T> record_smoothness<T>(Tape<T>&, NodeId<T>, std::vector<std::uint8_t>, NodeId<T>,            \
                                          std::vector<std::uint8_t>);                                             \
  template NodeId<T> record_weighted_sum<T>(Tape<T>&, std::vector<NodeId<T>>, std::vector<T>);                  \
  template std::vector<ConstraintTerms<T>> constraint_terms<T>(const Constraint&, std::span<const Vec3<T>>, bool);

CONRAD_INSTANTIATE_PIPELINE(float)
CONRAD_INSTANTIATE_PIPELINE(double)

}  // namespace conrad
