#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "conrad/constraints.hpp"
#include "conrad/objectives.hpp"
#include "conrad/radiance_field.hpp"
#include "conrad/renderer.hpp"
#include "conrad/tape.hpp"

// Differentiable stages of a training step, each recorded as one tape node.
// Chaining them gives the graph
//   params -> field -> constraint -> march -> {image, depth, alphas, weights}
//                                          -> losses
// and Tape::backward turns any mix of scalar losses and image adjoints into
// parameter gradients.

namespace conrad {

/// Offsets of the march node's flat value: color (3R), depth (R), alpha (R),
/// weights (RS), alphas (RS).
struct MarchLayout {
  std::size_t n_rays = 0;
  std::size_t n_samples = 0;

  std::size_t color() const { return 0; }
  std::size_t depth() const { return 3 * n_rays; }
  std::size_t alpha() const { return 4 * n_rays; }
  std::size_t weights() const { return 5 * n_rays; }
  std::size_t alphas() const { return 5 * n_rays + n_rays * n_samples; }
  std::size_t total() const { return 5 * n_rays + 2 * n_rays * n_samples; }
};

template <typename T>
using NodeId = typename Tape<T>::NodeId;

/// Field evaluation. Value: sigma (n) followed by rgb (3n) when with_color.
/// The backward closure reads `params` at backward time; they must not change
/// in between.
template <typename T>
NodeId<T> record_field(Tape<T>& tape, const RadianceField<T>& field, std::span<const T> params,
                       std::vector<Vec3<T>> points, bool with_color);

/// Applies frozen constraint terms to a field node (same value layout).
template <typename T>
NodeId<T> record_constraint(Tape<T>& tape, NodeId<T> field_node, std::vector<ConstraintTerms<T>> terms,
                            bool with_color);

/// Quadrature over a field node evaluated at samples.points.
template <typename T>
NodeId<T> record_march(Tape<T>& tape, std::shared_ptr<const RaySamples<T>> samples, NodeId<T> field_node,
                       const Vec3<T>& background, bool with_color);

/// Finite-difference normals from a density-only node evaluated on a
/// normal_stencil. Value: 3 per point. Degenerate normals are zero and pass no
/// gradient; their flags are written to `degenerate` when non-null.
template <typename T>
NodeId<T> record_normals(Tape<T>& tape, NodeId<T> stencil_node, T h, std::vector<std::uint8_t>* degenerate);

/// 1 - Pearson(depth slice of march node, d_hat) over the selected rays.
template <typename T>
NodeId<T> record_depth_loss(Tape<T>& tape, NodeId<T> march_node, const MarchLayout& layout,
                            std::vector<T> d_hat, std::vector<std::uint8_t> selected, bool* degenerate = nullptr);

/// Entropy of the alphas slice of a march node.
template <typename T>
NodeId<T> record_entropy(Tape<T>& tape, NodeId<T> march_node, const MarchLayout& layout);

/// Orientation over a subset of rays of a march node. `rays` lists ray indices;
/// normals_node holds normals for all samples of those rays in that order.
template <typename T>
NodeId<T> record_orientation(Tape<T>& tape, NodeId<T> march_node, const MarchLayout& layout,
                             std::vector<std::size_t> rays, std::vector<Vec3<T>> directions, NodeId<T> normals_node,
                             std::vector<std::uint8_t> degenerate);

template <typename T>
NodeId<T> record_smoothness(Tape<T>& tape, NodeId<T> normals_a, std::vector<std::uint8_t> degenerate_a,
                            NodeId<T> normals_b, std::vector<std::uint8_t> degenerate_b);

/// sum_k weights[k] * value(nodes[k]); every node must be scalar.
template <typename T>
NodeId<T> record_weighted_sum(Tape<T>& tape, std::vector<NodeId<T>> nodes, std::vector<T> weights);

/// Per-point constraint terms for a batch of points.
template <typename T>
std::vector<ConstraintTerms<T>> constraint_terms(const Constraint& constraint, std::span<const Vec3<T>> points,
                                                 bool with_color);

}  // namespace conrad
