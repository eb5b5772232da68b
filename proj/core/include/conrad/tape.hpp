#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conrad/common.hpp"
#include "conrad/params.hpp"

namespace conrad {

/// Coarse-grained reverse-mode tape.
///
/// Every recorded node owns a flat value vector and a backward closure. The
/// closure receives the node's adjoint and pushes contributions to the adjoints
/// of earlier nodes (through Tape::adjoint) or directly into the parameter
/// gradient buffer. Nodes are recorded in evaluation order, so a reverse sweep
/// over node ids is a valid topological order.
///
/// Backward may be seeded at several nodes at once, with arbitrary adjoint
/// vectors; this is how a pseudo-gradient image (score distillation) and scalar
/// losses are combined into one sweep.
template <typename T>
class Tape {
 public:
  using NodeId = std::size_t;
  using BackwardFn = std::function<void(std::span<const T> adjoint, Tape& tape, std::span<T> grads)>;

  struct Seed {
    NodeId node;
    std::vector<T> adjoint;
  };

  NodeId record(std::vector<T> value, BackwardFn backward = {}) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backward)});
    return nodes_.size() - 1;
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  std::span<const T> value(NodeId id) const { return checked(id).value; }

  /// Adjoint buffer of a node, allocated (zero-filled) on first access.
  std::span<T> adjoint(NodeId id) {
    Node& n = checked(id);
    if (n.adjoint.empty()) n.adjoint.assign(n.value.size(), T(0));
    return n.adjoint;
  }

  void backward(std::span<const Seed> seeds, GradAccumulator<T>& grads) {
    if (nodes_.empty()) throw GraphError("backward called before any forward computation was recorded");
    if (seeds.empty()) throw GraphError("backward needs at least one seed");
    NodeId last = 0;
    for (const Seed& s : seeds) {
      const Node& n = checked(s.node);
      if (s.adjoint.size() != n.value.size()) {
        throw GraphError("adjoint seed has " + std::to_string(s.adjoint.size()) + " entries, node output has " +
                         std::to_string(n.value.size()));
      }
      last = std::max(last, s.node);
    }
    for (const Seed& s : seeds) {
      auto adj = adjoint(s.node);
      for (std::size_t i = 0; i < adj.size(); ++i) adj[i] += s.adjoint[i];
    }
    for (NodeId id = last + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.adjoint.empty() || !n.backward) continue;
      n.backward(n.adjoint, *this, grads.values());
    }
  }

  /// Backward from a scalar node with seed 1.
  void backward(NodeId scalar, GradAccumulator<T>& grads) {
    if (checked(scalar).value.size() != 1) throw GraphError("scalar backward on a non-scalar node");
    const Seed seed{scalar, {T(1)}};
    backward(std::span<const Seed>(&seed, 1), grads);
  }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<T> value;
    std::vector<T> adjoint;
    BackwardFn backward;
  };

  Node& checked(NodeId id) {
    if (id >= nodes_.size()) throw GraphError("unknown tape node " + std::to_string(id));
    return nodes_[id];
  }
  const Node& checked(NodeId id) const {
    if (id >= nodes_.size()) throw GraphError("unknown tape node " + std::to_string(id));
    return nodes_[id];
  }

  std::vector<Node> nodes_;
};

}  // namespace conrad
