#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "conrad/common.hpp"

namespace conrad {

/// Named, contiguous, non-overlapping segments of a flat parameter vector.
class ParamLayout {
 public:
  struct Segment {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
  };

  /// Appends a segment and returns its offset.
  std::size_t add(std::string name, std::size_t length);

  const Segment& segment(std::string_view name) const;
  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t total() const { return total_; }

  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(ParamLayout layout) : layout_(std::move(layout)), values_(layout_.total(), T(0)) {}

  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  std::span<T> segment(std::string_view name) {
    const auto& s = layout_.segment(name);
    return std::span<T>(values_).subspan(s.offset, s.length);
  }
  std::span<const T> segment(std::string_view name) const {
    const auto& s = layout_.segment(name);
    return std::span<const T>(values_).subspan(s.offset, s.length);
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out(layout_);
    for (std::size_t i = 0; i < values_.size(); ++i) out.values()[i] = static_cast<U>(values_[i]);
    return out;
  }

 private:
  ParamLayout layout_;
  std::vector<T> values_;
};

/// Gradient buffer congruent to a ParamStore.
template <typename T>
class GradAccumulator {
 public:
  GradAccumulator() = default;
  explicit GradAccumulator(std::size_t n) : grads_(n, T(0)) {}
  template <typename U>
  explicit GradAccumulator(const ParamStore<U>& params) : grads_(params.size(), T(0)) {}

  std::size_t size() const { return grads_.size(); }
  std::span<T> values() { return grads_; }
  std::span<const T> values() const { return grads_; }
  T& operator[](std::size_t i) { return grads_[i]; }
  T operator[](std::size_t i) const { return grads_[i]; }

  void zero() { std::fill(grads_.begin(), grads_.end(), T(0)); }
  /// Adds a partial accumulator of the same length (used to reduce per-worker partials).
  void merge(const GradAccumulator& other);
  bool all_finite() const;

 private:
  std::vector<T> grads_;
};

template <typename T>
void GradAccumulator<T>::merge(const GradAccumulator& other) {
  if (other.size() != size()) throw GraphError("gradient accumulator size mismatch");
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
}

template <typename T>
bool GradAccumulator<T>::all_finite() const {
  for (const T g : grads_) {
    if (!std::isfinite(g)) return false;
  }
  return true;
}

}  // namespace conrad
