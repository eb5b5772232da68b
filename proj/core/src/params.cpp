#include "conrad/params.hpp"

#include <algorithm>

namespace conrad {

std::size_t ParamLayout::add(std::string name, std::size_t length) {
  const bool exists = std::any_of(segments_.begin(), segments_.end(),
                                  [&](const Segment& s) { return s.name == name; });
  if (exists) throw InvalidArgument("duplicate parameter segment '" + name + "'");
  const std::size_t offset = total_;
  segments_.push_back({std::move(name), offset, length});
  total_ += length;
  return offset;
}

const ParamLayout::Segment& ParamLayout::segment(std::string_view name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  throw InvalidArgument("unknown parameter segment '" + std::string(name) + "'");
}

}  // namespace conrad
