#pragma once

// Finite sigma-fields represented as partitions of a product ground set.
//
// A ground set is a mixed-radix product of named coordinates; element
// indices enumerate tuples lexicographically with the last coordinate
// varying fastest.  A field is stored as one atom label per element, with
// atoms numbered in order of their least element, so two fields over the
// same ground set are equal exactly when their label vectors are equal.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "error.hpp"

namespace nst::sigma {

class GroundSet {
 public:
  GroundSet() = default;

  GroundSet(std::vector<std::string> names, std::vector<std::size_t> radix)
      : names_(std::move(names)), radix_(std::move(radix)) {
    if (names_.size() != radix_.size()) {
      throw Error(ErrorCode::InvalidArgument, "ground set needs one name per coordinate");
    }
    stride_.assign(radix_.size(), 1);
    size_ = 1;
    for (std::size_t k = radix_.size(); k-- > 0;) {
      if (radix_[k] == 0) {
        throw Error(ErrorCode::InvalidArgument, "coordinate '" + names_[k] + "' has an empty alphabet");
      }
      stride_[k] = size_;
      size_ *= radix_[k];
    }
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t arity() const noexcept { return radix_.size(); }
  std::size_t radix(std::size_t k) const { return radix_.at(k); }
  std::size_t stride(std::size_t k) const { return stride_.at(k); }
  const std::string& name(std::size_t k) const { return names_.at(k); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<std::size_t>& radices() const noexcept { return radix_; }

  std::optional<std::size_t> coordinate(const std::string& name) const {
    for (std::size_t k = 0; k < names_.size(); ++k) {
      if (names_[k] == name) return k;
    }
    return std::nullopt;
  }

  std::size_t digit(std::size_t index, std::size_t k) const { return (index / stride_[k]) % radix_[k]; }

  std::vector<int> decode(std::size_t index) const {
    std::vector<int> out(radix_.size());
    for (std::size_t k = 0; k < radix_.size(); ++k) out[k] = static_cast<int>(digit(index, k));
    return out;
  }

  std::size_t encode(const std::vector<int>& tuple) const {
    if (tuple.size() != radix_.size()) {
      throw Error(ErrorCode::InvalidArgument, "tuple arity does not match ground set");
    }
    std::size_t idx = 0;
    for (std::size_t k = 0; k < radix_.size(); ++k) {
      if (tuple[k] < 0 || static_cast<std::size_t>(tuple[k]) >= radix_[k]) {
        throw Error(ErrorCode::InvalidArgument, "tuple entry out of range for '" + names_[k] + "'");
      }
      idx += static_cast<std::size_t>(tuple[k]) * stride_[k];
    }
    return idx;
  }

  bool operator==(const GroundSet& o) const { return names_ == o.names_ && radix_ == o.radix_; }

 private:
  std::vector<std::string> names_;
  std::vector<std::size_t> radix_;
  std::vector<std::size_t> stride_;
  std::size_t size_ = 1;
};

using GroundPtr = std::shared_ptr<const GroundSet>;

inline GroundPtr make_ground(std::vector<std::string> names, std::vector<std::size_t> radix) {
  return std::make_shared<const GroundSet>(std::move(names), std::move(radix));
}

class PartitionField {
 public:
  PartitionField() = default;

  PartitionField(GroundPtr ground, const std::vector<std::uint32_t>& raw) : ground_(std::move(ground)) {
    if (!ground_ || raw.size() != ground_->size()) {
      throw Error(ErrorCode::InvalidArgument, "label vector does not cover the ground set");
    }
    labels_.resize(raw.size());
    std::unordered_map<std::uint32_t, std::uint32_t> renumber;
    for (std::size_t x = 0; x < raw.size(); ++x) {
      auto [it, fresh] = renumber.emplace(raw[x], static_cast<std::uint32_t>(renumber.size()));
      labels_[x] = it->second;
    }
    atoms_ = renumber.size();
  }

  const GroundPtr& ground() const noexcept { return ground_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t atom_count() const noexcept { return atoms_; }
  std::uint32_t label(std::size_t x) const { return labels_[x]; }
  const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }

  std::vector<std::vector<std::size_t>> atoms() const {
    std::vector<std::vector<std::size_t>> out(atoms_);
    for (std::size_t x = 0; x < labels_.size(); ++x) out[labels_[x]].push_back(x);
    return out;
  }

  bool same_ground(const PartitionField& o) const {
    return ground_ == o.ground_ || (ground_ && o.ground_ && *ground_ == *o.ground_);
  }

  bool operator==(const PartitionField& o) const { return same_ground(o) && labels_ == o.labels_; }

 private:
  GroundPtr ground_;
  std::vector<std::uint32_t> labels_;
  std::size_t atoms_ = 0;
};

inline void require_same_ground(const PartitionField& a, const PartitionField& b) {
  if (!a.same_ground(b)) throw Error(ErrorCode::GroundMismatch, "fields live on different ground sets");
}

inline PartitionField trivial_field(const GroundPtr& g) {
  return PartitionField(g, std::vector<std::uint32_t>(g->size(), 0));
}

inline PartitionField discrete_field(const GroundPtr& g) {
  std::vector<std::uint32_t> labels(g->size());
  for (std::size_t x = 0; x < labels.size(); ++x) labels[x] = static_cast<std::uint32_t>(x);
  return PartitionField(g, labels);
}

// Field generated by a total map on the ground set.  `f(x)` returns the value
// at element x, or nullopt where the map is undefined.
template <class F>
PartitionField field_from_map(const GroundPtr& g, F&& f) {
  using Value = typename std::decay_t<decltype(*f(std::size_t{0}))>;
  std::map<Value, std::uint32_t> ids;
  std::vector<std::uint32_t> labels(g->size());
  for (std::size_t x = 0; x < g->size(); ++x) {
    auto v = f(x);
    if (!v) {
      throw Error(ErrorCode::MissingEntry, "map is undefined at element " + std::to_string(x));
    }
    auto [it, fresh] = ids.emplace(*v, static_cast<std::uint32_t>(ids.size()));
    labels[x] = it->second;
  }
  return PartitionField(g, labels);
}

// Field generated by a family of events given as membership masks: two
// elements share an atom iff no event separates them.
inline PartitionField field_from_events(const GroundPtr& g, const std::vector<std::vector<bool>>& events) {
  for (const auto& e : events) {
    if (e.size() != g->size()) throw Error(ErrorCode::GroundMismatch, "event mask does not match ground set");
  }
  return field_from_map(g, [&](std::size_t x) {
    std::vector<bool> sig(events.size());
    for (std::size_t k = 0; k < events.size(); ++k) sig[k] = events[k][x];
    return std::optional<std::vector<bool>>(std::move(sig));
  });
}

// True when a is a sub-field of b: every atom of b lies inside an atom of a.
inline bool is_coarser(const PartitionField& a, const PartitionField& b) {
  require_same_ground(a, b);
  std::vector<std::int64_t> image(b.atom_count(), -1);
  for (std::size_t x = 0; x < a.size(); ++x) {
    auto& slot = image[b.label(x)];
    if (slot < 0) {
      slot = a.label(x);
    } else if (slot != static_cast<std::int64_t>(a.label(x))) {
      return false;
    }
  }
  return true;
}

// is_coarser restricted to the trace of both fields on an event, given as
// a list of element indices.
inline bool is_coarser_on(const PartitionField& a, const PartitionField& b, const std::vector<std::size_t>& event) {
  require_same_ground(a, b);
  std::unordered_map<std::uint32_t, std::uint32_t> image;
  for (std::size_t x : event) {
    auto [it, fresh] = image.emplace(b.label(x), a.label(x));
    if (!fresh && it->second != a.label(x)) return false;
  }
  return true;
}

inline bool is_constant_on(const PartitionField& f, const std::vector<std::size_t>& event) {
  for (std::size_t x : event) {
    if (f.label(x) != f.label(event.front())) return false;
  }
  return true;
}

// Whether the event (membership mask) is a union of atoms of f.
inline bool contains_event(const PartitionField& f, const std::vector<bool>& event) {
  if (event.size() != f.size()) throw Error(ErrorCode::GroundMismatch, "event mask does not match ground set");
  std::vector<std::int8_t> state(f.atom_count(), -1);
  for (std::size_t x = 0; x < f.size(); ++x) {
    auto& s = state[f.label(x)];
    std::int8_t in = event[x] ? 1 : 0;
    if (s < 0) {
      s = in;
    } else if (s != in) {
      return false;
    }
  }
  return true;
}

inline PartitionField join(const PartitionField& a, const PartitionField& b) {
  require_same_ground(a, b);
  std::unordered_map<std::uint64_t, std::uint32_t> ids;
  std::vector<std::uint32_t> labels(a.size());
  for (std::size_t x = 0; x < a.size(); ++x) {
    std::uint64_t key = (static_cast<std::uint64_t>(a.label(x)) << 32) | b.label(x);
    auto [it, fresh] = ids.emplace(key, static_cast<std::uint32_t>(ids.size()));
    labels[x] = it->second;
  }
  return PartitionField(a.ground(), labels);
}

// Field generated by the projection onto the listed coordinates.
inline PartitionField projection_field(const GroundPtr& g, const std::vector<std::size_t>& coords) {
  std::vector<std::uint32_t> labels(g->size());
  for (std::size_t x = 0; x < g->size(); ++x) {
    std::size_t key = 0;
    for (std::size_t k : coords) key = key * g->radix(k) + g->digit(x, k);
    labels[x] = static_cast<std::uint32_t>(key);
  }
  return PartitionField(g, labels);
}

// Lifts a field on a factor of `target` to `target`.  `coords[k]` names the
// target coordinate that carries source coordinate k.
inline PartitionField cylindrical_extension(const PartitionField& f, const GroundPtr& target,
                                            const std::vector<std::size_t>& coords) {
  const GroundSet& src = *f.ground();
  if (coords.size() != src.arity()) {
    throw Error(ErrorCode::NotAFactor, "coordinate map has the wrong arity");
  }
  std::vector<bool> used(target->arity(), false);
  for (std::size_t k = 0; k < coords.size(); ++k) {
    if (coords[k] >= target->arity() || used[coords[k]] || target->radix(coords[k]) != src.radix(k)) {
      throw Error(ErrorCode::NotAFactor, "source coordinate '" + src.name(k) + "' is not a factor of the target");
    }
    used[coords[k]] = true;
  }
  std::vector<std::uint32_t> labels(target->size());
  for (std::size_t x = 0; x < target->size(); ++x) {
    std::size_t s = 0;
    for (std::size_t k = 0; k < coords.size(); ++k) s += target->digit(x, coords[k]) * src.stride(k);
    labels[x] = f.label(s);
  }
  return PartitionField(target, labels);
}

// Pulls a field back along a map from `source` elements to elements of the
// field's ground set.
template <class Map>
PartitionField pullback(const PartitionField& f, const GroundPtr& source, Map&& map) {
  std::vector<std::uint32_t> labels(source->size());
  for (std::size_t x = 0; x < source->size(); ++x) {
    std::size_t y = map(x);
    if (y >= f.size()) throw Error(ErrorCode::GroundMismatch, "pullback map leaves the field's ground set");
    labels[x] = f.label(y);
  }
  return PartitionField(source, labels);
}

// Elements whose listed coordinates agree with those of `anchor`.
inline std::vector<std::size_t> cylinder(const GroundSet& g, std::size_t anchor, const std::vector<std::size_t>& fixed) {
  std::vector<bool> is_fixed(g.arity(), false);
  for (std::size_t k : fixed) is_fixed[k] = true;
  std::size_t base = 0;
  std::vector<std::size_t> free;
  for (std::size_t k = 0; k < g.arity(); ++k) {
    if (is_fixed[k]) {
      base += g.digit(anchor, k) * g.stride(k);
    } else {
      free.push_back(k);
    }
  }
  std::vector<std::size_t> out{base};
  for (std::size_t k : free) {
    std::vector<std::size_t> next;
    next.reserve(out.size() * g.radix(k));
    for (std::size_t b : out) {
      for (std::size_t v = 0; v < g.radix(k); ++v) next.push_back(b + v * g.stride(k));
    }
    out.swap(next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace nst::sigma
