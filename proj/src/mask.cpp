#include "convstruct/mask.hpp"

#include <algorithm>

#include "convstruct/error.hpp"

namespace convstruct {

bool AttentionMask::satisfies_invariants() const {
  for (Index i = 0; i < size_; ++i) {
    if (!allowed(i, i) || !allowed(i, size_ - 1)) return false;
  }
  return true;
}

std::string AttentionMask::to_text() const {
  std::string out;
  out.reserve(size_ * (size_ + 1));
  for (Index i = 0; i < size_; ++i) {
    for (Index j = 0; j < size_; ++j) out += allowed(i, j) ? '1' : '0';
    out += '\n';
  }
  return out;
}

namespace {

void check_prefix(const ReplyGraph& prefix, std::size_t size) {
  if (size == 0) throw Error(ErrorKind::kShapeError, "mask size must be >= 1");
  const std::size_t history = size - 1;
  if (prefix.size() > history) {
    // Rows beyond the history are allowed only if they carry no edges.
    for (Index i = history; i < prefix.size(); ++i) {
      if (!prefix.parents(i).empty()) {
        throw Error(ErrorKind::kInvalidGraph,
                    "prefix graph annotates index " + std::to_string(i) +
                        " >= L-1 = " + std::to_string(history));
      }
    }
  }
  for (Index i = 0; i < std::min(prefix.size(), history); ++i) {
    for (Index p : prefix.parents(i)) {
      if (p >= history) {
        throw Error(ErrorKind::kInvalidGraph,
                    "prefix graph references index " + std::to_string(p) +
                        " >= L-1 = " + std::to_string(history));
      }
    }
  }
}

AttentionMask base_mask(std::size_t size) {
  AttentionMask m(size);
  for (Index i = 0; i < size; ++i) {
    m.set(i, i, true);
    m.set(i, size - 1, true);
  }
  return m;
}

}  // namespace

AttentionMask ancestor_mask(const ReplyGraph& prefix, std::size_t size) {
  check_prefix(prefix, size);
  AttentionMask m = base_mask(size);
  const std::size_t history = std::min(prefix.size(), size - 1);
  for (Index i = 0; i < history; ++i) {
    for (Index a : ancestors(prefix, i)) m.set(i, a, true);
  }
  return m;
}

AttentionMask depth_limited_mask(const ReplyGraph& prefix, std::size_t size,
                                 std::size_t depth) {
  if (depth == 0) {
    throw Error(ErrorKind::kInvalidConfig, "ancestor depth must be >= 1");
  }
  check_prefix(prefix, size);
  AttentionMask m = base_mask(size);
  const std::size_t history = std::min(prefix.size(), size - 1);
  for (Index i = 0; i < history; ++i) {
    for (Index a : ancestors(prefix, i)) {
      auto d = graph_distance(prefix, i, a);
      if (d && *d <= depth) m.set(i, a, true);
    }
  }
  return m;
}

AttentionMask temporal_mask(std::size_t size, std::size_t depth) {
  if (size == 0) throw Error(ErrorKind::kShapeError, "mask size must be >= 1");
  AttentionMask m = base_mask(size);
  for (Index i = 0; i + 1 < size; ++i) {
    const Index first = i >= depth ? i - depth : 0;
    for (Index j = first; j < i; ++j) m.set(i, j, true);
  }
  return m;
}

AttentionMask full_mask(std::size_t size) {
  if (size == 0) throw Error(ErrorKind::kShapeError, "mask size must be >= 1");
  return AttentionMask(size, 1);
}

std::vector<MaskViolation> validate_mask(const AttentionMask& mask,
                                         const ReplyGraph& prefix) {
  if (mask.size() == 0 || prefix.size() > mask.size()) {
    throw Error(ErrorKind::kShapeError,
                "mask of size " + std::to_string(mask.size()) +
                    " cannot cover prefix of size " +
                    std::to_string(prefix.size()));
  }
  const AttentionMask expected = ancestor_mask(prefix, mask.size());
  std::vector<MaskViolation> out;
  for (Index i = 0; i < mask.size(); ++i) {
    for (Index j = 0; j < mask.size(); ++j) {
      if (mask.allowed(i, j) != expected.allowed(i, j)) {
        out.push_back({i, j, expected.allowed(i, j), mask.allowed(i, j)});
      }
    }
  }
  return out;
}

MaskSpec MaskSpec::parse(const std::string& text) {
  MaskSpec spec;
  auto number = [&](std::size_t prefix_len) {
    try {
      return static_cast<std::size_t>(std::stoul(text.substr(prefix_len)));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kInvalidConfig, "bad mask spec '" + text + "'");
    }
  };
  if (text == "ancestor") {
    spec.kind = Kind::kAncestor;
  } else if (text == "none" || text == "full") {
    spec.kind = Kind::kNone;
  } else if (text.rfind("depth", 0) == 0) {
    spec.kind = Kind::kDepth;
    spec.depth = number(text.size() > 5 && text[5] == '=' ? 6 : 5);
    if (spec.depth == 0) {
      throw Error(ErrorKind::kInvalidConfig, "ancestor depth must be >= 1");
    }
  } else if (text.rfind("temporal", 0) == 0) {
    spec.kind = Kind::kTemporal;
    spec.depth = number(text.size() > 8 && text[8] == '=' ? 9 : 8);
  } else {
    throw Error(ErrorKind::kInvalidConfig, "bad mask spec '" + text + "'");
  }
  return spec;
}

std::string MaskSpec::name() const {
  switch (kind) {
    case Kind::kAncestor: return "ancestor";
    case Kind::kNone: return "none";
    case Kind::kDepth: return "depth" + std::to_string(depth);
    case Kind::kTemporal: return "temporal" + std::to_string(depth);
  }
  return "ancestor";
}

AttentionMask build_mask(const MaskSpec& spec, const ReplyGraph& prefix,
                         std::size_t size) {
  switch (spec.kind) {
    case MaskSpec::Kind::kAncestor: return ancestor_mask(prefix, size);
    case MaskSpec::Kind::kNone: return full_mask(size);
    case MaskSpec::Kind::kDepth:
      return depth_limited_mask(prefix, size, spec.depth);
    case MaskSpec::Kind::kTemporal: return temporal_mask(size, spec.depth);
  }
  return ancestor_mask(prefix, size);
}

}  // namespace convstruct
