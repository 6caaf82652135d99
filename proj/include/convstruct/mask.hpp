#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "convstruct/graph.hpp"

namespace convstruct {

// Dense L x L attention mask. Row i is the attending utterance, column j the
// attended one; the target is always the last row/column.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(std::size_t size, std::uint8_t fill = 0)
      : size_(size), cells_(size * size, fill) {}

  std::size_t size() const { return size_; }
  Index target_index() const { return size_ - 1; }

  bool allowed(Index i, Index j) const { return cells_[i * size_ + j] != 0; }
  void set(Index i, Index j, bool value) { cells_[i * size_ + j] = value; }

  // Diagonal ones, last column ones, no empty row.
  bool satisfies_invariants() const;

  // Row-major 0/1 grid, one row per line.
  std::string to_text() const;

  bool operator==(const AttentionMask& other) const = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint8_t> cells_;
};

// `prefix` describes the L-1 history utterances; any parent index >= L-1 is
// rejected with InvalidGraph.
AttentionMask ancestor_mask(const ReplyGraph& prefix, std::size_t size);
AttentionMask depth_limited_mask(const ReplyGraph& prefix, std::size_t size,
                                 std::size_t depth);
AttentionMask temporal_mask(std::size_t size, std::size_t depth);
AttentionMask full_mask(std::size_t size);

struct MaskViolation {
  Index row = 0;
  Index col = 0;
  bool expected = false;
  bool found = false;
};

std::vector<MaskViolation> validate_mask(const AttentionMask& mask,
                                         const ReplyGraph& prefix);

// Mask family used by a model; parameterised variants carry their depth.
struct MaskSpec {
  enum class Kind { kAncestor, kNone, kDepth, kTemporal };
  Kind kind = Kind::kAncestor;
  std::size_t depth = 0;

  static MaskSpec parse(const std::string& text);
  std::string name() const;
  bool needs_graph() const {
    return kind == Kind::kAncestor || kind == Kind::kDepth;
  }
  bool operator==(const MaskSpec&) const = default;
};

AttentionMask build_mask(const MaskSpec& spec, const ReplyGraph& prefix,
                         std::size_t size);

}  // namespace convstruct
