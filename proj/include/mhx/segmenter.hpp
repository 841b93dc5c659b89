#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mhx {

/// A candidate segment produced by the double-space splitting rule.
struct Segment {
    std::string text;         ///< trimmed; never contains a two-space run
    std::size_t start_index;  ///< character offset in the normalized note text
    std::size_t ordinal;      ///< 0-based position among the note's segments
};

/// Tabs, newlines, carriage returns, and other whitespace become single
/// spaces (one character each, offsets preserved), making the two-space run
/// the sole segment delimiter.
std::string normalize_whitespace(std::string_view text);

/// Splits a note at every maximal run of two or more spaces. Pieces are
/// trimmed; empty pieces are dropped. The rule intentionally over-splits
/// templated form blocks ("Period Pattern  Regular  Regular Regular"); that
/// failure mode is covered by tests rather than patched.
std::vector<Segment> segment_note(std::string_view text);

} // namespace mhx
