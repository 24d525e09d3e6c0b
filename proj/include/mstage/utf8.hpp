#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mstage::utf8 {

/// Decodes UTF-8 into Unicode scalar values. Invalid sequences decode to
/// U+FFFD one byte at a time, so the result is never shorter than the number
/// of well-formed scalars.
std::u32string decode(std::string_view text);

std::string encode(std::u32string_view text);

/// Number of Unicode scalar values in `text`.
std::size_t scalar_count(std::string_view text);

/// ASCII-only whitespace trim.
std::string_view trim(std::string_view text);

}  // namespace mstage::utf8
