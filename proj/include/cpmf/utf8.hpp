#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cpmf::utf8 {

// Byte length of the UTF-8 sequence starting at s[pos], or 0 if the bytes at
// pos do not form a valid sequence (including overlong and surrogate forms).
std::size_t sequence_length(std::string_view s, std::size_t pos);

bool is_valid(std::string_view s);

// Offsets of every code point start, plus a final entry equal to s.size().
// Throws Utf8Error on invalid input.
std::vector<std::size_t> codepoint_offsets(std::string_view s);

std::size_t codepoint_count(std::string_view s);

// Decodes the code point starting at s[pos]; advances pos past it.
char32_t decode_at(std::string_view s, std::size_t& pos);

// Like decode_at, but yields U+FFFD for an invalid byte instead of throwing
// (advancing one byte). Metric code uses this so model output that splices
// raw fallback bytes cannot crash a scorer.
char32_t decode_at_lenient(std::string_view s, std::size_t& pos);

std::string encode(char32_t cp);

}  // namespace cpmf::utf8
