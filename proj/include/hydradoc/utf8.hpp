#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hydradoc::utf8 {

// Decodes UTF-8 into unicode scalar values. Invalid sequences become U+FFFD.
std::u32string decode(std::string_view bytes);

std::string encode(std::u32string_view code_points);
void append(std::string& out, char32_t cp);

// Re-encodes after lossy decoding so the result is always valid UTF-8.
std::string sanitize(std::string_view bytes);

std::size_t length(std::string_view bytes);

}  // namespace hydradoc::utf8
