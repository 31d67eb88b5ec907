// Copyright 2026 The graft Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "graft/unicode.hpp"

#include <array>
#include <utility>

namespace graft::unicode {

std::optional<char32_t> decode_one(std::string_view s, std::size_t& pos) {
  if (pos >= s.size()) return std::nullopt;
  const auto b0 = static_cast<unsigned char>(s[pos]);
  int len;
  char32_t cp;
  char32_t min;
  if (b0 < 0x80) {
    ++pos;
    return b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2, cp = b0 & 0x1F, min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3, cp = b0 & 0x0F, min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4, cp = b0 & 0x07, min = 0x10000;
  } else {
    return std::nullopt;
  }
  if (pos + len > s.size()) return std::nullopt;
  for (int i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
  pos += len;
  return cp;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t pos = 0;
  while (pos < s.size()) {
    if (!decode_one(s, pos)) return false;
  }
  return true;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string sanitize_utf8(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t start = pos;
    if (decode_one(s, pos)) {
      out.append(s.substr(start, pos - start));
    } else {
      append_utf8(out, 0xFFFD);
      ++pos;
    }
  }
  return out;
}

namespace {

using Range = std::pair<char32_t, char32_t>;

constexpr std::array kLatinRanges{
    Range{0x0041, 0x005A}, Range{0x0061, 0x007A}, Range{0x00AA, 0x00AA}, Range{0x00BA, 0x00BA},
    Range{0x00C0, 0x00D6}, Range{0x00D8, 0x00F6}, Range{0x00F8, 0x024F}, Range{0x0250, 0x02AF},
    Range{0x1D00, 0x1DBF}, Range{0x1E00, 0x1EFF}, Range{0x2C60, 0x2C7F}, Range{0xA720, 0xA7FF},
    Range{0xAB30, 0xAB6F}, Range{0xFB00, 0xFB06}, Range{0xFF21, 0xFF3A}, Range{0xFF41, 0xFF5A},
};

// Blocks whose assigned letters belong to non-Latin scripts. Coarse on
// purpose: a few symbols inside these blocks are counted as letters.
constexpr std::array kNonLatinAlphaRanges{
    Range{0x0370, 0x03FF},    // Greek and Coptic
    Range{0x0400, 0x052F},    // Cyrillic + supplement
    Range{0x0530, 0x058F},    // Armenian
    Range{0x0590, 0x05FF},    // Hebrew
    Range{0x0600, 0x06FF},    // Arabic
    Range{0x0700, 0x08FF},    // Syriac .. Arabic Extended-A
    Range{0x0900, 0x0DFF},    // Indic scripts
    Range{0x0E00, 0x0FFF},    // Thai, Lao, Tibetan
    Range{0x1000, 0x109F},    // Myanmar
    Range{0x10A0, 0x10FF},    // Georgian
    Range{0x1100, 0x11FF},    // Hangul Jamo
    Range{0x1200, 0x139F},    // Ethiopic
    Range{0x13A0, 0x18AF},    // Cherokee .. Mongolian
    Range{0x18B0, 0x1CFF},    // misc South/Southeast Asian
    Range{0x1F00, 0x1FFF},    // Greek Extended
    Range{0x2C00, 0x2C5F},    // Glagolitic
    Range{0x2C80, 0x2DFF},    // Coptic, Georgian supplement, Tifinagh, Ethiopic ext
    Range{0x2E80, 0x2FDF},    // CJK radicals
    Range{0x3040, 0x31FF},    // Kana, Bopomofo, Hangul compat
    Range{0x3400, 0x4DBF},    // CJK Ext A
    Range{0x4E00, 0x9FFF},    // CJK Unified
    Range{0xA000, 0xA71F},    // Yi, Lisu, Vai, Cyrillic ext B, Bamum
    Range{0xA800, 0xAB2F},    // misc scripts
    Range{0xAB70, 0xD7FF},    // Cherokee supp, Meetei, Hangul syllables
    Range{0xF900, 0xFAFF},    // CJK compatibility
    Range{0xFB13, 0xFDFF},    // Armenian/Hebrew/Arabic presentation forms
    Range{0xFE70, 0xFEFF},    // Arabic presentation forms B
    Range{0xFF66, 0xFFDC},    // halfwidth Kana/Hangul
    Range{0x10000, 0x1D3FF},  // SMP scripts
    Range{0x1E000, 0x1EFFF},  // SMP scripts (Adlam, Mende, ...)
    Range{0x20000, 0x3134F},  // CJK extensions
};

template <std::size_t N>
bool in_ranges(const std::array<Range, N>& ranges, char32_t cp) {
  for (const auto& [lo, hi] : ranges) {
    if (cp >= lo && cp <= hi) return true;
  }
  return false;
}

}  // namespace

bool is_latin_letter(char32_t cp) { return in_ranges(kLatinRanges, cp); }

bool is_non_latin_alpha(char32_t cp) {
  if (is_latin_letter(cp)) return false;
  return in_ranges(kNonLatinAlphaRanges, cp);
}

}  // namespace graft::unicode
