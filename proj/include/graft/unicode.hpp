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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace graft::unicode {

// Decode one code point starting at `pos`. Returns nullopt for malformed or
// truncated sequences (overlongs, surrogates and values above U+10FFFF
// included) and leaves `pos` untouched in that case.
std::optional<char32_t> decode_one(std::string_view s, std::size_t& pos);

bool is_valid_utf8(std::string_view s);

void append_utf8(std::string& out, char32_t cp);

// Replace every malformed byte with U+FFFD.
std::string sanitize_utf8(std::string_view s);

// True for letters that belong to the Latin script (ASCII letters, Latin-1
// letters, Latin Extended blocks, IPA and fullwidth Latin).
bool is_latin_letter(char32_t cp);

// True for code points inside letter-bearing blocks of scripts other than
// Latin (Greek, Cyrillic, Arabic, Indic, CJK, ...). Punctuation, symbols,
// digits and emoji are not alphabetic and return false.
bool is_non_latin_alpha(char32_t cp);

}  // namespace graft::unicode
