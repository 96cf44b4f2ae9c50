/*
 * Copyright 2026 The refusalkit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef REFUSAL_TEXT_H_
#define REFUSAL_TEXT_H_

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace refusal {

// Whitespace-delimited tokens of `text`.
std::vector<std::string_view> split_whitespace(std::string_view text);

// Answer normalization shared by matching, entropy and vote clustering:
// ASCII lowercase, strip leading/trailing punctuation from every whitespace
// token, drop tokens that become empty, join with single spaces. Only the
// first `window` tokens are kept.
std::string normalize_answer(std::string_view text,
                             size_t window = static_cast<size_t>(-1));

std::string_view trim(std::string_view text);
std::string_view rtrim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

bool starts_with(std::string_view text, std::string_view prefix);
bool ends_with(std::string_view text, std::string_view suffix);

// RFC 4180 field: quoted (with doubled quotes) when it holds , " or newline.
std::string csv_field(std::string_view text);

// Number of Unicode code points in a UTF-8 string.
size_t utf8_length(std::string_view text);

}  // namespace refusal

#endif  // REFUSAL_TEXT_H_
