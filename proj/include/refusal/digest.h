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

#ifndef REFUSAL_DIGEST_H_
#define REFUSAL_DIGEST_H_

#include <filesystem>
#include <string>
#include <string_view>

namespace refusal {

// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// Lowercase hex SHA-256 of a file's contents. Throws ParseError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

// Reads a whole file; throws ParseError naming the path on failure.
std::string read_file(const std::filesystem::path& path);

// Writes bytes, creating parent directories. Throws ValidationError on failure.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace refusal

#endif  // REFUSAL_DIGEST_H_
