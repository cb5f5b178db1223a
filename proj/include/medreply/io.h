/*
 * Copyright (C) 2026 The medreply Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MEDREPLY_IO_H_
#define MEDREPLY_IO_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace medreply {

std::string ReadFile(const std::filesystem::path& path);

// Splits on '\n'; a trailing '\r' is stripped from each line. The final
// empty segment after a terminating newline is not returned.
std::vector<std::string> ReadLines(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written file. Parent directories are created.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view data);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string Fingerprint(std::string_view data);
std::string FileFingerprint(const std::filesystem::path& path);

// Shortest round-trip decimal for a double, stable across runs.
std::string FormatDouble(double value);

}  // namespace medreply

#endif  // MEDREPLY_IO_H_
