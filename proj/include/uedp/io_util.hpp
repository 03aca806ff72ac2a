//
// Copyright 2026 The UeDP-Sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef UEDP_IO_UTIL_HPP_
#define UEDP_IO_UTIL_HPP_

#include <cstdint>
#include <string>

namespace uedp::io {

// Reads a whole file; throws ParseError if unreadable.
std::string read_file(const std::string& path);

// Writes content to path via a temporary file + rename, so readers never see
// a partial file.
void atomic_write(const std::string& path, const std::string& content);

// FNV-1a 64-bit over raw bytes, as a lowercase hex string.
std::string fingerprint(const std::string& bytes);

// Shortest round-trippable decimal form of a double ("inf"/"nan" spelled
// out). Stable across runs, used for all CSV output.
std::string format_double(double v);

}  // namespace uedp::io

#endif  // UEDP_IO_UTIL_HPP_
