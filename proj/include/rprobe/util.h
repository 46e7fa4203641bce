// Copyright 2026 The rprobe Authors.
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

#ifndef RPROBE_UTIL_H_
#define RPROBE_UTIL_H_

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rprobe {

using Json = nlohmann::json;

std::string read_text_file(const std::filesystem::path& path);
std::vector<unsigned char> read_binary_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`, creating parent
// directories as needed.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& value);

// The value of an integral JSON number that is >= `min`, whether stored
// signed or unsigned; nullopt otherwise.
std::optional<std::size_t> json_count(const Json& v, std::size_t min);

// Throws ConfigError naming the first key of object `j` outside `known`.
void check_known_keys(const Json& j, std::initializer_list<std::string_view> known,
                      std::string_view where);

// Rejects names that cannot serve as a single path component.
void check_path_component(std::string_view name, std::string_view what);

}  // namespace rprobe

#endif  // RPROBE_UTIL_H_
