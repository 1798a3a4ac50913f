// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "oatok/common.hpp"
#include "oatok/data.hpp"
#include "oatok/env.hpp"

namespace oatok {

using Json = nlohmann::json;

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& value);

/// Writes atomically-enough for our purposes: truncate then write.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

namespace env {
void to_json(Json& j, const EnvConfig& c);
void from_json(const Json& j, EnvConfig& c);
}  // namespace env

namespace data {
void to_json(Json& j, const DatasetConfig& c);
void from_json(const Json& j, DatasetConfig& c);
}  // namespace data

}  // namespace oatok
