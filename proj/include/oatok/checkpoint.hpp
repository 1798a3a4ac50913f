// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "oatok/nn/tensor.hpp"

namespace oatok::checkpoint {

// File layout: one line of compact JSON metadata, '\n', then an optional flat
// little-endian float32 parameter blob. Tokenizers without weights (bin, fast)
// write the header line only.

inline constexpr int kFormatVersion = 1;

struct File {
    nlohmann::json header;
    std::vector<char> blob;
};

void write(const std::filesystem::path& path, const nlohmann::json& header, const std::vector<char>& blob = {});
File read(const std::filesystem::path& path);

/// [[name, rows, cols], ...] in registration order.
nlohmann::json param_table(const nn::ParameterStore& store);
/// Checks the stored table against the store layout and loads the blob.
void load_params(nn::ParameterStore& store, const File& file);

}  // namespace oatok::checkpoint
