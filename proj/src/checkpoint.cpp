// SPDX-License-Identifier: Apache-2.0
#include "oatok/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "oatok/common.hpp"

namespace oatok::checkpoint {

void write(const std::filesystem::path& path, const nlohmann::json& header, const std::vector<char>& blob) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    const std::string line = header.dump();
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw FormatError("write failed: " + path.string());
}

File read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty checkpoint " + path.string());
    File f;
    try {
        f.header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad checkpoint header in " + path.string() + ": " + e.what());
    }
    if (!f.header.is_object() || !f.header.contains("scheme")) {
        throw FormatError("checkpoint header lacks a scheme: " + path.string());
    }
    if (f.header.value("format_version", 0) != kFormatVersion) {
        throw FormatError("unsupported checkpoint format_version in " + path.string());
    }
    f.blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return f;
}

nlohmann::json param_table(const nn::ParameterStore& store) {
    auto table = nlohmann::json::array();
    for (const auto& p : store.params()) table.push_back({p.name, p.value.rows, p.value.cols});
    return table;
}

void load_params(nn::ParameterStore& store, const File& file) {
    if (!file.header.contains("params")) throw FormatError("checkpoint has no parameter table");
    if (file.header["params"] != param_table(store)) {
        throw FormatError("checkpoint parameter layout does not match the configured model");
    }
    store.deserialize(file.blob);
}

}  // namespace oatok::checkpoint
