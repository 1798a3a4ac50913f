// SPDX-License-Identifier: Apache-2.0
#include "oatok/json_io.hpp"

#include <fstream>
#include <sstream>

namespace oatok {

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const Json& value) {
    write_text_file(path, value.dump(2) + "\n");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
    if (!out) throw FormatError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        rows.push_back(Json(std::vector<double>(m.row(r).begin(), m.row(r).end())));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) throw FormatError("expected a non-empty array of rows");
    const std::size_t cols = j.front().size();
    Matrix m(j.size(), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const auto& row = j[r];
        if (!row.is_array() || row.size() != cols) throw FormatError("ragged matrix rows");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
    }
    return m;
}

namespace env {

void to_json(Json& j, const EnvConfig& c) {
    j = Json{{"dt", c.dt},
             {"kp", c.kp},
             {"kd", c.kd},
             {"max_speed", c.max_speed},
             {"grasp_radius", c.grasp_radius},
             {"goal_radius", c.goal_radius},
             {"expert_tolerance", c.expert_tolerance},
             {"settle_speed", c.settle_speed},
             {"min_object_goal_distance", c.min_object_goal_distance},
             {"episode_cap", c.episode_cap}};
}

void from_json(const Json& j, EnvConfig& c) {
    c.dt = j.value("dt", c.dt);
    c.kp = j.value("kp", c.kp);
    c.kd = j.value("kd", c.kd);
    c.max_speed = j.value("max_speed", c.max_speed);
    c.grasp_radius = j.value("grasp_radius", c.grasp_radius);
    c.goal_radius = j.value("goal_radius", c.goal_radius);
    c.expert_tolerance = j.value("expert_tolerance", c.expert_tolerance);
    c.settle_speed = j.value("settle_speed", c.settle_speed);
    c.min_object_goal_distance = j.value("min_object_goal_distance", c.min_object_goal_distance);
    c.episode_cap = j.value("episode_cap", c.episode_cap);
}

}  // namespace env

namespace data {

void to_json(Json& j, const DatasetConfig& c) {
    j = Json{{"n_trajectories", c.n_trajectories},
             {"T", c.T},
             {"D_a", c.D_a},
             {"family", to_string(c.family)},
             {"noise_std", c.noise_std},
             {"env", c.env}};
}

void from_json(const Json& j, DatasetConfig& c) {
    c.n_trajectories = j.value("n_trajectories", c.n_trajectories);
    c.T = j.value("T", c.T);
    if (j.contains("family")) c.family = family_from_string(j.at("family").get<std::string>());
    // The point-mass family fixes the action size, so D_a may be left out.
    c.D_a = j.value("D_a", c.family == Family::PointMassExpert ? env::kActionDims : c.D_a);
    c.noise_std = j.value("noise_std", c.noise_std);
    if (j.contains("env")) c.env = j.at("env").get<env::EnvConfig>();
}

}  // namespace data
}  // namespace oatok
