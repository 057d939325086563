#pragma once

#include <Eigen/Dense>

#include <string>

#include "json.hpp"

namespace rdeep {

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

nlohmann::json to_json_vector(const Eigen::VectorXd& v);
nlohmann::json to_json_matrix(const Eigen::MatrixXd& m);  // row-major nested arrays
Eigen::VectorXd from_json_vector(const nlohmann::json& j);
Eigen::MatrixXd from_json_matrix(const nlohmann::json& j);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace rdeep
