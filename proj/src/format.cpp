#include "rdeep/format.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rdeep/errors.hpp"

namespace rdeep {

std::string format_double(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

nlohmann::json to_json_vector(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

nlohmann::json to_json_matrix(const Eigen::MatrixXd& m) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json_vector(m.row(r).transpose()));
    return a;
}

Eigen::VectorXd from_json_vector(const nlohmann::json& j) {
    if (!j.is_array()) throw FormatError("expected a numeric array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw FormatError("expected a numeric array");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Eigen::MatrixXd from_json_matrix(const nlohmann::json& j) {
    if (!j.is_array()) throw FormatError("expected a nested numeric array");
    if (j.empty()) return Eigen::MatrixXd(0, 0);
    const std::size_t cols = j[0].size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Eigen::VectorXd row = from_json_vector(j[r]);
        if (static_cast<std::size_t>(row.size()) != cols) throw FormatError("ragged matrix rows");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path);
    out << text;
    if (!out) throw FormatError("write failed for " + path);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace rdeep
