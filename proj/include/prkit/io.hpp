#pragma once

#include "prkit/linalg.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace prkit {

class Regressor;  // models.hpp

inline nlohmann::json vec_to_json(const Vector& v) {
    nlohmann::json j = nlohmann::json::array();
    for (long i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

inline Vector vec_from_json(const nlohmann::json& j) {
    Vector v(j.size());
    long i = 0;
    for (const auto& x : j) v(i++) = x.get<double>();
    return v;
}

inline nlohmann::json mat_to_json(const Matrix& m) {
    nlohmann::json j = nlohmann::json::array();
    for (long r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(row);
    }
    return j;
}

Matrix mat_from_json(const nlohmann::json& j);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double x);

std::string read_text_file(const std::string& path);

/// Write via a temp file + rename so readers never see partial content.
void write_text_file(const std::string& path, const std::string& content);

/// Serialized with sorted keys and a trailing newline; byte-stable.
void save_json(const std::string& path, const nlohmann::json& j);
nlohmann::json load_json(const std::string& path);

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file(const std::string& path);

/// Binary matrix container: u64-LE header length, JSON header (dims, dtype,
/// checksum, caller extras), then row-major float64-LE entries.
void save_matrix_blob(const std::string& path, const Matrix& m,
                      const nlohmann::json& extra_header = {});

struct MatrixBlob {
    Matrix matrix;
    nlohmann::json header;
};
MatrixBlob load_matrix_blob(const std::string& path);

void save_model(const std::string& path, const Regressor& model);
std::unique_ptr<Regressor> load_model(const std::string& path);

}  // namespace prkit
