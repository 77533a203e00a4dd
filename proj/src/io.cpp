#include "prkit/io.hpp"

#include "prkit/errors.hpp"
#include "prkit/models.hpp"

#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "serialized blobs are little-endian; big-endian hosts unsupported");

namespace prkit {

Matrix mat_from_json(const nlohmann::json& j) {
    const long rows = static_cast<long>(j.size());
    if (rows == 0) return Matrix(0, 0);
    const long cols = static_cast<long>(j.at(0).size());
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<long>(row.size()) != cols) {
            throw ParseError("matrix json: ragged rows", r, -1);
        }
        for (long c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

void write_text_file(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

void save_json(const std::string& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

nlohmann::json load_json(const std::string& path) {
    return nlohmann::json::parse(read_text_file(path));
}

std::string sha256_hex(const void* data, std::size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    if (EVP_Digest(data, len, digest, &digest_len, EVP_sha256(), nullptr) != 1) {
        throw IoError("sha256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out(static_cast<std::size_t>(digest_len) * 2, '0');
    for (unsigned int i = 0; i < digest_len; ++i) {
        out[2 * i] = hex[digest[i] >> 4];
        out[2 * i + 1] = hex[digest[i] & 0xf];
    }
    return out;
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::string sha256_file(const std::string& path) {
    const std::string bytes = read_text_file(path);
    return sha256_hex(bytes);
}

void save_matrix_blob(const std::string& path, const Matrix& m,
                      const nlohmann::json& extra_header) {
    // Row-major copy so readers need no stride knowledge.
    std::string data(static_cast<std::size_t>(m.size()) * sizeof(double), '\0');
    {
        double* out = reinterpret_cast<double*>(data.data());
        for (long r = 0; r < m.rows(); ++r)
            for (long c = 0; c < m.cols(); ++c) *out++ = m(r, c);
    }
    nlohmann::json header = extra_header.is_object() ? extra_header : nlohmann::json::object();
    header["rows"] = m.rows();
    header["cols"] = m.cols();
    header["dtype"] = "float64-le";
    header["sha256"] = sha256_hex(data);
    const std::string header_str = header.dump();

    std::string blob;
    std::uint64_t len = header_str.size();
    blob.append(reinterpret_cast<const char*>(&len), sizeof(len));
    blob += header_str;
    blob += data;
    write_text_file(path, blob);
}

MatrixBlob load_matrix_blob(const std::string& path) {
    const std::string blob = read_text_file(path);
    if (blob.size() < sizeof(std::uint64_t)) throw ParseError("matrix blob too short: " + path, 0, 0);
    std::uint64_t len = 0;
    std::memcpy(&len, blob.data(), sizeof(len));
    if (blob.size() < sizeof(len) + len) throw ParseError("matrix blob truncated header: " + path, 0, 0);

    MatrixBlob out;
    out.header = nlohmann::json::parse(blob.substr(sizeof(len), len));
    const long rows = out.header.at("rows").get<long>();
    const long cols = out.header.at("cols").get<long>();
    if (out.header.at("dtype").get<std::string>() != "float64-le") {
        throw ParseError("matrix blob: unsupported dtype in " + path, 0, 0);
    }
    const std::size_t data_off = sizeof(len) + len;
    const std::size_t need = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * sizeof(double);
    if (blob.size() - data_off != need) {
        throw ParseError("matrix blob: data size mismatch in " + path, 0, 0);
    }
    const std::string data = blob.substr(data_off);
    if (sha256_hex(data) != out.header.at("sha256").get<std::string>()) {
        throw ChecksumMismatch("matrix blob checksum mismatch: " + path);
    }
    out.matrix.resize(rows, cols);
    const double* in = reinterpret_cast<const double*>(data.data());
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) out.matrix(r, c) = *in++;
    return out;
}

void save_model(const std::string& path, const Regressor& model) {
    save_json(path, model_to_json(model));
}

std::unique_ptr<Regressor> load_model(const std::string& path) {
    return model_from_json(load_json(path));
}

}  // namespace prkit
