#include "prkit/fetch.hpp"

#include "prkit/errors.hpp"
#include "prkit/io.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "json.hpp"

namespace fs = std::filesystem;

namespace prkit {

namespace {

bool is_hex64(const std::string& s) {
    if (s.size() != 64) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isxdigit(c); });
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// Last path segment of the URL, query and fragment stripped.
std::string url_basename(const std::string& url) {
    std::string s = url;
    const auto q = s.find_first_of("?#");
    if (q != std::string::npos) s = s.substr(0, q);
    const auto slash = s.find_last_of('/');
    if (slash != std::string::npos) s = s.substr(slash + 1);
    return s.empty() ? "download" : s;
}

/// Blocking exclusive lock on `<dir>/.lock`, released on destruction.
class EntryLock {
public:
    explicit EntryLock(const fs::path& dir) {
        const std::string lock_path = (dir / ".lock").string();
        fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw IoError("cannot open lock file " + lock_path);
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw IoError("cannot lock " + lock_path);
        }
    }
    ~EntryLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    EntryLock(const EntryLock&) = delete;
    EntryLock& operator=(const EntryLock&) = delete;

private:
    int fd_ = -1;
};

std::string download_file_scheme(const std::string& url) {
    const std::string src = url.substr(std::string("file://").size());
    std::ifstream in(src, std::ios::binary);
    if (!in) throw NetworkError("cannot read " + src);
    std::ostringstream body;
    body << in.rdbuf();
    if (!in && !in.eof()) throw NetworkError("read failed: " + src);
    return body.str();
}

std::string download_http(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto host_start = scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    const std::string root =
        path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path =
        path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(root);
    client.set_follow_location(true);
    client.set_connection_timeout(15, 0);
    client.set_read_timeout(120, 0);

    auto res = client.Get(path);
    if (!res) throw NetworkError(url + ": " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw NetworkError(url + ": HTTP status " + std::to_string(res->status));
    }
    return res->body;
}

}  // namespace

char delimiter_from_string(const std::string& s) {
    if (s == "whitespace") return ' ';
    if (s.size() != 1) {
        throw ConfigError("delimiter must be one character or the word 'whitespace', got '" +
                          s + "'");
    }
    return s[0];
}

std::string delimiter_to_string(char d) {
    return d == ' ' ? "whitespace" : std::string(1, d);
}

std::string fetch_dataset(const std::string& url, const std::string& cache_dir,
                          const std::string& sha256, const std::string& filename) {
    const std::string expected = lowercase(sha256);
    if (!is_hex64(expected)) {
        throw ConfigError(
            "fetch_dataset: checksum must be 64 hex digits; download the file once, verify its "
            "provenance, and pin sha256sum output (got '" + sha256 + "' for " + url + ")");
    }
    if (url.find("://") == std::string::npos) {
        throw ConfigError("fetch_dataset: url has no scheme: " + url);
    }

    const fs::path entry = fs::path(cache_dir) / expected.substr(0, 12);
    std::error_code ec;
    fs::create_directories(entry, ec);
    if (ec) throw IoError("cannot create cache entry " + entry.string() + ": " + ec.message());

    EntryLock lock(entry);

    const fs::path target = entry / (filename.empty() ? url_basename(url) : filename);
    if (fs::exists(target)) {
        const std::string found = sha256_file(target.string());
        if (found == expected) return target.string();
        const fs::path quarantine = target.string() + ".quarantine";
        fs::rename(target, quarantine, ec);
        throw ChecksumMismatch("cached " + target.string() + " has sha256 " + found +
                               ", expected " + expected + "; moved to " + quarantine.string());
    }

    std::string body;
    if (url.rfind("file://", 0) == 0) {
        body = download_file_scheme(url);
    } else if (url.rfind("http://", 0) == 0 || url.rfind("https://", 0) == 0) {
        body = download_http(url);
    } else {
        throw ConfigError("fetch_dataset: unsupported scheme in " + url);
    }

    const std::string found = sha256_hex(body);
    if (found != expected) {
        const fs::path quarantine = target.string() + ".quarantine";
        write_text_file(quarantine.string(), body);
        throw ChecksumMismatch("downloaded " + url + " has sha256 " + found + ", expected " +
                               expected + "; bytes kept at " + quarantine.string());
    }
    write_text_file(target.string(), body);
    return target.string();
}

std::vector<DatasetRecipe> load_recipes(const std::string& manifest_path) {
    const nlohmann::json j = load_json(manifest_path);
    if (!j.is_object() || !j.contains("datasets") || !j["datasets"].is_array()) {
        throw ConfigError(manifest_path + ": expected an object with a 'datasets' array");
    }
    for (const auto& [key, value] : j.items()) {
        if (key != "datasets" && key != "version") {
            throw ConfigError(manifest_path + ": unknown manifest key '" + key + "'");
        }
    }

    std::vector<DatasetRecipe> out;
    for (const auto& e : j["datasets"]) {
        if (!e.is_object()) throw ConfigError(manifest_path + ": dataset entry is not an object");
        DatasetRecipe r;
        for (const auto& [key, value] : e.items()) {
            if (key == "name") {
                r.name = value.get<std::string>();
            } else if (key == "url") {
                r.url = value.get<std::string>();
            } else if (key == "sha256") {
                if (!value.is_null()) r.sha256 = lowercase(value.get<std::string>());
            } else if (key == "filename") {
                r.filename = value.get<std::string>();
            } else if (key == "size_bytes") {
                if (!value.is_null()) r.size_bytes = value.get<long>();
            } else if (key == "target") {
                r.target = value.get<std::string>();
            } else if (key == "header") {
                r.header = value.get<bool>();
            } else if (key == "delimiter") {
                r.delimiter = delimiter_from_string(value.get<std::string>());
            } else if (key == "feature_columns") {
                r.feature_columns = value.get<std::vector<long>>();
            } else if (key == "license_note") {
                r.license_note = value.get<std::string>();
            } else if (key == "protocol_note") {
                r.protocol_note = value.get<std::string>();
            } else {
                throw ConfigError(manifest_path + ": unknown recipe key '" + key + "'");
            }
        }
        if (r.name.empty() || r.url.empty() || r.target.empty()) {
            throw ConfigError(manifest_path + ": recipe '" + r.name +
                              "' needs name, url, and target");
        }
        if (!r.sha256.empty() && !is_hex64(r.sha256)) {
            throw ConfigError(manifest_path + ": recipe '" + r.name +
                              "' has a malformed sha256");
        }
        for (const auto& prev : out) {
            if (prev.name == r.name) {
                throw ConfigError(manifest_path + ": duplicate recipe name '" + r.name + "'");
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

const DatasetRecipe& find_recipe(const std::vector<DatasetRecipe>& recipes,
                                 const std::string& name) {
    for (const auto& r : recipes) {
        if (r.name == name) return r;
    }
    std::string available;
    for (const auto& r : recipes) {
        if (!available.empty()) available += ", ";
        available += r.name;
    }
    throw ConfigError("no dataset recipe named '" + name + "' (available: " + available + ")");
}

}  // namespace prkit
