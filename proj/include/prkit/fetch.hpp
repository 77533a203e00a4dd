#pragma once

#include <string>
#include <vector>

namespace prkit {

/// One downloadable dataset described by the recipes manifest: where the file
/// lives, how to verify it, and how to parse it. `sha256` stays empty until a
/// maintainer has downloaded the file once, checked its provenance, and pinned
/// the digest; fetching refuses to run on an unpinned recipe.
struct DatasetRecipe {
    std::string name;
    std::string url;
    std::string sha256;
    std::string filename;  // cache name; empty means the url basename
    long size_bytes = -1;  // -1 when not yet recorded

    // Parse instructions for load_csv.
    std::string target;
    bool header = false;
    char delimiter = ',';
    std::vector<long> feature_columns;

    std::string license_note;
    std::string protocol_note;
};

/// Download-once cache. The entry for a file lives at
/// `<cache_dir>/<first 12 hex of sha256>/<filename>`, where `filename`
/// defaults to the url basename; a hit is re-verified against the checksum
/// and returned without touching the network.
/// On a miss the file is downloaded (http, https, or file scheme), written
/// atomically, and verified; a digest mismatch moves the bytes aside to a
/// `.quarantine` file and throws ChecksumMismatch. Concurrent fetchers
/// serialize on a per-entry lock file so nothing downloads twice.
///
/// `sha256` must be the full 64-hex-digit digest; anything else is a
/// ConfigError. Unreachable sources throw NetworkError, but only on a miss.
std::string fetch_dataset(const std::string& url, const std::string& cache_dir,
                          const std::string& sha256, const std::string& filename = "");

/// Parse the recipes manifest (one JSON object per dataset under "datasets").
/// Rejects unknown keys, duplicate names, and missing required fields.
std::vector<DatasetRecipe> load_recipes(const std::string& manifest_path);

/// Look up a recipe by name; the error lists what is available.
const DatasetRecipe& find_recipe(const std::vector<DatasetRecipe>& recipes,
                                 const std::string& name);

/// Manifest/config spelling of a load_csv delimiter: a single character, or
/// the word "whitespace" for the space-and-tab-run mode.
char delimiter_from_string(const std::string& s);
std::string delimiter_to_string(char d);

}  // namespace prkit
