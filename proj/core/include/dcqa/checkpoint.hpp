#pragma once

#include "dcqa/parameters.hpp"

#include <string>

namespace dcqa {

// Versioned binary tensor archive: magic + version, a JSON header with
// caller metadata and the tensor manifest, then raw little-endian
// doubles in manifest order. Round-trips weights exactly.

inline constexpr std::uint32_t kArchiveVersion = 1;

void save_weights(const std::string& path, const ParameterStore& store,
                  const std::string& meta_json);

// Overwrites values of parameters already present in `store`, matching
// the manifest by name (every manifest entry must exist with the same
// shape). Returns the archive's metadata JSON string.
std::string load_weights(const std::string& path, ParameterStore& store);

// Reads only the metadata JSON (no tensor payload validation).
std::string peek_weights_meta(const std::string& path);

}  // namespace dcqa
