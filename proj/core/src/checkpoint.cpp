#include "dcqa/checkpoint.hpp"

#include "dcqa/errors.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <vector>

namespace dcqa {

namespace {

constexpr char kMagic[8] = {'D', 'C', 'Q', 'A', 'C', 'K', 'P', 'T'};

struct Header {
  nlohmann::json meta;
  nlohmann::json manifest;
};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

Header read_header(std::istream& is, const std::string& path) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a dcqa checkpoint archive: " + path);
  std::uint32_t version = read_u32(is);
  if (version != kArchiveVersion)
    throw IoError("unsupported archive version " + std::to_string(version) + " in " + path);
  std::uint64_t json_len = read_u64(is);
  std::string blob(json_len, '\0');
  is.read(blob.data(), static_cast<std::streamsize>(json_len));
  if (!is) throw IoError("truncated archive header: " + path);
  nlohmann::json root = nlohmann::json::parse(blob, nullptr, false);
  if (root.is_discarded() || !root.contains("tensors"))
    throw IoError("corrupt archive header: " + path);
  return Header{root.value("meta", nlohmann::json::object()), root["tensors"]};
}

}  // namespace

void save_weights(const std::string& path, const ParameterStore& store,
                  const std::string& meta_json) {
  nlohmann::json root;
  root["meta"] = meta_json.empty() ? nlohmann::json::object()
                                   : nlohmann::json::parse(meta_json);
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter& p = store.at(i);
    tensors.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  root["tensors"] = tensors;
  std::string blob = root.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kArchiveVersion);
  write_u64(os, blob.size());
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Mat& v = store.at(i).value;
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c) {
        double x = v(r, c);
        os.write(reinterpret_cast<const char*>(&x), sizeof(x));
      }
  }
  if (!os) throw IoError("write failed: " + path);
}

std::string load_weights(const std::string& path, ParameterStore& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  Header h = read_header(is, path);
  for (const auto& entry : h.manifest) {
    const std::string name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    Parameter* p = store.find(name);
    if (p == nullptr) throw IoError("archive tensor has no destination parameter: " + name);
    if (p->value.rows() != rows || p->value.cols() != cols)
      throw IoError("archive tensor shape mismatch for " + name);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        double x = 0.0;
        is.read(reinterpret_cast<char*>(&x), sizeof(x));
        p->value(r, c) = x;
      }
  }
  if (!is) throw IoError("truncated archive payload: " + path);
  return h.meta.dump();
}

std::string peek_weights_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return read_header(is, path).meta.dump();
}

}  // namespace dcqa
