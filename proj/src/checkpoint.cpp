#include "adaptkf/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "adaptkf/errors.hpp"

namespace adaptkf {

namespace {
constexpr const char* kMagic = "ADAPTKF_CKPT";
constexpr int kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const ParamSet& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << kMagic << " " << kVersion << "\n";
  out << meta.dump() << "\n";
  out << tensors.size() << "\n";
  char buf[20];
  for (const auto& [name, t] : tensors) {
    out << name << " " << t.rows() << " " << t.cols() << "\n";
    const std::vector<double>& v = t.value();
    for (size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(std::bit_cast<uint64_t>(v[i])));
      out << buf << (i + 1 == v.size() ? "" : " ");
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed for checkpoint: " + path);
}

std::pair<nlohmann::json, ParamSet> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic || version != kVersion) {
    throw IoError("bad checkpoint header in " + path);
  }
  std::string line;
  std::getline(in, line);  // rest of header line
  std::getline(in, line);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint meta in " + path + ": " + e.what());
  }
  size_t count = 0;
  in >> count;
  ParamSet tensors;
  for (size_t k = 0; k < count; ++k) {
    std::string name;
    int rows = 0, cols = 0;
    in >> name >> rows >> cols;
    if (!in || rows < 0 || cols < 0) throw IoError("truncated checkpoint: " + path);
    Tensor t(rows, cols, true);
    for (int i = 0; i < rows * cols; ++i) {
      std::string word;
      in >> word;
      if (!in) throw IoError("truncated checkpoint values: " + path);
      uint64_t bits = std::stoull(word, nullptr, 16);
      t.value()[static_cast<size_t>(i)] = std::bit_cast<double>(bits);
    }
    tensors[name] = t;
  }
  return {meta, tensors};
}

}  // namespace adaptkf
