#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "seqlrp/model.hpp"

namespace seqlrp {

// Weights file: self-describing binary container.
//   magic "SQLRPW1\n", six config integers (u32 LE), block count (u32 LE),
//   then per parameter: name (u32 length + bytes), rows (u64), cols (u64),
//   rows*cols doubles, little-endian IEEE-754.
namespace wire {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>((v >> (8 * k)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>((v >> (8 * k)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(out, v);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("weights file: truncated");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[k]) << (8 * k);
  return v;
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError("weights file: truncated");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return v;
}

inline double get_f64(std::istream& in) {
  std::uint64_t v = get_u64(in);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace wire

inline constexpr char kWeightsMagic[8] = {'S', 'Q', 'L', 'R', 'P', 'W', '1', '\n'};

inline void save_weights(const std::string& path, const ModelConfig& cfg, const ModelWeights& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_weights: cannot write " + path);
  out.write(kWeightsMagic, 8);
  for (int v : {cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.max_input_len,
                cfg.max_output_len, cfg.maps_per_text}) {
    wire::put_u32(out, static_cast<std::uint32_t>(v));
  }
  ModelWeights copy = weights;
  auto params = named_params(copy);
  wire::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    wire::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    wire::put_u64(out, p.rows);
    wire::put_u64(out, p.cols);
    for (std::size_t k = 0; k < p.count(); ++k) wire::put_f64(out, p.data[k]);
  }
  if (!out) throw DataError("save_weights: write failed for " + path);
}

struct LoadedModel {
  ModelConfig config;
  ModelWeights weights;
};

inline LoadedModel load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_weights: cannot read " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kWeightsMagic, 8) != 0) {
    throw DataError("load_weights: " + path + " is not a weights file");
  }
  LoadedModel m;
  m.config.vocab_size = static_cast<int>(wire::get_u32(in));
  m.config.embed_dim = static_cast<int>(wire::get_u32(in));
  m.config.hidden_dim = static_cast<int>(wire::get_u32(in));
  m.config.max_input_len = static_cast<int>(wire::get_u32(in));
  m.config.max_output_len = static_cast<int>(wire::get_u32(in));
  m.config.maps_per_text = static_cast<int>(wire::get_u32(in));
  m.config.validate();
  m.weights = zero_weights(m.config);

  std::map<std::string, NamedParam> expected;
  for (auto& p : named_params(m.weights)) expected.emplace(p.name, p);

  const std::uint32_t blocks = wire::get_u32(in);
  if (blocks != expected.size()) {
    throw DataError("load_weights: expected " + std::to_string(expected.size()) +
                    " parameter blocks, file has " + std::to_string(blocks));
  }
  for (std::uint32_t bi = 0; bi < blocks; ++bi) {
    const std::uint32_t name_len = wire::get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw DataError("weights file: truncated");
    const std::uint64_t rows = wire::get_u64(in);
    const std::uint64_t cols = wire::get_u64(in);
    auto it = expected.find(name);
    if (it == expected.end()) throw DataError("load_weights: unknown parameter block '" + name + "'");
    NamedParam& p = it->second;
    if (rows != p.rows || cols != p.cols) {
      throw DataError("load_weights: block '" + name + "' is " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", config requires " + std::to_string(p.rows) + "x" +
                      std::to_string(p.cols));
    }
    for (std::size_t k = 0; k < p.count(); ++k) p.data[k] = wire::get_f64(in);
    expected.erase(it);
  }
  if (!expected.empty()) {
    throw DataError("load_weights: missing parameter block '" + expected.begin()->first + "'");
  }
  return m;
}

}  // namespace seqlrp
