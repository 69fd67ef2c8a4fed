#pragma once

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqlrp/errors.hpp"

namespace seqlrp {

// Token table with dense ids. The first three ids are reserved, in fixed
// order: PAD/UNKNOWN (one shared id, padding uses the UNKNOWN token),
// the start marker <s> and the stop marker.
struct Vocab {
  static constexpr int kPadUnk = 0;
  static constexpr int kStart = 1;
  static constexpr int kStop = 2;
  static constexpr int kNumSpecials = 3;

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  static Vocab with_specials() {
    Vocab v;
    v.push("<unk>");
    v.push("<s>");
    v.push("</s>");
    return v;
  }

  int size() const { return static_cast<int>(tokens.size()); }

  int push(const std::string& tok) {
    if (index.count(tok)) throw DataError("Vocab: duplicate token '" + tok + "'");
    int id = size();
    tokens.push_back(tok);
    index.emplace(tok, id);
    return id;
  }

  // Unknown tokens map to the shared PAD/UNKNOWN id.
  int lookup(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? kPadUnk : it->second;
  }

  const std::string& token_of(int id) const {
    if (id < 0 || id >= size()) throw DataError("Vocab: id " + std::to_string(id) + " out of range");
    return tokens[static_cast<std::size_t>(id)];
  }

  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  // One token per line; line number = id.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("Vocab: cannot write " + path);
    for (const auto& tok : tokens) out << tok << "\n";
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("Vocab: cannot read " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      v.push(line);
    }
    if (v.size() < kNumSpecials) {
      throw DataError("Vocab: file " + path + " holds fewer than the " +
                      std::to_string(kNumSpecials) + " reserved specials");
    }
    return v;
  }
};

}  // namespace seqlrp
