#pragma once

// Checkpoint format (text, line oriented):
//
//   basketgen-checkpoint v1
//   meta <key> <value...>            zero or more; value is the rest of line
//   param <name> <rank> <d0> <d1>    followed by one line of values
//   <v0> <v1> ...                    printf %.17g, space separated
//   end
//
// Values round-trip bit-exactly for finite doubles.

#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "basketgen/fsio.hpp"
#include "basketgen/graph.hpp"

namespace basketgen {

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<ParamPtr> params;

  void add_meta(const std::string& key, const std::string& value) {
    meta.emplace_back(key, value);
  }
  std::string meta_one(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    throw Error("checkpoint: missing meta key '" + key + "'");
  }
  std::vector<std::string> meta_all(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : meta)
      if (k == key) out.push_back(v);
    return out;
  }
  ParamPtr find(const std::string& name) const {
    for (const auto& p : params)
      if (p->name == name) return p;
    throw Error("checkpoint: missing parameter '" + name + "'");
  }
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream out;
  out << "basketgen-checkpoint v1\n";
  for (const auto& [k, v] : ckpt.meta) out << "meta " << k << " " << v << "\n";
  char buf[32];
  for (const auto& p : ckpt.params) {
    out << "param " << p->name << " " << p->value.rank();
    for (std::size_t d : p->value.shape) out << " " << d;
    out << "\n";
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", p->value.v[i]);
      out << (i ? " " : "") << buf;
    }
    out << "\n";
  }
  out << "end\n";
  atomic_write_text(path, out.str());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "basketgen-checkpoint v1")
    throw Error("checkpoint: bad header in " + path.string());
  Checkpoint ckpt;
  while (std::getline(in, line)) {
    if (line == "end") return ckpt;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.add_meta(key, value);
    } else if (tag == "param") {
      std::string name;
      std::size_t rank = 0;
      ls >> name >> rank;
      std::vector<std::size_t> shape(rank);
      for (auto& d : shape) ls >> d;
      if (!ls) throw Error("checkpoint: bad param header: " + line);
      Tensor t(shape);
      std::string values;
      if (!std::getline(in, values)) throw Error("checkpoint: truncated values for " + name);
      std::istringstream vs(values);
      for (std::size_t i = 0; i < t.size(); ++i)
        if (!(vs >> t.v[i])) throw Error("checkpoint: short value row for " + name);
      ckpt.params.push_back(std::make_shared<Parameter>(name, std::move(t)));
    } else if (!tag.empty()) {
      throw Error("checkpoint: unexpected line: " + line);
    }
  }
  throw Error("checkpoint: missing end marker in " + path.string());
}

}  // namespace basketgen
