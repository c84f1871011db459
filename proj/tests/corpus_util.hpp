#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "difc/assembly.hpp"

namespace difc::testutil {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string corpus_path(const std::string& name) {
  return std::string(DIFC_CORPUS_DIR) + "/" + name;
}

struct CorpusLibrary {
  std::string name;
  std::vector<std::string> program_files;
  std::string entry;
  std::size_t n;
  std::size_t registers;
  std::size_t mem;
};

inline std::vector<CorpusLibrary> load_manifest() {
  const auto text = read_file(corpus_path("manifest.json"));
  const auto j = nlohmann::json::parse(text);
  std::vector<CorpusLibrary> out;
  for (const auto& lib : j.at("libraries")) {
    CorpusLibrary c;
    c.name = lib.at("name").get<std::string>();
    for (const auto& p : lib.at("programs"))
      c.program_files.push_back(p.get<std::string>());
    c.entry = lib.at("entry").get<std::string>();
    c.n = lib.at("n").get<std::size_t>();
    c.registers = lib.at("registers").get<std::size_t>();
    c.mem = lib.at("mem").get<std::size_t>();
    out.push_back(std::move(c));
  }
  return out;
}

inline std::string program_name_of(const std::string& file) {
  auto slash = file.find_last_of('/');
  std::string base = slash == std::string::npos ? file : file.substr(slash + 1);
  if (auto dot = base.rfind(".asm"); dot != std::string::npos) base.resize(dot);
  return base;
}

inline Library link_corpus_library(const CorpusLibrary& c) {
  std::vector<SymbolicProgram> programs;
  for (const auto& f : c.program_files) {
    programs.push_back(
        parse(read_file(corpus_path(f)), program_name_of(f), c.n));
  }
  return link(programs, c.n);
}

}  // namespace difc::testutil
