#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "clperf/corpus.hpp"

namespace fixtures {

namespace fs = std::filesystem;

fs::path data_dir() { return fs::path(CLPERF_TEST_DATA) / "fixtures"; }

fs::path path(const std::string& rel) { return data_dir() / rel; }

std::string read(const std::string& rel) { return read_file(path(rel)); }

Kernel load(const std::string& rel) {
  const auto r = clperf::ingest_text(fs::path(rel).stem().string(), read(rel));
  if (r.kernels.empty()) throw std::runtime_error("no kernel in fixture " + rel);
  Kernel k;
  k.file = rel;
  k.entry = r.kernels[0].entry_name;
  k.source = r.kernels[0].normalized_text;
  k.sig = clperf::parse_signature(k.source, k.entry);
  return k;
}

std::vector<std::string> list(const std::string& subdir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(path(subdir))) {
    if (e.path().extension() == ".cl") out.push_back(subdir + "/" + e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::int64_t> skewed_group_n_wg() {
  std::vector<std::int64_t> n;
  for (int i = 0; i < 60; ++i) n.push_back(std::llround(std::pow(800.0, i / 59.0)));
  for (std::int64_t big : {9000, 12000, 12800}) n.push_back(big);
  return n;
}

fs::path golden_dir() { return fs::path(CLPERF_TEST_DATA) / "golden"; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace fixtures
