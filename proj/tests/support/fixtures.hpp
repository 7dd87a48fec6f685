#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clperf/sigparse.hpp"

namespace fixtures {

std::filesystem::path data_dir();
std::filesystem::path path(const std::string& rel);
std::string read(const std::string& rel);

struct Kernel {
  std::string file;
  std::string entry;
  std::string source;  // normalized
  clperf::KernelSignature sig;
};

// First kernel of a fixture file, normalized and parsed.
Kernel load(const std::string& rel);

// Every .cl file directly under a fixture subdirectory, sorted, as relative paths.
std::vector<std::string> list(const std::string& subdir);

// Workgroup counts for one (kernel, lsize=128) group whose times crowd the low end:
// 60 counts spaced geometrically over [1, 800] plus three in the full regime.
std::vector<std::int64_t> skewed_group_n_wg();
inline constexpr std::int64_t kSkewedLsize = 128;

// Checked-in expected outputs live next to the fixtures, under tests/golden.
std::filesystem::path golden_dir();
std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& text);

}  // namespace fixtures
