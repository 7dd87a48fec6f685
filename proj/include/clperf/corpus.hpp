#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "clperf/exclusion.hpp"

namespace clperf {

/// One preprocessed kernel function.
struct KernelSource {
  std::string kernel_id;        // file stem + "::" + entry name
  std::string entry_name;
  std::string raw_text;         // the original file contents
  std::string normalized_text;  // shared non-kernel items + this kernel, normalized
  int dimensionality = 1;
  std::vector<std::string> flags;

  bool has_flag(std::string_view f) const;
};

/// Rewrites the double-underscore spellings of kernel/global/local/constant/private,
/// normalizes line endings to LF, collapses runs of spaces and tabs to one space and
/// drops trailing whitespace and surrounding blank lines. Idempotent.
/// Throws Error(EmptySource) when no kernel function is present.
std::string preprocess_kernel(std::string_view raw_text);

/// 1 + the largest literal dimension passed to a work-item indexing builtin, or 1
/// when the source calls none. Throws Error(NonLiteralDimension).
int classify_dimensionality(std::string_view normalized_text);

/// True when the source calls at least one work-item indexing builtin.
bool uses_indexing_builtin(std::string_view normalized_text);

/// Keeps the one-dimensional kernels, order preserved.
std::vector<KernelSource> filter_corpus(std::vector<KernelSource> kernels);

/// Splits a normalized file into one KernelSource per kernel function. Every kernel
/// keeps the file's non-kernel items (helpers, types, directives) in file order.
/// Dimensionality is not classified here.
std::vector<KernelSource> split_kernels(std::string_view file_stem, std::string_view raw_text,
                                        std::string_view normalized_text);

struct IngestResult {
  std::vector<KernelSource> kernels;  // all classified kernels, any dimensionality
  std::vector<Exclusion> exclusions;
};

/// Ingests one file's contents. Exclusions carry the reason code.
IngestResult ingest_text(std::string_view file_stem, std::string_view raw_text);

/// Ingests every *.cl file under `dir` (sorted by path), or every path listed in a
/// manifest file (one per line, relative to the manifest's directory).
IngestResult ingest_path(const std::filesystem::path& dir_or_manifest);

}  // namespace clperf
