#include "golden.hpp"

#include <stdexcept>

#include "clperf/exec.hpp"
#include "clperf/inputsel.hpp"
#include "clperf/meminstr.hpp"
#include "clperf/promptds.hpp"
#include "fixtures.hpp"

namespace golden {

const std::vector<Case>& cases() {
  static const std::vector<Case> c = {
      {"kernels/affine/bc_saxpy.cl", "saxpy.txt", 4096, 128},
      {"kernels/affine/cx_group_sum.cl", "group_sum.txt", 2048, 64},
      {"kernels/affine/cx_vec4.cl", "scale4.txt", 1024, 256},
      {"kernels/affine/os_conv1d.cl", "conv1d.txt", 8192, 32},
      {"kernels/affine/dp_interleave.cl", "interleave.txt", 512, 512},
  };
  return c;
}

std::string render(const Case& c) {
  const auto k = fixtures::load(c.fixture);
  clperf::SyntheticExecutor exec;
  clperf::MemAnalysisOptions opts;
  opts.seed = 11;
  clperf::MemAnalyzer an(clperf::instrument_array_hooks(k.source, k.sig), exec, opts);
  const auto input = an.first_valid(c.gsize, c.lsize, 5);
  if (!input) throw std::runtime_error("no valid input for " + c.fixture);
  return clperf::render_prompt(k.source, clperf::render_arg_descs(k.sig, *input), c.gsize, c.lsize);
}

}  // namespace golden
