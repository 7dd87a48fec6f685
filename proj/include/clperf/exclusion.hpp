#pragma once

#include <string>

#include "clperf/error.hpp"

namespace clperf {

/// A structured record of something the pipeline dropped, with its reason code.
struct Exclusion {
  std::string stage;
  std::string kernel_id;
  std::string reason;
  std::string detail;
};

inline Exclusion make_exclusion(std::string stage, std::string kernel_id, const Error& e) {
  return {std::move(stage), std::move(kernel_id), std::string(to_string(e.code())), e.what()};
}

inline Exclusion make_exclusion(std::string stage, std::string kernel_id, ErrorCode code, std::string detail) {
  return {std::move(stage), std::move(kernel_id), std::string(to_string(code)), std::move(detail)};
}

}  // namespace clperf
