#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clperf {

enum class Qualifier { Global, Local, Constant, Private };

std::string_view to_string(Qualifier q);
Qualifier qualifier_from_string(std::string_view s);

struct ArgSpec {
  int position = 0;
  std::string name;
  Qualifier qualifier = Qualifier::Private;
  std::string base_type;  // scalar element type as spelled, e.g. "float", "uint", "size_t"
  bool is_array = false;
  int vector_width = 1;

  /// Element type including the vector width, e.g. "float4".
  std::string type_name() const;

  bool operator==(const ArgSpec&) const = default;
};

struct KernelSignature {
  std::string entry_name;
  std::vector<ArgSpec> args;

  bool operator==(const KernelSignature&) const = default;
};

/// Parses the parameter list of kernel `entry_name` in `normalized_text`.
/// Throws Error(ParseError) with line/column, or Error(UnsupportedType) for struct,
/// image, sampler, event, unknown typedef and pointer-to-pointer parameters.
KernelSignature parse_signature(std::string_view normalized_text, std::string_view entry_name);

std::vector<ArgSpec> scalars_of(const KernelSignature& sig);
std::vector<ArgSpec> arrays_of(const KernelSignature& sig);

/// Pretty-prints the signature as a kernel declaration.
std::string unparse(const KernelSignature& sig);

/// Canonical scalar type for a spelled base type ("size_t" -> "ulong", ...).
std::string_view canonical_scalar(std::string_view base_type);

bool is_float_type(std::string_view base_type);

}  // namespace clperf
