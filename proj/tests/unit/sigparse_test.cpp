#include <gtest/gtest.h>

#include <algorithm>

#include "clperf/corpus.hpp"
#include "clperf/error.hpp"
#include "clperf/sigparse.hpp"
#include "fixtures.hpp"

using namespace clperf;

namespace {

KernelSignature sig(const std::string& decl, const std::string& entry = "f") {
  return parse_signature(preprocess_kernel(decl + " {}"), entry);
}

ErrorCode parse_error(const std::string& decl) {
  try {
    sig(decl);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(ParseSignature, VectorArrayAndScalar) {
  const auto s = sig("kernel void f(global float4* a, int n)");
  ASSERT_EQ(s.args.size(), 2u);
  EXPECT_EQ(s.args[0], (ArgSpec{0, "a", Qualifier::Global, "float", true, 4}));
  EXPECT_EQ(s.args[1], (ArgSpec{1, "n", Qualifier::Private, "int", false, 1}));
  EXPECT_EQ(s.args[0].type_name(), "float4");
}

TEST(ParseSignature, NoParameters) {
  EXPECT_TRUE(sig("kernel void f()").args.empty());
  EXPECT_TRUE(sig("kernel void f(void)").args.empty());
}

TEST(ParseSignature, ConvolutionShape) {
  const auto s = sig("kernel void conv(global float* out, global float* in, global float* filt, int os, int st)", "conv");
  ASSERT_EQ(s.args.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(s.args[static_cast<std::size_t>(i)].position, i);
  const auto sc = scalars_of(s);
  const auto ar = arrays_of(s);
  ASSERT_EQ(sc.size(), 2u);
  ASSERT_EQ(ar.size(), 3u);
  EXPECT_EQ(sc[0].name, "os");
  EXPECT_EQ(sc[1].name, "st");
  EXPECT_EQ(ar[0].name, "out");
  EXPECT_EQ(ar[1].name, "in");
  EXPECT_EQ(ar[2].name, "filt");
}

TEST(ParseSignature, PartitionLaw) {
  for (const auto& f : fixtures::list("kernels/affine")) {
    const auto k = fixtures::load(f);
    auto merged = scalars_of(k.sig);
    const auto ar = arrays_of(k.sig);
    merged.insert(merged.end(), ar.begin(), ar.end());
    std::sort(merged.begin(), merged.end(), [](const ArgSpec& a, const ArgSpec& b) { return a.position < b.position; });
    EXPECT_EQ(merged, k.sig.args) << f;
  }
  EXPECT_TRUE(arrays_of(sig("kernel void f(int a, float b)")).empty());
}

TEST(ParseSignature, QualifiersAndModifiers) {
  const auto s = sig(
      "__kernel void f(__global const float* restrict a, __local int* s, __constant uint4* c, const float k, "
      "unsigned int u, size_t n, half h, __global uchar* b)");
  ASSERT_EQ(s.args.size(), 8u);
  EXPECT_EQ(s.args[0].qualifier, Qualifier::Global);
  EXPECT_EQ(s.args[1].qualifier, Qualifier::Local);
  EXPECT_EQ(s.args[2].qualifier, Qualifier::Constant);
  EXPECT_EQ(s.args[2].type_name(), "uint4");
  EXPECT_EQ(s.args[3].qualifier, Qualifier::Private);
  EXPECT_FALSE(s.args[3].is_array);
  EXPECT_EQ(s.args[4].base_type, "uint");
  EXPECT_EQ(s.args[5].base_type, "size_t");
  EXPECT_EQ(canonical_scalar("size_t"), "ulong");
  EXPECT_EQ(s.args[6].base_type, "half");
  EXPECT_EQ(s.args[7].base_type, "uchar");
}

TEST(ParseSignature, UnparseFixpoint) {
  for (const auto& f : fixtures::list("kernels/affine")) {
    const auto k = fixtures::load(f);
    const std::string text = unparse(k.sig) + " {}";
    EXPECT_EQ(parse_signature(text, k.entry), k.sig) << f;
  }
}

TEST(ParseSignature, UnsupportedTypes) {
  EXPECT_EQ(parse_error("struct P { int x; }; kernel void f(global struct P* p)"), ErrorCode::UnsupportedType);
  EXPECT_EQ(parse_error("kernel void f(read_only image2d_t img)"), ErrorCode::UnsupportedType);
  EXPECT_EQ(parse_error("kernel void f(sampler_t s)"), ErrorCode::UnsupportedType);
  EXPECT_EQ(parse_error("kernel void f(global mytype* p)"), ErrorCode::UnsupportedType);
  EXPECT_EQ(parse_error("kernel void f(global float** p)"), ErrorCode::UnsupportedType);
}

TEST(ParseSignature, MalformedListReportsPosition) {
  try {
    sig("kernel void f(global float* a,, int n)");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
}

TEST(ParseSignature, VectorWidths) {
  for (int w : {2, 3, 4, 8, 16}) {
    const auto s = sig("kernel void f(global int" + std::to_string(w) + "* a)");
    EXPECT_EQ(s.args[0].vector_width, w);
  }
}
