#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "clperf/corpus.hpp"
#include "clperf/error.hpp"
#include "fixtures.hpp"

using namespace clperf;

TEST(Preprocess, StripsQualifierPrefixes) {
  EXPECT_EQ(preprocess_kernel("__kernel void f(__global int* a){a[0]=1;}"), "kernel void f(global int* a){a[0]=1;}");
  EXPECT_EQ(preprocess_kernel("__kernel void g(__local float* s, __constant int* c){}"),
            "kernel void g(local float* s, constant int* c){}");
  EXPECT_EQ(preprocess_kernel("kernel void f(__private int x){}"), "kernel void f(private int x){}");
}

TEST(Preprocess, LeavesOtherIdentifiersAlone) {
  const std::string src = "kernel void f(global int* a){ int __kernel_count = 1; a[0] = __global_x; }";
  EXPECT_NE(preprocess_kernel(src).find("__kernel_count"), std::string::npos);
  EXPECT_NE(preprocess_kernel(src).find("__global_x"), std::string::npos);
}

TEST(Preprocess, UnchangedWhenAlreadyNormal) {
  const std::string src = "kernel void f(global int* a){a[0]=1;}";
  EXPECT_EQ(preprocess_kernel(src), src);
}

TEST(Preprocess, Idempotent) {
  for (const auto& f : fixtures::list("kernels/affine")) {
    const std::string once = preprocess_kernel(fixtures::read(f));
    EXPECT_EQ(preprocess_kernel(once), once) << f;
  }
}

TEST(Preprocess, WhitespaceNormalization) {
  EXPECT_EQ(preprocess_kernel("kernel  void\tf(global int* a)\r\n{\r\n  a[0]  =  1;   \r\n}\r\n\r\n"),
            "kernel void f(global int* a)\n{\n a[0] = 1;\n}");
}

TEST(Preprocess, EmptySource) {
  try {
    preprocess_kernel("int helper(int x) { return x; }");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySource);
  }
}

TEST(Dimensionality, MaxLiteralIndex) {
  EXPECT_EQ(classify_dimensionality("kernel void f(global int* a){a[get_global_id(0)]=0;}"), 1);
  EXPECT_EQ(classify_dimensionality("kernel void f(global int* a){a[get_global_id(0)+get_global_id(1)]=0;}"), 2);
  EXPECT_EQ(classify_dimensionality("kernel void f(global int* a){a[get_local_size(2)]=0;}"), 3);
  EXPECT_EQ(classify_dimensionality("kernel void f(global int* a){a[get_num_groups(1)]=0;}"), 2);
}

TEST(Dimensionality, NoBuiltinIsOneDimensional) {
  const std::string src = "kernel void f(global int* a){a[0]=1;}";
  EXPECT_EQ(classify_dimensionality(src), 1);
  EXPECT_FALSE(uses_indexing_builtin(src));
  const auto r = ingest_text("nb", src);
  ASSERT_EQ(r.kernels.size(), 1u);
  EXPECT_TRUE(r.kernels[0].has_flag("no_indexing_builtin"));
}

TEST(Dimensionality, NonLiteralDimension) {
  try {
    classify_dimensionality("kernel void f(global int* a, int d){a[get_global_id(d)]=0;}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonLiteralDimension);
  }
  const auto r = ingest_text("nl", "kernel void f(global int* a, int d){a[get_global_id(d)]=0;}");
  EXPECT_TRUE(r.kernels.empty());
  ASSERT_EQ(r.exclusions.size(), 1u);
  EXPECT_EQ(r.exclusions[0].reason, "non_literal_dimension");
}

namespace {

KernelSource with_dim(const std::string& id, int d) {
  KernelSource k;
  k.kernel_id = id;
  k.dimensionality = d;
  return k;
}

std::vector<std::string> ids(const std::vector<KernelSource>& ks) {
  std::vector<std::string> out;
  for (const auto& k : ks) out.push_back(k.kernel_id);
  return out;
}

}  // namespace

TEST(FilterCorpus, KeepsOneDimensionalInOrder) {
  const auto out = filter_corpus({with_dim("a", 1), with_dim("b", 2), with_dim("c", 1), with_dim("d", 3)});
  EXPECT_EQ(ids(out), (std::vector<std::string>{"a", "c"}));
  const auto all1 = filter_corpus({with_dim("x", 1), with_dim("y", 1)});
  EXPECT_EQ(ids(all1), (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(ids(filter_corpus(out)), ids(out));
}

TEST(FilterCorpus, SeventyPercentOneDimensional) {
  std::vector<KernelSource> ks;
  for (int i = 0; i < 1000; ++i) ks.push_back(with_dim(std::to_string(i), i % 10 < 7 ? 1 : 2 + i % 2));
  EXPECT_EQ(filter_corpus(ks).size(), 700u);
}

TEST(Ingest, MultiKernelFile) {
  const std::string src =
      "#define N 4\n"
      "float twice(float x) { return 2.0f * x; }\n"
      "__kernel void first(__global float* a) { a[get_global_id(0)] = twice(a[0]); }\n"
      "__kernel void second(__global float* b) { b[get_global_id(1)] = N; }\n";
  const auto r = ingest_text("pair", src);
  ASSERT_EQ(r.kernels.size(), 2u);
  EXPECT_EQ(r.kernels[0].kernel_id, "pair::first");
  EXPECT_EQ(r.kernels[1].kernel_id, "pair::second");
  EXPECT_EQ(r.kernels[0].dimensionality, 1);
  EXPECT_EQ(r.kernels[1].dimensionality, 2);
  // Shared items stay with every kernel; the other kernel does not.
  EXPECT_NE(r.kernels[0].normalized_text.find("float twice"), std::string::npos);
  EXPECT_NE(r.kernels[1].normalized_text.find("#define N 4"), std::string::npos);
  EXPECT_EQ(r.kernels[0].normalized_text.find("second"), std::string::npos);
  EXPECT_EQ(filter_corpus(r.kernels).size(), 1u);
}

TEST(Ingest, DirectoryAndManifestAgree) {
  const auto dir = fixtures::path("kernels/affine");
  const auto a = ingest_path(dir);
  EXPECT_EQ(a.kernels.size(), fixtures::list("kernels/affine").size());
  const auto tmp = std::filesystem::temp_directory_path() / "clperf_manifest_test";
  std::filesystem::create_directories(tmp);
  {
    std::ofstream m(tmp / "manifest.txt");
    for (const auto& f : fixtures::list("kernels/affine")) m << fixtures::path(f).string() << "\n";
  }
  const auto b = ingest_path(tmp / "manifest.txt");
  ASSERT_EQ(a.kernels.size(), b.kernels.size());
  for (std::size_t i = 0; i < a.kernels.size(); ++i) {
    EXPECT_EQ(a.kernels[i].kernel_id, b.kernels[i].kernel_id);
    EXPECT_EQ(a.kernels[i].normalized_text, b.kernels[i].normalized_text);
  }
  std::filesystem::remove_all(tmp);
}

TEST(Ingest, UniqueIds) {
  const auto r = ingest_path(fixtures::path("kernels/affine"));
  std::set<std::string> seen;
  for (const auto& k : r.kernels) EXPECT_TRUE(seen.insert(k.kernel_id).second) << k.kernel_id;
}
