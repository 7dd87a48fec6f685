#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "clperf/corpus.hpp"
#include "clperf/error.hpp"
#include "clperf/exec.hpp"
#include "clperf/inputsel.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

using namespace clperf;

namespace {

fixtures::Kernel inline_kernel(const std::string& src) {
  const auto r = ingest_text("inline", src);
  fixtures::Kernel k;
  k.entry = r.kernels.at(0).entry_name;
  k.source = r.kernels.at(0).normalized_text;
  k.sig = parse_signature(k.source, k.entry);
  return k;
}

KernelSignature sig_of(const std::string& decl) {
  const std::string text = preprocess_kernel(decl + " {}");
  return parse_signature(text, "f");
}

ErrorCode error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

const char* kBoundary = "kernel void bc(global float* a, int N) { int g = get_global_id(0); if (g < N) a[g] = 0.0f; }";
const char* kConv =
    "kernel void conv(global float* out, global const float* in, int os, int st) {"
    " int g = get_global_id(0); out[g] = in[os + g * st]; }";

}  // namespace

TEST(SimpleInputs, TiedToGsize) {
  const auto s = simple_inputs(sig_of("kernel void f(global float* a, int n)"), 1024);
  EXPECT_EQ(s.array_sizes, (std::vector<std::int64_t>{1024}));
  EXPECT_EQ(s.scalar_values, (std::vector<double>{1024}));
  EXPECT_EQ(s.provenance, Provenance::Simple);
  const auto t = simple_inputs(sig_of("kernel void f(global float* a, global int* b)"), 64);
  EXPECT_EQ(t.array_sizes, (std::vector<std::int64_t>{64, 64}));
  EXPECT_TRUE(t.scalar_values.empty());
  const auto u = simple_inputs(sig_of("kernel void f(global float* a, uint n, float x)"), 1);
  EXPECT_EQ(u.array_sizes, (std::vector<std::int64_t>{1}));
  EXPECT_EQ(u.scalar_values, (std::vector<double>{1, 1}));
}

TEST(SimpleInputs, ScalarCastToType) {
  const auto s = simple_inputs(sig_of("kernel void f(global float* a, uchar c, short h)"), 70000);
  EXPECT_EQ(s.scalar_values, (std::vector<double>{static_cast<std::uint8_t>(70000), static_cast<std::int16_t>(70000)}));
}

TEST(Rational, ExactArithmetic) {
  const Rational a(1, 3), b(1, 6);
  EXPECT_EQ(a + b, Rational(1, 2));
  EXPECT_EQ(a - b, Rational(1, 6));
  EXPECT_EQ(a * b, Rational(1, 18));
  EXPECT_EQ(a / b, Rational(2));
  EXPECT_EQ(Rational(4, -6), Rational(-2, 3));
  EXPECT_EQ(Rational(7, 2).ceil(), 4);
  EXPECT_EQ(Rational(-7, 2).ceil(), -3);
  EXPECT_EQ(Rational(6, 3).ceil(), 2);
}

TEST(FitAffine, HandSolvedSystems) {
  auto m = fit_affine({128, 128}, {256, 256});
  EXPECT_EQ(m.c, Rational(1));
  EXPECT_EQ(m.d, Rational(0));
  m = fit_affine({128, 512}, {256, 1024});
  EXPECT_EQ(m.c, Rational(4));
  EXPECT_EQ(m.d, Rational(0));
  m = fit_affine({128, 129}, {256, 257});
  EXPECT_EQ(m.c, Rational(1));
  EXPECT_EQ(m.d, Rational(1));
  m = fit_affine({1024, 33}, {4096, 129});
  EXPECT_EQ(m.c, Rational(1, 32));
  EXPECT_EQ(m.d, Rational(1));
  EXPECT_EQ(error_of([] { fit_affine({64, 1}, {64, 2}); }), ErrorCode::DegenerateFit);
}

TEST(PredictSize, CeilAndPositivity) {
  AffineSizeModel m;
  m.c = Rational(1);
  EXPECT_EQ(predict_size(m, 777), 777);
  m.c = Rational(1, 2);
  EXPECT_EQ(predict_size(m, 101), 51);
  EXPECT_EQ(predict_size(m, 100), 50);
  m.c = Rational(0);
  m.d = Rational(-3);
  EXPECT_EQ(error_of([&] { predict_size(m, 4096); }), ErrorCode::NonPositiveSize);
}

TEST(Candidates, ParseAndDefault) {
  const auto c = parse_candidates("1,4,gsize,16,32,256");
  EXPECT_EQ(c, default_candidates());
  EXPECT_EQ(parse_candidates(" 2.5 , gsize "), (std::vector<Candidate>{{false, 2.5}, {true, 0}}));
  EXPECT_EQ(error_of([] { parse_candidates("1,x"); }), ErrorCode::ConfigError);
  EXPECT_EQ(error_of([] { parse_candidates(""); }), ErrorCode::ConfigError);
}

TEST(Combinations, FullPowerForTwoScalars) {
  const auto sig = sig_of("kernel void f(global float* a, int os, int st)");
  const auto sym = symbolic_combinations(sig, default_candidates(), 100, 1);
  EXPECT_EQ(sym.size(), 36u);
  EXPECT_EQ(std::set<SymbolicCombo>(sym.begin(), sym.end()).size(), 36u);
  // Bound at a gsize that equals no literal, every combination stays distinct.
  EXPECT_EQ(scalar_combinations(sig, 1000, default_candidates(), 100, 1).size(), 36u);
  // At gsize 256 the "gsize" and 256 candidates coincide.
  EXPECT_EQ(scalar_combinations(sig, 256, default_candidates(), 100, 1).size(), 25u);
}

TEST(Combinations, CappedSampleIsDeterministic) {
  const auto sig = sig_of("kernel void f(global float* a, int p, int q, int r, int s)");
  const auto a = symbolic_combinations(sig, default_candidates(), 100, 42);
  const auto b = symbolic_combinations(sig, default_candidates(), 100, 42);
  const auto c = symbolic_combinations(sig, default_candidates(), 100, 43);
  ASSERT_EQ(a.size(), 100u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(std::set<SymbolicCombo>(a.begin(), a.end()).size(), 100u);
}

TEST(Combinations, CastDedupAndLog) {
  // 257 wraps to 1 and 256 to 0 in both 8-bit types, so the literal 1 repeats.
  const auto sig = sig_of("kernel void f(global float* a, uchar c, char d)");
  const auto sym = symbolic_combinations(sig, parse_candidates("1,4,gsize,257,256"), 100, 1);
  EXPECT_EQ(sym.size(), 4u * 4u);
  std::vector<std::string> log;
  const auto bound = bind_combo(sig, {{false, 256}, {true, 0}}, 1000, &log);
  EXPECT_EQ(bound, (std::vector<double>{0, -24}));
  EXPECT_EQ(log.size(), 2u);
  log.clear();
  EXPECT_EQ(bind_combo(sig, {{true, 0}, {false, 1}}, 1000, &log), (std::vector<double>{232, 1}));
  ASSERT_EQ(log.size(), 1u);
  EXPECT_NE(log[0].find("uchar"), std::string::npos);
}

TEST(CastScalar, Types) {
  bool lossy = false;
  EXPECT_EQ(cast_scalar(256, "uchar", &lossy), 0);
  EXPECT_TRUE(lossy);
  EXPECT_EQ(cast_scalar(32, "float", &lossy), 32);
  EXPECT_FALSE(lossy);
  EXPECT_EQ(cast_scalar(-1, "uint"), 4294967295.0);
  EXPECT_EQ(cast_scalar(2.5, "int"), 2);
  EXPECT_EQ(cast_scalar(2.5, "double"), 2.5);
}

TEST(MemoryAnalysis, BoundaryCheckWithNEqualGsize) {
  SyntheticExecutor ex;
  const auto k = inline_kernel(kBoundary);
  MemAnalyzer an(instrument_array_hooks(k.source, k.sig), ex, {});
  const auto o = an.evaluate(SymbolicCombo{{true, 0}}, 1000, 8);
  ASSERT_TRUE(o.setting) << o.detail;
  EXPECT_EQ(o.setting->array_sizes, (std::vector<std::int64_t>{1000}));
  EXPECT_EQ(o.setting->scalar_values, (std::vector<double>{1000}));
  EXPECT_EQ(o.setting->provenance, Provenance::MemAnalysis);
}

TEST(MemoryAnalysis, ConvolutionStride) {
  SyntheticExecutor ex;
  const auto k = inline_kernel(kConv);
  MemAnalyzer an(instrument_array_hooks(k.source, k.sig), ex, {});
  const auto o = an.evaluate(std::vector<double>{1, 2}, 1000, 8);
  ASSERT_TRUE(o.setting) << o.detail;
  EXPECT_EQ(o.setting->array_sizes, (std::vector<std::int64_t>{1000, 2000}));
  const auto models = an.models_for(std::vector<double>{1, 2});
  ASSERT_EQ(models.size(), 2u);
  EXPECT_EQ(models[1].c, Rational(2));
  EXPECT_EQ(models[1].d, Rational(0));
}

TEST(MemoryAnalysis, FalseGuardKeepsTinyInput) {
  SyntheticExecutor ex;
  const auto k = inline_kernel(kBoundary);
  MemAnalyzer an(instrument_array_hooks(k.source, k.sig), ex, {});
  const auto o = an.evaluate(std::vector<double>{1}, 4096, 64);
  ASSERT_TRUE(o.setting);
  EXPECT_EQ(o.setting->array_sizes, (std::vector<std::int64_t>{1}));
  const auto m = an.models_for(std::vector<double>{1});
  EXPECT_EQ(m[0].c, Rational(0));
  EXPECT_EQ(m[0].d, Rational(1));
  // No work-item at all passes N=0: the array is never touched and gets one element.
  const auto z = an.evaluate(std::vector<double>{0}, 4096, 64);
  ASSERT_TRUE(z.setting);
  EXPECT_EQ(z.setting->array_sizes, (std::vector<std::int64_t>{1}));
}

TEST(MemoryAnalysis, ConstantFootprint) {
  SyntheticExecutor ex;
  const auto k = inline_kernel(
      "kernel void f(global float* a, int n) { int g = get_global_id(0); if (g < 4) a[g + n] = 1.0f; }");
  MemAnalyzer an(instrument_array_hooks(k.source, k.sig), ex, {});
  // a[g + 1] with four work-items: size 5 at every gsize, c = 0.
  const auto o = an.evaluate(std::vector<double>{1}, 4096, 64);
  ASSERT_TRUE(o.setting);
  EXPECT_EQ(o.setting->array_sizes, (std::vector<std::int64_t>{5}));
}

TEST(MemoryAnalysis, NonAffineTagged) {
  SyntheticExecutor ex;
  const auto k = fixtures::load("kernels/other/nonaffine_square.cl");
  MemAnalyzer an(instrument_array_hooks(k.source, k.sig), ex, {});
  const auto outcomes = an.analyze(4096, 64);
  ASSERT_FALSE(outcomes.empty());
  for (const auto& o : outcomes) {
    EXPECT_FALSE(o.setting);
    EXPECT_EQ(o.reason, "non_affine");
  }
  EXPECT_TRUE(memory_analysis_inputs(k.source, k.sig, 4096, 64, ex).empty());
}

TEST(MemoryAnalysis, GsizeFollowsEveryProbe) {
  // Stencil guard g < n - 1 with n = gsize reads in[g + 1] up to index gsize - 1 at every size.
  SyntheticExecutor ex;
  const auto k = fixtures::load("kernels/affine/cx_stencil.cl");
  MemAnalyzer an(instrument_array_hooks(k.source, k.sig), ex, {});
  for (std::int64_t g : {256, 2048, 8192}) {
    const auto o = an.evaluate(SymbolicCombo{{true, 0}}, g, 64);
    ASSERT_TRUE(o.setting) << o.detail;
    const auto want = oracle::brute_force_extents(k, o.scalar_values, g, 64);
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(o.setting->array_sizes[i], oracle::required_size(want[i])) << g;
    }
  }
}

TEST(MemoryAnalysis, KeptSettingsRunInBounds) {
  SyntheticExecutor ex;
  for (const auto& f : fixtures::list("kernels/affine")) {
    const auto k = fixtures::load(f);
    MemAnalyzer an(instrument_array_hooks(k.source, k.sig), ex, {});
    int kept = 0;
    for (const auto& o : an.analyze(2048, 64)) {
      if (!o.setting) continue;
      ++kept;
      EXPECT_EQ(oracle::bounds_violations(k, o.scalar_values, o.setting->array_sizes, 2048, 64), 0) << f;
    }
    EXPECT_GT(kept, 0) << f;
  }
}

TEST(MemoryAnalysis, FirstValidIsSeeded) {
  SyntheticExecutor ex;
  const auto k = fixtures::load("kernels/affine/os_stride.cl");
  MemAnalyzer an(instrument_array_hooks(k.source, k.sig), ex, {});
  const auto a = an.first_valid(4096, 64, 1);
  const auto b = an.first_valid(4096, 64, 1);
  ASSERT_TRUE(a);
  EXPECT_EQ(*a, *b);
  std::set<std::vector<double>> distinct;
  for (std::uint64_t s = 0; s < 20; ++s) distinct.insert(an.first_valid(4096, 64, s)->scalar_values);
  EXPECT_GT(distinct.size(), 1u);
}
