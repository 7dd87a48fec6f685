#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clperf/inputsel.hpp"
#include "clperf/launchsample.hpp"
#include "clperf/sigparse.hpp"

namespace clperf {

enum class Split { Train, Val, None };

std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

/// One line of the emitted dataset.
struct PromptRecord {
  std::string kernel_id;
  std::string prompt;
  double time_us = 0;
  double target_log2 = 0;
  std::int64_t gsize = 0;
  std::int64_t lsize = 0;
  std::int64_t n_wg = 0;
  Regime regime = Regime::Idle;
  Provenance provenance = Provenance::Simple;
  std::uint64_t data_seed = 0;
  Split split = Split::None;

  bool operator==(const PromptRecord&) const = default;
};

/// Shortest round-trip decimal form; integral values print without a fraction.
std::string format_number(double v);

/// "Argument at position {id} is {name}, which is {qualifier} buffer|scalar of type {type} with size|value {v}"
std::string render_arg_desc(const ArgSpec& arg, double value_or_size);

/// Descriptions of every argument in position order.
std::vector<std::string> render_arg_descs(const KernelSignature& sig, const InputSetting& input);

/// The full prompt. No trailing newline.
std::string render_prompt(std::string_view src, const std::vector<std::string>& descs, std::int64_t gsize,
                          std::int64_t lsize);

/// ceil(characters / 4).
std::int64_t token_estimate(std::string_view text);

struct LengthFilterResult {
  std::vector<PromptRecord> kept;
  std::vector<PromptRecord> discarded;
};

/// Keeps records whose token estimate is within `budget`. Throws Error(InvalidArgument) for budget <= 0.
LengthFilterResult length_filter(std::vector<PromptRecord> records, std::int64_t budget);

/// Times below this are under the timer resolution and are not turned into targets.
inline constexpr double kMinTimeUs = 0.1;

/// log2(time_us). Throws Error(NonPositiveTime).
double to_target(double time_us);
double from_target(double target);

/// Number of validation kernels out of `kernels` at train ratio `ratio`.
std::size_t validation_kernel_count(std::size_t kernels, double ratio);

/// Shuffles the distinct kernel ids with `seed` and labels records by kernel.
/// Throws Error(InvalidArgument) for fewer than two kernels or a ratio outside (0, 1).
std::vector<PromptRecord> split_train_val(std::vector<PromptRecord> records, double ratio, std::uint64_t seed);

/// Mean absolute percentage error in percent. Throws Error(LengthMismatch), Error(NonPositiveTarget).
double mape(const std::vector<double>& preds, const std::vector<double>& targets);

std::string to_jsonl_line(const PromptRecord& r);
PromptRecord from_jsonl_line(std::string_view line);

std::string to_jsonl(const std::vector<PromptRecord>& records);
std::vector<PromptRecord> parse_jsonl(std::string_view text);

/// Counts per split plus exclusion counts, as a JSON document.
struct DatasetMetadata {
  std::size_t records = 0;
  std::size_t kernels = 0;
  std::size_t train_records = 0;
  std::size_t val_records = 0;
  std::size_t train_kernels = 0;
  std::size_t val_kernels = 0;
  std::size_t excluded_too_fast = 0;
  std::size_t excluded_over_budget = 0;
  std::int64_t budget = 0;
};

DatasetMetadata summarize_dataset(const std::vector<PromptRecord>& records);
std::string metadata_json(const DatasetMetadata& m);

/// One prediction joined with its target, both in microseconds.
struct PredictionPair {
  std::string kernel_id;
  std::int64_t gsize = 0;
  std::int64_t n_wg = 0;
  double pred_time_us = 0;
  double time_us = 0;
  Split split = Split::None;
};

/// Joins a predictions JSONL file with dataset records. Each prediction holds
/// pred_time_us or pred_log2, and optionally time_us; without time_us the line
/// index selects the dataset record. Throws Error(LengthMismatch) when an index join
/// has unequal lengths.
std::vector<PredictionPair> join_predictions(std::string_view predictions_jsonl,
                                             const std::vector<PromptRecord>& dataset);

}  // namespace clperf
