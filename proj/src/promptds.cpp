#include "clperf/promptds.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"

#include "clperf/error.hpp"
#include "clperf/rng.hpp"

namespace clperf {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::None: return "none";
  }
  return "none";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "none") return Split::None;
  throw Error(ErrorCode::InvalidArgument, "unknown split '" + std::string(s) + "'");
}

std::string format_number(double v) {
  char buf[64];
  std::to_chars_result res;
  if (std::abs(v) < 9.007199254740992e15 && v == std::trunc(v)) {
    res = std::to_chars(buf, buf + sizeof(buf), static_cast<std::int64_t>(v));
  } else {
    res = std::to_chars(buf, buf + sizeof(buf), v);
  }
  return std::string(buf, res.ptr);
}

std::string render_arg_desc(const ArgSpec& arg, double value_or_size) {
  std::string s = "Argument at position " + std::to_string(arg.position) + " is " + arg.name + ", which is " +
                  std::string(to_string(arg.qualifier));
  s += arg.is_array ? " buffer of type " : " scalar of type ";
  s += arg.type_name();
  s += arg.is_array ? " with size " : " with value ";
  s += format_number(value_or_size);
  return s;
}

std::vector<std::string> render_arg_descs(const KernelSignature& sig, const InputSetting& input) {
  std::vector<std::string> out;
  std::size_t ai = 0;
  std::size_t si = 0;
  for (const auto& a : sig.args) {
    if (a.is_array) {
      if (ai >= input.array_sizes.size()) throw Error(ErrorCode::InvalidArgument, "missing array size");
      out.push_back(render_arg_desc(a, static_cast<double>(input.array_sizes[ai++])));
    } else {
      if (si >= input.scalar_values.size()) throw Error(ErrorCode::InvalidArgument, "missing scalar value");
      out.push_back(render_arg_desc(a, input.scalar_values[si++]));
    }
  }
  return out;
}

std::string render_prompt(std::string_view src, const std::vector<std::string>& descs, std::int64_t gsize,
                          std::int64_t lsize) {
  std::string_view code = src;
  while (!code.empty() && (code.back() == '\n' || code.back() == '\r')) code.remove_suffix(1);
  std::string p = "Predict time for the following OpenCL kernel:\n";
  p += code;
  p += "\nGiven input:\n";
  for (const auto& d : descs) {
    p += d;
    p += '\n';
  }
  p += "Given kernel are executed with global size equals cl::NDRange(" + std::to_string(gsize) +
       "), local work-group size equals cl::NDRange(" + std::to_string(lsize) + ")";
  return p;
}

std::int64_t token_estimate(std::string_view text) {
  return (static_cast<std::int64_t>(text.size()) + 3) / 4;
}

LengthFilterResult length_filter(std::vector<PromptRecord> records, std::int64_t budget) {
  if (budget <= 0) throw Error(ErrorCode::InvalidArgument, "budget must be positive");
  LengthFilterResult r;
  for (auto& rec : records) {
    (token_estimate(rec.prompt) <= budget ? r.kept : r.discarded).push_back(std::move(rec));
  }
  return r;
}

double to_target(double time_us) {
  if (!(time_us > 0)) throw Error(ErrorCode::NonPositiveTime, "time must be positive");
  return std::log2(time_us);
}

double from_target(double target) { return std::exp2(target); }

std::size_t validation_kernel_count(std::size_t kernels, double ratio) {
  const auto v = static_cast<std::size_t>(std::llround((1.0 - ratio) * static_cast<double>(kernels)));
  return std::max<std::size_t>(1, std::min(kernels - 1, v));
}

std::vector<PromptRecord> split_train_val(std::vector<PromptRecord> records, double ratio, std::uint64_t seed) {
  if (!(ratio > 0 && ratio < 1)) throw Error(ErrorCode::InvalidArgument, "ratio must be in (0, 1)");
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.kernel_id);
  if (ids.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two kernels to split");
  std::vector<std::string> order(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const std::size_t n_val = validation_kernel_count(order.size(), ratio);
  const std::set<std::string> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  for (auto& r : records) r.split = val.count(r.kernel_id) ? Split::Val : Split::Train;
  return records;
}

double mape(const std::vector<double>& preds, const std::vector<double>& targets) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw Error(ErrorCode::LengthMismatch, "predictions and targets must have the same non-zero length");
  }
  double sum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!(targets[i] > 0)) throw Error(ErrorCode::NonPositiveTarget, "target " + std::to_string(i) + " is not positive");
    sum += std::abs((preds[i] - targets[i]) / targets[i]);
  }
  return 100.0 * sum / static_cast<double>(preds.size());
}

std::string to_jsonl_line(const PromptRecord& r) {
  ojson j;
  j["kernel_id"] = r.kernel_id;
  j["prompt"] = r.prompt;
  j["time_us"] = r.time_us;
  j["target_log2"] = r.target_log2;
  j["gsize"] = r.gsize;
  j["lsize"] = r.lsize;
  j["n_wg"] = r.n_wg;
  j["regime"] = to_string(r.regime);
  j["provenance"] = to_string(r.provenance);
  j["data_seed"] = r.data_seed;
  j["split"] = to_string(r.split);
  return j.dump();
}

PromptRecord from_jsonl_line(std::string_view line) {
  try {
    const auto j = ojson::parse(line);
    PromptRecord r;
    r.kernel_id = j.at("kernel_id").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.time_us = j.at("time_us").get<double>();
    r.target_log2 = j.at("target_log2").get<double>();
    r.gsize = j.at("gsize").get<std::int64_t>();
    r.lsize = j.at("lsize").get<std::int64_t>();
    r.n_wg = j.at("n_wg").get<std::int64_t>();
    r.regime = regime_from_string(j.at("regime").get<std::string>());
    r.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    r.data_seed = j.at("data_seed").get<std::uint64_t>();
    r.split = split_from_string(j.at("split").get<std::string>());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad dataset line: ") + e.what());
  }
}

std::string to_jsonl(const std::vector<PromptRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_jsonl_line(r);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> nonblank_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

}  // namespace

std::vector<PromptRecord> parse_jsonl(std::string_view text) {
  std::vector<PromptRecord> out;
  for (auto line : nonblank_lines(text)) out.push_back(from_jsonl_line(line));
  return out;
}

DatasetMetadata summarize_dataset(const std::vector<PromptRecord>& records) {
  DatasetMetadata m;
  std::set<std::string> all, train, val;
  for (const auto& r : records) {
    ++m.records;
    all.insert(r.kernel_id);
    if (r.split == Split::Train) {
      ++m.train_records;
      train.insert(r.kernel_id);
    } else if (r.split == Split::Val) {
      ++m.val_records;
      val.insert(r.kernel_id);
    }
  }
  m.kernels = all.size();
  m.train_kernels = train.size();
  m.val_kernels = val.size();
  return m;
}

std::string metadata_json(const DatasetMetadata& m) {
  ojson j;
  j["records"] = m.records;
  j["kernels"] = m.kernels;
  j["train"] = {{"records", m.train_records}, {"kernels", m.train_kernels}};
  j["val"] = {{"records", m.val_records}, {"kernels", m.val_kernels}};
  j["excluded"] = {{"below_timer_resolution", m.excluded_too_fast}, {"over_token_budget", m.excluded_over_budget}};
  j["token_budget"] = m.budget;
  j["token_estimator"] = "ceil(chars / 4)";
  j["time_unit"] = "us";
  j["target"] = "log2(time_us)";
  j["timing"] = "device kernel time; host transfers and launch overhead excluded";
  j["min_time_us"] = kMinTimeUs;
  return j.dump(2) + "\n";
}

std::vector<PredictionPair> join_predictions(std::string_view predictions_jsonl,
                                             const std::vector<PromptRecord>& dataset) {
  const auto lines = nonblank_lines(predictions_jsonl);
  std::vector<PredictionPair> out;
  bool indexed = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    ojson j;
    try {
      j = ojson::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "prediction line " + std::to_string(i + 1) + ": " + e.what());
    }
    PredictionPair p;
    if (j.contains("pred_time_us")) {
      p.pred_time_us = j["pred_time_us"].get<double>();
    } else if (j.contains("pred_log2")) {
      p.pred_time_us = from_target(j["pred_log2"].get<double>());
    } else {
      throw Error(ErrorCode::ParseError,
                  "prediction line " + std::to_string(i + 1) + " has neither pred_time_us nor pred_log2");
    }
    if (j.contains("time_us")) {
      p.time_us = j["time_us"].get<double>();
      p.kernel_id = j.value("kernel_id", std::string());
      p.gsize = j.value("gsize", std::int64_t{0});
      p.n_wg = j.value("n_wg", std::int64_t{0});
      p.split = split_from_string(j.value("split", std::string("none")));
    } else {
      indexed = true;
      if (i >= dataset.size()) break;
      const auto& r = dataset[i];
      p.time_us = r.time_us;
      p.kernel_id = r.kernel_id;
      p.gsize = r.gsize;
      p.n_wg = r.n_wg;
      p.split = r.split;
    }
    out.push_back(std::move(p));
  }
  if (indexed && lines.size() != dataset.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(lines.size()) + " predictions for " +
                                               std::to_string(dataset.size()) + " dataset records");
  }
  return out;
}

}  // namespace clperf
