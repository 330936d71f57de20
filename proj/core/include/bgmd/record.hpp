#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace bgmd {

// One per-iteration metrics row. The JSONL schema is fixed; downstream
// plotting relies on these exact keys:
//   {"iter":int,"loss":float,"grad_norm_sq":float,"dist_sq":float|null,
//    "residual_ratio":float,"agg_ns":int,"total_ns":int,"corrupt":int}
// A non-finite loss (a diverged run's final row) is serialized as null.
struct RunRecord {
  std::int64_t iter = 0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  std::optional<double> dist_to_opt_sq;  // only when the task knows its optimum
  double residual_ratio = 0.0;           // 0 for non-block aggregators
  std::int64_t agg_time_ns = 0;
  std::int64_t total_time_ns = 0;
  std::int64_t corrupt_count = 0;
};

// `zero_timings` replaces the two wall-clock fields with 0 so that repeated
// runs of the same config+seed serialize byte-identically.
std::string to_jsonl(const RunRecord& r, bool zero_timings = false);

class MetricSink {
 public:
  virtual ~MetricSink() = default;
  virtual void write(const RunRecord& r) = 0;
};

// Collects records in memory (tests, sweeps).
class VectorSink final : public MetricSink {
 public:
  void write(const RunRecord& r) override { records_.push_back(r); }
  const std::vector<RunRecord>& records() const { return records_; }

 private:
  std::vector<RunRecord> records_;
};

// Streams records to a .jsonl file, one object per line.
class JsonlFileSink final : public MetricSink {
 public:
  explicit JsonlFileSink(const std::string& path, bool zero_timings = true);
  void write(const RunRecord& r) override;

 private:
  std::ofstream out_;
  bool zero_timings_;
};

}  // namespace bgmd
