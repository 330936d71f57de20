#include "bgmd/record.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace bgmd {

std::string to_jsonl(const RunRecord& r, bool zero_timings) {
  nlohmann::ordered_json j;
  j["iter"] = r.iter;
  // nlohmann serializes NaN/Inf as null, which is exactly the contract for a
  // diverged final row.
  j["loss"] = r.loss;
  j["grad_norm_sq"] = r.grad_norm_sq;
  if (r.dist_to_opt_sq.has_value()) {
    j["dist_sq"] = *r.dist_to_opt_sq;
  } else {
    j["dist_sq"] = nullptr;
  }
  j["residual_ratio"] = r.residual_ratio;
  j["agg_ns"] = zero_timings ? 0 : r.agg_time_ns;
  j["total_ns"] = zero_timings ? 0 : r.total_time_ns;
  j["corrupt"] = r.corrupt_count;
  return j.dump();
}

JsonlFileSink::JsonlFileSink(const std::string& path, bool zero_timings)
    : out_(path), zero_timings_(zero_timings) {
  if (!out_) {
    throw std::runtime_error("JsonlFileSink: cannot open " + path);
  }
}

void JsonlFileSink::write(const RunRecord& r) {
  out_ << to_jsonl(r, zero_timings_) << '\n';
  out_.flush();
}

}  // namespace bgmd
