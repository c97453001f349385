#pragma once

#include <array>
#include <cstdint>

#include "common/result.hpp"

namespace fibra::metrics {

// Log-linear latency histogram: microsecond-unit values, one linear segment
// below 32 us, then 32 linear sub-buckets per power-of-two decade up to
// 2^36 us (~68 s). Bucket width never exceeds value/32 + 1 us. Values above
// the range clamp into the top bucket and bump an overflow counter. The
// structure is preallocated; record() never allocates.
class LatencyHistogram {
 public:
  static constexpr size_t kBuckets = 1024;
  static constexpr uint64_t kMaxTrackableUs = 1ull << 36;

  void record(uint64_t latency_ns);

  // Nearest-rank percentile for q in (0, 1]: the smallest bucket whose
  // cumulative count reaches ceil(q * total), reported as that bucket's
  // upper bound (capped at the exact maximum seen, so the tail is never
  // understated and never exceeds max_seen).
  Result<uint64_t> percentile_ns(double q) const;

  void merge(const LatencyHistogram& other);

  uint64_t total() const { return total_; }
  uint64_t overflow() const { return overflow_; }
  uint64_t max_seen_ns() const { return max_seen_ns_; }
  uint64_t bucket_count(size_t i) const { return counts_[i]; }

  static size_t bucket_index(uint64_t value_us);
  static uint64_t bucket_upper_ns(size_t index);

 private:
  std::array<uint64_t, kBuckets> counts_{};
  uint64_t total_ = 0;
  uint64_t overflow_ = 0;
  uint64_t max_seen_ns_ = 0;
};

}  // namespace fibra::metrics
