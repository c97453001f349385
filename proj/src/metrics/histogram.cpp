#include "metrics/histogram.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace fibra::metrics {

size_t LatencyHistogram::bucket_index(uint64_t value_us) {
  if (value_us < 32) return static_cast<size_t>(value_us);
  if (value_us >= kMaxTrackableUs) return kBuckets - 1;
  const int k = std::bit_width(value_us) - 1;  // k >= 5
  const size_t segment = static_cast<size_t>(k - 4);
  const uint64_t sub = (value_us >> (k - 5)) - 32;
  return segment * 32 + static_cast<size_t>(sub);
}

uint64_t LatencyHistogram::bucket_upper_ns(size_t index) {
  uint64_t upper_us;
  if (index < 32) {
    upper_us = index + 1;
  } else {
    const uint64_t segment = index / 32;
    const uint64_t sub = index % 32;
    const uint64_t base = 1ull << (segment + 4);
    const uint64_t width = 1ull << (segment - 1);
    upper_us = base + (sub + 1) * width;
  }
  return upper_us * 1000;
}

void LatencyHistogram::record(uint64_t latency_ns) {
  const uint64_t value_us = latency_ns / 1000;
  if (value_us >= kMaxTrackableUs) overflow_++;
  counts_[bucket_index(value_us)]++;
  total_++;
  max_seen_ns_ = std::max(max_seen_ns_, latency_ns);
}

Result<uint64_t> LatencyHistogram::percentile_ns(double q) const {
  if (total_ == 0) return Error::usage("percentile of empty histogram");
  if (!(q > 0.0 && q <= 1.0)) return Error::usage("quantile out of (0,1]");
  uint64_t rank = static_cast<uint64_t>(std::ceil(q * static_cast<double>(total_)));
  rank = std::clamp<uint64_t>(rank, 1, total_);
  uint64_t cum = 0;
  for (size_t i = 0; i < kBuckets; i++) {
    cum += counts_[i];
    if (cum >= rank) return std::min(bucket_upper_ns(i), max_seen_ns_);
  }
  return max_seen_ns_;  // unreachable when totals are consistent
}

void LatencyHistogram::merge(const LatencyHistogram& other) {
  for (size_t i = 0; i < kBuckets; i++) counts_[i] += other.counts_[i];
  total_ += other.total_;
  overflow_ += other.overflow_;
  max_seen_ns_ = std::max(max_seen_ns_, other.max_seen_ns_);
}

}  // namespace fibra::metrics
