// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace gsifn {

/// Forward-pass operation tally, filled by the tensor ops while a
/// ScopedFlopCounter is active on the current thread.
/// Convention: one multiply-accumulate = 2 flops (matmul and conv1d); softmax and
/// layer-norm = 5 flops per input element. Elementwise ops are not counted.
struct FlopCounter {
  std::uint64_t matmul = 0;
  std::uint64_t softmax = 0;
  std::uint64_t norm = 0;

  std::uint64_t total() const { return matmul + softmax + norm; }
};

inline constexpr std::uint64_t kFlopsPerSoftmaxElement = 5;
inline constexpr std::uint64_t kFlopsPerNormElement = 5;

namespace detail {
inline thread_local FlopCounter* active_flop_counter = nullptr;
}

class ScopedFlopCounter {
 public:
  explicit ScopedFlopCounter(FlopCounter& counter) : prev_(detail::active_flop_counter) {
    detail::active_flop_counter = &counter;
  }
  ~ScopedFlopCounter() { detail::active_flop_counter = prev_; }
  ScopedFlopCounter(const ScopedFlopCounter&) = delete;
  ScopedFlopCounter& operator=(const ScopedFlopCounter&) = delete;

 private:
  FlopCounter* prev_;
};

}  // namespace gsifn
