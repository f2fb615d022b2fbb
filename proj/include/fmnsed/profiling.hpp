#pragma once

// Instrumentation hooks used by the kernels. A MacTally installed on the
// current thread receives every multiply-accumulate the kernels perform;
// a CallCounter receives sequence-block invocations. With nothing
// installed the hooks are a single branch.

#include <cstdint>
#include <map>
#include <string>

namespace fmnsed::profiling {

namespace detail {
inline thread_local std::uint64_t* mac_sink = nullptr;
inline thread_local std::map<std::string, int>* call_sink = nullptr;
}  // namespace detail

inline void record_macs(std::uint64_t n) {
  if (detail::mac_sink != nullptr) *detail::mac_sink += n;
}

inline void record_call(const std::string& what) {
  if (detail::call_sink != nullptr) ++(*detail::call_sink)[what];
}

/// RAII scope counting MACs on the current thread. Nested tallies forward
/// their total to the enclosing one on destruction.
class MacTally {
 public:
  MacTally() : previous_(detail::mac_sink) { detail::mac_sink = &count_; }
  ~MacTally() {
    detail::mac_sink = previous_;
    if (previous_ != nullptr) *previous_ += count_;
  }
  MacTally(const MacTally&) = delete;
  MacTally& operator=(const MacTally&) = delete;

  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t count_ = 0;
  std::uint64_t* previous_;
};

class CallCounter {
 public:
  CallCounter() : previous_(detail::call_sink) { detail::call_sink = &calls_; }
  ~CallCounter() { detail::call_sink = previous_; }
  CallCounter(const CallCounter&) = delete;
  CallCounter& operator=(const CallCounter&) = delete;

  int count(const std::string& what) const {
    auto it = calls_.find(what);
    return it == calls_.end() ? 0 : it->second;
  }

 private:
  std::map<std::string, int> calls_;
  std::map<std::string, int>* previous_;
};

}  // namespace fmnsed::profiling
