#include "spg/autograd.hpp"

#include <atomic>

namespace spg::detail {

std::uint64_t next_value_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace spg::detail
