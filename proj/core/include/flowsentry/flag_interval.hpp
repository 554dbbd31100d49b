#pragma once

#include "flowsentry/time.hpp"

namespace flowsentry {

/// A contiguous alarm, both ends inclusive.
struct FlagInterval {
  Minute start;
  Minute end;

  long long minutes() const { return minutes_between(start, end) + 1; }

  friend bool operator==(const FlagInterval&, const FlagInterval&) = default;
};

} // namespace flowsentry
