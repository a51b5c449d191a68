#pragma once

#include <stdexcept>
#include <string>

namespace replaylab {

/// Base exception for every failure raised by the library. The message is a
/// single line suitable for surfacing directly on a command line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace replaylab
