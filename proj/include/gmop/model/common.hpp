#pragma once

#include <functional>
#include <string>

namespace gmop::model {

// Progress sink for training loops; may be empty.
using Logger = std::function<void(const std::string&)>;

inline void log_line(const Logger& log, const std::string& line) {
  if (log) log(line);
}

}  // namespace gmop::model
