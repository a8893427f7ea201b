#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "nca/grid.hpp"

namespace nca::cli {

enum ExitCode { kOk = 0, kUsage = 2, kRuntime = 3 };

/// Bad flag values; reported with exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SizeArg {
  int height = 0;
  int width = 0;
};

struct StepRange {
  int min = 0;
  int max = 0;
};

struct SignalArg {
  int x = 0;  // column
  int y = 0;  // row
  int time = 0;
};

struct DamageArg {
  double cx = 0;
  double cy = 0;
  double radius = 0;
  int time = 0;
};

SizeArg parse_size(const std::string& text);         // "HxW"
StepRange parse_step_range(const std::string& text);  // "A:B" or "A"
SignalArg parse_signal(const std::string& text);      // "x,y@t"
DamageArg parse_damage(const std::string& text);      // "cx,cy,r@t"

/// "<stem>.loss.csv" next to a checkpoint path; a trailing ".nca.json" or
/// extension is dropped first.
std::string loss_csv_path(const std::string& checkpoint_path);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nca::cli
