#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace orgami {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// crm
struct AddressConflict : Error { using Error::Error; };
struct NotFound : Error { using Error::Error; };
struct KindMismatch : Error { using Error::Error; };
struct SensorWriteRejected : Error { using Error::Error; };

// rule language
struct SyntaxError : Error {
  int line = 0;
  int column = 0;
  SyntaxError(int line_, int col_, const std::string& what_)
      : Error("syntax error at " + std::to_string(line_) + ":" + std::to_string(col_) + ": " + what_),
        line(line_), column(col_) {}
};
struct TypeError : Error { using Error::Error; };
struct UnresolvedReference : Error { using Error::Error; };
struct EvalError : Error { using Error::Error; };

// netsim
struct InvalidParams : Error { using Error::Error; };
struct Unreachable : Error { using Error::Error; };

// petri
struct UntranslatableRule : Error { using Error::Error; };
struct DomainUnbounded : Error { using Error::Error; };

// deploy
struct UnboundSensor : Error { using Error::Error; };
struct Infeasible : Error { using Error::Error; };
struct TooLarge : Error { using Error::Error; };

// anc
struct WidthMismatch : Error { using Error::Error; };
struct IncompleteTree : Error { using Error::Error; };

// voting
struct StepTooLarge : Error { using Error::Error; };

// scenario / cli
struct ParseError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ValidationError : Error {
  std::vector<std::string> issues;
  explicit ValidationError(std::vector<std::string> issues_)
      : Error(join(issues_)), issues(std::move(issues_)) {}

private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "scenario validation failed:";
    for (const auto& i : v) {
      s += "\n  - ";
      s += i;
    }
    return s;
  }
};

}  // namespace orgami
