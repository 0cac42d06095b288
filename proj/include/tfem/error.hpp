#pragma once

#include <stdexcept>
#include <string>

namespace tfem {

// Failure categories shared by every module. The CLI maps them to exit codes.
enum class Errc {
  shape,
  precondition,
  degenerate,
  parameter,
  feasibility,
  fit_failure,
  conditioning,
  infeasible_construction,
  config,
  io,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace tfem
