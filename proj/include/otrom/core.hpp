#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace otrom {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Base class for every error raised by the library. `stage()` names the
/// pipeline step (or module) that failed so the CLI can report it.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A nonpositive Jacobian determinant was found (mesh tangling).
class TanglingError : public Error {
 public:
  explicit TanglingError(const std::string& what) : Error("geometry", what) {}
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class PhysicsError : public Error {
 public:
  explicit PhysicsError(const std::string& what) : Error("fom", what) {}
};

inline void require(bool cond, const char* stage, const std::string& what) {
  if (!cond) throw InvalidInput(stage, what);
}

/// Library-wide diagnostic sink. Defaults to silent; the CLI installs a
/// stderr/run-log writer.
using LogSink = std::function<void(const std::string&)>;
void set_log_sink(LogSink sink);
void log_message(const std::string& msg);

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace otrom
