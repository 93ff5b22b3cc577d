#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace autolab {

/// Domain error categories. The REST layer maps each onto an HTTP status and
/// the CLI maps them onto exit codes.
enum class ErrorKind {
  ParseError,
  TargetError,
  EmptyDataset,
  TaskMismatch,
  TooFewSamples,
  NumericalFailure,
  LengthMismatch,
  SingleClass,
  UnknownParam,
  UnknownAlgorithm,
  InvalidConfig,
  Conflict,
  InvariantViolation,
  UnknownField,
  UnknownMetric,
  UnknownDataset,
  UnknownExperiment,
  UnknownWorker,
  UnknownJob,
  NotCompleted,
  NotClassification,
  FormatError,
  EmptyInput,
  IoError,
  Validation,
};

std::string_view to_string(ErrorKind kind);
/// Inverse of to_string; nullopt for unknown names.
std::optional<ErrorKind> parse_error_kind(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Milliseconds since the Unix epoch.
using TimestampMs = std::int64_t;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampMs now_ms() const = 0;
};

class SystemClock final : public Clock {
 public:
  TimestampMs now_ms() const override {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }
};

/// Test clock advanced by hand.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimestampMs start = 1'700'000'000'000) : now_(start) {}
  TimestampMs now_ms() const override { return now_.load(); }
  void advance_ms(TimestampMs delta) { now_ += delta; }
  void set_ms(TimestampMs t) { now_ = t; }

 private:
  std::atomic<TimestampMs> now_;
};

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Seeds for independent random streams (per fold, per tree, per step) are
/// derived from a parent seed by counter, so results do not depend on the
/// order in which streams are consumed.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream);

/// Small deterministic generator (splitmix64). Its output is identical on
/// every platform, unlike the std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller).
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace autolab
