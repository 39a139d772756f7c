#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace emonet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unix seconds, UTC.
using Instant = std::int64_t;

struct Interval {
  Instant start = 0;
  Instant end = 0;
  bool contains(Instant t) const { return t >= start && t <= end; }
};

// Parses "YYYY-MM-DDTHH:MM:SSZ" (and bare "YYYY-MM-DD") to unix seconds.
Instant parse_iso8601(const std::string& s);
std::string format_iso8601(Instant t);
std::string format_date(Instant t);

// Splits one CSV line on commas. No quoting; the formats here never need it.
std::vector<std::string> split_csv_line(const std::string& line);

// Locale-independent shortest-round-trip double formatting, used everywhere
// artifacts must be byte-stable across runs.
std::string format_double(double v);

double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

}  // namespace emonet
