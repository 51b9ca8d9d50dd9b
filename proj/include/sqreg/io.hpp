#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "sqreg/estimator.hpp"
#include "sqreg/simlab.hpp"

namespace sqreg::io {

enum class InputFormat { Csv, Jsonl };

// Malformed input carries the line it came from so drivers can report it.
struct RecordError : std::runtime_error {
  RecordError(std::int64_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_number(line) {}
  std::int64_t line_number;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(current);
      current.clear();
    } else if (ch != '\r') {
      current += ch;
    }
  }
  fields.push_back(current);
  return fields;
}

inline std::optional<double> parse_number(std::string_view token) {
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t'))
    token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t')) token.remove_suffix(1);
  if (token.empty()) return std::nullopt;
  // strtod accepts hex floats, which the lossless output formats rely on
  std::string copy(token);
  char* end = nullptr;
  const double value = std::strtod(copy.c_str(), &end);
  if (end != copy.c_str() + copy.size()) return std::nullopt;
  return value;
}

}  // namespace detail

// x1,...,xp[,y] on one line; set expect_response=false for query files.
inline Vector parse_csv_coordinates(const std::string& line, Index dims, bool expect_response,
                                    std::int64_t line_number, double* y_out) {
  const std::vector<std::string> fields = detail::split_csv(line);
  const Index expected = dims + (expect_response ? 1 : 0);
  if (static_cast<Index>(fields.size()) != expected)
    throw RecordError(line_number, "expected " + std::to_string(expected) + " fields, got " +
                                       std::to_string(fields.size()));
  Vector x(dims);
  for (Index k = 0; k < dims; ++k) {
    const auto value = detail::parse_number(fields[static_cast<std::size_t>(k)]);
    if (!value) throw RecordError(line_number, "field " + std::to_string(k + 1) + " is not a number");
    x[k] = *value;
  }
  if (expect_response) {
    const auto value = detail::parse_number(fields.back());
    if (!value) throw RecordError(line_number, "response field is not a number");
    *y_out = *value;
  }
  return x;
}

inline Sample parse_csv_record(const std::string& line, Index dims, std::int64_t line_number) {
  Sample sample;
  sample.x = parse_csv_coordinates(line, dims, true, line_number, &sample.y);
  return sample;
}

// {"x": [...], "y": ...}
inline Sample parse_jsonl_record(const std::string& line, Index dims, std::int64_t line_number) {
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& err) {
    throw RecordError(line_number, std::string("invalid JSON: ") + err.what());
  }
  if (!parsed.is_object() || !parsed.contains("x") || !parsed.contains("y"))
    throw RecordError(line_number, "record must be an object with \"x\" and \"y\"");
  const auto& xs = parsed["x"];
  if (!xs.is_array() || static_cast<Index>(xs.size()) != dims)
    throw RecordError(line_number, "\"x\" must be an array of " + std::to_string(dims) + " numbers");
  Sample sample;
  sample.x.resize(dims);
  for (Index k = 0; k < dims; ++k) {
    if (!xs[static_cast<std::size_t>(k)].is_number())
      throw RecordError(line_number, "\"x\" entries must be numbers");
    sample.x[k] = xs[static_cast<std::size_t>(k)].get<double>();
  }
  if (!parsed["y"].is_number()) throw RecordError(line_number, "\"y\" must be a number");
  sample.y = parsed["y"].get<double>();
  return sample;
}

// A header line is one whose fields are not all numeric.
inline bool looks_like_csv_header(const std::string& line) {
  for (const std::string& field : detail::split_csv(line))
    if (!detail::parse_number(field)) return true;
  return false;
}

// Validation mirroring the learner's sample contract, raised as a
// line-numbered record error for driver-level reporting.
inline void check_sample_domain(const Sample& sample, std::int64_t line_number) {
  for (Index k = 0; k < sample.x.size(); ++k)
    if (!(sample.x[k] >= 0.0 && sample.x[k] <= 1.0))
      throw RecordError(line_number,
                        "covariate " + std::to_string(k + 1) + " outside [0,1]");
  if (!std::isfinite(sample.y)) throw RecordError(line_number, "response is not finite");
}

inline void write_reports_csv(std::ostream& out,
                              std::span<const simlab::EvaluationReport> reports) {
  out << "t,N,J,gamma,l2_error_sq,streamed_pinball,wall_time_ns\n";
  char buf[384];
  for (const simlab::EvaluationReport& report : reports) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%lld,%.17g,%.17g,%.17g,%lld\n",
                  static_cast<long long>(report.t), static_cast<long long>(report.n_seen),
                  static_cast<long long>(report.basis_dim), report.gamma, report.l2_error_sq,
                  report.streamed_pinball, static_cast<long long>(report.wall_time_ns));
    out << buf;
  }
}

inline std::vector<simlab::EvaluationReport> read_reports_csv(std::istream& in) {
  std::vector<simlab::EvaluationReport> reports;
  std::string line;
  std::int64_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line_number == 1 || line.empty()) continue;  // header
    const std::vector<std::string> fields = detail::split_csv(line);
    if (fields.size() != 7) throw RecordError(line_number, "expected 7 columns");
    simlab::EvaluationReport report;
    const auto gamma = detail::parse_number(fields[3]);
    const auto l2 = detail::parse_number(fields[4]);
    const auto pinball = detail::parse_number(fields[5]);
    if (!gamma || !l2 || !pinball) throw RecordError(line_number, "bad numeric column");
    report.t = std::stoll(fields[0]);
    report.n_seen = std::stoll(fields[1]);
    report.basis_dim = std::stoll(fields[2]);
    report.gamma = *gamma;
    report.l2_error_sq = *l2;
    report.streamed_pinball = *pinball;
    report.wall_time_ns = std::stoll(fields[6]);
    reports.push_back(report);
  }
  return reports;
}

}  // namespace sqreg::io
