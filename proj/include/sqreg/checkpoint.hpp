#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "sqreg/estimator.hpp"

namespace sqreg {

namespace detail {

// Hex-float text keeps doubles bit-exact through save/load.
inline std::string format_double(double value) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", value);
  return buf;
}

inline double parse_double(const std::string& token) {
  char* end = nullptr;
  const double value = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0')
    throw std::runtime_error("checkpoint: bad numeric field '" + token + "'");
  return value;
}

inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace detail

inline std::string canonical_config_text(const EstimatorConfig& config) {
  std::ostringstream out;
  out << "family=" << static_cast<int>(config.basis.family)
      << " dims=" << config.dims() << " tau=" << detail::format_double(config.tau)
      << " radius=" << detail::format_double(config.l1_radius)
      << " step_scale=" << detail::format_double(config.step_scale)
      << " smoothness=" << detail::format_double(config.smoothness)
      << " mode=" << static_cast<int>(config.mode);
  return out.str();
}

// Digest over every config field that affects the trajectory; a checkpoint
// must not silently resume under a different tau, radius or basis.
inline std::uint64_t config_digest(const EstimatorConfig& config) {
  return detail::fnv1a(canonical_config_text(config));
}

struct Checkpoint {
  EstimatorConfig config;
  CoefficientState state;
  std::int64_t pinball_count = 0;
  double pinball_mean = 0.0;
};

inline Checkpoint make_checkpoint(const OnlineEstimator& estimator) {
  Checkpoint checkpoint;
  checkpoint.config = estimator.config();
  checkpoint.state = estimator.state();
  checkpoint.pinball_count = estimator.streamed_pinball().count();
  checkpoint.pinball_mean = estimator.streamed_pinball().value().value_or(0.0);
  return checkpoint;
}

inline void save_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  const CoefficientState& state = checkpoint.state;
  out << "sqreg-checkpoint 1\n";
  out << "digest " << config_digest(checkpoint.config) << "\n";
  out << "family " << static_cast<int>(checkpoint.config.basis.family) << "\n";
  out << "dims " << checkpoint.config.dims() << "\n";
  out << "tau " << detail::format_double(checkpoint.config.tau) << "\n";
  out << "radius " << detail::format_double(checkpoint.config.l1_radius) << "\n";
  out << "step_scale " << detail::format_double(checkpoint.config.step_scale) << "\n";
  out << "smoothness " << detail::format_double(checkpoint.config.smoothness) << "\n";
  out << "mode " << static_cast<int>(checkpoint.config.mode) << "\n";
  out << "t " << state.t << "\n";
  out << "n_seen " << state.n_seen << "\n";
  out << "basis_dim " << state.basis_dim << "\n";
  out << "pinball_count " << checkpoint.pinball_count << "\n";
  out << "pinball_mean " << detail::format_double(checkpoint.pinball_mean) << "\n";
  out << "theta " << state.theta.size() << "\n";
  for (Index i = 0; i < state.theta.size(); ++i)
    out << detail::format_double(state.theta[i]) << "\n";
}

inline void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  save_checkpoint(out, checkpoint);
  if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

namespace detail {

inline std::string expect_field(std::istream& in, const std::string& key) {
  std::string name, value;
  if (!(in >> name >> value) || name != key)
    throw std::runtime_error("checkpoint: expected field '" + key + "'");
  return value;
}

inline std::int64_t parse_int(const std::string& token) {
  try {
    std::size_t used = 0;
    const std::int64_t value = std::stoll(token, &used);
    if (used != token.size()) throw std::runtime_error("");
    return value;
  } catch (const std::exception&) {
    throw std::runtime_error("checkpoint: bad integer field '" + token + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& token) {
  try {
    std::size_t used = 0;
    const std::uint64_t value = std::stoull(token, &used);
    if (used != token.size()) throw std::runtime_error("");
    return value;
  } catch (const std::exception&) {
    throw std::runtime_error("checkpoint: bad integer field '" + token + "'");
  }
}

}  // namespace detail

inline Checkpoint load_checkpoint(std::istream& in) {
  std::string magic, version;
  if (!(in >> magic >> version) || magic != "sqreg-checkpoint" || version != "1")
    throw std::runtime_error("checkpoint: unrecognized header");

  Checkpoint checkpoint;
  const std::uint64_t digest = detail::parse_uint(detail::expect_field(in, "digest"));
  const std::int64_t family = detail::parse_int(detail::expect_field(in, "family"));
  if (family != static_cast<std::int64_t>(BasisFamily::TrigonometricCentered))
    throw std::runtime_error("checkpoint: unknown basis family");
  const Index dims = detail::parse_int(detail::expect_field(in, "dims"));
  if (dims < 1) throw std::runtime_error("checkpoint: bad dims");
  checkpoint.config.basis = BasisSpec::trigonometric(dims);
  checkpoint.config.tau = detail::parse_double(detail::expect_field(in, "tau"));
  checkpoint.config.l1_radius = detail::parse_double(detail::expect_field(in, "radius"));
  checkpoint.config.step_scale = detail::parse_double(detail::expect_field(in, "step_scale"));
  checkpoint.config.smoothness = detail::parse_double(detail::expect_field(in, "smoothness"));
  const std::int64_t mode = detail::parse_int(detail::expect_field(in, "mode"));
  if (mode != 0 && mode != 1) throw std::runtime_error("checkpoint: bad mode");
  checkpoint.config.mode = static_cast<UpdateMode>(mode);
  try {
    checkpoint.config.validate();
  } catch (const std::invalid_argument& err) {
    throw std::runtime_error(std::string("checkpoint: ") + err.what());
  }

  checkpoint.state.dims = dims;
  checkpoint.state.t = detail::parse_int(detail::expect_field(in, "t"));
  checkpoint.state.n_seen = detail::parse_int(detail::expect_field(in, "n_seen"));
  checkpoint.state.basis_dim = detail::parse_int(detail::expect_field(in, "basis_dim"));
  if (checkpoint.state.basis_dim < 0) throw std::runtime_error("checkpoint: bad basis_dim");
  checkpoint.pinball_count = detail::parse_int(detail::expect_field(in, "pinball_count"));
  checkpoint.pinball_mean = detail::parse_double(detail::expect_field(in, "pinball_mean"));

  const Index theta_size = detail::parse_int(detail::expect_field(in, "theta"));
  if (theta_size != 1 + checkpoint.state.dims * checkpoint.state.basis_dim)
    throw std::runtime_error("checkpoint: coefficient length inconsistent with layout");
  checkpoint.state.theta.resize(theta_size);
  for (Index i = 0; i < theta_size; ++i) {
    std::string token;
    if (!(in >> token)) throw std::runtime_error("checkpoint: truncated coefficient block");
    checkpoint.state.theta[i] = detail::parse_double(token);
  }

  if (config_digest(checkpoint.config) != digest)
    throw std::runtime_error("checkpoint: config digest mismatch");
  if (checkpoint.state.t < 0 || checkpoint.state.n_seen < checkpoint.state.t)
    throw std::runtime_error("checkpoint: inconsistent counters");
  return checkpoint;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  return load_checkpoint(in);
}

inline OnlineEstimator restore_estimator(const Checkpoint& checkpoint) {
  OnlineEstimator estimator(checkpoint.config);
  estimator.restore(checkpoint.state,
                    RunningMean::restore(checkpoint.pinball_count, checkpoint.pinball_mean));
  return estimator;
}

}  // namespace sqreg
