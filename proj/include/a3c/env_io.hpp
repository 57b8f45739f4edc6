#pragma once

// Text serialization of a TabularMdp.
//
//   a3c-env 1
//   n_states <S>
//   n_actions <A>
//   feature_dim <d>
//   discount <gamma>
//   seed <u64>
//   initial_dist            followed by 1 line of S values
//   transition              followed by S*A lines of S values (row s*A+a)
//   reward                  followed by S*A lines of S values (raw R)
//   features                followed by S lines of d values
//   end
//
// Numbers are written with 17 significant digits, so reading a file back
// reproduces every double bit for bit.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "a3c/csv.hpp"
#include "a3c/errors.hpp"
#include "a3c/mdp.hpp"

namespace a3c {

inline constexpr const char* kEnvMagic = "a3c-env";
inline constexpr int kEnvVersion = 1;

namespace detail {

template <typename Mat>
void write_rows(std::ostream& out, const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

inline void expect_token(std::istream& in, const std::string& want) {
  std::string got;
  if (!(in >> got) || got != want) throw ConfigError("environment file: expected '" + want + "', got '" + got + "'");
}

template <typename T>
T read_value(std::istream& in, const std::string& key) {
  expect_token(in, key);
  T v{};
  if (!(in >> v)) throw ConfigError("environment file: bad value for '" + key + "'");
  return v;
}

inline double read_double(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw ConfigError("environment file: truncated numeric block");
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw ConfigError("environment file: bad number '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("environment file: bad number '" + tok + "'");
  }
}

inline RowMatrix read_block(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  RowMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = read_double(in);
  return m;
}

}  // namespace detail

inline void write_env(std::ostream& out, const TabularMdp& mdp) {
  out << kEnvMagic << ' ' << kEnvVersion << '\n';
  out << "n_states " << mdp.n_states() << '\n';
  out << "n_actions " << mdp.n_actions() << '\n';
  out << "feature_dim " << mdp.feature_dim() << '\n';
  out << "discount " << format_double(mdp.discount()) << '\n';
  out << "seed " << mdp.seed() << '\n';
  out << "initial_dist\n";
  detail::write_rows(out, mdp.initial_dist().transpose());
  out << "transition\n";
  detail::write_rows(out, mdp.transition());
  out << "reward\n";
  detail::write_rows(out, mdp.raw_reward());
  out << "features\n";
  detail::write_rows(out, mdp.features());
  out << "end\n";
}

inline TabularMdp read_env(std::istream& in) {
  detail::expect_token(in, kEnvMagic);
  int version = 0;
  if (!(in >> version) || version != kEnvVersion)
    throw ConfigError("environment file: unsupported format version");
  const auto n = detail::read_value<std::size_t>(in, "n_states");
  const auto m = detail::read_value<std::size_t>(in, "n_actions");
  const auto d = detail::read_value<std::size_t>(in, "feature_dim");
  detail::expect_token(in, "discount");
  const double gamma = detail::read_double(in);
  const auto seed = detail::read_value<std::uint64_t>(in, "seed");
  if (n == 0 || m == 0 || d == 0) throw ConfigError("environment file: zero dimension");
  const auto S = static_cast<Eigen::Index>(n);
  const auto SA = static_cast<Eigen::Index>(n * m);
  detail::expect_token(in, "initial_dist");
  RowMatrix eta = detail::read_block(in, 1, S);
  detail::expect_token(in, "transition");
  RowMatrix P = detail::read_block(in, SA, S);
  detail::expect_token(in, "reward");
  RowMatrix R = detail::read_block(in, SA, S);
  detail::expect_token(in, "features");
  RowMatrix phi = detail::read_block(in, S, static_cast<Eigen::Index>(d));
  detail::expect_token(in, "end");
  return TabularMdp(n, m, std::move(P), std::move(R), gamma, std::move(phi),
                    Vector(eta.row(0).transpose()), seed);
}

inline void save_env(const std::string& path, const TabularMdp& mdp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  write_env(out, mdp);
  if (!out.flush()) throw IoError(path, "write failed");
}

inline TabularMdp load_env(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  return read_env(in);
}

}  // namespace a3c
