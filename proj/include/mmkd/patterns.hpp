#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mmkd/errors.hpp"
#include "mmkd/rng.hpp"

namespace mmkd {

/// Presence indicator for the modalities of one sample: component j is true
/// when modality j survives the dropout. The all-dropped pattern is invalid
/// everywhere in this library.
struct DropoutPattern {
  std::vector<bool> present;

  DropoutPattern() = default;
  explicit DropoutPattern(std::vector<bool> p) : present(std::move(p)) {}

  static DropoutPattern all_present(int m) {
    return DropoutPattern(std::vector<bool>(static_cast<std::size_t>(m), true));
  }

  /// Pattern with exactly modality `dropped` absent.
  static DropoutPattern drop_one(int m, int dropped) {
    DropoutPattern p = all_present(m);
    p.present[static_cast<std::size_t>(dropped)] = false;
    return p;
  }

  /// Decodes the canonical index: binary counting on the boolean vector with
  /// modality 0 as the most significant bit. Index 2^m - 1 is all-present.
  static DropoutPattern from_index(int m, std::uint64_t index) {
    DropoutPattern p;
    p.present.resize(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      p.present[static_cast<std::size_t>(j)] = (index >> (m - 1 - j)) & 1u;
    }
    return p;
  }

  std::uint64_t canonical_index() const {
    std::uint64_t v = 0;
    for (bool bit : present) v = (v << 1) | (bit ? 1u : 0u);
    return v;
  }

  int size() const { return static_cast<int>(present.size()); }

  int present_count() const {
    int n = 0;
    for (bool bit : present) n += bit ? 1 : 0;
    return n;
  }

  bool is_all_present() const { return present_count() == size(); }
  bool is_nonempty() const { return present_count() > 0; }

  /// Render as names joined by "+" in modality order, e.g. "RGB+IR".
  std::string render(const std::vector<std::string>& names) const {
    std::string out;
    for (int j = 0; j < size(); ++j) {
      if (!present[static_cast<std::size_t>(j)]) continue;
      if (!out.empty()) out += '+';
      out += names[static_cast<std::size_t>(j)];
    }
    return out;
  }

  friend bool operator==(const DropoutPattern& a, const DropoutPattern& b) {
    return a.present == b.present;
  }
  friend auto operator<=>(const DropoutPattern& a, const DropoutPattern& b) {
    return a.present <=> b.present;
  }
};

inline std::vector<std::string> default_modality_names(int m) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) names.push_back("M" + std::to_string(j));
  return names;
}

/// The two indexed pattern families used throughout: the mining family
/// [all-present, drop-0, ..., drop-(m-1)] and the full family of all 2^m - 1
/// nonempty patterns in canonical (binary counting) order.
struct PatternFamilies {
  std::vector<DropoutPattern> mining;
  std::vector<DropoutPattern> full;
};

inline PatternFamilies enumerate_patterns(int m) {
  if (m < 2) throw ContractError("enumerate_patterns: need at least 2 modalities, got " + std::to_string(m));
  if (m > 16) throw ContractError("enumerate_patterns: modality count " + std::to_string(m) + " exceeds supported 16");
  PatternFamilies fam;
  fam.mining.reserve(static_cast<std::size_t>(m) + 1);
  fam.mining.push_back(DropoutPattern::all_present(m));
  for (int j = 0; j < m; ++j) fam.mining.push_back(DropoutPattern::drop_one(m, j));
  const std::uint64_t count = (std::uint64_t{1} << m) - 1;
  fam.full.reserve(count);
  for (std::uint64_t v = 1; v <= count; ++v) fam.full.push_back(DropoutPattern::from_index(m, v));
  return fam;
}

struct DropoutPolicy {
  enum class Kind { kUniform, kBernoulli };
  Kind kind = Kind::kUniform;
  double keep_prob = 0.5;  // per-modality keep probability, Bernoulli policy only
};

/// Draws one nonempty pattern. Uniform policy weights every nonempty subset
/// equally; Bernoulli keeps each modality independently and resamples until
/// at least one modality survives.
inline DropoutPattern sample_dropout_pattern(int m, Rng& rng, const DropoutPolicy& policy = {}) {
  if (m < 2) throw ContractError("sample_dropout_pattern: need at least 2 modalities, got " + std::to_string(m));
  if (policy.kind == DropoutPolicy::Kind::kUniform) {
    const std::uint64_t count = (std::uint64_t{1} << m) - 1;
    return DropoutPattern::from_index(m, 1 + rng.uniform_int(count));
  }
  DropoutPattern p;
  p.present.resize(static_cast<std::size_t>(m));
  do {
    for (int j = 0; j < m; ++j) p.present[static_cast<std::size_t>(j)] = rng.uniform01() < policy.keep_prob;
  } while (!p.is_nonempty());
  return p;
}

/// Zero-substitution dropout on a list of per-modality arrays: dropped
/// modalities become all-zero arrays of identical shape, survivors pass
/// through unscaled.
inline std::vector<Eigen::MatrixXd> apply_dropout(const std::vector<Eigen::MatrixXd>& features,
                                                  const DropoutPattern& pattern) {
  if (static_cast<int>(features.size()) != pattern.size()) {
    throw ContractError("apply_dropout: " + std::to_string(features.size()) + " feature arrays vs pattern of size " +
                        std::to_string(pattern.size()));
  }
  std::vector<Eigen::MatrixXd> out;
  out.reserve(features.size());
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (pattern.present[j]) {
      out.push_back(features[j]);
    } else {
      out.push_back(Eigen::MatrixXd::Zero(features[j].rows(), features[j].cols()));
    }
  }
  return out;
}

}  // namespace mmkd
