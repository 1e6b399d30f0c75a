#pragma once

// Acoustic feature containers, per-speaker statistics, MCEP normalization and
// the log-Gaussian F0 transform.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cyclevc/error.hpp"
#include "cyclevc/tensor.hpp"

namespace cyclevc {

/// Lower bound for every standard deviation this library divides by.
inline constexpr double kStdFloor = 1e-5;

/// Frames × dims, row-major.
using Matrix = Tensor<double>;

inline Matrix make_matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
  return Matrix({rows, cols}, fill);
}
inline std::size_t rows(const Matrix& m) { return m.rank() == 2 ? m.dim(0) : 0; }
inline std::size_t cols(const Matrix& m) { return m.rank() == 2 ? m.dim(1) : 0; }

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct AnalyzerConfig {
  double sample_rate = 16000.0;
  double frame_period_ms = 5.0;
  std::size_t mcep_order = 24;

  std::size_t hop_samples() const {
    return static_cast<std::size_t>(std::lround(sample_rate * frame_period_ms / 1000.0));
  }
  void validate() const {
    if (!(sample_rate > 0) || !(frame_period_ms > 0) || mcep_order == 0 || hop_samples() == 0)
      throw ValidationError("analyzer config requires positive sample_rate, frame_period_ms and mcep_order");
  }
};

struct McepSequence {
  Matrix frames;  // T × D
  double frame_period_ms = 5.0;

  std::size_t num_frames() const { return rows(frames); }
  std::size_t dims() const { return cols(frames); }
};

struct F0Track {
  std::vector<double> values;  // Hz; ignored where unvoiced
  std::vector<bool> voiced;

  std::size_t num_frames() const { return values.size(); }
};

struct ApSequence {
  Matrix frames;  // T × B
  std::size_t num_frames() const { return rows(frames); }
  std::size_t bands() const { return cols(frames); }
};

struct FeatureSet {
  McepSequence mcep;
  F0Track f0;
  ApSequence ap;

  std::size_t num_frames() const { return mcep.num_frames(); }

  /// Throws ValidationError unless all streams share one frame count T ≥ 1
  /// and every value is finite.
  void validate() const {
    const std::size_t t = mcep.num_frames();
    if (t == 0) throw ValidationError("feature set is empty");
    if (f0.values.size() != t || f0.voiced.size() != t || ap.num_frames() != t)
      throw ValidationError("inconsistent frame counts: mcep " + std::to_string(t) + ", f0 " +
                            std::to_string(f0.values.size()) + ", voicing " + std::to_string(f0.voiced.size()) +
                            ", ap " + std::to_string(ap.num_frames()));
    if (!mcep.frames.all_finite() || !ap.frames.all_finite()) throw ValidationError("non-finite feature values");
    for (std::size_t i = 0; i < t; ++i)
      if (f0.voiced[i] && !(f0.values[i] > 0 && std::isfinite(f0.values[i])))
        throw ValidationError("voiced frame " + std::to_string(i) + " has non-positive F0");
  }
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t dims() const { return mean.size(); }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

struct F0Stats {
  double log_mean = 0.0;
  double log_std = 1.0;
  friend bool operator==(const F0Stats&, const F0Stats&) = default;
};

/// Per-dimension mean and population std pooled over all frames of all
/// utterances; std is clamped to kStdFloor.
inline NormStats compute_mcep_stats(std::span<const McepSequence> corpus) {
  if (corpus.empty()) throw ValidationError("cannot compute MCEP statistics of an empty corpus");
  const std::size_t d = corpus.front().dims();
  std::vector<double> sum(d, 0.0);
  std::size_t count = 0;
  for (const auto& m : corpus) {
    if (m.dims() != d) throw ShapeError("corpus mixes MCEP orders " + std::to_string(d) + " and " + std::to_string(m.dims()));
    for (std::size_t t = 0; t < m.num_frames(); ++t)
      for (std::size_t j = 0; j < d; ++j) sum[j] += m.frames.at(t, j);
    count += m.num_frames();
  }
  if (count == 0) throw ValidationError("corpus contains no frames");
  NormStats s{std::vector<double>(d), std::vector<double>(d, 0.0)};
  for (std::size_t j = 0; j < d; ++j) s.mean[j] = sum[j] / static_cast<double>(count);
  // second pass keeps the variance accurate when the mean is large
  for (const auto& m : corpus)
    for (std::size_t t = 0; t < m.num_frames(); ++t)
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = m.frames.at(t, j) - s.mean[j];
        s.std[j] += diff * diff;
      }
  for (std::size_t j = 0; j < d; ++j) s.std[j] = std::max(std::sqrt(s.std[j] / static_cast<double>(count)), kStdFloor);
  return s;
}

namespace detail {
inline void check_norm_dims(const McepSequence& m, const NormStats& s) {
  if (m.dims() != s.dims() || s.std.size() != s.mean.size())
    throw ShapeError("MCEP dimension " + std::to_string(m.dims()) + " does not match statistics dimension " +
                     std::to_string(s.dims()));
}
}  // namespace detail

inline McepSequence normalize(const McepSequence& m, const NormStats& s) {
  detail::check_norm_dims(m, s);
  McepSequence out = m;
  for (std::size_t t = 0; t < m.num_frames(); ++t)
    for (std::size_t j = 0; j < m.dims(); ++j) out.frames.at(t, j) = (m.frames.at(t, j) - s.mean[j]) / s.std[j];
  return out;
}

inline McepSequence denormalize(const McepSequence& m, const NormStats& s) {
  detail::check_norm_dims(m, s);
  McepSequence out = m;
  for (std::size_t t = 0; t < m.num_frames(); ++t)
    for (std::size_t j = 0; j < m.dims(); ++j) out.frames.at(t, j) = m.frames.at(t, j) * s.std[j] + s.mean[j];
  return out;
}

/// Mean and population std of log F0 over voiced frames only.
inline F0Stats compute_f0_stats(std::span<const F0Track> tracks) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& tr : tracks) {
    if (tr.voiced.size() != tr.values.size()) throw ValidationError("F0 track voicing mask length mismatch");
    for (std::size_t i = 0; i < tr.values.size(); ++i)
      if (tr.voiced[i]) {
        if (!(tr.values[i] > 0)) throw ValidationError("voiced frame with non-positive F0");
        sum += std::log(tr.values[i]);
        ++count;
      }
  }
  if (count == 0) throw ValidationError("no voiced frames to compute F0 statistics from");
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  for (const auto& tr : tracks)
    for (std::size_t i = 0; i < tr.values.size(); ++i)
      if (tr.voiced[i]) {
        const double d = std::log(tr.values[i]) - mean;
        var += d * d;
      }
  return F0Stats{mean, std::max(std::sqrt(var / static_cast<double>(count)), kStdFloor)};
}

/// Log-Gaussian normalized transform on voiced frames:
///   log f0' = (log f0 - μ_src) · σ_tgt / σ_src + μ_tgt.
/// Unvoiced values and the voicing mask are copied unchanged.
inline F0Track convert_f0(const F0Track& track, const F0Stats& src, const F0Stats& tgt) {
  if (!(src.log_std >= kStdFloor)) throw ValidationError("source log-F0 std below floor");
  if (!(tgt.log_std >= 0)) throw ValidationError("negative target log-F0 std");
  if (track.voiced.size() != track.values.size()) throw ValidationError("F0 track voicing mask length mismatch");
  F0Track out = track;
  const double ratio = tgt.log_std / src.log_std;
  for (std::size_t i = 0; i < track.values.size(); ++i)
    if (track.voiced[i]) {
      if (!(track.values[i] > 0)) throw ValidationError("voiced frame with non-positive F0");
      out.values[i] = std::exp((std::log(track.values[i]) - src.log_mean) * ratio + tgt.log_mean);
    }
  return out;
}

}  // namespace cyclevc
