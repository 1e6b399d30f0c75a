#pragma once

// Shared fixtures for the unit and acceptance suites: temporary directories,
// finite-difference gradient checks, tiny double-precision networks, a naive
// DFT oracle and the synthetic affine voice-conversion task.

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cyclevc/cyclevc.hpp"

namespace cyclevc::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "cyclevc") {
    std::random_device rd;
    for (int attempt = 0; attempt < 100; ++attempt) {
      path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rd()));
      if (std::filesystem::create_directories(path_)) return;
    }
    throw IoError("could not create a temporary directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Gradient checks

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares the analytic gradient of loss() with central differences for every
/// scalar of every parameter. The relative error of one entry is
/// |a - n| / max(|a|, |n|, floor).
inline GradCheckResult check_gradients(const std::vector<Var<double>>& params, const std::function<Var<double>()>& loss,
                                       double step = 1e-5, double floor = 1e-6) {
  for (auto p : params) p.zero_grad();
  backward(loss());
  GradCheckResult r;
  for (auto p : params) {
    const Tensor<double> analytic = p.grad();
    Tensor<double>& value = p.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + step;
      const double up = loss().item();
      value[i] = saved - step;
      const double down = loss().item();
      value[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic[i] - numeric) / denom);
      ++r.checked;
    }
  }
  for (auto p : params) p.zero_grad();
  return r;
}

template <typename Scalar>
std::vector<Var<Scalar>> vars_of(const ParamSet<Scalar>& set) {
  std::vector<Var<Scalar>> out;
  for (std::size_t i = 0; i < set.size(); ++i) out.push_back(set.var(i));
  return out;
}

/// Adds N(0, spread²) to every entry so norms and biases are not at their
/// symmetric initial values.
template <typename Scalar>
void jitter(ParamSet<Scalar>& set, Rng& rng, double spread) {
  for (std::size_t i = 0; i < set.size(); ++i)
    for (auto& v : set.mutable_value(i).values()) v += static_cast<Scalar>(spread * rng.normal());
}

/// Generator with 2 feature channels, one stride-2 stage and one
/// shuffle-upsampling stage; residual blocks are optional.
inline GeneratorArch micro_generator_arch(std::size_t residual_blocks = 0) {
  GeneratorArch a;
  a.feature_dims = 2;
  a.input = {2, 3, 1, false};
  a.downsample = {{4, 3, 2, true}};
  a.residual_blocks = residual_blocks;
  a.residual_kernel = 3;
  a.residual_hidden = 2;
  a.upsample = {{4, 3, 1, true}};
  a.shuffle_factor = 2;
  a.output_kernel = 3;
  return a;
}

inline DiscriminatorArch micro_discriminator_arch(std::size_t height = 2, std::size_t width = 8) {
  DiscriminatorArch a;
  a.input_height = height;
  a.input_width = width;
  a.stages = {{2, 3, 3, 1, 1, false}, {2, 3, 3, 2, 2, true}};
  return a;
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double spread = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = spread * rng.normal();
  return t;
}

// ---------------------------------------------------------------------------
// Spectral oracle

/// |X_k|² / n for k = 0..n/2 of the zero-padded sequence, by direct summation.
inline std::vector<double> naive_power_spectrum(const std::vector<double>& x, std::size_t n) {
  std::vector<double> out(n / 2 + 1, 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < x.size() && t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
    out[k] = std::norm(acc) / static_cast<double>(n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic affine task

/// Two non-parallel "speakers". Frames of X are an MCEP-like mean profile
/// plus a fixed mixing of a few smooth latent trajectories (each a unit-
/// variance, twice low-passed noise) and a little white noise. Y utterances
/// come from independent draws of the same process pushed through a fixed
/// invertible affine map y = S·Q·x + b (S diagonal scales, Q a chain of
/// Givens rotations).
struct AffineTask {
  std::size_t dims = 24;
  std::size_t latents = 6;
  Matrix mixing;  // dims × latents
  std::vector<double> scales, offsets, angles;
  std::vector<FeatureSet> x_train, y_train, x_test, y_test;

  std::vector<double> map(const std::vector<double>& x) const {
    std::vector<double> v = x;
    for (std::size_t d = 0; d + 1 < dims; ++d) {
      const double c = std::cos(angles[d]), s = std::sin(angles[d]);
      const double a = v[d], b = v[d + 1];
      v[d] = c * a - s * b;
      v[d + 1] = s * a + c * b;
    }
    for (std::size_t d = 0; d < dims; ++d) v[d] = scales[d] * v[d] + offsets[d];
    return v;
  }
};

inline FeatureSet synth_utterance(Rng& rng, const AffineTask& task, std::size_t frames, double f0_base, bool mapped) {
  const std::size_t dims = task.dims, k = task.latents;
  FeatureSet f;
  f.mcep.frames = make_matrix(frames, dims);
  // two cascaded one-pole filters started near their stationary spread; the
  // gain keeps the output at unit variance
  std::vector<double> rho(k), s1(k), s2(k), gain(k);
  for (std::size_t j = 0; j < k; ++j) {
    rho[j] = 0.70 + 0.15 * static_cast<double>(j) / static_cast<double>(k);
    const double r2 = rho[j] * rho[j];
    gain[j] = std::sqrt((1 - r2) * (1 - r2) * (1 - r2) / (1 + r2));
    s1[j] = rng.normal() / std::sqrt(1 - r2);
    s2[j] = rng.normal();
  }
  std::vector<double> x(dims);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      s1[j] = rho[j] * s1[j] + rng.normal();
      s2[j] = rho[j] * s2[j] + gain[j] * s1[j];
    }
    for (std::size_t d = 0; d < dims; ++d) {
      double v = -1.5 * std::exp(-static_cast<double>(d) / 6.0) + 0.005 * rng.normal();
      for (std::size_t j = 0; j < k; ++j) v += task.mixing.at(d, j) * s2[j];
      x[d] = v;
    }
    const std::vector<double> y = mapped ? task.map(x) : x;
    for (std::size_t d = 0; d < dims; ++d) f.mcep.frames.at(t, d) = y[d];
  }
  f.f0.values.assign(frames, 0.0);
  f.f0.voiced.assign(frames, false);
  bool voiced = rng.uniform01() < 0.5;
  double log_f0 = std::log(f0_base);
  for (std::size_t t = 0; t < frames; ++t) {
    if (rng.uniform01() < 0.05) voiced = !voiced;
    log_f0 += 0.02 * rng.normal() - 0.05 * (log_f0 - std::log(f0_base));
    f.f0.voiced[t] = voiced;
    f.f0.values[t] = voiced ? std::exp(log_f0) : 0.0;
  }
  f.ap.frames = make_matrix(frames, StubVocoder::kApBands);
  for (auto& v : f.ap.frames.values()) v = rng.uniform01();
  return f;
}

inline AffineTask make_affine_task(std::uint64_t seed, std::size_t per_speaker = 40, std::size_t held_out = 8,
                                   std::size_t dims = 24) {
  Rng rng(seed);
  AffineTask task;
  task.dims = dims;
  task.mixing = make_matrix(dims, task.latents);
  for (std::size_t d = 0; d < dims; ++d)
    for (std::size_t j = 0; j < task.latents; ++j)
      task.mixing.at(d, j) = 0.6 / (1.0 + static_cast<double>(d) / 8.0) * rng.normal() / std::sqrt(3.0);
  for (std::size_t d = 0; d < dims; ++d) {
    task.scales.push_back(std::exp(0.7 * (2.0 * rng.uniform01() - 1.0)));
    task.offsets.push_back(0.5 * rng.normal());
    task.angles.push_back(0.6 * (2.0 * rng.uniform01() - 1.0));
  }
  const auto length = [&] { return 160 + static_cast<std::size_t>(rng.uniform_index(161)); };
  for (std::size_t i = 0; i < per_speaker; ++i) {
    FeatureSet f = synth_utterance(rng, task, length(), 120.0, false);
    (i < per_speaker - held_out ? task.x_train : task.x_test).push_back(std::move(f));
  }
  for (std::size_t i = 0; i < per_speaker; ++i) {
    FeatureSet f = synth_utterance(rng, task, length(), 220.0, true);
    (i < per_speaker - held_out ? task.y_train : task.y_test).push_back(std::move(f));
  }
  return task;
}

inline std::vector<McepSequence> mceps_of(const std::vector<FeatureSet>& fs) {
  std::vector<McepSequence> out;
  for (const auto& f : fs) out.push_back(f.mcep);
  return out;
}

inline std::vector<F0Track> f0s_of(const std::vector<FeatureSet>& fs) {
  std::vector<F0Track> out;
  for (const auto& f : fs) out.push_back(f.f0);
  return out;
}

inline SpeakerStats speaker_stats_of(const std::vector<FeatureSet>& fs) {
  const auto m = mceps_of(fs);
  const auto f = f0s_of(fs);
  return {compute_mcep_stats(m), compute_f0_stats(f)};
}

/// Normalized T × D matrices ready for crop sampling.
inline std::vector<Matrix> normalized_frames(const std::vector<FeatureSet>& fs, const NormStats& s) {
  std::vector<Matrix> out;
  for (const auto& f : fs) out.push_back(normalize(f.mcep, s).frames);
  return out;
}

}  // namespace cyclevc::testing
