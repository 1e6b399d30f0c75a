#pragma once

// Waveform <-> feature analysis/synthesis behind an abstract backend.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "cyclevc/error.hpp"
#include "cyclevc/features.hpp"

namespace cyclevc {

class Vocoder {
 public:
  virtual ~Vocoder() = default;

  virtual std::string name() const = 0;
  /// True if analyze/synthesize may be called concurrently on one instance.
  virtual bool reentrant() const = 0;
  virtual FeatureSet analyze(const Waveform& w, const AnalyzerConfig& cfg) const = 0;
  virtual Waveform synthesize(const FeatureSet& f, const AnalyzerConfig& cfg) const = 0;
};

/// Number of analysis frames for n samples: floor(n / hop) + 1, the same
/// count the WORLD analyzers report.
inline std::size_t frame_count(std::size_t num_samples, const AnalyzerConfig& cfg) {
  return num_samples / cfg.hop_samples() + 1;
}

/// Deterministic in-memory backend for tests and smoke runs. Each MCEP
/// dimension is the log amplitude of one sinusoid in a bank of D
/// equally-spaced bands; F0 comes from the first normalized autocorrelation
/// peak within 10% of the largest; every aperiodicity band holds
/// 1 - (peak correlation). Synthesis drives the same sinusoid bank with
/// continuous phase, plus a voiced partial at F0.
class StubVocoder final : public Vocoder {
 public:
  static constexpr std::size_t kApBands = 4;
  static constexpr double kAmplitudeFloor = 1e-6;
  static constexpr double kSilenceRms = 1e-4;
  static constexpr double kVoicingThreshold = 0.5;
  static constexpr double kMinF0 = 60.0;
  static constexpr double kMaxF0 = 500.0;
  static constexpr double kOctaveTolerance = 0.9;

  std::string name() const override { return "stub"; }
  bool reentrant() const override { return true; }

  static double band_frequency(std::size_t d, std::size_t dims, double sample_rate) {
    return (static_cast<double>(d) + 0.5) / static_cast<double>(dims) * sample_rate / 2.0;
  }

  FeatureSet analyze(const Waveform& w, const AnalyzerConfig& cfg) const override {
    cfg.validate();
    if (!(w.sample_rate > 0)) throw AnalysisError("waveform sample rate must be positive");
    if (std::abs(w.sample_rate - cfg.sample_rate) > 1e-9)
      throw AnalysisError("waveform sample rate " + std::to_string(w.sample_rate) + " != analyzer rate " +
                          std::to_string(cfg.sample_rate));
    const std::size_t hop = cfg.hop_samples();
    if (w.samples.size() < hop)
      throw AnalysisError("waveform of " + std::to_string(w.samples.size()) + " samples is shorter than one frame");
    for (double s : w.samples)
      if (!std::isfinite(s)) throw AnalysisError("waveform contains non-finite samples");

    const std::size_t t_count = frame_count(w.samples.size(), cfg);
    const std::size_t dims = cfg.mcep_order;
    FeatureSet f;
    f.mcep.frame_period_ms = cfg.frame_period_ms;
    f.mcep.frames = make_matrix(t_count, dims);
    f.f0.values.assign(t_count, 0.0);
    f.f0.voiced.assign(t_count, false);
    f.ap.frames = make_matrix(t_count, kApBands);

    const auto n = static_cast<std::ptrdiff_t>(w.samples.size());
    const auto sample = [&](std::ptrdiff_t i) { return i >= 0 && i < n ? w.samples[i] : 0.0; };
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(hop);
    const std::ptrdiff_t win = 2 * half;

    std::vector<double> window(win), frame(win);
    double wsum = 0.0;
    for (std::ptrdiff_t i = 0; i < win; ++i) {
      window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 0.5) / static_cast<double>(win));
      wsum += window[i];
    }

    const std::ptrdiff_t max_lag = static_cast<std::ptrdiff_t>(cfg.sample_rate / kMinF0);
    const std::ptrdiff_t min_lag = std::max<std::ptrdiff_t>(2, static_cast<std::ptrdiff_t>(cfg.sample_rate / kMaxF0));
    const std::ptrdiff_t f0_half = max_lag + half;
    std::vector<double> corr(static_cast<std::size_t>(max_lag - min_lag + 1));

    for (std::size_t t = 0; t < t_count; ++t) {
      const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(t * hop);
      for (std::ptrdiff_t i = 0; i < win; ++i) frame[i] = sample(center - half + i) * window[i];
      for (std::size_t d = 0; d < dims; ++d) {
        const double omega = 2.0 * std::numbers::pi * band_frequency(d, dims, cfg.sample_rate) / cfg.sample_rate;
        double re = 0.0, im = 0.0;
        for (std::ptrdiff_t i = 0; i < win; ++i) {
          const double ph = omega * static_cast<double>(center - half + i);
          re += frame[i] * std::cos(ph);
          im -= frame[i] * std::sin(ph);
        }
        const double amp = 2.0 * std::sqrt(re * re + im * im) / wsum;
        f.mcep.frames.at(t, d) = std::log(amp + kAmplitudeFloor);
      }

      // Normalized autocorrelation over [center - f0_half, center + f0_half).
      double energy = 0.0;
      for (std::ptrdiff_t i = -f0_half; i < f0_half; ++i) energy += sample(center + i) * sample(center + i);
      const double rms = std::sqrt(energy / static_cast<double>(2 * f0_half));
      double best = 0.0;
      std::ptrdiff_t best_lag = 0;
      if (rms >= kSilenceRms) {
        for (std::ptrdiff_t lag = min_lag; lag <= max_lag; ++lag) {
          double num = 0.0, e0 = 0.0, e1 = 0.0;
          for (std::ptrdiff_t i = -f0_half; i < f0_half - lag; ++i) {
            const double a = sample(center + i), b = sample(center + i + lag);
            num += a * b;
            e0 += a * a;
            e1 += b * b;
          }
          corr[lag - min_lag] = (e0 > 0 && e1 > 0) ? num / std::sqrt(e0 * e1) : 0.0;
          best = std::max(best, corr[lag - min_lag]);
        }
        // multiples of the period correlate about as well as the period
        // itself; take the first local peak close to the maximum
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(corr.size()); ++i) {
          const bool peak = (i == 0 || corr[i] >= corr[i - 1]) &&
                            (i + 1 == static_cast<std::ptrdiff_t>(corr.size()) || corr[i] >= corr[i + 1]);
          if (peak && corr[i] >= kOctaveTolerance * best) {
            best = corr[i];
            best_lag = i + min_lag;
            break;
          }
        }
      }
      const bool voiced = best >= kVoicingThreshold && best_lag > 0;
      f.f0.voiced[t] = voiced;
      f.f0.values[t] = voiced ? cfg.sample_rate / static_cast<double>(best_lag) : 0.0;
      for (std::size_t b = 0; b < kApBands; ++b) f.ap.frames.at(t, b) = std::clamp(1.0 - best, 0.0, 1.0);
    }
    return f;
  }

  Waveform synthesize(const FeatureSet& f, const AnalyzerConfig& cfg) const override {
    cfg.validate();
    f.validate();
    const std::size_t hop = cfg.hop_samples();
    const std::size_t t_count = f.num_frames();
    const std::size_t dims = f.mcep.dims();
    Waveform w;
    w.sample_rate = cfg.sample_rate;
    w.samples.assign(t_count * hop, 0.0);
    double voiced_phase = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
      double mean_amp = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const double amp = std::max(std::exp(f.mcep.frames.at(t, d)) - kAmplitudeFloor, 0.0);
        mean_amp += amp / static_cast<double>(dims);
        const double omega = 2.0 * std::numbers::pi * band_frequency(d, dims, cfg.sample_rate) / cfg.sample_rate;
        for (std::size_t i = 0; i < hop; ++i) {
          const std::size_t k = t * hop + i;
          w.samples[k] += amp * std::cos(omega * static_cast<double>(k));
        }
      }
      if (f.f0.voiced[t]) {
        const double periodic = 1.0 - std::clamp(f.ap.frames.at(t, 0), 0.0, 1.0);
        const double step = 2.0 * std::numbers::pi * f.f0.values[t] / cfg.sample_rate;
        for (std::size_t i = 0; i < hop; ++i) {
          w.samples[t * hop + i] += periodic * mean_amp * std::sin(voiced_phase);
          voiced_phase = std::fmod(voiced_phase + step, 2.0 * std::numbers::pi);
        }
      }
    }
    return w;
  }
};

/// Backend registry. "stub" is always available; "world" (alias "real")
/// requires the WORLD vocoder, which this build does not link.
inline std::unique_ptr<Vocoder> make_vocoder(std::string_view name) {
  if (name == "stub") return std::make_unique<StubVocoder>();
  if (name == "world" || name == "real")
    throw BackendError("vocoder backend '" + std::string(name) +
                       "' is not available in this build; use --backend stub or feature-only mode");
  throw ValidationError("unknown vocoder backend '" + std::string(name) + "'");
}

}  // namespace cyclevc
