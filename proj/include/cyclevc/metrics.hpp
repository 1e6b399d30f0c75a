#pragma once

// Objective evaluation of MCEP corpora: global variance per dimension,
// modulation spectrum per modulation frequency, and the RMSE between
// log-modulation spectra.

#include <cmath>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "cyclevc/binary_io.hpp"
#include "cyclevc/error.hpp"
#include "cyclevc/features.hpp"

namespace cyclevc {

struct GvProfile {
  std::vector<double> variance;  // per dimension
  friend bool operator==(const GvProfile&, const GvProfile&) = default;
};

/// Population variance over time per utterance and dimension, averaged
/// across utterances.
inline GvProfile global_variance(std::span<const McepSequence> corpus) {
  if (corpus.empty()) throw ValidationError("global variance of an empty corpus");
  const std::size_t d = corpus.front().dims();
  GvProfile gv{std::vector<double>(d, 0.0)};
  for (const auto& m : corpus) {
    if (m.dims() != d) throw ShapeError("corpus mixes MCEP orders");
    const std::size_t t = m.num_frames();
    if (t == 0) throw ValidationError("corpus contains an empty utterance");
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < t; ++i) mean += m.frames.at(i, j);
      mean /= static_cast<double>(t);
      double var = 0.0;
      for (std::size_t i = 0; i < t; ++i) var += (m.frames.at(i, j) - mean) * (m.frames.at(i, j) - mean);
      gv.variance[j] += var / static_cast<double>(t);
    }
  }
  for (auto& v : gv.variance) v /= static_cast<double>(corpus.size());
  return gv;
}

enum class MsMode {
  Utterance,  // whole utterances (split into fft_len pieces when longer)
  Segment,    // fixed-length segments of segment_frames, remainder dropped
};

struct MsOptions {
  std::size_t fft_len = 512;
  MsMode mode = MsMode::Utterance;
  std::size_t segment_frames = 128;
  double power_floor = 1e-10;
  double frame_period_ms = 5.0;

  void validate() const {
    if (fft_len < 2 || (fft_len & (fft_len - 1)) != 0) throw ValidationError("fft_len must be a power of two >= 2");
    if (mode == MsMode::Segment && (segment_frames == 0 || segment_frames > fft_len))
      throw ValidationError("segment_frames must lie in [1, fft_len]");
    if (!(power_floor > 0) || !(frame_period_ms > 0)) throw ValidationError("power floor and frame period must be positive");
  }
};

struct MsProfile {
  Matrix db;  // D × (fft_len/2 + 1), 10·log10 of the averaged power
  std::size_t fft_len = 512;
  double frame_period_ms = 5.0;

  std::size_t dims() const { return rows(db); }
  std::size_t bins() const { return cols(db); }
  double bin_frequency_hz(std::size_t k) const {
    return static_cast<double>(k) * (1000.0 / frame_period_ms) / static_cast<double>(fft_len);
  }
  friend bool operator==(const MsProfile&, const MsProfile&) = default;
};

namespace detail {
// FFTW planner calls are not thread-safe; plan execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// One-sided power |X_k|² / fft_len, k = 0..fft_len/2, of the mean-removed
/// trajectory zero-padded to fft_len. Summed over the full two-sided
/// spectrum this equals the energy of the padded, mean-removed trajectory.
inline std::vector<double> modulation_power(std::span<const double> trajectory, std::size_t fft_len) {
  if (trajectory.empty()) throw ValidationError("empty trajectory");
  if (trajectory.size() > fft_len) throw ValidationError("trajectory longer than fft_len");
  double mean = 0.0;
  for (double v : trajectory) mean += v;
  mean /= static_cast<double>(trajectory.size());

  const std::size_t bins = fft_len / 2 + 1;
  double* in = fftw_alloc_real(fft_len);
  fftw_complex* out = fftw_alloc_complex(bins);
  for (std::size_t i = 0; i < fft_len; ++i) in[i] = i < trajectory.size() ? trajectory[i] - mean : 0.0;
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(fft_len), in, out, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::vector<double> power(bins);
  for (std::size_t k = 0; k < bins; ++k)
    power[k] = (out[k][0] * out[k][0] + out[k][1] * out[k][1]) / static_cast<double>(fft_len);
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return power;
}

namespace detail {
// Frame ranges [begin, end) of every trajectory the MS averages over.
inline std::vector<std::pair<std::size_t, std::size_t>> ms_pieces(std::size_t frames, const MsOptions& o) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t len = o.mode == MsMode::Segment ? o.segment_frames : o.fft_len;
  for (std::size_t b = 0; b < frames; b += len) {
    const std::size_t e = std::min(frames, b + len);
    if (o.mode == MsMode::Segment && e - b < len) break;
    out.emplace_back(b, e);
  }
  return out;
}
}  // namespace detail

/// Per dimension: power spectra of every trajectory piece averaged in the
/// power domain, floored, then converted to dB.
inline MsProfile modulation_spectrum(std::span<const McepSequence> corpus, const MsOptions& o = {}) {
  o.validate();
  if (corpus.empty()) throw ValidationError("modulation spectrum of an empty corpus");
  const std::size_t d = corpus.front().dims();
  const std::size_t bins = o.fft_len / 2 + 1;
  Matrix acc = make_matrix(d, bins);
  std::size_t pieces = 0;
  std::vector<double> traj;
  for (const auto& m : corpus) {
    if (m.dims() != d) throw ShapeError("corpus mixes MCEP orders");
    for (const auto& [b, e] : detail::ms_pieces(m.num_frames(), o)) {
      ++pieces;
      for (std::size_t j = 0; j < d; ++j) {
        traj.assign(e - b, 0.0);
        for (std::size_t i = b; i < e; ++i) traj[i - b] = m.frames.at(i, j);
        const auto p = modulation_power(traj, o.fft_len);
        for (std::size_t k = 0; k < bins; ++k) acc.at(j, k) += p[k];
      }
    }
  }
  if (pieces == 0) throw ValidationError("no utterance is long enough for one modulation-spectrum segment");
  MsProfile ms{make_matrix(d, bins), o.fft_len, o.frame_period_ms};
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < bins; ++k)
      ms.db.at(j, k) = 10.0 * std::log10(std::max(acc.at(j, k) / static_cast<double>(pieces), o.power_floor));
  return ms;
}

/// sqrt(mean over all D × F cells of the squared dB difference).
inline double ms_rmse(const MsProfile& target, const MsProfile& converted) {
  if (target.db.shape() != converted.db.shape() || target.db.empty())
    throw ShapeError("modulation spectra differ in shape: " + shape_str(target.db.shape()) + " vs " +
                     shape_str(converted.db.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < target.db.size(); ++i) {
    const double diff = target.db[i] - converted.db[i];
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(target.db.size()));
}

/// Mean over dimensions of the dB profile, one value per modulation bin.
inline std::vector<double> ms_per_frequency(const MsProfile& ms) {
  std::vector<double> out(ms.bins(), 0.0);
  for (std::size_t j = 0; j < ms.dims(); ++j)
    for (std::size_t k = 0; k < ms.bins(); ++k) out[k] += ms.db.at(j, k) / static_cast<double>(ms.dims());
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct MetricsReport {
  GvProfile gv_source, gv_target, gv_converted;
  MsProfile ms_source, ms_target, ms_converted;
  double ms_rmse = 0.0;         // target vs converted
  double ms_rmse_source = 0.0;  // target vs unconverted source, for reference
  std::map<std::string, std::string> metadata;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline MetricsReport build_report(std::span<const McepSequence> source, std::span<const McepSequence> target,
                                  std::span<const McepSequence> converted, const MsOptions& o = {},
                                  std::map<std::string, std::string> metadata = {}) {
  MetricsReport r;
  r.gv_source = global_variance(source);
  r.gv_target = global_variance(target);
  r.gv_converted = global_variance(converted);
  r.ms_source = modulation_spectrum(source, o);
  r.ms_target = modulation_spectrum(target, o);
  r.ms_converted = modulation_spectrum(converted, o);
  r.ms_rmse = ms_rmse(r.ms_target, r.ms_converted);
  r.ms_rmse_source = ms_rmse(r.ms_target, r.ms_source);
  r.metadata = std::move(metadata);
  return r;
}

namespace detail {
inline nlohmann::json ms_json(const MsProfile& ms) {
  return {{"fft_len", ms.fft_len},
          {"frame_period_ms", ms.frame_period_ms},
          {"dims", ms.dims()},
          {"bins", ms.bins()},
          {"db", ms.db.storage()}};
}
inline MsProfile ms_from_json(const nlohmann::json& j) {
  MsProfile ms;
  ms.fft_len = j.at("fft_len");
  ms.frame_period_ms = j.at("frame_period_ms");
  const std::size_t d = j.at("dims"), f = j.at("bins");
  ms.db = Matrix({d, f}, j.at("db").get<std::vector<double>>());
  return ms;
}
}  // namespace detail

inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"format", "cyclevc-metrics"},
          {"version", 1},
          {"metadata", r.metadata},
          {"ms_rmse_db", r.ms_rmse},
          {"ms_rmse_source_db", r.ms_rmse_source},
          {"gv", {{"source", r.gv_source.variance}, {"target", r.gv_target.variance}, {"converted", r.gv_converted.variance}}},
          {"ms",
           {{"source", detail::ms_json(r.ms_source)},
            {"target", detail::ms_json(r.ms_target)},
            {"converted", detail::ms_json(r.ms_converted)}}}};
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "cyclevc-metrics" || j.at("version") != 1)
      throw FormatError("not a version-1 metrics report");
    MetricsReport r;
    r.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    r.ms_rmse = j.at("ms_rmse_db");
    r.ms_rmse_source = j.at("ms_rmse_source_db");
    r.gv_source.variance = j.at("gv").at("source").get<std::vector<double>>();
    r.gv_target.variance = j.at("gv").at("target").get<std::vector<double>>();
    r.gv_converted.variance = j.at("gv").at("converted").get<std::vector<double>>();
    r.ms_source = detail::ms_from_json(j.at("ms").at("source"));
    r.ms_target = detail::ms_from_json(j.at("ms").at("target"));
    r.ms_converted = detail::ms_from_json(j.at("ms").at("converted"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics report: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("metrics report: ") + e.what());
  }
}

namespace detail {
inline std::string series_text(const std::vector<double>& x, const std::vector<double>& y) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < x.size(); ++i) os << x[i] << ' ' << y[i] << '\n';
  return os.str();
}
}  // namespace detail

/// Writes report.json plus two-column plot series:
///   gv_{source,target,converted}.dat: MCEP index, variance
///   ms_{source,target,converted}.dat: modulation frequency [Hz], mean dB
inline void write_report(const std::filesystem::path& dir, const MetricsReport& r) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "report.json", to_json(r).dump(2) + "\n");
  const auto gv = [&](const char* name, const GvProfile& p) {
    std::vector<double> idx(p.variance.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
    write_text_file(dir / (std::string("gv_") + name + ".dat"), detail::series_text(idx, p.variance));
  };
  const auto ms = [&](const char* name, const MsProfile& p) {
    std::vector<double> hz(p.bins());
    for (std::size_t k = 0; k < hz.size(); ++k) hz[k] = p.bin_frequency_hz(k);
    write_text_file(dir / (std::string("ms_") + name + ".dat"), detail::series_text(hz, ms_per_frequency(p)));
  };
  gv("source", r.gv_source);
  gv("target", r.gv_target);
  gv("converted", r.gv_converted);
  ms("source", r.ms_source);
  ms("target", r.ms_target);
  ms("converted", r.ms_converted);
}

inline MetricsReport read_report(const std::filesystem::path& path) {
  try {
    return report_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace cyclevc
