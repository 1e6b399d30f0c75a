#pragma once

// On-disk formats for the feature pipeline:
//
//  * Feature cache record (.feat), one per utterance, little-endian:
//      "CVFC" | u32 version | u32 T | u32 D | u32 B | f32 frame_period_ms
//      | f32[T*D] mcep | f32[T] f0 | u8[T] voiced | f32[T*B] ap
//    Arrays are row-major (frame-major).
//  * 16-bit PCM mono RIFF/WAVE audio.
//  * Speaker statistics as JSON.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "cyclevc/binary_io.hpp"
#include "cyclevc/error.hpp"
#include "cyclevc/features.hpp"

namespace cyclevc {

inline constexpr std::uint32_t kFeatureCacheVersion = 1;
inline constexpr std::string_view kFeatureCacheMagic = "CVFC";

inline Bytes encode_features(const FeatureSet& f) {
  f.validate();
  const std::size_t t = f.num_frames(), d = f.mcep.dims(), b = f.ap.bands();
  ByteWriter w;
  w.raw(kFeatureCacheMagic);
  w.u32(kFeatureCacheVersion);
  w.u32(static_cast<std::uint32_t>(t));
  w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(b));
  w.f32(static_cast<float>(f.mcep.frame_period_ms));
  for (double v : f.mcep.frames.values()) w.f32(static_cast<float>(v));
  for (std::size_t i = 0; i < t; ++i) w.f32(static_cast<float>(f.f0.voiced[i] ? f.f0.values[i] : 0.0));
  for (std::size_t i = 0; i < t; ++i) w.u8(f.f0.voiced[i] ? 1 : 0);
  for (double v : f.ap.frames.values()) w.f32(static_cast<float>(v));
  return w.take();
}

inline FeatureSet decode_features(const Bytes& bytes, const std::string& context = "feature record") {
  ByteReader r(bytes, context);
  if (r.raw(4) != kFeatureCacheMagic) throw FormatError(context + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kFeatureCacheVersion)
    throw FormatError(context + ": unsupported version " + std::to_string(version));
  const std::size_t t = r.u32(), d = r.u32(), b = r.u32();
  const double period = r.f32();
  if (t == 0 || d == 0) throw FormatError(context + ": empty feature record");
  r.need(t * d * 4 + t * 4 + t + t * b * 4);
  FeatureSet f;
  f.mcep.frame_period_ms = period;
  f.mcep.frames = make_matrix(t, d);
  for (auto& v : f.mcep.frames.values()) v = r.f32();
  f.f0.values.resize(t);
  f.f0.voiced.resize(t);
  for (auto& v : f.f0.values) v = r.f32();
  for (std::size_t i = 0; i < t; ++i) {
    const std::uint8_t m = r.u8();
    if (m > 1) throw FormatError(context + ": invalid voicing byte");
    f.f0.voiced[i] = m == 1;
  }
  f.ap.frames = make_matrix(t, b);
  for (auto& v : f.ap.frames.values()) v = r.f32();
  if (r.remaining() != 0) throw FormatError(context + ": trailing bytes");
  try {
    f.validate();
  } catch (const ValidationError& e) {
    throw FormatError(context + ": " + e.what());
  }
  return f;
}

inline void save_features(const std::filesystem::path& path, const FeatureSet& f) {
  write_file(path, encode_features(f));
}

inline FeatureSet load_features(const std::filesystem::path& path) {
  return decode_features(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// WAV

inline Waveform decode_wav(const Bytes& bytes, const std::string& context = "wav") {
  ByteReader r(bytes, context);
  if (r.raw(4) != "RIFF") throw FormatError(context + ": not a RIFF file");
  r.u32();
  if (r.raw(4) != "WAVE") throw FormatError(context + ": not a WAVE file");
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (r.remaining() >= 8) {
    const std::string id = r.raw(4);
    const std::uint32_t len = r.u32();
    if (id == "fmt ") {
      if (len < 16) throw FormatError(context + ": short fmt chunk");
      const std::uint16_t format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();
      r.u16();
      bits = r.u16();
      r.skip(len - 16 + (len & 1));
      if (format != 1) throw FormatError(context + ": only PCM WAV is supported");
      if (channels != 1) throw FormatError(context + ": only mono WAV is supported");
      if (bits != 16) throw FormatError(context + ": only 16-bit WAV is supported");
      if (rate == 0) throw FormatError(context + ": zero sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(context + ": data chunk before fmt chunk");
      if (len % 2 != 0) throw FormatError(context + ": odd data length");
      r.need(len);
      Waveform w;
      w.sample_rate = rate;
      w.samples.resize(len / 2);
      for (auto& s : w.samples) s = static_cast<double>(r.i16()) / 32768.0;
      return w;
    } else {
      r.skip(len + (len & 1));
    }
  }
  throw FormatError(context + ": no data chunk");
}

inline Bytes encode_wav(const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  ByteWriter out;
  out.raw("RIFF");
  out.u32(36 + 2 * n);
  out.raw("WAVE");
  out.raw("fmt ");
  out.u32(16);
  out.u16(1);
  out.u16(1);
  out.u32(rate);
  out.u32(rate * 2);
  out.u16(2);
  out.u16(16);
  out.raw("data");
  out.u32(2 * n);
  for (double s : w.samples) {
    const double c = std::clamp(std::isfinite(s) ? s : 0.0, -1.0, 1.0);
    out.i16(static_cast<std::int16_t>(std::lround(c * 32767.0)));
  }
  return out.take();
}

inline Waveform load_wav(const std::filesystem::path& path) { return decode_wav(read_file(path), path.string()); }
inline void save_wav(const std::filesystem::path& path, const Waveform& w) { write_file(path, encode_wav(w)); }

// ---------------------------------------------------------------------------
// Speaker statistics

struct SpeakerStats {
  NormStats mcep;
  F0Stats f0;
  friend bool operator==(const SpeakerStats&, const SpeakerStats&) = default;
};

inline nlohmann::json to_json(const SpeakerStats& s) {
  return {{"format", "cyclevc-speaker-stats"},
          {"version", 1},
          {"mcep_mean", s.mcep.mean},
          {"mcep_std", s.mcep.std},
          {"log_f0_mean", s.f0.log_mean},
          {"log_f0_std", s.f0.log_std}};
}

inline SpeakerStats speaker_stats_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "cyclevc-speaker-stats" || j.at("version") != 1)
      throw FormatError("not a version-1 speaker statistics document");
    SpeakerStats s;
    s.mcep.mean = j.at("mcep_mean").get<std::vector<double>>();
    s.mcep.std = j.at("mcep_std").get<std::vector<double>>();
    s.f0.log_mean = j.at("log_f0_mean").get<double>();
    s.f0.log_std = j.at("log_f0_std").get<double>();
    if (s.mcep.mean.size() != s.mcep.std.size()) throw FormatError("mean/std length mismatch");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("speaker statistics: ") + e.what());
  }
}

inline void save_speaker_stats(const std::filesystem::path& path, const SpeakerStats& s) {
  write_text_file(path, to_json(s).dump(2) + "\n");
}

inline SpeakerStats load_speaker_stats(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return speaker_stats_from_json(j);
}

}  // namespace cyclevc
