#pragma once

// Utterance conversion: analyze -> normalize -> generator -> denormalize,
// with the log-Gaussian F0 transform and aperiodicity passthrough.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cyclevc/error.hpp"
#include "cyclevc/feature_io.hpp"
#include "cyclevc/features.hpp"
#include "cyclevc/model.hpp"
#include "cyclevc/vocoder.hpp"

namespace cyclevc {

/// Failure inside convert_utterance/convert_features, tagged with the stage.
class ConversionError : public Error {
 public:
  ConversionError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Maps a normalized T × D sequence to a normalized T × D sequence; T is a
/// multiple of the converter's length_multiple.
using McepMapping = std::function<Matrix(const Matrix&)>;

struct VoiceConverter {
  McepMapping mapping;
  std::size_t length_multiple = 1;
  SpeakerStats source, target;
  AnalyzerConfig analyzer;
};

inline VoiceConverter make_converter(GeneratorParams<float> generator, SpeakerStats source, SpeakerStats target,
                                     AnalyzerConfig analyzer = {}) {
  const std::size_t d = generator.arch.feature_dims;
  if (source.mcep.dims() != d || target.mcep.dims() != d)
    throw ShapeError("speaker statistics have " + std::to_string(source.mcep.dims()) + "/" +
                     std::to_string(target.mcep.dims()) + " dims, generator expects " + std::to_string(d));
  const std::size_t multiple = generator.arch.length_multiple();
  auto g = std::make_shared<const GeneratorParams<float>>(std::move(generator));
  McepMapping map = [g](const Matrix& m) { return generator_forward(*g, McepSequence{m, 5.0}).frames; };
  return VoiceConverter{std::move(map), multiple, std::move(source), std::move(target), analyzer};
}

/// Mirror index into [0, n) without repeating the edge sample; n == 1 maps
/// everything to 0.
inline std::size_t reflect_index(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  const std::size_t k = i % period;
  return k < n ? k : period - k;
}

/// Extends the sequence at the tail by reflection up to a multiple.
inline Matrix reflect_pad_tail(const Matrix& m, std::size_t multiple) {
  const std::size_t t = rows(m), d = cols(m);
  if (t == 0) throw ValidationError("cannot pad an empty sequence");
  const std::size_t padded = multiple <= 1 ? t : (t + multiple - 1) / multiple * multiple;
  Matrix out = make_matrix(padded, d);
  for (std::size_t i = 0; i < padded; ++i) {
    const std::size_t src = reflect_index(i, t);
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = m.at(src, j);
  }
  return out;
}

inline Matrix trim_rows(const Matrix& m, std::size_t t) {
  if (rows(m) < t) throw ShapeError("cannot trim to more rows than present");
  Matrix out = make_matrix(t, cols(m));
  std::copy(m.values().begin(), m.values().begin() + static_cast<std::ptrdiff_t>(t * cols(m)), out.values().begin());
  return out;
}

/// Feature-level conversion; frame count, voicing and aperiodicity are
/// preserved exactly.
inline FeatureSet convert_features(const FeatureSet& f, const VoiceConverter& vc) {
  try {
    f.validate();
  } catch (const Error& e) {
    throw ConversionError("validation", e.what());
  }
  if (!vc.mapping) throw ConversionError("validation", "converter has no mapping");
  const std::size_t t = f.num_frames();
  FeatureSet out;
  try {
    const McepSequence norm = normalize(f.mcep, vc.source.mcep);
    const Matrix padded = reflect_pad_tail(norm.frames, vc.length_multiple);
    const Matrix mapped = vc.mapping(padded);
    if (mapped.shape() != padded.shape())
      throw ShapeError("mapping changed shape " + shape_str(padded.shape()) + " -> " + shape_str(mapped.shape()));
    out.mcep = denormalize(McepSequence{trim_rows(mapped, t), f.mcep.frame_period_ms}, vc.target.mcep);
  } catch (const ConversionError&) {
    throw;
  } catch (const Error& e) {
    throw ConversionError("mcep", e.what());
  }
  try {
    out.f0 = convert_f0(f.f0, vc.source.f0, vc.target.f0);
  } catch (const Error& e) {
    throw ConversionError("f0", e.what());
  }
  out.ap = f.ap;
  return out;
}

inline std::vector<FeatureSet> convert_corpus(std::span<const FeatureSet> corpus, const VoiceConverter& vc) {
  std::vector<FeatureSet> out;
  out.reserve(corpus.size());
  for (const auto& f : corpus) out.push_back(convert_features(f, vc));
  return out;
}

inline Waveform convert_utterance(const Waveform& w, const VoiceConverter& vc, const Vocoder& vocoder) {
  FeatureSet analyzed;
  try {
    analyzed = vocoder.analyze(w, vc.analyzer);
  } catch (const Error& e) {
    throw ConversionError("analysis", e.what());
  }
  const FeatureSet converted = convert_features(analyzed, vc);
  try {
    return vocoder.synthesize(converted, vc.analyzer);
  } catch (const Error& e) {
    throw ConversionError("synthesis", e.what());
  }
}

}  // namespace cyclevc
