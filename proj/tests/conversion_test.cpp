#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cyclevc/cyclevc.hpp"
#include "support.hpp"

using namespace cyclevc;
using namespace cyclevc::testing;

namespace {

VoiceConverter identity_converter(const SpeakerStats& stats, std::size_t multiple, std::vector<Shape>* seen = nullptr) {
  VoiceConverter vc;
  vc.mapping = [seen](const Matrix& m) {
    if (seen) seen->push_back(m.shape());
    return m;
  };
  vc.length_multiple = multiple;
  vc.source = stats;
  vc.target = stats;
  return vc;
}

Waveform chirp(double seconds) {
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(seconds * w.sample_rate));
  double phase = 0;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double hz = 120 + 40 * std::sin(static_cast<double>(i) / 4000.0);
    phase += 2 * std::numbers::pi * hz / w.sample_rate;
    const bool gap = (i / 2400) % 4 == 3;
    w.samples[i] = gap ? 0.0 : 0.4 * std::sin(phase) + 0.1 * std::sin(3 * phase);
  }
  return w;
}

}  // namespace

TEST(ReflectPad, MirrorsWithoutRepeatingTheEdge) {
  Matrix m = make_matrix(3, 1);
  for (std::size_t i = 0; i < 3; ++i) m.at(i, 0) = static_cast<double>(i);
  const Matrix p = reflect_pad_tail(m, 4);
  ASSERT_EQ(rows(p), 4u);
  EXPECT_EQ(p.at(3, 0), 1.0);
  EXPECT_EQ(rows(reflect_pad_tail(m, 1)), 3u);
  EXPECT_EQ(rows(reflect_pad_tail(make_matrix(1, 2, 5.0), 4)), 4u);
  EXPECT_THROW(reflect_pad_tail(make_matrix(0, 2), 4), ValidationError);
}

TEST(ConvertFeatures, NullConversionReproducesAnalysis) {
  const StubVocoder stub;
  const FeatureSet f = stub.analyze(chirp(0.4), {});
  const SpeakerStats stats = speaker_stats_of({f});
  const FeatureSet out = convert_features(f, identity_converter(stats, 4));
  for (std::size_t i = 0; i < f.mcep.frames.size(); ++i) EXPECT_NEAR(out.mcep.frames[i], f.mcep.frames[i], 1e-5);
  for (std::size_t i = 0; i < f.f0.values.size(); ++i) EXPECT_NEAR(out.f0.values[i], f.f0.values[i], 1e-5 * (1 + f.f0.values[i]));
  EXPECT_EQ(out.ap.frames, f.ap.frames);
}

TEST(ConvertUtterance, NullConversionEqualsAnalysisSynthesis) {
  const StubVocoder stub;
  const Waveform w = chirp(0.3);
  const FeatureSet f = stub.analyze(w, {});
  const Waveform plain = stub.synthesize(f, {});
  const Waveform converted = convert_utterance(w, identity_converter(speaker_stats_of({f}), 4), stub);
  ASSERT_EQ(converted.samples.size(), plain.samples.size());
  for (std::size_t i = 0; i < plain.samples.size(); ++i) EXPECT_NEAR(converted.samples[i], plain.samples[i], 1e-4);
}

TEST(ConvertFeatures, PadsToMultipleAndTrims) {
  const AffineTask task = make_affine_task(3, 2, 0);
  FeatureSet f = task.x_train[0];
  f.mcep.frames = trim_rows(f.mcep.frames, 130);
  f.f0.values.resize(130);
  f.f0.voiced.resize(130);
  f.ap.frames = trim_rows(f.ap.frames, 130);
  std::vector<Shape> seen;
  const FeatureSet out = convert_features(f, identity_converter(speaker_stats_of(task.x_train), 4, &seen));
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_EQ(seen[0], (Shape{132, 24}));
  EXPECT_EQ(out.num_frames(), 130u);
  EXPECT_EQ(out.f0.voiced, f.f0.voiced);
}

TEST(ConvertFeatures, GeneratorConversionKeepsVoicingAndIsDeterministic) {
  const AffineTask task = make_affine_task(4, 6, 0);
  const SpeakerStats sx = speaker_stats_of(task.x_train), sy = speaker_stats_of(task.y_train);
  const Networks<float> nets = init_params<float>(ModelConfig::tiny(), 2);
  const VoiceConverter vc = make_converter(nets.gen_xy, sx, sy);
  for (const FeatureSet& f : task.x_train) {
    const FeatureSet a = convert_features(f, vc), b = convert_features(f, vc);
    EXPECT_EQ(a.mcep.frames, b.mcep.frames);
    EXPECT_EQ(a.f0.values, b.f0.values);
    EXPECT_EQ(a.f0.voiced, f.f0.voiced);
    EXPECT_EQ(a.ap.frames, f.ap.frames);
    EXPECT_EQ(a.num_frames(), f.num_frames());
    for (std::size_t t = 0; t < f.num_frames(); ++t) {
      if (!f.f0.voiced[t]) {
        EXPECT_EQ(a.f0.values[t], f.f0.values[t]);
      }
    }
  }
}

TEST(ConvertCorpus, PreservesPerUtteranceFrameCounts) {
  const AffineTask task = make_affine_task(5, 54, 0);
  const SpeakerStats stats = speaker_stats_of(task.x_train);
  const auto out = convert_corpus(task.x_train, identity_converter(stats, 4));
  ASSERT_EQ(out.size(), 54u);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].num_frames(), task.x_train[i].num_frames());
}

TEST(Conversion, ErrorsCarryTheirStage) {
  const StubVocoder stub;
  const FeatureSet f = stub.analyze(chirp(0.2), {});
  const SpeakerStats stats = speaker_stats_of({f});
  const VoiceConverter vc = identity_converter(stats, 4);
  Waveform too_short;
  too_short.samples.assign(5, 0.0);
  try {
    convert_utterance(too_short, vc, stub);
    FAIL() << "expected a ConversionError";
  } catch (const ConversionError& e) {
    EXPECT_EQ(e.stage(), "analysis");
  }
  FeatureSet broken = f;
  broken.f0.voiced.pop_back();
  try {
    convert_features(broken, vc);
    FAIL() << "expected a ConversionError";
  } catch (const ConversionError& e) {
    EXPECT_EQ(e.stage(), "validation");
  }
  VoiceConverter bad = vc;
  bad.source.f0.log_std = 0.0;
  try {
    convert_features(f, bad);
    FAIL() << "expected a ConversionError";
  } catch (const ConversionError& e) {
    EXPECT_EQ(e.stage(), "f0");
  }
}

TEST(Conversion, StatisticsMustMatchGenerator) {
  const Networks<float> nets = init_params<float>(ModelConfig::tiny(), 1);
  const SpeakerStats wrong{{std::vector<double>(10, 0.0), std::vector<double>(10, 1.0)}, {}};
  EXPECT_THROW(make_converter(nets.gen_xy, wrong, wrong), ShapeError);
}
