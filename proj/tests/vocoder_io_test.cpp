#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cyclevc/cyclevc.hpp"
#include "support.hpp"

using namespace cyclevc;
using namespace cyclevc::testing;

namespace {

Waveform tone(double hz, double seconds, double rate = 16000.0) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  return w;
}

}  // namespace

TEST(StubVocoder, OneSecondGivesAboutTwoHundredFrames) {
  const AnalyzerConfig cfg;
  const FeatureSet f = StubVocoder().analyze(tone(150, 1.0), cfg);
  EXPECT_EQ(f.num_frames(), frame_count(16000, cfg));
  EXPECT_EQ(f.num_frames(), 201u);
  EXPECT_EQ(f.mcep.dims(), cfg.mcep_order);
  EXPECT_NO_THROW(f.validate());
}

TEST(StubVocoder, SilenceIsUnvoiced) {
  Waveform w;
  w.samples.assign(8000, 0.0);
  const FeatureSet f = StubVocoder().analyze(w, {});
  for (bool v : f.f0.voiced) EXPECT_FALSE(v);
}

TEST(StubVocoder, PeriodicToneIsVoicedNearItsPitch) {
  const FeatureSet f = StubVocoder().analyze(tone(200, 0.5), {});
  std::size_t voiced = 0;
  for (std::size_t t = 10; t + 10 < f.num_frames(); ++t)
    if (f.f0.voiced[t]) {
      ++voiced;
      EXPECT_NEAR(f.f0.values[t], 200.0, 5.0);
    }
  EXPECT_GT(voiced, f.num_frames() / 2);
}

TEST(StubVocoder, RoundTripPreservesDuration) {
  const AnalyzerConfig cfg;
  const Waveform w = tone(123, 0.73);
  const Waveform out = StubVocoder().synthesize(StubVocoder().analyze(w, cfg), cfg);
  const auto diff = static_cast<long>(out.samples.size()) - static_cast<long>(w.samples.size());
  EXPECT_LE(std::abs(diff), static_cast<long>(cfg.hop_samples()));
  EXPECT_EQ(out.sample_rate, w.sample_rate);
}

TEST(StubVocoder, TwoHundredFramesSynthesizeAboutOneSecond) {
  FeatureSet f;
  f.mcep.frames = make_matrix(200, 24, -3.0);
  f.f0 = {std::vector<double>(200, 120.0), std::vector<bool>(200, true)};
  f.ap.frames = make_matrix(200, StubVocoder::kApBands, 0.2);
  const Waveform w = StubVocoder().synthesize(f, {});
  EXPECT_NEAR(w.duration_s(), 1.0, 0.005);
}

TEST(StubVocoder, Errors) {
  EXPECT_THROW(StubVocoder().synthesize(FeatureSet{}, {}), ValidationError);
  Waveform short_wave;
  short_wave.samples.assign(10, 0.0);
  EXPECT_THROW(StubVocoder().analyze(short_wave, {}), AnalysisError);
  EXPECT_THROW(StubVocoder().analyze(tone(100, 0.1, 8000.0), {}), AnalysisError);
}

TEST(VocoderRegistry, Backends) {
  EXPECT_EQ(make_vocoder("stub")->name(), "stub");
  EXPECT_THROW(make_vocoder("world"), BackendError);
  EXPECT_THROW(make_vocoder("real"), BackendError);
  EXPECT_THROW(make_vocoder("nope"), ValidationError);
}

TEST(FeatureCache, RoundTripIsExactForFloatValues) {
  FeatureSet f;
  f.mcep.frames = Matrix({2, 3}, std::vector<double>{0.5, -1.25, 2, 3.75, 0, -8});
  f.f0 = {{110.5, 0.0}, {true, false}};
  f.ap.frames = Matrix({2, 1}, std::vector<double>{0.25, 1.0});
  const FeatureSet back = decode_features(encode_features(f));
  EXPECT_EQ(back.mcep.frames, f.mcep.frames);
  EXPECT_EQ(back.f0.values, f.f0.values);
  EXPECT_EQ(back.f0.voiced, f.f0.voiced);
  EXPECT_EQ(back.ap.frames, f.ap.frames);
  EXPECT_EQ(encode_features(back), encode_features(f));
}

TEST(FeatureCache, CorruptRecordsAreRejected) {
  FeatureSet f;
  f.mcep.frames = make_matrix(2, 2, 1.0);
  f.f0 = {{0, 0}, {false, false}};
  f.ap.frames = make_matrix(2, 1);
  Bytes bytes = encode_features(f);
  Bytes truncated(bytes.begin(), bytes.end() - 3);
  EXPECT_THROW(decode_features(truncated), FormatError);
  Bytes bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_features(bad_magic), FormatError);
  Bytes trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_features(trailing), FormatError);
}

TEST(FeatureCache, FileRoundTrip) {
  TempDir dir;
  FeatureSet f;
  f.mcep.frames = make_matrix(3, 2, 0.5);
  f.f0 = {{100, 0, 101}, {true, false, true}};
  f.ap.frames = make_matrix(3, 4, 0.125);
  save_features(dir / "a.cvf", f);
  EXPECT_EQ(load_features(dir / "a.cvf").mcep.frames, f.mcep.frames);
  EXPECT_THROW(load_features(dir / "missing.cvf"), IoError);
}

TEST(Wav, RoundTripWithinQuantization) {
  TempDir dir;
  const Waveform w = tone(440, 0.05);
  save_wav(dir / "t.wav", w);
  const Waveform back = load_wav(dir / "t.wav");
  ASSERT_EQ(back.samples.size(), w.samples.size());
  EXPECT_EQ(back.sample_rate, 16000.0);
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(back.samples[i], w.samples[i], 1.0 / 16384);
}

TEST(Wav, RejectsUnsupportedFormats) {
  EXPECT_THROW(decode_wav(Bytes{'R', 'I', 'F', 'F'}), FormatError);
  Bytes stereo = encode_wav(tone(100, 0.01));
  stereo[22] = 2;  // channel count
  EXPECT_THROW(decode_wav(stereo), FormatError);
}

TEST(SpeakerStatsIo, JsonRoundTripIsExact) {
  TempDir dir;
  const SpeakerStats s{{{0.1, -2.0 / 3.0}, {1.0 / 7.0, 2.5}}, {5.0123456789, 0.2}};
  save_speaker_stats(dir / "s.json", s);
  EXPECT_EQ(load_speaker_stats(dir / "s.json"), s);
  write_text_file(dir / "bad.json", "{\"format\": \"other\"}");
  EXPECT_THROW(load_speaker_stats(dir / "bad.json"), FormatError);
}
