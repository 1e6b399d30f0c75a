#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cyclevc/cyclevc.hpp"

using namespace cyclevc;

namespace {

McepSequence sequence(std::size_t frames, std::size_t dims, const std::vector<double>& values) {
  return McepSequence{Matrix({frames, dims}, values), 5.0};
}

F0Track track(std::vector<double> hz, std::vector<bool> voiced) { return F0Track{std::move(hz), std::move(voiced)}; }

}  // namespace

TEST(McepStats, PopulationStatistics) {
  const std::vector<McepSequence> corpus{sequence(1, 1, {0.0}), sequence(1, 1, {2.0})};
  const NormStats s = compute_mcep_stats(corpus);
  EXPECT_DOUBLE_EQ(s.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(s.std[0], 1.0);
}

TEST(McepStats, ConstantCorpusClampsStd) {
  const std::vector<McepSequence> corpus{sequence(3, 2, {1, 4, 1, 4, 1, 4})};
  const NormStats s = compute_mcep_stats(corpus);
  EXPECT_EQ(s.std, (std::vector<double>{kStdFloor, kStdFloor}));
  EXPECT_EQ(s.mean, (std::vector<double>{1.0, 4.0}));
}

TEST(McepStats, StandardizedCorpusIsNeutral) {
  const std::vector<McepSequence> corpus{sequence(4, 1, {-1, 1, -1, 1})};
  const NormStats s = compute_mcep_stats(corpus);
  EXPECT_NEAR(s.mean[0], 0.0, 1e-12);
  EXPECT_NEAR(s.std[0], 1.0, 1e-12);
}

TEST(McepStats, Errors) {
  EXPECT_THROW(compute_mcep_stats(std::vector<McepSequence>{}), ValidationError);
  const std::vector<McepSequence> mixed{sequence(1, 1, {0}), sequence(1, 2, {0, 0})};
  EXPECT_THROW(compute_mcep_stats(mixed), ShapeError);
}

TEST(Normalize, NeutralStatsAreIdentity) {
  const McepSequence m = sequence(2, 2, {1.5, -2, 0.25, 3});
  const NormStats s{{0, 0}, {1, 1}};
  EXPECT_EQ(normalize(m, s).frames, m.frames);
}

TEST(Normalize, DirectFormula) {
  const NormStats s{{1.0}, {2.0}};
  EXPECT_DOUBLE_EQ(normalize(sequence(1, 1, {3.0}), s).frames[0], 1.0);
}

TEST(Normalize, InversePair) {
  const McepSequence m = sequence(3, 2, {0.1, -7, 3.3, 2, 1e3, -0.4});
  const NormStats s{{0.5, -1}, {0.3, 4}};
  const McepSequence back = denormalize(normalize(m, s), s);
  for (std::size_t i = 0; i < m.frames.size(); ++i) EXPECT_NEAR(back.frames[i], m.frames[i], 1e-6 * (1 + std::abs(m.frames[i])));
}

TEST(Normalize, DimensionMismatch) {
  EXPECT_THROW(normalize(sequence(1, 2, {0, 0}), NormStats{{0}, {1}}), ShapeError);
}

TEST(F0Stats, ConstantVoicedInput) {
  const std::vector<F0Track> tracks{track({std::exp(5.0), std::exp(5.0)}, {true, true})};
  const F0Stats s = compute_f0_stats(tracks);
  EXPECT_NEAR(s.log_mean, 5.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.log_std, kStdFloor);
}

TEST(F0Stats, TwoValuesAndUnvoicedExcluded) {
  const std::vector<F0Track> tracks{track({std::exp(4.6), 0.0, std::exp(5.0), 999.0}, {true, false, true, false})};
  const F0Stats s = compute_f0_stats(tracks);
  EXPECT_NEAR(s.log_mean, 4.8, 1e-12);
  EXPECT_NEAR(s.log_std, 0.2, 1e-12);
}

TEST(F0Stats, NoVoicedFramesIsAnError) {
  const std::vector<F0Track> tracks{track({0, 0}, {false, false})};
  EXPECT_THROW(compute_f0_stats(tracks), ValidationError);
}

TEST(ConvertF0, EqualStatsIsIdentity) {
  const F0Track in = track({110.0, 0.0, 180.0}, {true, false, true});
  const F0Stats s{4.9, 0.25};
  const F0Track out = convert_f0(in, s, s);
  EXPECT_NEAR(out.values[0], 110.0, 110.0 * 1e-12);
  EXPECT_NEAR(out.values[2], 180.0, 180.0 * 1e-12);
  EXPECT_EQ(out.voiced, in.voiced);
  EXPECT_EQ(out.values[1], 0.0);
}

TEST(ConvertF0, MeanMapsToMean) {
  const F0Track out = convert_f0(track({std::exp(4.6)}, {true}), {4.6, 0.2}, {5.0, 0.3});
  EXPECT_NEAR(out.values[0], std::exp(5.0), std::exp(5.0) * 1e-12);
}

TEST(ConvertF0, DirectFormula) {
  const F0Track out = convert_f0(track({std::exp(4.8)}, {true}), {4.6, 0.2}, {5.0, 0.3});
  EXPECT_NEAR(out.values[0], std::exp(5.3), std::exp(5.3) * 1e-12);
}

TEST(ConvertF0, RoundTripUnderSwappedStats) {
  const F0Track in = track({95.0, 130.0, 0.0, 240.0}, {true, true, false, true});
  const F0Stats a{4.7, 0.15}, b{5.4, 0.22};
  const F0Track back = convert_f0(convert_f0(in, a, b), b, a);
  for (std::size_t i = 0; i < in.values.size(); ++i) EXPECT_NEAR(back.values[i], in.values[i], 1e-9 * in.values[i]);
}

TEST(ConvertF0, RejectsDegenerateSourceStd) {
  EXPECT_THROW(convert_f0(track({100}, {true}), {4.6, 0.0}, {5.0, 0.3}), ValidationError);
}

TEST(FeatureSet, ValidateCatchesInconsistencies) {
  FeatureSet f;
  EXPECT_THROW(f.validate(), ValidationError);
  f.mcep = sequence(2, 1, {0, 0});
  f.f0 = track({100, 0}, {true, false});
  f.ap.frames = make_matrix(2, 4);
  EXPECT_NO_THROW(f.validate());
  f.f0.values[0] = -1;
  EXPECT_THROW(f.validate(), ValidationError);
  f.f0.values[0] = 100;
  f.ap.frames = make_matrix(3, 4);
  EXPECT_THROW(f.validate(), ValidationError);
}
