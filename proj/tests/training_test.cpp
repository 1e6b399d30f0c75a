#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "cyclevc/cyclevc.hpp"
#include "support.hpp"

using namespace cyclevc;
using namespace cyclevc::testing;

namespace {

TrainingConfig micro_config() {
  TrainingConfig c;
  c.model.generator = micro_generator_arch(1);
  c.model.discriminator = micro_discriminator_arch(2, 8);
  c.crop_frames = 8;
  c.seed = 7;
  c.checkpoint_every = 0;
  c.total_iters = 0;
  return c;
}

std::vector<Matrix> random_corpus(Rng& rng, std::size_t count, std::size_t frames, std::size_t dims) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < count; ++i) {
    Matrix m = make_matrix(frames + i, dims);
    for (auto& v : m.values()) v = rng.normal();
    out.push_back(std::move(m));
  }
  return out;
}

struct MicroData {
  std::vector<Matrix> x, y;
  MicroData() {
    Rng rng(99);
    x = random_corpus(rng, 3, 12, 2);
    y = random_corpus(rng, 3, 10, 2);
  }
};

}  // namespace

TEST(Schedules, LearningRates) {
  const TrainingConfig c;
  EXPECT_EQ(lr_at(0, c), (LearningRates{2e-4, 1e-4}));
  EXPECT_EQ(lr_at(199'999, c), (LearningRates{2e-4, 1e-4}));
  EXPECT_EQ(lr_at(300'000, c), (LearningRates{1e-4, 5e-5}));
  EXPECT_EQ(lr_at(400'000, c), (LearningRates{0, 0}));
  EXPECT_EQ(lr_at(500'000, c), (LearningRates{0, 0}));
}

TEST(Schedules, IdentityWeight) {
  const TrainingConfig c;
  EXPECT_EQ(lambda_id_at(0, c), 5.0);
  EXPECT_EQ(lambda_id_at(9'999, c), 5.0);
  EXPECT_EQ(lambda_id_at(10'000, c), 0.0);
}

TEST(CropSampling, ExactLengthUtteranceIsTakenWhole) {
  Rng data(1);
  const auto corpus = random_corpus(data, 1, 128, 3);
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    Rng rng(seed);
    EXPECT_EQ(sample_crop(corpus, 128, rng), corpus[0]);
  }
}

TEST(CropSampling, DeterministicPerSeed) {
  Rng data(2);
  const auto corpus = random_corpus(data, 4, 40, 3);
  Rng a(5), b(5);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_crop(corpus, 16, a), sample_crop(corpus, 16, b));
}

TEST(CropSampling, UtterancesChosenUniformly) {
  std::vector<Matrix> corpus{make_matrix(50, 1, 0.0), make_matrix(50, 1, 1.0)};
  Rng rng(3);
  int first = 0;
  for (int i = 0; i < 10'000; ++i) first += sample_crop(corpus, 20, rng).at(0, 0) == 0.0;
  EXPECT_NEAR(first, 5000, 300);
}

TEST(CropSampling, ShortUtterancesWrapAround) {
  Matrix m = make_matrix(3, 1);
  for (std::size_t i = 0; i < 3; ++i) m.at(i, 0) = static_cast<double>(i);
  Rng rng(4);
  const Matrix crop = sample_crop(std::vector<Matrix>{m}, 7, rng);
  for (std::size_t i = 1; i < 7; ++i) EXPECT_EQ(crop.at(i, 0), std::fmod(crop.at(i - 1, 0) + 1, 3.0));
}

TEST(CropSampling, Errors) {
  Rng rng(5);
  EXPECT_THROW(sample_crop(std::vector<Matrix>{}, 8, rng), ValidationError);
  EXPECT_THROW(sample_crop(std::vector<Matrix>{make_matrix(4, 1)}, 0, rng), ValidationError);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  TrainingConfig c = micro_config();
  c.lambda_cyc = 7.5;
  c.seed = 123;
  const nlohmann::json j = c;
  const TrainingConfig back = training_config_from_json(j);
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_THROW(training_config_from_json({{"lambda_cycle", 10}}), ValidationError);
  EXPECT_THROW(training_config_from_json({{"model", "huge"}}), ValidationError);
  EXPECT_THROW(training_config_from_json({{"seed", "x"}}), ValidationError);
}

TEST(Config, HashIgnoresRunLength) {
  TrainingConfig a = micro_config(), b = micro_config();
  b.total_iters = 999;
  b.checkpoint_every = 3;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.lr_g = 1e-3;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, Validation) {
  TrainingConfig c = micro_config();
  c.crop_frames = 6;
  EXPECT_THROW(c.validate(), ValidationError);
  c = micro_config();
  c.lambda_id = -1;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Adam, FirstStepMovesBySignTimesLearningRate) {
  ParamSet<double> p;
  p.add("w", Tensor<double>({2}, std::vector<double>{1.0, -1.0}));
  auto st = make_adam_state(p);
  backward(mean_squared_offset(p.var(0), 0.0));
  adam_update(p, st, 0.1, 0.5, 0.999, 1e-12);
  EXPECT_NEAR(p.value(0)[0], 0.9, 1e-9);
  EXPECT_NEAR(p.value(0)[1], -0.9, 1e-9);
}

TEST(TrainStep, ZeroLearningRateLeavesParametersUnchanged) {
  const MicroData d;
  TrainingConfig c = micro_config();
  c.lr_const_iters = 0;
  c.lr_decay_iters = 1;
  TrainerState s = init_trainer_state(c);
  s.iteration = 5;
  const Networks<float> before = s.nets;
  Rng rng(1);
  const LossBreakdown b =
      train_step(s, sample_batch<float>(d.x, 8, 1, rng), sample_batch<float>(d.y, 8, 1, rng), c);
  EXPECT_EQ(s.nets, before);
  EXPECT_EQ(s.iteration, 6u);
  EXPECT_GT(b.total_g, 0.0);
  EXPECT_GT(b.cyc, 0.0);
}

TEST(TrainStep, IdentityTermFollowsSchedule) {
  const MicroData d;
  TrainingConfig c = micro_config();
  c.id_active_iters = 1;
  TrainerState s = init_trainer_state(c);
  Rng rng(2);
  const auto bx = sample_batch<float>(d.x, 8, 1, rng), by = sample_batch<float>(d.y, 8, 1, rng);
  EXPECT_GT(train_step(s, bx, by, c).id, 0.0);
  EXPECT_EQ(train_step(s, bx, by, c).id, 0.0);
}

TEST(TrainStep, NonFiniteLossAborts) {
  TrainingConfig c = micro_config();
  TrainerState s = init_trainer_state(c);
  Tensor<float> bad({1, 2, 8}, 0.0f);
  bad[3] = std::numeric_limits<float>::infinity();
  const TrainerState before = s;
  EXPECT_THROW(train_step(s, bad, bad, c), TrainingError);
  EXPECT_EQ(s.nets, before.nets);
}

TEST(Train, ZeroIterationsReturnsInitialState) {
  const MicroData d;
  const TrainingConfig c = micro_config();
  EXPECT_EQ(train(c, d.x, d.y), init_trainer_state(c));
}

TEST(Train, CheckpointSchedule) {
  const MicroData d;
  TrainingConfig c = micro_config();
  c.checkpoint_every = 10;
  c.total_iters = 25;
  std::vector<std::uint64_t> at;
  std::size_t progress = 0;
  TrainCallbacks cb;
  cb.on_checkpoint = [&](const TrainerState& s) { at.push_back(s.iteration); };
  cb.on_progress = [&](const ProgressRecord&) { ++progress; };
  train(c, d.x, d.y, cb);
  EXPECT_EQ(at, (std::vector<std::uint64_t>{10, 20, 25}));
  EXPECT_EQ(progress, 25u);
}

TEST(Train, DeterministicAndResumable) {
  const MicroData d;
  TrainingConfig c = micro_config();
  c.total_iters = 30;
  const TrainerState full = train(c, d.x, d.y);
  EXPECT_EQ(train(c, d.x, d.y), full);

  TrainingConfig half = c;
  half.total_iters = 12;
  TempDir dir;
  save_checkpoint(dir / "half.cvc", train(half, d.x, d.y), half);
  LoadedCheckpoint ck = load_checkpoint(dir / "half.cvc", &c);
  EXPECT_TRUE(ck.warnings.empty());
  EXPECT_EQ(train(c, d.x, d.y, {}, std::move(ck.state)), full);
}

TEST(Checkpoint, RoundTripIsByteExact) {
  const MicroData d;
  TrainingConfig c = micro_config();
  c.total_iters = 3;
  const TrainerState s = train(c, d.x, d.y);
  TempDir dir;
  save_checkpoint(dir / "a.cvc", s, c);
  const LoadedCheckpoint ck = load_checkpoint(dir / "a.cvc");
  EXPECT_EQ(ck.state, s);
  save_checkpoint(dir / "b.cvc", ck.state, ck.config);
  EXPECT_EQ(read_file(dir / "a.cvc"), read_file(dir / "b.cvc"));
}

TEST(Checkpoint, TruncatedOrCorruptFilesFail) {
  const TrainingConfig c = micro_config();
  const Bytes bytes = encode_archive(checkpoint_archive(init_trainer_state(c), c));
  TempDir dir;
  for (std::size_t keep : {std::size_t{0}, std::size_t{7}, bytes.size() / 2, bytes.size() - 1}) {
    write_file(dir / "t.cvc", Bytes(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep)));
    EXPECT_THROW(load_checkpoint(dir / "t.cvc"), FormatError) << keep;
  }
  Bytes flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  write_file(dir / "f.cvc", flipped);
  EXPECT_THROW(load_checkpoint(dir / "f.cvc"), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "missing.cvc"), IoError);
}

TEST(Checkpoint, ConfigMismatchWarns) {
  const TrainingConfig c = micro_config();
  TempDir dir;
  save_checkpoint(dir / "c.cvc", init_trainer_state(c), c);
  TrainingConfig other = c;
  other.lambda_cyc = 3.0;
  const LoadedCheckpoint ck = load_checkpoint(dir / "c.cvc", &other);
  ASSERT_EQ(ck.warnings.size(), 1u);
  EXPECT_NE(ck.warnings[0].find("different training configuration"), std::string::npos);
}

TEST(Checkpoint, GeneratorArchiveRoundTrip) {
  const TrainingConfig c = micro_config();
  const TrainerState s = init_trainer_state(c);
  TempDir dir;
  save_generator(dir / "g.cvg", s.nets.gen_xy);
  EXPECT_EQ(load_generator(dir / "g.cvg"), s.nets.gen_xy);
  EXPECT_THROW(load_checkpoint(dir / "g.cvg"), FormatError);
}

TEST(Train, ToyTaskLossDecreases) {
  const AffineTask task = make_affine_task(7, 12, 2);
  const SpeakerStats sx = speaker_stats_of(task.x_train), sy = speaker_stats_of(task.y_train);
  const auto cx = normalized_frames(task.x_train, sx.mcep), cy = normalized_frames(task.y_train, sy.mcep);
  TrainingConfig c;
  c.crop_frames = 32;
  c.model = ModelConfig::tiny(24, 32);
  c.seed = 3;
  c.checkpoint_every = 0;
  c.total_iters = 2000;
  double first = 0, last = 0;
  TrainCallbacks cb;
  cb.on_progress = [&](const ProgressRecord& r) {
    if (r.iteration < 50) first += r.losses.total_g / 50;
    if (r.iteration >= 1950) last += r.losses.total_g / 50;
  };
  train(c, cx, cy, cb);
  EXPECT_LT(last, first);
}
