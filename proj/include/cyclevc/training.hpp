#pragma once

// Alternating least-squares adversarial training of the two generators and
// two discriminators on randomly cropped, normalized MCEP segments.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclevc/archive.hpp"
#include "cyclevc/autograd.hpp"
#include "cyclevc/error.hpp"
#include "cyclevc/features.hpp"
#include "cyclevc/losses.hpp"
#include "cyclevc/model.hpp"
#include "cyclevc/rng.hpp"

namespace cyclevc {

struct TrainingConfig {
  double lambda_cyc = 10.0;
  double lambda_id = 5.0;
  std::uint64_t id_active_iters = 10'000;
  std::size_t crop_frames = 128;
  std::size_t batch_size = 1;
  double lr_g = 2e-4;
  double lr_d = 1e-4;
  std::uint64_t lr_const_iters = 200'000;
  std::uint64_t lr_decay_iters = 200'000;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_every = 10'000;  // 0: only the final checkpoint
  std::uint64_t total_iters = 400'000;
  ModelConfig model = ModelConfig::full();

  void validate() const {
    if (lambda_cyc < 0 || lambda_id < 0) throw ValidationError("loss weights must be non-negative");
    if (crop_frames == 0 || batch_size == 0 || lr_decay_iters == 0)
      throw ValidationError("crop_frames, batch_size and lr_decay_iters must be positive");
    if (!(lr_g > 0) || !(lr_d > 0)) throw ValidationError("learning rates must be positive");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1) || !(adam_eps > 0))
      throw ValidationError("Adam betas must lie in [0, 1) and eps must be positive");
    model.generator.validate();
    model.discriminator.validate();
    if (crop_frames % model.generator.length_multiple() != 0)
      throw ValidationError("crop_frames must be a multiple of " + std::to_string(model.generator.length_multiple()));
    if (!model.discriminator.patch_output &&
        (model.discriminator.input_height != model.generator.feature_dims ||
         model.discriminator.input_width != crop_frames))
      throw ValidationError("discriminator input size must equal feature_dims x crop_frames");
  }
};

inline void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = {{"lambda_cyc", c.lambda_cyc},
       {"lambda_id", c.lambda_id},
       {"id_active_iters", c.id_active_iters},
       {"crop_frames", c.crop_frames},
       {"batch_size", c.batch_size},
       {"lr_g", c.lr_g},
       {"lr_d", c.lr_d},
       {"lr_const_iters", c.lr_const_iters},
       {"lr_decay_iters", c.lr_decay_iters},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"adam_eps", c.adam_eps},
       {"seed", c.seed},
       {"checkpoint_every", c.checkpoint_every},
       {"total_iters", c.total_iters},
       {"model", c.model}};
}

/// Reads present keys over the defaults in `c`; unknown keys are rejected.
inline void update_from_json(TrainingConfig& c, const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "lambda_cyc", "lambda_id", "id_active_iters", "crop_frames", "batch_size", "lr_g", "lr_d", "lr_const_iters",
      "lr_decay_iters", "adam_beta1", "adam_beta2", "adam_eps", "seed", "checkpoint_every", "total_iters", "model"};
  if (!j.is_object()) throw ValidationError("training config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ValidationError("unknown training config key '" + k + "'");
  try {
    const auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lambda_cyc", c.lambda_cyc);
    get("lambda_id", c.lambda_id);
    get("id_active_iters", c.id_active_iters);
    get("crop_frames", c.crop_frames);
    get("batch_size", c.batch_size);
    get("lr_g", c.lr_g);
    get("lr_d", c.lr_d);
    get("lr_const_iters", c.lr_const_iters);
    get("lr_decay_iters", c.lr_decay_iters);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("adam_eps", c.adam_eps);
    get("seed", c.seed);
    get("checkpoint_every", c.checkpoint_every);
    get("total_iters", c.total_iters);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.is_string()) {
        const auto name = m.get<std::string>();
        if (name == "full") c.model = ModelConfig::full();
        else if (name == "tiny") c.model = ModelConfig::tiny(c.model.generator.feature_dims, c.crop_frames);
        else throw ValidationError("unknown model preset '" + name + "'");
      } else {
        c.model = m.get<ModelConfig>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("training config: ") + e.what());
  }
}

inline TrainingConfig training_config_from_json(const nlohmann::json& j) {
  TrainingConfig c;
  update_from_json(c, j);
  return c;
}

/// Hash of every field that shapes the optimization trajectory. Run-length
/// fields (total_iters, checkpoint_every) are excluded so extending a run
/// does not count as a configuration change.
inline std::uint64_t config_hash(const TrainingConfig& c) {
  nlohmann::json j = c;
  j.erase("total_iters");
  j.erase("checkpoint_every");
  return fnv1a64(j.dump());
}

// ---------------------------------------------------------------------------
// Schedules

struct LearningRates {
  double generator = 0, discriminator = 0;
  friend bool operator==(const LearningRates&, const LearningRates&) = default;
};

/// Constant for iter < lr_const_iters, then linear to zero over
/// lr_decay_iters, zero afterwards.
inline LearningRates lr_at(std::uint64_t iter, const TrainingConfig& c) {
  if (iter < c.lr_const_iters) return {c.lr_g, c.lr_d};
  const double frac = static_cast<double>(iter - c.lr_const_iters) / static_cast<double>(c.lr_decay_iters);
  const double keep = frac >= 1.0 ? 0.0 : 1.0 - frac;
  return {c.lr_g * keep, c.lr_d * keep};
}

inline double lambda_id_at(std::uint64_t iter, const TrainingConfig& c) {
  return iter < c.id_active_iters ? c.lambda_id : 0.0;
}

// ---------------------------------------------------------------------------
// Crop sampling

/// Uniform utterance, then uniform start offset; utterances shorter than the
/// crop are read circularly from a uniform start. Returns crop × D.
inline Matrix sample_crop(std::span<const Matrix> corpus, std::size_t crop_frames, Rng& rng) {
  if (corpus.empty()) throw ValidationError("cannot sample a crop from an empty corpus");
  if (crop_frames == 0) throw ValidationError("crop length must be positive");
  const Matrix& u = corpus[rng.uniform_index(corpus.size())];
  const std::size_t t = rows(u), d = cols(u);
  if (t == 0) throw ValidationError("corpus contains an empty utterance");
  const std::size_t start = t >= crop_frames ? rng.uniform_index(t - crop_frames + 1) : rng.uniform_index(t);
  Matrix crop = make_matrix(crop_frames, d);
  for (std::size_t i = 0; i < crop_frames; ++i) {
    const std::size_t src = (start + i) % t;
    for (std::size_t j = 0; j < d; ++j) crop.at(i, j) = u.at(src, j);
  }
  return crop;
}

/// Stacks batch_size crops into a (B, D, crop) tensor.
template <typename Scalar>
Tensor<Scalar> sample_batch(std::span<const Matrix> corpus, std::size_t crop_frames, std::size_t batch, Rng& rng) {
  Tensor<Scalar> out;
  for (std::size_t b = 0; b < batch; ++b) {
    const Matrix crop = sample_crop(corpus, crop_frames, rng);
    const std::size_t d = cols(crop);
    if (b == 0) out = Tensor<Scalar>({batch, d, crop_frames});
    if (out.dim(1) != d) throw ShapeError("corpus mixes feature dimensions");
    for (std::size_t i = 0; i < crop_frames; ++i)
      for (std::size_t j = 0; j < d; ++j) out.at(b, j, i) = static_cast<Scalar>(crop.at(i, j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam

template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> m, v;
  std::uint64_t step = 0;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

template <typename Scalar>
AdamState<Scalar> make_adam_state(const ParamSet<Scalar>& params) {
  AdamState<Scalar> s;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.emplace_back(params.value(i).shape());
    s.v.emplace_back(params.value(i).shape());
  }
  return s;
}

/// One bias-corrected Adam update from the accumulated gradients.
template <typename Scalar>
void adam_update(ParamSet<Scalar>& params, AdamState<Scalar>& state, double lr, double beta1, double beta2,
                 double eps) {
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(beta1), b2 = static_cast<Scalar>(beta2);
  const auto step = static_cast<Scalar>(lr / c1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  const auto e = static_cast<Scalar>(eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<Scalar>& g = params.var(i).grad();
    Tensor<Scalar>& p = params.mutable_value(i);
    Scalar* m = state.m[i].data();
    Scalar* v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (Scalar(1) - b1) * g[k];
      v[k] = b2 * v[k] + (Scalar(1) - b2) * g[k] * g[k];
      p[k] -= step * m[k] / (std::sqrt(v[k] * inv_c2) + e);
    }
  }
}

// ---------------------------------------------------------------------------
// Trainer

struct TrainerState {
  std::uint64_t iteration = 0;
  Networks<float> nets;
  AdamState<float> adam_gen_xy, adam_gen_yx, adam_disc_x, adam_disc_y;
  Rng rng;
  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

inline TrainerState init_trainer_state(const TrainingConfig& cfg) {
  cfg.validate();
  TrainerState s;
  s.nets = init_params<float>(cfg.model, cfg.seed);
  s.adam_gen_xy = make_adam_state(s.nets.gen_xy.params);
  s.adam_gen_yx = make_adam_state(s.nets.gen_yx.params);
  s.adam_disc_x = make_adam_state(s.nets.disc_x.params);
  s.adam_disc_y = make_adam_state(s.nets.disc_y.params);
  // crop stream is independent of the initialization stream
  s.rng = Rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  return s;
}

namespace detail {
inline void require_finite(double v, const char* what, std::uint64_t iter) {
  if (!std::isfinite(v))
    throw TrainingError(std::string("non-finite ") + what + " at iteration " + std::to_string(iter));
}
}  // namespace detail

/// One alternating update on (B, D, crop) batches: both discriminators on
/// detached fakes, then both generators jointly on the full objective with
/// the current identity weight. Throws TrainingError before applying an
/// update whose loss is non-finite.
inline LossBreakdown train_step(TrainerState& s, const Tensor<float>& crop_x, const Tensor<float>& crop_y,
                                const TrainingConfig& cfg) {
  if (crop_x.shape() != crop_y.shape() || crop_x.rank() != 3)
    throw ShapeError("train_step expects equal (B, D, T) crops");
  auto& n = s.nets;
  const std::uint64_t iter = s.iteration;
  const LearningRates lr = lr_at(iter, cfg);
  const double lam_id = lambda_id_at(iter, cfg);

  const Var<float> x = constant(crop_x);
  const Var<float> y = constant(crop_y);
  const Var<float> fake_y = generator_forward(n.gen_xy, x);
  const Var<float> fake_x = generator_forward(n.gen_yx, y);

  // Discriminators
  const Var<float> loss_d_y = adv_loss_discriminator(discriminator_forward(n.disc_y, as_image(y)),
                                                     discriminator_forward(n.disc_y, as_image(detach(fake_y))));
  const Var<float> loss_d_x = adv_loss_discriminator(discriminator_forward(n.disc_x, as_image(x)),
                                                     discriminator_forward(n.disc_x, as_image(detach(fake_x))));
  detail::require_finite(loss_d_x.item(), "discriminator loss (X)", iter);
  detail::require_finite(loss_d_y.item(), "discriminator loss (Y)", iter);
  backward(weighted_sum<float>({loss_d_x, loss_d_y}, {1.0f, 1.0f}));
  adam_update(n.disc_x.params, s.adam_disc_x, lr.discriminator, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  adam_update(n.disc_y.params, s.adam_disc_y, lr.discriminator, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  n.disc_x.params.zero_grad();
  n.disc_y.params.zero_grad();

  // Generators
  const Var<float> adv_xy = adv_loss_generator(discriminator_forward(n.disc_y, as_image(fake_y)));
  const Var<float> adv_yx = adv_loss_generator(discriminator_forward(n.disc_x, as_image(fake_x)));
  const Var<float> cyc =
      cycle_loss(x, generator_forward(n.gen_yx, fake_y), y, generator_forward(n.gen_xy, fake_x));
  Var<float> id = constant(Tensor<float>({1}, 0.0f));
  if (lam_id > 0) id = identity_loss(y, generator_forward(n.gen_xy, y), x, generator_forward(n.gen_yx, x));
  const Var<float> total_g = generator_objective(adv_xy, adv_yx, cyc, id, static_cast<float>(cfg.lambda_cyc),
                                                 static_cast<float>(lam_id));
  detail::require_finite(total_g.item(), "generator loss", iter);
  backward(total_g);
  adam_update(n.gen_xy.params, s.adam_gen_xy, lr.generator, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  adam_update(n.gen_yx.params, s.adam_gen_yx, lr.generator, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  n.gen_xy.params.zero_grad();
  n.gen_yx.params.zero_grad();
  // the generator pass also reached the discriminators
  n.disc_x.params.zero_grad();
  n.disc_y.params.zero_grad();

  if (!n.gen_xy.params.all_finite() || !n.gen_yx.params.all_finite() || !n.disc_x.params.all_finite() ||
      !n.disc_y.params.all_finite())
    throw TrainingError("non-finite parameters after iteration " + std::to_string(iter));

  ++s.iteration;
  LossParts parts{adv_xy.item(), adv_yx.item(), loss_d_x.item(), loss_d_y.item(), cyc.item(), id.item()};
  LossBreakdown b = total_losses(parts, cfg.lambda_cyc, lam_id);
  b.total_g = total_g.item();
  return b;
}

struct ProgressRecord {
  std::uint64_t iteration = 0;  // index of the completed step
  LossBreakdown losses;
  LearningRates lr;
  double lambda_id = 0;
};

inline nlohmann::json to_json(const ProgressRecord& r) {
  return {{"iteration", r.iteration},     {"adv_g_xy", r.losses.adv_g_xy}, {"adv_g_yx", r.losses.adv_g_yx},
          {"adv_d_x", r.losses.adv_d_x},  {"adv_d_y", r.losses.adv_d_y},   {"cyc", r.losses.cyc},
          {"id", r.losses.id},            {"total_g", r.losses.total_g},   {"total_d_x", r.losses.total_d_x},
          {"total_d_y", r.losses.total_d_y}, {"lr_g", r.lr.generator},     {"lr_d", r.lr.discriminator},
          {"lambda_id", r.lambda_id}};
}

struct TrainCallbacks {
  std::function<void(const ProgressRecord&)> on_progress;
  std::function<void(const TrainerState&)> on_checkpoint;
};

/// Runs steps until state.iteration == cfg.total_iters. Checkpoint callbacks
/// fire every checkpoint_every iterations and after the last step. The run is
/// a pure function of (config, corpora, starting state).
inline TrainerState train(const TrainingConfig& cfg, std::span<const Matrix> corpus_x, std::span<const Matrix> corpus_y,
                          const TrainCallbacks& callbacks = {}, std::optional<TrainerState> resume = std::nullopt) {
  cfg.validate();
  if (corpus_x.empty() || corpus_y.empty()) throw ValidationError("training corpora must be non-empty");
  TrainerState s = resume ? std::move(*resume) : init_trainer_state(cfg);
  while (s.iteration < cfg.total_iters) {
    const Tensor<float> bx = sample_batch<float>(corpus_x, cfg.crop_frames, cfg.batch_size, s.rng);
    const Tensor<float> by = sample_batch<float>(corpus_y, cfg.crop_frames, cfg.batch_size, s.rng);
    const std::uint64_t iter = s.iteration;
    const LossBreakdown losses = train_step(s, bx, by, cfg);
    if (callbacks.on_progress) callbacks.on_progress({iter, losses, lr_at(iter, cfg), lambda_id_at(iter, cfg)});
    const bool scheduled = cfg.checkpoint_every > 0 && s.iteration % cfg.checkpoint_every == 0;
    if (callbacks.on_checkpoint && (scheduled || s.iteration == cfg.total_iters)) callbacks.on_checkpoint(s);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {
inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

inline void append_adam(Archive& a, const std::string& prefix, const ParamSet<float>& params,
                        const AdamState<float>& st) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    a.arrays.emplace_back(prefix + "m/" + params.name(i), st.m[i]);
    a.arrays.emplace_back(prefix + "v/" + params.name(i), st.v[i]);
  }
}

inline AdamState<float> extract_adam(const Archive& a, const std::string& prefix, const Layout& layout,
                                     std::uint64_t step) {
  AdamState<float> st;
  st.step = step;
  for (const auto& spec : layout)
    for (auto* dst : {&st.m, &st.v}) {
      const std::string name = prefix + (dst == &st.m ? "m/" : "v/") + spec.name;
      const Tensor<float>& t = a.array(name);
      if (t.shape() != spec.shape) throw FormatError("array " + name + " has wrong shape " + shape_str(t.shape()));
      dst->push_back(t);
    }
  return st;
}
}  // namespace detail

inline Archive checkpoint_archive(const TrainerState& s, const TrainingConfig& cfg) {
  Archive a;
  a.kind = "checkpoint";
  a.metadata = {{"config", cfg},
                {"config_hash", detail::hex64(config_hash(cfg))},
                {"iteration", s.iteration},
                {"rng", s.rng.state()},
                {"adam_steps",
                 {{"gen_xy", s.adam_gen_xy.step},
                  {"gen_yx", s.adam_gen_yx.step},
                  {"disc_x", s.adam_disc_x.step},
                  {"disc_y", s.adam_disc_y.step}}}};
  append_params(a, "gen_xy/", s.nets.gen_xy.params);
  append_params(a, "gen_yx/", s.nets.gen_yx.params);
  append_params(a, "disc_x/", s.nets.disc_x.params);
  append_params(a, "disc_y/", s.nets.disc_y.params);
  detail::append_adam(a, "adam/gen_xy/", s.nets.gen_xy.params, s.adam_gen_xy);
  detail::append_adam(a, "adam/gen_yx/", s.nets.gen_yx.params, s.adam_gen_yx);
  detail::append_adam(a, "adam/disc_x/", s.nets.disc_x.params, s.adam_disc_x);
  detail::append_adam(a, "adam/disc_y/", s.nets.disc_y.params, s.adam_disc_y);
  return a;
}

inline void save_checkpoint(const std::filesystem::path& path, const TrainerState& s, const TrainingConfig& cfg) {
  save_archive(path, checkpoint_archive(s, cfg));
}

struct LoadedCheckpoint {
  TrainerState state;
  TrainingConfig config;
  std::vector<std::string> warnings;
};

/// Fully validates before returning; nothing is produced from a corrupt or
/// truncated file. When `expected` is given and its hash differs from the
/// stored one, a warning is recorded.
inline LoadedCheckpoint checkpoint_from_archive(const Archive& a, const TrainingConfig* expected = nullptr) {
  if (a.kind != "checkpoint") throw FormatError("expected a checkpoint archive, found '" + a.kind + "'");
  LoadedCheckpoint out;
  try {
    const auto& meta = a.metadata;
    out.config = training_config_from_json(meta.at("config"));
    out.state.iteration = meta.at("iteration").get<std::uint64_t>();
    out.state.rng.restore(meta.at("rng").get<std::string>());
    const auto& steps = meta.at("adam_steps");
    const Layout gl = generator_layout(out.config.model.generator);
    const Layout dl = discriminator_layout(out.config.model.discriminator);
    auto& n = out.state.nets;
    n.gen_xy = {out.config.model.generator, extract_params(a, "gen_xy/", gl)};
    n.gen_yx = {out.config.model.generator, extract_params(a, "gen_yx/", gl)};
    n.disc_x = {out.config.model.discriminator, extract_params(a, "disc_x/", dl)};
    n.disc_y = {out.config.model.discriminator, extract_params(a, "disc_y/", dl)};
    out.state.adam_gen_xy = detail::extract_adam(a, "adam/gen_xy/", gl, steps.at("gen_xy"));
    out.state.adam_gen_yx = detail::extract_adam(a, "adam/gen_yx/", gl, steps.at("gen_yx"));
    out.state.adam_disc_x = detail::extract_adam(a, "adam/disc_x/", dl, steps.at("disc_x"));
    out.state.adam_disc_y = detail::extract_adam(a, "adam/disc_y/", dl, steps.at("disc_y"));
    if (meta.at("config_hash").get<std::string>() != detail::hex64(config_hash(out.config)))
      throw FormatError("stored config hash does not match stored config");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (expected && config_hash(*expected) != config_hash(out.config))
    out.warnings.push_back("checkpoint was produced with a different training configuration (hash " +
                           detail::hex64(config_hash(out.config)) + " vs " + detail::hex64(config_hash(*expected)) +
                           ")");
  return out;
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const TrainingConfig* expected = nullptr) {
  return checkpoint_from_archive(load_archive(path), expected);
}

}  // namespace cyclevc
