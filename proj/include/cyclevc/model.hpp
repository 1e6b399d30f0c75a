#pragma once

// Gated-CNN generator (1D, fully convolutional) and discriminator (2D) for
// mapping normalized MCEP sequences between two speakers.
//
// Generator, input (B, D, T) with the D feature dimensions as channels:
//   gated conv k15                                  -> C0, T
//   gated conv k5 s2 + IN                 (×2)      -> C1, T/2 -> C2, T/4
//   residual: gated conv k3 + IN, conv k3 + IN, add (×R)
//   conv k5 -> pixel shuffle ×2 -> IN -> GLU  (×2)  -> T/2 -> T
//   conv k15                                        -> D, T
// Every gated layer computes (x∗W + b) ⊗ σ(x∗V + c), with the optional
// instance norm applied to each branch before the product.
//
// Discriminator, input (B, 1, D, T): stack of gated 2D convs, then a fully
// connected layer and a sigmoid (one score per crop), or a 1×1 conv and a
// sigmoid per spatial position when patch output is selected.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclevc/autograd.hpp"
#include "cyclevc/error.hpp"
#include "cyclevc/features.hpp"
#include "cyclevc/rng.hpp"
#include "cyclevc/tensor.hpp"

namespace cyclevc {

// ---------------------------------------------------------------------------
// Named parameter storage

/// Ordered, named collection of trainable leaves. Copies are deep: a copied
/// set owns fresh leaves with equal values and no gradients.
template <typename Scalar>
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet& other) { copy_from(other); }
  ParamSet& operator=(const ParamSet& other) {
    if (this != &other) {
      names_.clear();
      vars_.clear();
      index_.clear();
      copy_from(other);
    }
    return *this;
  }
  ParamSet(ParamSet&&) noexcept = default;
  ParamSet& operator=(ParamSet&&) noexcept = default;

  void add(std::string name, Tensor<Scalar> value) {
    if (index_.count(name)) throw ValidationError("duplicate parameter " + name);
    index_.emplace(name, vars_.size());
    names_.push_back(std::move(name));
    vars_.push_back(parameter(std::move(value)));
  }

  std::size_t size() const { return vars_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Var<Scalar>& var(std::size_t i) const { return vars_.at(i); }
  Var<Scalar>& var(std::size_t i) { return vars_.at(i); }
  const Tensor<Scalar>& value(std::size_t i) const { return vars_.at(i).value(); }
  Tensor<Scalar>& mutable_value(std::size_t i) { return vars_.at(i).mutable_value(); }

  bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }
  const Var<Scalar>& operator[](std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ValidationError("unknown parameter " + std::string(name));
    return vars_[it->second];
  }
  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ValidationError("unknown parameter " + std::string(name));
    return it->second;
  }

  void zero_grad() {
    for (auto& v : vars_) v.zero_grad();
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& v : vars_) n += v.value().size();
    return n;
  }

  bool all_finite() const {
    return std::all_of(vars_.begin(), vars_.end(), [](const auto& v) { return v.value().all_finite(); });
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.names_ != b.names_) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!(a.value(i) == b.value(i))) return false;
    return true;
  }

 private:
  void copy_from(const ParamSet& other) {
    for (std::size_t i = 0; i < other.size(); ++i) add(other.name(i), other.value(i));
  }

  std::vector<std::string> names_;
  std::vector<Var<Scalar>> vars_;
  std::map<std::string, std::size_t> index_;
};

enum class InitKind { Normal, Zero, One };

struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init;
};
using Layout = std::vector<ParamSpec>;

/// Kernels ~ N(0, stddev²), biases and norm shifts 0, norm scales 1.
template <typename Scalar>
ParamSet<Scalar> init_from_layout(const Layout& layout, Rng& rng, double stddev = 0.02) {
  ParamSet<Scalar> set;
  for (const auto& spec : layout) {
    Tensor<Scalar> t(spec.shape);
    switch (spec.init) {
      case InitKind::Normal:
        for (auto& v : t.values()) v = static_cast<Scalar>(stddev * rng.normal());
        break;
      case InitKind::Zero:
        break;
      case InitKind::One:
        t.fill(Scalar(1));
        break;
    }
    set.add(spec.name, std::move(t));
  }
  return set;
}

/// Throws FormatError naming the first parameter whose name or shape differs.
template <typename Scalar>
void check_layout(const ParamSet<Scalar>& set, const Layout& layout, const std::string& what) {
  if (set.size() != layout.size())
    throw FormatError(what + ": expected " + std::to_string(layout.size()) + " parameters, found " +
                      std::to_string(set.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (set.name(i) != layout[i].name) throw FormatError(what + ": expected parameter " + layout[i].name + ", found " + set.name(i));
    if (set.value(i).shape() != layout[i].shape)
      throw FormatError(what + ": parameter " + layout[i].name + " has shape " + shape_str(set.value(i).shape()) +
                        ", expected " + shape_str(layout[i].shape));
  }
}

// ---------------------------------------------------------------------------
// Gated layers

template <typename Scalar>
struct NormParams {
  Var<Scalar> scale, shift;
};

/// One gated convolution: linear branch (W, b), gate branch (V, c).
template <typename Scalar>
struct GluLayerParams {
  Var<Scalar> w, b;  // linear branch
  Var<Scalar> v, c;  // gate branch
  std::optional<NormParams<Scalar>> lin_norm, gate_norm;
  std::size_t stride_h = 1;  // 2D only
  std::size_t stride = 1;    // time axis
  std::size_t shuffle = 1;   // pixel-shuffle factor applied after each branch's conv
};

inline constexpr double kInstanceNormEps = 1e-5;

template <typename Scalar>
GluLayerParams<Scalar> glu_layer_from(const ParamSet<Scalar>& p, const std::string& prefix, bool norm,
                                      std::size_t stride, std::size_t shuffle = 1, std::size_t stride_h = 1) {
  GluLayerParams<Scalar> l{p[prefix + ".lin.w"], p[prefix + ".lin.b"], p[prefix + ".gate.w"], p[prefix + ".gate.b"],
                           std::nullopt, std::nullopt, stride_h, stride, shuffle};
  if (norm) {
    l.lin_norm = NormParams<Scalar>{p[prefix + ".lin.scale"], p[prefix + ".lin.shift"]};
    l.gate_norm = NormParams<Scalar>{p[prefix + ".gate.scale"], p[prefix + ".gate.shift"]};
  }
  return l;
}

/// Gated linear unit layer over (B, C, T) or (B, C, H, W), chosen by the
/// kernel rank: (x∗W + b) ⊗ σ(x∗V + c).
template <typename Scalar>
Var<Scalar> glu_forward(const Var<Scalar>& x, const GluLayerParams<Scalar>& p) {
  if (p.w.shape() != p.v.shape()) throw ShapeError("GLU linear and gate kernels differ in shape");
  const auto branch = [&](const Var<Scalar>& kernel, const Var<Scalar>& bias,
                          const std::optional<NormParams<Scalar>>& norm) {
    Var<Scalar> h;
    if (kernel.shape().size() == 3) {
      h = conv1d(x, kernel, bias, p.stride);
      if (p.shuffle > 1) h = pixel_shuffle_1d(h, p.shuffle);
    } else {
      h = conv2d(x, kernel, bias, p.stride_h, p.stride);
    }
    if (norm) h = instance_norm(h, norm->scale, norm->shift, static_cast<Scalar>(kInstanceNormEps));
    return h;
  };
  return glu(branch(p.w, p.b, p.lin_norm), branch(p.v, p.c, p.gate_norm));
}

// ---------------------------------------------------------------------------
// Architectures

struct GatedConvSpec {
  std::size_t channels = 0;  // per branch, before any pixel shuffle
  std::size_t kernel = 3;
  std::size_t stride = 1;
  bool norm = true;
  friend bool operator==(const GatedConvSpec&, const GatedConvSpec&) = default;
};

struct GeneratorArch {
  std::size_t feature_dims = 24;
  GatedConvSpec input{128, 15, 1, false};
  std::vector<GatedConvSpec> downsample{{256, 5, 2, true}, {512, 5, 2, true}};
  std::size_t residual_blocks = 6;
  std::size_t residual_kernel = 3;
  std::size_t residual_hidden = 1024;
  std::vector<GatedConvSpec> upsample{{1024, 5, 1, true}, {512, 5, 1, true}};
  std::size_t shuffle_factor = 2;
  std::size_t output_kernel = 15;

  /// Frame counts must be a multiple of this.
  std::size_t length_multiple() const {
    std::size_t m = 1;
    for (const auto& s : downsample) m *= s.stride;
    return m;
  }

  void validate() const {
    if (feature_dims == 0 || input.channels == 0) throw ValidationError("generator needs positive dims/channels");
    std::size_t up = 1;
    for (const auto& s : upsample) {
      if (s.channels % shuffle_factor != 0) throw ValidationError("upsample channels must divide by the shuffle factor");
      up *= shuffle_factor;
    }
    if (up != length_multiple()) throw ValidationError("upsampling factor must equal downsampling factor");
    const auto odd = [](std::size_t k) { return k % 2 == 1; };
    bool ok = odd(input.kernel) && odd(residual_kernel) && odd(output_kernel);
    for (const auto& s : downsample) ok = ok && odd(s.kernel) && s.stride >= 1 && s.channels > 0;
    for (const auto& s : upsample) ok = ok && odd(s.kernel);
    if (!ok) throw ValidationError("generator kernel sizes must be odd");
  }

  friend bool operator==(const GeneratorArch&, const GeneratorArch&) = default;
};

struct Gated2dSpec {
  std::size_t channels = 0;
  std::size_t kernel_h = 3, kernel_w = 3;
  std::size_t stride_h = 1, stride_w = 1;
  bool norm = true;
  friend bool operator==(const Gated2dSpec&, const Gated2dSpec&) = default;
};

struct DiscriminatorArch {
  std::size_t input_height = 24;  // feature dims
  std::size_t input_width = 128;  // crop frames
  std::vector<Gated2dSpec> stages{
      {128, 3, 3, 1, 1, false}, {128, 3, 3, 2, 2, true}, {256, 3, 3, 2, 2, true}, {512, 3, 3, 2, 2, true}};
  bool patch_output = false;

  std::pair<std::size_t, std::size_t> output_hw(std::size_t h, std::size_t w) const {
    for (const auto& s : stages) {
      h = (h + s.stride_h - 1) / s.stride_h;
      w = (w + s.stride_w - 1) / s.stride_w;
    }
    return {h, w};
  }

  void validate() const {
    if (stages.empty()) throw ValidationError("discriminator needs at least one stage");
    for (const auto& s : stages)
      if (s.channels == 0 || s.kernel_h % 2 == 0 || s.kernel_w % 2 == 0 || s.stride_h == 0 || s.stride_w == 0)
        throw ValidationError("discriminator stages need positive channels/strides and odd kernels");
  }

  friend bool operator==(const DiscriminatorArch&, const DiscriminatorArch&) = default;
};

struct ModelConfig {
  GeneratorArch generator;
  DiscriminatorArch discriminator;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  /// Architecture as drawn for the full-scale experiments.
  static ModelConfig full() { return {}; }

  /// Small variant for CPU smoke runs and tests.
  static ModelConfig tiny(std::size_t feature_dims = 24, std::size_t crop_frames = 128) {
    ModelConfig m;
    m.generator.feature_dims = feature_dims;
    m.generator.input = {16, 15, 1, false};
    m.generator.downsample = {{32, 5, 2, true}, {32, 5, 2, true}};
    m.generator.residual_blocks = 2;
    m.generator.residual_hidden = 64;
    m.generator.upsample = {{64, 5, 1, true}, {32, 5, 1, true}};
    m.discriminator.input_height = feature_dims;
    m.discriminator.input_width = crop_frames;
    m.discriminator.stages = {{8, 3, 3, 1, 1, false}, {16, 3, 3, 2, 2, true}, {16, 3, 3, 2, 2, true}, {32, 3, 3, 2, 2, true}};
    return m;
  }
};

namespace detail {
inline void add_glu_specs(Layout& l, const std::string& prefix, Shape kernel, std::size_t out_channels, bool norm) {
  for (const char* branch : {".lin", ".gate"}) {
    l.push_back({prefix + branch + ".w", kernel, InitKind::Normal});
    l.push_back({prefix + branch + ".b", {out_channels}, InitKind::Zero});
  }
  if (norm)
    for (const char* branch : {".lin", ".gate"}) {
      l.push_back({prefix + branch + ".scale", {out_channels}, InitKind::One});
      l.push_back({prefix + branch + ".shift", {out_channels}, InitKind::Zero});
    }
}
}  // namespace detail

inline Layout generator_layout(const GeneratorArch& a) {
  a.validate();
  Layout l;
  std::size_t ch = a.feature_dims;
  detail::add_glu_specs(l, "input", {a.input.channels, ch, a.input.kernel}, a.input.channels, false);
  ch = a.input.channels;
  for (std::size_t i = 0; i < a.downsample.size(); ++i) {
    const auto& s = a.downsample[i];
    detail::add_glu_specs(l, "down" + std::to_string(i), {s.channels, ch, s.kernel}, s.channels, s.norm);
    ch = s.channels;
  }
  for (std::size_t i = 0; i < a.residual_blocks; ++i) {
    const std::string p = "res" + std::to_string(i);
    detail::add_glu_specs(l, p + ".conv1", {a.residual_hidden, ch, a.residual_kernel}, a.residual_hidden, true);
    l.push_back({p + ".conv2.w", {ch, a.residual_hidden, a.residual_kernel}, InitKind::Normal});
    l.push_back({p + ".conv2.b", {ch}, InitKind::Zero});
    l.push_back({p + ".conv2.scale", {ch}, InitKind::One});
    l.push_back({p + ".conv2.shift", {ch}, InitKind::Zero});
  }
  for (std::size_t i = 0; i < a.upsample.size(); ++i) {
    const auto& s = a.upsample[i];
    const std::string p = "up" + std::to_string(i);
    const std::size_t shuffled = s.channels / a.shuffle_factor;
    for (const char* branch : {".lin", ".gate"}) {
      l.push_back({p + branch + ".w", {s.channels, ch, s.kernel}, InitKind::Normal});
      l.push_back({p + branch + ".b", {s.channels}, InitKind::Zero});
    }
    if (s.norm)
      for (const char* branch : {".lin", ".gate"}) {
        l.push_back({p + branch + ".scale", {shuffled}, InitKind::One});
        l.push_back({p + branch + ".shift", {shuffled}, InitKind::Zero});
      }
    ch = shuffled;
  }
  l.push_back({"output.w", {a.feature_dims, ch, a.output_kernel}, InitKind::Normal});
  l.push_back({"output.b", {a.feature_dims}, InitKind::Zero});
  return l;
}

inline Layout discriminator_layout(const DiscriminatorArch& a) {
  a.validate();
  Layout l;
  std::size_t ch = 1;
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    const auto& s = a.stages[i];
    detail::add_glu_specs(l, "stage" + std::to_string(i), {s.channels, ch, s.kernel_h, s.kernel_w}, s.channels, s.norm);
    ch = s.channels;
  }
  if (a.patch_output) {
    l.push_back({"patch.w", {1, ch, 1, 1}, InitKind::Normal});
    l.push_back({"patch.b", {1}, InitKind::Zero});
  } else {
    const auto [h, w] = a.output_hw(a.input_height, a.input_width);
    l.push_back({"fc.w", {1, ch * h * w}, InitKind::Normal});
    l.push_back({"fc.b", {1}, InitKind::Zero});
  }
  return l;
}

template <typename Scalar>
struct GeneratorParams {
  GeneratorArch arch;
  ParamSet<Scalar> params;
  friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

template <typename Scalar>
struct DiscriminatorParams {
  DiscriminatorArch arch;
  ParamSet<Scalar> params;
  friend bool operator==(const DiscriminatorParams&, const DiscriminatorParams&) = default;
};

/// The four networks of a cycle-consistent pair.
template <typename Scalar>
struct Networks {
  GeneratorParams<Scalar> gen_xy, gen_yx;
  DiscriminatorParams<Scalar> disc_x, disc_y;
  friend bool operator==(const Networks&, const Networks&) = default;
};

template <typename Scalar>
GeneratorParams<Scalar> init_generator(const GeneratorArch& arch, Rng& rng) {
  return {arch, init_from_layout<Scalar>(generator_layout(arch), rng)};
}

template <typename Scalar>
DiscriminatorParams<Scalar> init_discriminator(const DiscriminatorArch& arch, Rng& rng) {
  return {arch, init_from_layout<Scalar>(discriminator_layout(arch), rng)};
}

/// Draws G_{X→Y}, G_{Y→X}, D_X, D_Y in that order from one seeded stream.
template <typename Scalar>
Networks<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Networks<Scalar> n;
  n.gen_xy = init_generator<Scalar>(cfg.generator, rng);
  n.gen_yx = init_generator<Scalar>(cfg.generator, rng);
  n.disc_x = init_discriminator<Scalar>(cfg.discriminator, rng);
  n.disc_y = init_discriminator<Scalar>(cfg.discriminator, rng);
  return n;
}

// ---------------------------------------------------------------------------
// Forward passes

/// x: (B, D, T) with T a multiple of arch.length_multiple(); output has the
/// same shape.
template <typename Scalar>
Var<Scalar> generator_forward(const GeneratorParams<Scalar>& g, const Var<Scalar>& x) {
  const auto& a = g.arch;
  const auto& p = g.params;
  if (x.shape().size() != 3 || x.shape()[1] != a.feature_dims)
    throw ShapeError("generator expects (B, " + std::to_string(a.feature_dims) + ", T), got " + shape_str(x.shape()));
  const std::size_t frames = x.shape()[2];
  if (frames == 0 || frames % a.length_multiple() != 0)
    throw ShapeError("generator input length " + std::to_string(frames) + " is not a positive multiple of " +
                     std::to_string(a.length_multiple()));

  Var<Scalar> h = glu_forward(x, glu_layer_from(p, "input", false, a.input.stride));
  for (std::size_t i = 0; i < a.downsample.size(); ++i) {
    const auto& s = a.downsample[i];
    h = glu_forward(h, glu_layer_from(p, "down" + std::to_string(i), s.norm, s.stride));
  }
  for (std::size_t i = 0; i < a.residual_blocks; ++i) {
    const std::string pre = "res" + std::to_string(i);
    Var<Scalar> r = glu_forward(h, glu_layer_from(p, pre + ".conv1", true, 1));
    r = conv1d(r, p[pre + ".conv2.w"], p[pre + ".conv2.b"]);
    r = instance_norm(r, p[pre + ".conv2.scale"], p[pre + ".conv2.shift"], static_cast<Scalar>(kInstanceNormEps));
    h = add(h, r);
  }
  for (std::size_t i = 0; i < a.upsample.size(); ++i) {
    const auto& s = a.upsample[i];
    h = glu_forward(h, glu_layer_from(p, "up" + std::to_string(i), s.norm, 1, a.shuffle_factor));
  }
  return conv1d(h, p["output.w"], p["output.b"]);
}

/// Tensor (1, D, T) from a T × D sequence, and back.
template <typename Scalar>
Tensor<Scalar> to_channels_first(const Matrix& frames) {
  const std::size_t t = rows(frames), d = cols(frames);
  Tensor<Scalar> out({1, d, t});
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(0, j, i) = static_cast<Scalar>(frames.at(i, j));
  return out;
}

template <typename Scalar>
Matrix from_channels_first(const Tensor<Scalar>& x) {
  if (x.rank() != 3 || x.dim(0) != 1) throw ShapeError("expected a (1, D, T) tensor");
  const std::size_t d = x.dim(1), t = x.dim(2);
  Matrix m = make_matrix(t, d);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) m.at(i, j) = static_cast<double>(x.at(0, j, i));
  return m;
}

/// Maps a normalized sequence whose length is a multiple of the generator's
/// length multiple.
template <typename Scalar>
McepSequence generator_forward(const GeneratorParams<Scalar>& g, const McepSequence& m) {
  const Var<Scalar> y = generator_forward(g, constant(to_channels_first<Scalar>(m.frames)));
  return McepSequence{from_channels_first(y.value()), m.frame_period_ms};
}

/// patch: (B, 1, H, W). Returns (B, 1) scores, or (B, 1, H', W') in patch
/// mode; every score lies in (0, 1).
template <typename Scalar>
Var<Scalar> discriminator_forward(const DiscriminatorParams<Scalar>& d, const Var<Scalar>& patch) {
  const auto& a = d.arch;
  const auto& p = d.params;
  const auto& s = patch.shape();
  if (s.size() != 4 || s[1] != 1) throw ShapeError("discriminator expects (B, 1, H, W), got " + shape_str(s));
  if (!a.patch_output && (s[2] != a.input_height || s[3] != a.input_width))
    throw ShapeError("discriminator built for " + std::to_string(a.input_height) + "x" + std::to_string(a.input_width) +
                     " inputs, got " + std::to_string(s[2]) + "x" + std::to_string(s[3]));
  std::size_t min_h = 1, min_w = 1;
  for (const auto& st : a.stages) {
    min_h *= st.stride_h;
    min_w *= st.stride_w;
  }
  if (s[2] < min_h || s[3] < min_w)
    throw ShapeError("patch " + std::to_string(s[2]) + "x" + std::to_string(s[3]) + " smaller than the minimum " +
                     std::to_string(min_h) + "x" + std::to_string(min_w));

  Var<Scalar> h = patch;
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    const auto& st = a.stages[i];
    h = glu_forward(h, glu_layer_from(p, "stage" + std::to_string(i), st.norm, st.stride_w, 1, st.stride_h));
  }
  if (a.patch_output) return sigmoid(conv2d(h, p["patch.w"], p["patch.b"]));
  return sigmoid(linear(h, p["fc.w"], p["fc.b"]));
}

/// (B, D, T) generator-layout batch viewed as one-channel images (B, 1, D, T).
template <typename Scalar>
Var<Scalar> as_image(const Var<Scalar>& x) {
  const auto& s = x.shape();
  if (s.size() != 3) throw ShapeError("as_image expects (B, D, T)");
  return reshape(x, {s[0], 1, s[1], s[2]});
}

// ---------------------------------------------------------------------------
// JSON for architecture descriptions

inline void to_json(nlohmann::json& j, const GatedConvSpec& s) {
  j = {{"channels", s.channels}, {"kernel", s.kernel}, {"stride", s.stride}, {"norm", s.norm}};
}
inline void from_json(const nlohmann::json& j, GatedConvSpec& s) {
  s.channels = j.at("channels");
  s.kernel = j.at("kernel");
  s.stride = j.at("stride");
  s.norm = j.at("norm");
}
inline void to_json(nlohmann::json& j, const Gated2dSpec& s) {
  j = {{"channels", s.channels}, {"kernel_h", s.kernel_h}, {"kernel_w", s.kernel_w},
       {"stride_h", s.stride_h}, {"stride_w", s.stride_w}, {"norm", s.norm}};
}
inline void from_json(const nlohmann::json& j, Gated2dSpec& s) {
  s.channels = j.at("channels");
  s.kernel_h = j.at("kernel_h");
  s.kernel_w = j.at("kernel_w");
  s.stride_h = j.at("stride_h");
  s.stride_w = j.at("stride_w");
  s.norm = j.at("norm");
}
inline void to_json(nlohmann::json& j, const GeneratorArch& a) {
  j = {{"feature_dims", a.feature_dims},       {"input", a.input},
       {"downsample", a.downsample},           {"residual_blocks", a.residual_blocks},
       {"residual_kernel", a.residual_kernel}, {"residual_hidden", a.residual_hidden},
       {"upsample", a.upsample},               {"shuffle_factor", a.shuffle_factor},
       {"output_kernel", a.output_kernel}};
}
inline void from_json(const nlohmann::json& j, GeneratorArch& a) {
  a.feature_dims = j.at("feature_dims");
  a.input = j.at("input").get<GatedConvSpec>();
  a.downsample = j.at("downsample").get<std::vector<GatedConvSpec>>();
  a.residual_blocks = j.at("residual_blocks");
  a.residual_kernel = j.at("residual_kernel");
  a.residual_hidden = j.at("residual_hidden");
  a.upsample = j.at("upsample").get<std::vector<GatedConvSpec>>();
  a.shuffle_factor = j.at("shuffle_factor");
  a.output_kernel = j.at("output_kernel");
}
inline void to_json(nlohmann::json& j, const DiscriminatorArch& a) {
  j = {{"input_height", a.input_height}, {"input_width", a.input_width},
       {"stages", a.stages},             {"patch_output", a.patch_output}};
}
inline void from_json(const nlohmann::json& j, DiscriminatorArch& a) {
  a.input_height = j.at("input_height");
  a.input_width = j.at("input_width");
  a.stages = j.at("stages").get<std::vector<Gated2dSpec>>();
  a.patch_output = j.at("patch_output");
}
inline void to_json(nlohmann::json& j, const ModelConfig& m) {
  j = {{"generator", m.generator}, {"discriminator", m.discriminator}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& m) {
  m.generator = j.at("generator").get<GeneratorArch>();
  m.discriminator = j.at("discriminator").get<DiscriminatorArch>();
}

}  // namespace cyclevc
