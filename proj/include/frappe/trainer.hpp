// Copyright 2026 The FRAPPE Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Stagewise training. Channels are introduced one at a time, coarse to
// fine. For channel m a single-channel residual stage fits the new
// projection (with a small residual decoder) to r_m = x - F_m(x); the
// channel is then merged, every encoder is frozen, and the decoder for
// n = m + 1 is retrained on hard-rounded latents.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "frappe/analysis.hpp"
#include "frappe/config.hpp"
#include "frappe/error.hpp"
#include "frappe/image_io.hpp"
#include "frappe/metrics.hpp"
#include "frappe/model_store.hpp"
#include "frappe/numerics/random.hpp"
#include "frappe/numerics/tape.hpp"
#include "frappe/optim.hpp"
#include "frappe/synthesis.hpp"

namespace frappe::train {

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kStdFloor = 1e-6;
inline constexpr float kSigmaMin = 1e-4f;

struct StageSchedule {
  // lambda_m = lambda0 * lambda_decay^m unless `lambdas` lists them.
  double lambda0 = 1e-2;
  double lambda_decay = 0.7;
  std::vector<double> lambdas;
  double rho = 0.3;
  double single_lr = 1.5e-5;
  double merged_lr = 5e-4;
  double single_warmup = 0.02;
  double merged_warmup = 0.10;
  double encoder_lr_factor = 0.1;
  std::pair<int, int> single_epochs{2, 7};
  std::pair<int, int> merged_epochs{4, 7};

  double lambda(std::size_t m) const {
    if (!lambdas.empty()) {
      if (m >= lambdas.size()) throw ParameterError("no lambda given for channel " + std::to_string(m));
      return lambdas[m];
    }
    return lambda0 * std::pow(lambda_decay, double(m));
  }

  // Linear ramp from first to last epoch count across channels 0..N-1.
  static std::size_t ramp(std::pair<int, int> r, std::size_t m, std::size_t total) {
    if (total <= 1) return std::size_t(r.first);
    const double t = double(m) / double(total - 1);
    return static_cast<std::size_t>(std::round(r.first + (r.second - r.first) * t));
  }
  std::size_t epochs_single(std::size_t m, std::size_t total) const { return ramp(single_epochs, m, total); }
  std::size_t epochs_merged(std::size_t m, std::size_t total) const { return ramp(merged_epochs, m, total); }

  void validate(std::size_t channels) const {
    for (std::size_t m = 0; m < channels; ++m) {
      const double l = lambda(m);
      if (!std::isfinite(l) || l < 0) throw ParameterError("lambda_" + std::to_string(m) + " must be finite and >= 0");
    }
    if (!(rho > 0) || !(single_lr > 0) || !(merged_lr > 0) || !(encoder_lr_factor >= 0)) {
      throw ParameterError("rho and learning rates must be positive");
    }
    auto mono = [](std::pair<int, int> r) { return r.first >= 1 && r.second >= r.first; };
    if (!mono(single_epochs) || !mono(merged_epochs)) {
      throw ParameterError("epoch ramps must start at >= 1 and be non-decreasing");
    }
  }
};

struct DecoderShape {
  std::size_t width = 64;
  std::size_t blocks = 2;
};

struct DataSpec {
  std::size_t synthetic = 64;  // procedurally generated images
  std::size_t size = 32;       // square side
  std::size_t held_out = 16;   // taken from the end
  std::string folder;          // optional PNM folder, used instead when set
};

struct TrainConfig {
  CodecConfig codec;
  DecoderShape decoder;
  DecoderShape residual_decoder{16, 1};
  StageSchedule schedule;
  DataSpec data;
  std::uint64_t seed = 1;

  // Three RGB channels at patches 4 and 2, 32x32 synthetic images.
  static TrainConfig toy() {
    TrainConfig c;
    c.codec = CodecConfig{3, 2, {{1, 4}, {2, 2}}, 2};
    c.schedule.single_lr = 3e-3;
    c.schedule.merged_lr = 2e-3;
    return c;
  }

  void validate() const {
    codec.validate();
    schedule.validate(codec.total_channels());
    if (decoder.width == 0 || decoder.blocks == 0 || residual_decoder.width == 0) {
      throw ParameterError("decoder width and block count must be positive");
    }
    if (data.folder.empty() && (data.synthetic < 2 || data.held_out == 0 || data.held_out >= data.synthetic)) {
      throw ParameterError("need at least one training and one held-out image");
    }
    if (data.size == 0 || data.size % codec.max_patch() != 0) {
      throw ParameterError("image size must be a positive multiple of " + std::to_string(codec.max_patch()));
    }
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& s : c.codec.scales) scales.push_back({s.channels, s.patch});
  const auto& s = c.schedule;
  nlohmann::json j = {
      {"seed", c.seed},
      {"codec",
       {{"input_channels", c.codec.input_channels},
        {"rank", c.codec.rank},
        {"scales", scales},
        {"decoder_patch", c.codec.decoder_patch}}},
      {"decoder", {{"width", c.decoder.width}, {"blocks", c.decoder.blocks}}},
      {"residual_decoder", {{"width", c.residual_decoder.width}, {"blocks", c.residual_decoder.blocks}}},
      {"schedule",
       {{"lambda0", s.lambda0},
        {"lambda_decay", s.lambda_decay},
        {"lambdas", s.lambdas},
        {"rho", s.rho},
        {"single_lr", s.single_lr},
        {"merged_lr", s.merged_lr},
        {"single_warmup", s.single_warmup},
        {"merged_warmup", s.merged_warmup},
        {"encoder_lr_factor", s.encoder_lr_factor},
        {"single_epochs", {s.single_epochs.first, s.single_epochs.second}},
        {"merged_epochs", {s.merged_epochs.first, s.merged_epochs.second}}}},
      {"data",
       {{"synthetic", c.data.synthetic},
        {"size", c.data.size},
        {"held_out", c.data.held_out},
        {"folder", c.data.folder}}},
  };
  return j;
}

// Missing keys keep the toy defaults.
inline TrainConfig config_from_json(const std::string& text) {
  TrainConfig c = TrainConfig::toy();
  try {
    const auto j = nlohmann::json::parse(text);
    c.seed = j.value("seed", c.seed);
    if (j.contains("codec")) {
      const auto& k = j["codec"];
      c.codec.input_channels = k.value("input_channels", c.codec.input_channels);
      c.codec.rank = k.value("rank", c.codec.rank);
      c.codec.decoder_patch = k.value("decoder_patch", c.codec.decoder_patch);
      if (k.contains("scales")) {
        c.codec.scales.clear();
        for (const auto& s : k["scales"]) c.codec.scales.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
      }
    }
    for (auto [key, dst] : {std::pair{"decoder", &c.decoder}, std::pair{"residual_decoder", &c.residual_decoder}}) {
      if (!j.contains(key)) continue;
      dst->width = j[key].value("width", dst->width);
      dst->blocks = j[key].value("blocks", dst->blocks);
    }
    if (j.contains("schedule")) {
      const auto& k = j["schedule"];
      auto& s = c.schedule;
      s.lambda0 = k.value("lambda0", s.lambda0);
      s.lambda_decay = k.value("lambda_decay", s.lambda_decay);
      s.lambdas = k.value("lambdas", s.lambdas);
      s.rho = k.value("rho", s.rho);
      s.single_lr = k.value("single_lr", s.single_lr);
      s.merged_lr = k.value("merged_lr", s.merged_lr);
      s.single_warmup = k.value("single_warmup", s.single_warmup);
      s.merged_warmup = k.value("merged_warmup", s.merged_warmup);
      s.encoder_lr_factor = k.value("encoder_lr_factor", s.encoder_lr_factor);
      if (k.contains("single_epochs")) s.single_epochs = {k["single_epochs"].at(0), k["single_epochs"].at(1)};
      if (k.contains("merged_epochs")) s.merged_epochs = {k["merged_epochs"].at(0), k["merged_epochs"].at(1)};
    }
    if (j.contains("data")) {
      const auto& k = j["data"];
      c.data.synthetic = k.value("synthetic", c.data.synthetic);
      c.data.size = k.value("size", c.data.size);
      c.data.held_out = k.value("held_out", c.data.held_out);
      c.data.folder = k.value("folder", c.data.folder);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::kCorruptPayload, std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Data

// Smooth colour gradients, a few soft blobs and one hard edge, on the
// 8-bit grid.
inline Tensor<float> synthetic_image(std::size_t channels, std::size_t size, Rng& rng) {
  const std::size_t n = size * size;
  std::vector<double> img(channels * n, 0.0);
  std::vector<double> tint(channels);
  auto draw_tint = [&] {
    for (auto& t : tint) t = rng.uniform(-1.0, 1.0);
  };
  draw_tint();
  const double gx = rng.uniform(-1, 1), gy = rng.uniform(-1, 1), base = rng.uniform(-0.3, 0.3);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double u = double(i % size) / double(size) - 0.5, v = double(i / size) / double(size) - 0.5;
      img[c * n + i] = base + 0.6 * tint[c] * (gx * u + gy * v);
    }
  }
  const std::size_t blobs = 2 + rng.below(3);
  for (std::size_t b = 0; b < blobs; ++b) {
    draw_tint();
    const double cx = rng.uniform(0, 1), cy = rng.uniform(0, 1), r = rng.uniform(0.08, 0.3),
                 amp = rng.uniform(0.3, 0.8);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double dx = double(i % size) / double(size) - cx, dy = double(i / size) / double(size) - cy;
        img[c * n + i] += amp * tint[c] * std::exp(-(dx * dx + dy * dy) / (2 * r * r));
      }
    }
  }
  draw_tint();
  const double angle = rng.uniform(0, 6.283185307179586), offset = rng.uniform(-0.3, 0.3),
               amp = rng.uniform(0.2, 0.5);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double u = double(i % size) / double(size) - 0.5, v = double(i / size) / double(size) - 0.5;
      if (u * std::cos(angle) + v * std::sin(angle) > offset) img[c * n + i] += amp * tint[c];
    }
  }
  Tensor<float> t(Shape{channels, size, size});
  for (std::size_t i = 0; i < img.size(); ++i) t[i] = static_cast<float>(to_byte(img[i]) / 127.5 - 1.0);
  return t;
}

struct Dataset {
  std::vector<Tensor<float>> train;
  std::vector<Tensor<float>> held_out;
};

inline Dataset make_dataset(const TrainConfig& cfg, Rng& rng) {
  std::vector<Tensor<float>> all;
  std::size_t held = cfg.data.held_out;
  if (!cfg.data.folder.empty()) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(cfg.data.folder)) {
      const auto ext = e.path().extension().string();
      if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const Image img = center_crop(read_image(f), cfg.data.size, cfg.codec.max_patch());
      if (img.channels != cfg.codec.input_channels) {
        throw DimensionError(f.string() + " has " + std::to_string(img.channels) + " channels, config needs " +
                             std::to_string(cfg.codec.input_channels));
      }
      all.push_back(image_to_tensor(img));
    }
    if (all.size() < 2) throw ParameterError("dataset folder " + cfg.data.folder + " holds fewer than 2 images");
    held = std::clamp<std::size_t>(held, 1, all.size() - 1);
  } else {
    for (std::size_t i = 0; i < cfg.data.synthetic; ++i) {
      all.push_back(synthetic_image(cfg.codec.input_channels, cfg.data.size, rng));
    }
  }
  Dataset d;
  d.train.assign(all.begin(), all.end() - static_cast<long>(held));
  d.held_out.assign(all.end() - static_cast<long>(held), all.end());
  return d;
}

// ---------------------------------------------------------------------------
// Losses and graphs

// Trainable parameters of one encoder channel.
template <class T>
struct ChannelWeights {
  Parameter<T> kernel;      // [1, C, p...]
  Parameter<T> bias;        // [1]
  Parameter<T> sigma;       // [1]
  Parameter<T> multiplier;  // [1]

  std::vector<Parameter<T>*> parameters() { return {&kernel, &bias, &sigma, &multiplier}; }

  static ChannelWeights init(const CodecConfig& cfg, std::size_t patch, double lr_scale, Rng& rng) {
    Shape shape{1, cfg.input_channels};
    for (std::size_t d = 0; d < cfg.rank; ++d) shape.push_back(patch);
    Tensor<T> k(shape);
    const double stddev = 1.0 / std::sqrt(double(k.size()));
    for (auto& v : k.values()) v = static_cast<T>(rng.normal() * stddev);
    ChannelWeights w;
    w.kernel = {"kernel", std::move(k), lr_scale};
    w.bias = {"bias", Tensor<T>(Shape{1}), lr_scale};
    w.sigma = {"sigma", Tensor<T>(Shape{1}, T(1)), lr_scale};
    w.multiplier = {"multiplier", Tensor<T>(Shape{1}, T(1)), lr_scale};
    return w;
  }
};

template <class T>
struct LossTerms {
  Var<T> total;
  double sse = 0;
  double log2_std = 0;
};

// log10 ||r - r_hat||^2 + lambda * power^rho * log2 Std(latent).
// `power` is E r^2 and enters as a constant.
template <class T>
LossTerms<T> loss_single(Var<T> r, Var<T> r_hat, Var<T> latent, double lambda, double power, double rho) {
  Var<T> sse = ad::sum(ad::square(ad::sub(r, r_hat)));
  Var<T> distortion = ad::log_floor(sse, 10.0, kLogFloor);
  Var<T> rate = ad::log_floor(ad::stddev(latent, kStdFloor), 2.0, kLogFloor);
  LossTerms<T> out{ad::add(distortion, ad::scale(rate, lambda * std::pow(power, rho))), 0, 0};
  out.sse = sse.value().item();
  out.log2_std = rate.value().item();
  return out;
}

// Single-channel residual graph: projection, compander, multiplier, noise
// surrogate, dequantization, rebinning, residual decoder, loss.
template <class T, class Leaf>
LossTerms<T> single_stage_graph(Var<T> x, Var<T> r, const Tensor<T>& noise, ChannelWeights<T>& ch,
                                SynthesisWeights<T>& decoder, std::size_t patch, std::size_t decoder_patch,
                                double lambda, double rho, double power, Leaf leaf) {
  Var<T> k = leaf(ch.kernel);
  Var<T> b = leaf(ch.bias);
  Var<T> s = leaf(ch.sigma);
  Var<T> g = leaf(ch.multiplier);
  Var<T> latent = ad::channel_scale(ad::compand(ad::conv_strided(x, k, b, patch), s), g);
  Var<T> noisy = ad::add(latent, x.tape->constant(noise));
  Var<T> adapted = adapt_scale(ad::scale(noisy, kDequantScale), patch, decoder_patch);
  Var<T> r_hat = detail::synthesis_graph(adapted, decoder, leaf);
  return loss_single(r, r_hat, latent, lambda, power, rho);
}

// ---------------------------------------------------------------------------
// Reporting

struct LogRow {
  std::string stage;  // "single" or "merged"
  std::size_t channel = 0;
  std::size_t epoch = 0;
  double loss = 0;
  double mse = 0;
  double rate_proxy = 0;  // mean log2 Std of the new latent
  double lambda = 0;
};

inline std::string log_csv(const std::vector<LogRow>& rows) {
  std::ostringstream os;
  os << "stage,channel,epoch,loss,mse,rate_proxy,lambda\n" << std::setprecision(9);
  for (const auto& r : rows) {
    os << r.stage << "," << r.channel << "," << r.epoch << "," << r.loss << "," << r.mse << "," << r.rate_proxy << ","
       << r.lambda << "\n";
  }
  return os.str();
}

struct TrainReport {
  std::vector<double> residual_energy;  // E r_m^2 on training data, m = 0..N
  std::vector<double> heldout_psnr;     // index n - 1
  std::vector<double> latent_std;       // per channel, post-multiplier, training data
  std::vector<LogRow> log;
  double seconds = 0;
};

struct TrainResult {
  ModelSnapshotSet model;
  TrainReport report;
};

inline double mean_square(const std::vector<Tensor<float>>& ts) {
  double acc = 0;
  std::size_t n = 0;
  for (const auto& t : ts) {
    for (float v : t.values()) acc += double(v) * v;
    n += t.size();
  }
  return acc / double(n);
}

inline double mean_square_error(const Tensor<float>& a, const Tensor<float>& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return acc / double(a.size());
}

// Population Std of channel m's companded latents over `images`.
inline double latent_std(const std::vector<Tensor<float>>& images, const EncoderWeights& w, const CodecConfig& cfg,
                         std::size_t m) {
  const auto slot = cfg.locate(m);
  double sum = 0, sq = 0;
  std::size_t count = 0;
  for (const auto& x : images) {
    const auto act = detail::scale_activations(x, w, cfg, slot.scale, slot.index + 1);
    const std::size_t sites = act.size() / (slot.index + 1);
    for (std::size_t i = slot.index * sites; i < act.size(); ++i) {
      sum += act[i];
      sq += act[i] * act[i];
      ++count;
    }
  }
  const double mean = sum / double(count);
  return std::sqrt(std::max(0.0, sq / double(count) - mean * mean));
}

inline double mean_psnr(const std::vector<Tensor<float>>& images, const std::vector<Tensor<float>>& recon) {
  double acc = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    acc += metrics::psnr(tensor_to_image(images[i]), tensor_to_image(recon[i]));
  }
  return acc / double(images.size());
}

// ---------------------------------------------------------------------------
// Stages

inline void check_finite(double loss, const std::string& stage, std::size_t step) {
  if (!std::isfinite(loss)) throw DivergenceError(stage, step);
}

inline void check_finite(const std::vector<Parameter<float>*>& params, const std::string& stage, std::size_t step) {
  for (const auto* p : params) {
    for (float v : p->value.values()) {
      if (!std::isfinite(v)) throw DivergenceError(stage + " (" + p->name + ")", step);
    }
  }
}

inline void check_frozen(const Tape<float>& tape) {
  if (!tape.frozen_leaves_clean()) throw InternalError("frozen parameter received a gradient");
}

inline std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

inline std::size_t adapted_width(const CodecConfig& cfg, std::size_t patch) {
  return patch < cfg.decoder_patch ? int_pow(cfg.decoder_patch / patch, cfg.rank) : 1;
}

struct ChannelFit {
  ChannelWeights<float> channel;
  SynthesisWeights<float> residual_decoder;
};

// Fits channel m to the residuals (x_i - F_m(x_i)).
inline ChannelFit fit_channel(const std::vector<Tensor<float>>& images, const std::vector<Tensor<float>>& residuals,
                              const TrainConfig& cfg, std::size_t m, Rng& rng, std::vector<LogRow>* log = nullptr) {
  const CodecConfig& codec = cfg.codec;
  const auto slot = codec.locate(m);
  const std::size_t patch = codec.scales[slot.scale].patch;
  const auto& sch = cfg.schedule;
  ChannelFit fit{ChannelWeights<float>::init(codec, patch, sch.encoder_lr_factor, rng),
                 SynthesisWeights<float>::init(adapted_width(codec, patch), cfg.residual_decoder.width,
                                               cfg.residual_decoder.blocks, codec.input_channels, codec.decoder_patch,
                                               codec.rank, rng)};
  fit.residual_decoder.clamp_output = false;
  std::vector<Parameter<float>*> params = fit.channel.parameters();
  for (auto* p : fit.residual_decoder.parameters()) params.push_back(p);

  const double lambda = sch.lambda(m), power = mean_square(residuals);
  const std::size_t epochs = sch.epochs_single(m, codec.total_channels());
  const std::size_t total = epochs * images.size();
  optim::Adam adam;
  std::size_t step = 0;
  const std::string stage = "single-channel stage for channel " + std::to_string(m);
  for (std::size_t e = 0; e < epochs; ++e) {
    double loss_sum = 0, mse_sum = 0, rate_sum = 0;
    for (std::size_t i : shuffled(images.size(), rng)) {
      Tape<float> tape;
      Var<float> x = tape.constant(images[i]);
      Var<float> r = tape.constant(residuals[i]);
      Shape grid{1};
      for (auto extent : images[i].spatial()) grid.push_back(extent / patch);
      Tensor<float> noise(grid);
      for (auto& v : noise.values()) v = static_cast<float>(rng.uniform_open(-0.5, 0.5));
      auto terms = single_stage_graph(x, r, noise, fit.channel, fit.residual_decoder, patch, codec.decoder_patch,
                                      lambda, sch.rho, power, [&](Parameter<float>& p) { return tape.parameter(p); });
      const double loss = terms.total.value().item();
      check_finite(loss, stage, step);
      tape.backward(terms.total);
      check_frozen(tape);
      adam.step(params, optim::cosine_ramp(step, total, sch.single_lr, sch.single_warmup));
      fit.channel.sigma.value[0] = std::max(fit.channel.sigma.value[0], kSigmaMin);
      check_finite(params, stage, step);
      loss_sum += loss;
      mse_sum += terms.sse / double(residuals[i].size());
      rate_sum += terms.log2_std;
      ++step;
    }
    if (log) {
      const double n = double(images.size());
      log->push_back({"single", m, e, loss_sum / n, mse_sum / n, rate_sum / n, lambda});
    }
  }
  return fit;
}

inline void install_channel(EncoderWeights& enc, const CodecConfig& codec, std::size_t m,
                            const ChannelWeights<float>& ch) {
  const auto slot = codec.locate(m);
  Tensor<float>& k = enc.kernels[slot.scale];
  const std::size_t per = ch.kernel.value.size();
  std::copy(ch.kernel.value.values().begin(), ch.kernel.value.values().end(), k.data() + slot.index * per);
  enc.biases[slot.scale][slot.index] = ch.bias.value[0];
  enc.sigma[m] = ch.sigma.value[0];
  enc.multiplier[m] = ch.multiplier.value[0];
}

// Copy of `w` accepting `new_width` adapted channels; the added stem
// columns start at zero so the result initially matches `w`.
inline SynthesisWeights<float> widen_stem(const SynthesisWeights<float>& w, std::size_t new_width) {
  SynthesisWeights<float> out = w;
  const Shape& old = w.stem_kernel.value.shape();
  Shape shape = old;
  shape[1] = new_width;
  Tensor<float> k(shape);
  const std::size_t taps = shape_product(std::span(old).subspan(2));
  for (std::size_t o = 0; o < old[0]; ++o) {
    for (std::size_t i = 0; i < old[1]; ++i) {
      for (std::size_t t = 0; t < taps; ++t) k[(o * new_width + i) * taps + t] = w.stem_kernel.value[(o * old[1] + i) * taps + t];
    }
  }
  out.stem_kernel.value = std::move(k);
  out.input_width = new_width;
  return out;
}

// Retrains the merged decoder on hard-rounded latents of the first n
// channels (encoders frozen, no rate term).
inline SynthesisWeights<float> merge_and_retrain(const std::vector<Tensor<float>>& images,
                                                 const std::vector<Tensor<float>>& adapted,
                                                 SynthesisWeights<float> decoder, const TrainConfig& cfg,
                                                 std::size_t m, Rng& rng, std::vector<LogRow>* log = nullptr) {
  const auto& sch = cfg.schedule;
  const std::size_t epochs = sch.epochs_merged(m, cfg.codec.total_channels());
  const std::size_t total = epochs * images.size();
  auto params = decoder.parameters();
  optim::Adam adam;
  std::size_t step = 0;
  const std::string stage = "merged stage for n=" + std::to_string(m + 1);
  for (std::size_t e = 0; e < epochs; ++e) {
    double loss_sum = 0, mse_sum = 0;
    for (std::size_t i : shuffled(images.size(), rng)) {
      Tape<float> tape;
      Var<float> x = tape.constant(images[i]);
      Var<float> y = synthesize(tape.constant(adapted[i]), decoder);
      Var<float> sse = ad::sum(ad::square(ad::sub(x, y)));
      Var<float> loss = ad::log_floor(sse, 10.0, kLogFloor);
      const double l = loss.value().item();
      check_finite(l, stage, step);
      tape.backward(loss);
      check_frozen(tape);
      adam.step(params, optim::cosine_ramp(step, total, sch.merged_lr, sch.merged_warmup));
      check_finite(params, stage, step);
      loss_sum += l;
      mse_sum += sse.value().item() / double(images[i].size());
      ++step;
    }
    if (log) {
      const double n = double(images.size());
      log->push_back({"merged", m, e, loss_sum / n, mse_sum / n, 0.0, 0.0});
    }
  }
  return decoder;
}

inline std::vector<Tensor<float>> adapt_all(const std::vector<Tensor<float>>& images, const EncoderWeights& enc,
                                            const CodecConfig& codec, std::size_t n) {
  std::vector<Tensor<float>> out;
  for (const auto& x : images) out.push_back(adapt(encode_latents(x, enc, codec, n), codec.decoder_patch));
  return out;
}

inline std::vector<Tensor<float>> synthesize_all(const std::vector<Tensor<float>>& adapted,
                                                 const SynthesisWeights<float>& decoder) {
  std::vector<Tensor<float>> out;
  for (const auto& a : adapted) out.push_back(synthesize(a, decoder));
  return out;
}

using Progress = std::function<void(const std::string&)>;

inline TrainResult train_full(const TrainConfig& cfg, const Progress& progress = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const CodecConfig& codec = cfg.codec;
  const std::size_t N = codec.total_channels();
  Rng rng(cfg.seed);
  const Dataset data = make_dataset(cfg, rng);

  TrainResult result;
  ModelSnapshotSet& set = result.model;
  TrainReport& rep = result.report;
  set.config = codec;
  set.encoder = EncoderWeights::zeros(codec);

  std::vector<Tensor<float>> residuals = data.train;
  rep.residual_energy.push_back(mean_square(residuals));
  SynthesisWeights<float> merged;
  for (std::size_t m = 0; m < N; ++m) {
    ChannelFit fit = fit_channel(data.train, residuals, cfg, m, rng, &rep.log);
    install_channel(set.encoder, codec, m, fit.channel);
    const std::uint32_t frozen = encoder_checksum(set.encoder);

    const std::size_t n = m + 1;
    const auto adapted = adapt_all(data.train, set.encoder, codec, n);
    const std::size_t width = decoder_input_width(codec, n);
    if (m == 0) {
      merged = SynthesisWeights<float>::init(width, cfg.decoder.width, cfg.decoder.blocks, codec.input_channels,
                                             codec.decoder_patch, codec.rank, rng);
    } else {
      merged = widen_stem(merged, width);
    }
    merged = merge_and_retrain(data.train, adapted, std::move(merged), cfg, m, rng, &rep.log);
    if (encoder_checksum(set.encoder) != frozen) throw InternalError("encoder changed during the merged stage");
    set.add_decoder(n, merged);

    const auto recon = synthesize_all(adapted, merged);
    for (std::size_t i = 0; i < residuals.size(); ++i) {
      for (std::size_t k = 0; k < residuals[i].size(); ++k) residuals[i][k] = data.train[i][k] - recon[i][k];
    }
    rep.residual_energy.push_back(mean_square(residuals));
    check_finite(rep.residual_energy.back(), "residual update for n=" + std::to_string(n), 0);
    rep.heldout_psnr.push_back(
        mean_psnr(data.held_out, synthesize_all(adapt_all(data.held_out, set.encoder, codec, n), merged)));
    if (progress) {
      std::ostringstream os;
      os << "n=" << n << " residual_energy=" << rep.residual_energy.back()
         << " heldout_psnr=" << rep.heldout_psnr.back();
      progress(os.str());
    }
  }
  for (std::size_t m = 0; m < N; ++m) rep.latent_std.push_back(latent_std(data.train, set.encoder, codec, m));
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace frappe::train
