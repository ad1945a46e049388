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

#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "frappe/analysis.hpp"
#include "frappe/bitstream.hpp"
#include "frappe/error.hpp"
#include "frappe/image_io.hpp"
#include "frappe/metrics.hpp"
#include "frappe/model_store.hpp"
#include "frappe/synthesis.hpp"

namespace frappe::harness {

using Clock = std::chrono::steady_clock;

struct NamedImage {
  std::string name;
  Image image;
};

// Every .ppm/.pgm/.pnm file in `folder`, sorted by file name.
inline std::vector<NamedImage> load_folder(const std::filesystem::path& folder) {
  if (!std::filesystem::is_directory(folder)) {
    throw FormatError(FormatErrc::kIo, "not a directory: " + folder.string(), 0);
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(folder)) {
    const auto ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedImage> out;
  for (const auto& f : files) out.push_back({f.filename().string(), read_image(f)});
  return out;
}

struct BenchProtocol {
  bool crop = true;
  std::size_t crop_size = 512;
  std::size_t warmup_epochs = 1;
  std::size_t timed_epochs = 5;
  unsigned thread_cap = 1;

  void validate() const {
    if (warmup_epochs < 1) throw ParameterError("bench needs at least one warmup epoch");
    if (timed_epochs < 3) throw ParameterError("bench needs at least three timed epochs, got " + std::to_string(timed_epochs));
    if (crop && crop_size == 0) throw ParameterError("crop size must be positive");
    if (thread_cap != 1) throw ParameterError("bench runs on exactly one thread");
  }
};

// Midpoint median.
inline double median(std::vector<double> v) {
  if (v.empty()) throw ParameterError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct BenchImage {
  std::string name;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t stream_bytes = 0;
  double bpp = 0;
};

struct BenchResult {
  BenchProtocol protocol;
  std::size_t channels = 0;
  std::vector<BenchImage> images;
  // epochs[e][i]: seconds for image i in epoch e; warmup epochs first.
  std::vector<std::vector<double>> epochs;
  double median_seconds = 0;
  double megapixels = 0;  // per image
  double mpx_per_s = 0;
  double timer_resolution = 0;

  std::vector<double> timed_samples() const {
    std::vector<double> out;
    for (std::size_t e = protocol.warmup_epochs; e < epochs.size(); ++e) {
      out.insert(out.end(), epochs[e].begin(), epochs[e].end());
    }
    return out;
  }

  double mean_bpp() const {
    double acc = 0;
    for (const auto& im : images) acc += im.bpp;
    return images.empty() ? 0.0 : acc / double(images.size());
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["protocol"] = {{"crop", protocol.crop},
                     {"crop_size", protocol.crop_size},
                     {"warmup_epochs", protocol.warmup_epochs},
                     {"timed_epochs", protocol.timed_epochs},
                     {"aggregation", "median"},
                     {"thread_cap", protocol.thread_cap},
                     {"clock", "steady_clock"},
                     {"timer_resolution_s", timer_resolution}};
    j["channels"] = channels;
    auto& ims = j["images"] = nlohmann::json::array();
    for (const auto& im : images) {
      ims.push_back({{"name", im.name},
                     {"width", im.width},
                     {"height", im.height},
                     {"stream_bytes", im.stream_bytes},
                     {"bpp", im.bpp}});
    }
    auto& eps = j["epochs"] = nlohmann::json::array();
    for (std::size_t e = 0; e < epochs.size(); ++e) {
      eps.push_back({{"index", e}, {"warmup", e < protocol.warmup_epochs}, {"seconds", epochs[e]}});
    }
    j["median_s"] = median_seconds;
    j["megapixels_per_image"] = megapixels;
    j["mpx_per_s"] = mpx_per_s;
    return j;
  }
};

// Measured tick of the monotonic clock, in seconds.
inline double timer_resolution() {
  double best = 1.0;
  for (int i = 0; i < 16; ++i) {
    const auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) b = Clock::now();
    best = std::min(best, std::chrono::duration<double>(b - a).count());
  }
  return best;
}

// Encoder-side throughput. Images are cropped and converted before any
// timing; each sample covers hard-rounded analysis plus reshape, entropy
// coding and packing of one image.
inline BenchResult bench_encode(const std::vector<NamedImage>& images, const ModelSnapshotSet& model, std::size_t n,
                                const BenchProtocol& protocol = {}) {
  protocol.validate();
  if (images.empty()) throw ParameterError("bench needs at least one image");
  const CodecConfig& cfg = model.config;
  cfg.check_channel_count(n);
  const std::size_t multiple = cfg.max_patch();

  BenchResult r;
  r.protocol = protocol;
  r.channels = n;
  r.timer_resolution = timer_resolution();
  std::vector<Tensor<float>> staged;
  double mpx = 0;
  for (const auto& im : images) {
    const Image cropped = protocol.crop ? center_crop(im.image, protocol.crop_size, multiple) : im.image;
    staged.push_back(image_to_tensor(cropped));
    cfg.check_extents(staged.back().spatial());
    mpx += double(cropped.width * cropped.height) / 1e6;
    r.images.push_back({im.name, cropped.width, cropped.height, 0, 0.0});
  }
  r.megapixels = mpx / double(images.size());

  const std::size_t total = protocol.warmup_epochs + protocol.timed_epochs;
  for (std::size_t e = 0; e < total; ++e) {
    std::vector<double> times;
    for (std::size_t i = 0; i < staged.size(); ++i) {
      const auto t0 = Clock::now();
      const auto stream = pack(encode_latents(staged[i], model.encoder, cfg, n, 1));
      const auto t1 = Clock::now();
      times.push_back(std::chrono::duration<double>(t1 - t0).count());
      r.images[i].stream_bytes = stream.size();
      r.images[i].bpp = bits_per_pixel(stream.size(), staged[i].spatial());
    }
    r.epochs.push_back(std::move(times));
  }
  r.median_seconds = median(r.timed_samples());
  r.mpx_per_s = r.megapixels / r.median_seconds;
  return r;
}

struct SweepOptions {
  std::string codec = "FRAPPE";
  bool measure_throughput = true;
  BenchProtocol protocol;
};

// One RD point per n: mean PSNR/SSIM over images at native resolution, bpp
// from the packed streams, throughput from the cropped bench.
inline metrics::RDCurve rd_sweep(const std::vector<NamedImage>& images, const ModelSnapshotSet& model,
                                 const std::vector<std::size_t>& ns, const SweepOptions& opt = {}) {
  if (images.empty()) throw ParameterError("sweep needs at least one image");
  if (ns.empty()) throw ParameterError("sweep needs at least one channel count");
  const CodecConfig& cfg = model.config;
  metrics::RDCurve curve;
  curve.codec = opt.codec;
  std::vector<Tensor<float>> xs;
  for (const auto& im : images) xs.push_back(image_to_tensor(im.image));
  for (std::size_t n : ns) {
    const auto& decoder = select_decoder(model, n);
    metrics::RDPoint p;
    p.setting = "n=" + std::to_string(n);
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto stream = pack(encode_latents(xs[i], model.encoder, cfg, n, 1));
      const Image rec = tensor_to_image(decode(unpack(stream), decoder));
      p.bpp += bits_per_pixel(stream.size(), xs[i].spatial());
      p.psnr += metrics::psnr(images[i].image, rec);
      p.ssim += metrics::ssim(images[i].image, rec);
    }
    const double count = double(images.size());
    p.bpp /= count;
    p.psnr /= count;
    p.ssim /= count;
    if (opt.measure_throughput) p.throughput = bench_encode(images, model, n, opt.protocol).mpx_per_s;
    curve.points.push_back(std::move(p));
  }
  curve.normalize();
  return curve;
}

}  // namespace frappe::harness
