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

// frappe: command-line front end.
//
// Exit codes: 0 success, 2 usage or bad parameters, 3 format/IO/model
// errors, 4 numeric divergence during training.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "frappe/frappe.hpp"

namespace {

using namespace frappe;

constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitDivergence = 4;

std::string slurp(const std::string& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void spill(const std::string& path, const std::string& text) { write_file(path, {text.begin(), text.end()}); }

unsigned thread_count(unsigned flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("FRAPPE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
    throw ParameterError(std::string("FRAPPE_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::size_t> parse_counts(const std::string& text, const std::vector<std::size_t>& fallback) {
  if (text.empty()) return fallback;
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoul(tok));
    } catch (...) {
      throw ParameterError("bad channel count '" + tok + "' in '" + text + "'");
    }
  }
  return out;
}

struct EncodeArgs {
  std::string model, input, output;
  std::size_t channels = 0;
  unsigned threads = 0;
};

int run_encode(const EncodeArgs& a) {
  const auto reader = ModelReader::open(a.model);
  const Image img = read_image(a.input);
  const auto x = image_to_tensor(img);
  const auto& cfg = reader.config();
  const auto t0 = std::chrono::steady_clock::now();
  const auto stream = pack(encode_latents(x, reader.encoder(), cfg, a.channels, thread_count(a.threads)));
  const double secs = seconds_since(t0);
  write_file(a.output, stream);
  const auto& have = reader.available();
  if (!std::binary_search(have.begin(), have.end(), a.channels)) {
    std::cerr << "warning: model has no decoder for n=" << a.channels << "; truncate before decoding\n";
  }
  std::cout << "channels=" << a.channels << "\nbytes=" << stream.size()
            << "\nbpp=" << bits_per_pixel(stream.size(), x.spatial()) << "\nseconds=" << secs << "\n";
  std::cerr << "encoded " << img.width << "x" << img.height << " to " << stream.size() << " bytes\n";
  return 0;
}

int run_decode(const std::string& model, const std::string& input, const std::string& output) {
  const auto reader = ModelReader::open(model);
  const auto latents = unpack(read_file(input));
  if (!(latents.config == reader.config())) {
    throw SnapshotError("stream config " + latents.config.describe() + " does not match model " +
                        reader.config().describe());
  }
  const auto t0 = std::chrono::steady_clock::now();
  const Image img = tensor_to_image(decode(latents, reader.decoder(latents.transmitted)));
  const double secs = seconds_since(t0);
  write_image(output, img);
  std::cout << "channels=" << latents.transmitted << "\nwidth=" << img.width << "\nheight=" << img.height
            << "\nseconds=" << secs << "\n";
  return 0;
}

int run_truncate(const std::string& input, std::size_t channels, const std::string& output) {
  const auto in = read_file(input);
  const auto out = truncate(in, channels);
  write_file(output, out);
  std::cout << "channels=" << channels << "\nbytes=" << out.size() << "\n";
  return 0;
}

int run_train(const std::string& config, const std::string& out, const std::string& log, const std::string& report) {
  const auto cfg = config.empty() ? train::TrainConfig::toy() : train::config_from_json(slurp(config));
  const auto result = train::train_full(cfg, [](const std::string& msg) { std::cerr << msg << "\n"; });
  const auto bytes = serialize(result.model);
  write_file(out, bytes);
  if (!log.empty()) spill(log, train::log_csv(result.report.log));
  const auto& rep = result.report;
  if (!report.empty()) {
    nlohmann::json j;
    j["config"] = train::to_json(cfg);
    j["residual_energy"] = rep.residual_energy;
    j["heldout_psnr"] = rep.heldout_psnr;
    j["latent_std"] = rep.latent_std;
    j["seconds"] = rep.seconds;
    spill(report, j.dump(2) + "\n");
  }
  std::ostringstream crc;
  crc << std::hex << ModelReader(bytes).checksum();
  std::cout << "snapshots=" << result.model.available().size() << "\nchecksum=" << crc.str()
            << "\nseconds=" << rep.seconds << "\n";
  for (std::size_t m = 0; m < rep.heldout_psnr.size(); ++m) {
    std::cout << "psnr." << (m + 1) << "=" << rep.heldout_psnr[m] << "\n";
  }
  return 0;
}

struct BenchArgs {
  std::string model, data, json;
  std::size_t channels = 0;
  std::size_t crop = 512;
  bool no_crop = false;
};

int run_bench(const BenchArgs& a) {
  const auto set = load(a.model);
  harness::BenchProtocol p;
  p.crop = !a.no_crop;
  p.crop_size = a.crop;
  const auto r = harness::bench_encode(harness::load_folder(a.data), set, a.channels, p);
  const auto text = r.to_json().dump(2) + "\n";
  if (a.json.empty()) {
    std::cerr << text;
  } else {
    spill(a.json, text);
  }
  std::cout << "channels=" << a.channels << "\nimages=" << r.images.size() << "\nmedian_s=" << r.median_seconds
            << "\nmpx_per_s=" << r.mpx_per_s << "\nbpp=" << r.mean_bpp() << "\n";
  return 0;
}

struct SweepArgs {
  std::string model, data, output, channels, codec = "FRAPPE";
  std::size_t crop = 512;
  bool no_throughput = false;
};

int run_sweep(const SweepArgs& a) {
  const auto set = load(a.model);
  harness::SweepOptions opt;
  opt.codec = a.codec;
  opt.measure_throughput = !a.no_throughput;
  opt.protocol.crop_size = a.crop;
  const auto curve = harness::rd_sweep(harness::load_folder(a.data), set, parse_counts(a.channels, set.available()), opt);
  const auto csv = metrics::to_csv({curve});
  if (a.output.empty()) {
    std::cout << csv;
  } else {
    spill(a.output, csv);
    for (const auto& p : curve.points) {
      std::cout << p.setting << " bpp=" << p.bpp << " psnr=" << p.psnr << " ssim=" << p.ssim
                << " mpx_per_s=" << p.throughput << "\n";
    }
  }
  return 0;
}

int run_bd_report(const std::string& anchor, const std::vector<std::string>& tests, const std::string& axis) {
  const auto anchors = metrics::from_csv(slurp(anchor));
  if (anchors.size() != 1) {
    throw ParameterError("anchor CSV must hold exactly one codec, found " + std::to_string(anchors.size()));
  }
  std::vector<metrics::RDCurve> curves;
  for (const auto& t : tests) {
    for (auto& c : metrics::from_csv(slurp(t))) curves.push_back(std::move(c));
  }
  const auto ax = axis == "psnr" ? metrics::BinAxis::kPsnr : metrics::BinAxis::kBpp;
  std::cout << metrics::format_report(metrics::bd_report(anchors[0], curves, ax), ax);
  return 0;
}

int run_inspect(const std::string& model) {
  std::cout << describe_index(ModelReader::open(model));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FRAPPE residual projection-pursuit image codec"};
  app.require_subcommand(1);
  int code = 0;

  EncodeArgs enc;
  auto* c_enc = app.add_subcommand("encode", "Encode an image to a stream");
  c_enc->add_option("--model", enc.model, "Model file")->required();
  c_enc->add_option("--channels,-n", enc.channels, "Transmitted channels")->required()->check(CLI::PositiveNumber);
  c_enc->add_option("--input,-i", enc.input, "PGM/PPM image")->required();
  c_enc->add_option("--output,-o", enc.output, "Stream file")->required();
  c_enc->add_option("--threads", enc.threads, "Scale-parallel workers (default FRAPPE_THREADS or 1)");

  std::string model, input, output;
  auto* c_dec = app.add_subcommand("decode", "Decode a stream to an image");
  c_dec->add_option("--model", model)->required();
  c_dec->add_option("--input,-i", input)->required();
  c_dec->add_option("--output,-o", output)->required();

  std::size_t keep = 0;
  auto* c_trunc = app.add_subcommand("truncate", "Keep the first n channels of a stream");
  c_trunc->add_option("--input,-i", input)->required();
  c_trunc->add_option("--channels,-n", keep)->required()->check(CLI::PositiveNumber);
  c_trunc->add_option("--output,-o", output)->required();

  std::string config, log, report;
  auto* c_train = app.add_subcommand("train", "Train a model stagewise");
  c_train->add_option("--config", config, "JSON training config (toy defaults when omitted)");
  c_train->add_option("--out", output, "Model file")->required();
  c_train->add_option("--log", log, "Per-epoch CSV log");
  c_train->add_option("--report", report, "JSON summary");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Encoder throughput over a folder of images");
  c_bench->add_option("--model", bench.model)->required();
  c_bench->add_option("--data", bench.data, "Folder of PGM/PPM images")->required();
  c_bench->add_option("--channels,-n", bench.channels)->required()->check(CLI::PositiveNumber);
  c_bench->add_option("--crop", bench.crop, "Center crop size")->check(CLI::PositiveNumber);
  c_bench->add_flag("--no-crop", bench.no_crop);
  c_bench->add_option("--json", bench.json, "Write the bench record here instead of stderr");

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("rd-sweep", "Rate-distortion curve over channel counts");
  c_sweep->add_option("--model", sweep.model)->required();
  c_sweep->add_option("--data", sweep.data)->required();
  c_sweep->add_option("--channels,-n", sweep.channels, "Comma-separated counts (default: every snapshot)");
  c_sweep->add_option("--codec", sweep.codec);
  c_sweep->add_option("--crop", sweep.crop)->check(CLI::PositiveNumber);
  c_sweep->add_flag("--no-throughput", sweep.no_throughput);
  c_sweep->add_option("--output,-o", sweep.output, "CSV file (stdout when omitted)");

  std::string anchor, axis = "bpp";
  std::vector<std::string> tests;
  auto* c_bd = app.add_subcommand("bd-report", "Regime-binned BD table from RD CSVs");
  c_bd->add_option("--anchor", anchor)->required();
  c_bd->add_option("--test", tests)->required();
  c_bd->add_option("--axis", axis)->check(CLI::IsMember({"bpp", "psnr"}));

  auto* c_inspect = app.add_subcommand("inspect", "Print a model's array index");
  c_inspect->add_option("--model", model)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_enc) code = run_encode(enc);
    if (*c_dec) code = run_decode(model, input, output);
    if (*c_trunc) code = run_truncate(input, keep, output);
    if (*c_train) code = run_train(config, output, log, report);
    if (*c_bench) code = run_bench(bench);
    if (*c_sweep) code = run_sweep(sweep);
    if (*c_bd) code = run_bd_report(anchor, tests, axis);
    if (*c_inspect) code = run_inspect(model);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const SnapshotError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return code;
}
