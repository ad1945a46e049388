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

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "frappe/frappe.hpp"

namespace frappe {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out, err;

  std::map<std::string, std::string> values() const {
    std::map<std::string, std::string> kv;
    std::istringstream in(out);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos && line.find(' ') == std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
  }
};

std::string text_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("frappe_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_ / "imgs");
    std::ofstream(dir_ / "cfg.json") << R"({"codec": {"input_channels": 3, "rank": 2, "scales": [[1, 4], [2, 2]],
      "decoder_patch": 2}, "decoder": {"width": 16, "blocks": 1}, "residual_decoder": {"width": 8, "blocks": 1},
      "data": {"synthetic": 20, "size": 32, "held_out": 4}, "seed": 3})";
    Rng rng(12);
    for (int i = 0; i < 3; ++i) {
      write_image(dir_ / "imgs" / ("s" + std::to_string(i) + ".ppm"), tensor_to_image(train::synthetic_image(3, 64, rng)));
    }
    write_image(dir_ / "odd.ppm", Image{30, 32, 3, std::vector<std::uint8_t>(30 * 32 * 3, 7)});
    const CliRun r = run("train --config " + path("cfg.json") + " --out " + path("m.frm"));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string path(const std::string& name) { return (dir_ / name).string(); }

  static CliRun run(const std::string& args, const std::string& env = "") {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = env + " " + FRAPPE_CLI + " " + args + " >" + out + " 2>" + err;
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = text_of(out);
    r.err = text_of(err);
    return r;
  }

  static fs::path dir_;
};

fs::path Cli::dir_;

TEST_F(Cli, EncodeDecodeKeepsExtentsAndChannels) {
  const CliRun e = run("encode --model " + path("m.frm") + " --channels 2 --input " + path("imgs/s0.ppm") + " --output " +
                    path("s.frs"));
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.values().at("channels"), "2");
  EXPECT_EQ(std::stoul(e.values().at("bytes")), fs::file_size(path("s.frs")));
  EXPECT_TRUE(e.values().count("bpp"));
  EXPECT_TRUE(e.values().count("seconds"));
  const CliRun d = run("decode --model " + path("m.frm") + " --input " + path("s.frs") + " --output " + path("d.ppm"));
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_EQ(d.values().at("channels"), "2");
  const Image img = read_image(path("d.ppm"));
  EXPECT_EQ(img.width, 64u);
  EXPECT_EQ(img.height, 64u);
  EXPECT_EQ(img.channels, 3u);
  EXPECT_EQ(unpack(read_file(path("s.frs"))).transmitted, 2u);
}

TEST_F(Cli, FewerChannelsGiveSmallerStream) {
  ASSERT_EQ(run("encode --model " + path("m.frm") + " -n 1 -i " + path("imgs/s1.ppm") + " -o " + path("a.frs")).code, 0);
  ASSERT_EQ(run("encode --model " + path("m.frm") + " -n 3 -i " + path("imgs/s1.ppm") + " -o " + path("b.frs")).code, 0);
  EXPECT_LT(fs::file_size(path("a.frs")), fs::file_size(path("b.frs")));
}

TEST_F(Cli, TruncateMatchesLibrary) {
  ASSERT_EQ(run("encode --model " + path("m.frm") + " -n 3 -i " + path("imgs/s2.ppm") + " -o " + path("full.frs")).code, 0);
  for (int n = 1; n <= 3; ++n) {
    const CliRun t = run("truncate -i " + path("full.frs") + " -n " + std::to_string(n) + " -o " + path("t.frs"));
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_EQ(read_file(path("t.frs")), truncate(read_file(path("full.frs")), n));
  }
  EXPECT_EQ(run("truncate -i " + path("full.frs") + " -n 4 -o " + path("t.frs")).code, 2);
}

TEST_F(Cli, ThreadedEncodeIsIdentical) {
  ASSERT_EQ(run("encode --model " + path("m.frm") + " -n 3 -i " + path("imgs/s0.ppm") + " -o " + path("one.frs")).code, 0);
  ASSERT_EQ(run("encode --model " + path("m.frm") + " -n 3 -i " + path("imgs/s0.ppm") + " -o " + path("two.frs"),
                "FRAPPE_THREADS=2")
                .code,
            0);
  EXPECT_EQ(read_file(path("one.frs")), read_file(path("two.frs")));
  EXPECT_EQ(run("encode --model " + path("m.frm") + " -n 3 -i " + path("imgs/s0.ppm") + " -o " + path("two.frs"),
                "FRAPPE_THREADS=zero")
                .code,
            2);
}

TEST_F(Cli, ErrorsMapToExitCodes) {
  const CliRun missing = run("encode --model " + path("nope.frm") + " -n 1 -i " + path("imgs/s0.ppm") + " -o " + path("x"));
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.err.find("nope.frm"), std::string::npos);
  const CliRun odd = run("encode --model " + path("m.frm") + " -n 1 -i " + path("odd.ppm") + " -o " + path("x"));
  EXPECT_EQ(odd.code, 2);
  EXPECT_NE(odd.err.find("multiples of 4"), std::string::npos) << odd.err;
  EXPECT_EQ(run("encode --model " + path("m.frm")).code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  std::ofstream(path("junk.frs")) << "not a stream";
  EXPECT_EQ(run("decode --model " + path("m.frm") + " -i " + path("junk.frs") + " -o " + path("x.ppm")).code, 3);
}

TEST_F(Cli, TrainDivergenceExitsWithFour) {
  std::ofstream(path("bad.json")) << R"({"codec": {"input_channels": 3, "rank": 2, "scales": [[1, 4]],
    "decoder_patch": 4}, "decoder": {"width": 8, "blocks": 1}, "residual_decoder": {"width": 8, "blocks": 1},
    "data": {"synthetic": 6, "size": 16, "held_out": 2}, "schedule": {"single_lr": 1e38, "merged_lr": 1e38}})";
  const CliRun r = run("train --config " + path("bad.json") + " --out " + path("bad.frm"));
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos);
}

TEST_F(Cli, TrainIsDeterministic) {
  const CliRun a = run("train --config " + path("cfg.json") + " --out " + path("m2.frm") + " --log " + path("log.csv") +
                    " --report " + path("rep.json"));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(read_file(path("m.frm")), read_file(path("m2.frm")));
  EXPECT_EQ(text_of(path("log.csv")).rfind("stage,channel,epoch,loss,mse,rate_proxy,lambda\n", 0), 0u);
  const auto rep = nlohmann::json::parse(text_of(path("rep.json")));
  EXPECT_EQ(rep["heldout_psnr"].size(), 3u);
  const CliRun i = run("inspect --model " + path("m2.frm"));
  ASSERT_EQ(i.code, 0);
  EXPECT_EQ(i.values().at("checksum"), a.values().at("checksum"));
  EXPECT_EQ(i.values().at("snapshots"), "1,2,3");
  EXPECT_NE(i.out.find("encoder.sigma f32 (3)"), std::string::npos);
}

TEST_F(Cli, BenchWritesProtocolJson) {
  const CliRun b = run("bench --model " + path("m.frm") + " --data " + path("imgs") + " -n 2 --json " + path("b.json"));
  ASSERT_EQ(b.code, 0) << b.err;
  const auto j = nlohmann::json::parse(text_of(path("b.json")));
  EXPECT_EQ(j["epochs"].size(), 6u);
  EXPECT_EQ(j["protocol"]["aggregation"], "median");
  EXPECT_EQ(b.values().at("images"), "3");
  EXPECT_EQ(run("bench --model " + path("m.frm") + " --data " + path("nowhere") + " -n 2").code, 3);
}

TEST_F(Cli, SweepAndBdReport) {
  const CliRun s = run("rd-sweep --model " + path("m.frm") + " --data " + path("imgs") + " -n 1,2,3 --no-throughput -o " +
                    path("rd.csv"));
  ASSERT_EQ(s.code, 0) << s.err;
  auto curves = metrics::from_csv(text_of(path("rd.csv")));
  ASSERT_EQ(curves.size(), 1u);
  EXPECT_EQ(curves[0].points.size(), 3u);

  const CliRun same = run("bd-report --anchor " + path("rd.csv") + " --test " + path("rd.csv"));
  ASSERT_EQ(same.code, 0) << same.err;
  std::istringstream rows(same.out);
  std::string line;
  std::getline(rows, line);
  EXPECT_EQ(line.rfind("regime_bpp\tcodec\tsetting", 0), 0u);
  std::size_t count = 0;
  while (std::getline(rows, line)) {
    ++count;
    const auto tab = line.rfind('\t');
    const auto psnr_col = line.rfind('\t', line.rfind('\t', tab - 1) - 1);
    EXPECT_EQ(line.substr(psnr_col + 1, 5), "+0.00") << line;
  }
  EXPECT_GT(count, 0u);

  // Four points spread over one 1/3-decade bin, shifted up 1 dB.
  metrics::RDCurve anchor{"A", {}}, shifted{"B", {}};
  for (int i = 0; i < 4; ++i) {
    const double bpp = 0.11 + 0.02 * i;
    anchor.points.push_back({"s" + std::to_string(i), bpp, 25 + 10 * bpp, 0.8 + bpp / 10, std::nullopt, 1.0});
    shifted.points.push_back({"s" + std::to_string(i), bpp, 26 + 10 * bpp, 0.8 + bpp / 10, std::nullopt, 1.0});
  }
  std::ofstream(path("a.csv")) << metrics::to_csv({anchor});
  std::ofstream(path("b.csv")) << metrics::to_csv({shifted});
  const CliRun off = run("bd-report --anchor " + path("a.csv") + " --test " + path("b.csv"));
  ASSERT_EQ(off.code, 0) << off.err;
  EXPECT_NE(off.out.find("\tB\t"), std::string::npos);
  EXPECT_NE(off.out.find("+1.00\t+0.0000\t--"), std::string::npos) << off.out;
  EXPECT_EQ(run("bd-report --anchor " + path("a.csv") + " --test " + path("b.csv") + " --axis psnr").code, 0);
  EXPECT_EQ(run("bd-report --anchor " + path("a.csv") + " --test " + path("b.csv") + " --axis ssim").code, 2);
}

}  // namespace
}  // namespace frappe
