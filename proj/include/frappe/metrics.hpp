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

// Image quality metrics and Bjontegaard-Delta statistics over
// regime-localized windows of rate-distortion curves.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "frappe/error.hpp"
#include "frappe/image_io.hpp"

namespace frappe::metrics {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline void require_same_geometry(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw DimensionError(std::string(what) + ": images differ in shape (" + std::to_string(a.channels) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.channels) + "x" + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
  }
}

inline double mse(const Image& a, const Image& b) {
  require_same_geometry(a, b, "mse");
  double acc = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    acc += d * d;
  }
  return acc / double(a.pixels.size());
}

// +inf for identical images.
inline double psnr(const Image& a, const Image& b, double peak = 255.0) {
  const double e = mse(a, b);
  if (e == 0.0) return kInfinity;
  return 10.0 * std::log10(peak * peak / e);
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  double total = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - (size - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Separable valid-region filtering of one plane.
inline std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                        const std::vector<double>& g) {
  const std::size_t k = g.size(), oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t t = 0; t < k; ++t) acc += g[t] * plane[y * w + x + t];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t t = 0; t < k; ++t) acc += g[t] * rows[(y + t) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace detail

// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03) over the valid
// region, per channel, then averaged.
inline double ssim(const Image& a, const Image& b, double peak = 255.0) {
  require_same_geometry(a, b, "ssim");
  constexpr int kWindow = 11;
  if (a.width < kWindow || a.height < kWindow) {
    throw DimensionError("ssim: images must be at least 11x11, got " + std::to_string(a.height) + "x" +
                         std::to_string(a.width));
  }
  const auto g = detail::gaussian_window(kWindow, 1.5);
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  const std::size_t h = a.height, w = a.width, C = a.channels;
  double total = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> x(h * w), y(h * w), xx(h * w), yy(h * w), xy(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
      x[i] = a.pixels[i * C + c];
      y[i] = b.pixels[i * C + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::filter_valid(x, h, w, g), my = detail::filter_valid(y, h, w, g);
    const auto sxx = detail::filter_valid(xx, h, w, g), syy = detail::filter_valid(yy, h, w, g);
    const auto sxy = detail::filter_valid(xy, h, w, g);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / double(mx.size());
  }
  return total / double(C);
}

inline double dists_db(double dists) {
  if (!(dists > 0.0)) throw ParameterError("dists_db: DISTS must be positive, got " + std::to_string(dists));
  return -10.0 * std::log10(dists);
}

// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes,
// one-sided three-point end conditions).
class Pchip {
 public:
  Pchip(std::vector<double> xs, std::vector<double> ys) : x_(std::move(xs)), y_(std::move(ys)) {
    if (x_.size() != y_.size()) throw DimensionError("pchip: xs and ys differ in length");
    if (x_.size() < 2) throw ParameterError("pchip: at least 2 points are required");
    for (std::size_t i = 0; i + 1 < x_.size(); ++i) {
      if (!(x_[i + 1] > x_[i])) throw ParameterError("pchip: xs must be strictly increasing");
    }
    const std::size_t n = x_.size();
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    d_.assign(n, 0.0);
    if (n == 2) {
      d_[0] = d_[1] = delta[0];
      return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (delta[k - 1] * delta[k] <= 0) continue;
      const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
    d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  const std::vector<double>& slopes() const { return d_; }
  double lo() const { return x_.front(); }
  double hi() const { return x_.back(); }

  // Outside the knots the end cubic is extended.
  double operator()(double t) const {
    const std::size_t n = x_.size();
    std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin());
    i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
    const double h = x_[i + 1] - x_[i];
    const double s = (t - x_[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y_[i] + (s3 - 2 * s2 + s) * h * d_[i] + (-2 * s3 + 3 * s2) * y_[i + 1] +
           (s3 - s2) * h * d_[i + 1];
  }

 private:
  static double end_slope(double h0, double h1, double m0, double m1) {
    const double d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    auto sign = [](double v) { return (v > 0) - (v < 0); };
    if (sign(d) != sign(m0)) return 0.0;
    if (sign(m0) != sign(m1) && std::abs(d) > std::abs(3 * m0)) return 3 * m0;
    return d;
  }

  std::vector<double> x_, y_, d_;
};

namespace detail {

inline double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                           double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm), right = (b - m) / 6 * (fm + 4 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15 * tol) return left + right + delta / 15;
  return simpson_step(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

}  // namespace detail

inline constexpr double kQuadratureTolerance = 1e-9;

// Adaptive Simpson quadrature of f over [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = kQuadratureTolerance) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  return detail::simpson_step(f, a, b, fa, fm, fb, whole, tol, 50);
}

// Quality axes of an operating point.
enum class Quality { kPsnr, kSsim, kDists };

inline const char* to_string(Quality q) {
  switch (q) {
    case Quality::kPsnr:
      return "psnr";
    case Quality::kSsim:
      return "ssim";
    case Quality::kDists:
      return "dists_db";
  }
  return "?";
}

struct RDPoint {
  std::string setting;
  double bpp = 0;
  double psnr = 0;
  double ssim = 0;
  std::optional<double> dists_db;
  double throughput = 0;  // MPx/s

  std::optional<double> quality(Quality q) const {
    switch (q) {
      case Quality::kPsnr:
        return std::isfinite(psnr) ? std::optional<double>(psnr) : std::nullopt;
      case Quality::kSsim:
        return ssim;
      case Quality::kDists:
        return dists_db;
    }
    return std::nullopt;
  }
};

struct RDCurve {
  std::string codec;
  std::vector<RDPoint> points;

  // Sorts by bpp; rejects non-positive or duplicate rates.
  void normalize() {
    std::sort(points.begin(), points.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!(points[i].bpp > 0)) throw ParameterError(codec + ": bpp must be positive");
      if (i > 0 && points[i].bpp == points[i - 1].bpp) {
        throw ParameterError(codec + ": duplicate operating point at " + std::to_string(points[i].bpp) + " bpp");
      }
    }
  }
};

// Overlaps narrower than this fraction of the union span are reported as
// missing ("--").
inline constexpr double kMinOverlapFraction = 0.05;

namespace detail {

struct Samples {
  std::vector<double> x, y;
};

// (x, y) pairs sorted by x, skipping points without the needed quality.
inline Samples samples(const std::vector<RDPoint>& pts, Quality q, bool rate_on_x) {
  std::vector<std::pair<double, double>> v;
  for (const auto& p : pts) {
    const auto qual = p.quality(q);
    if (!qual) continue;
    const double lr = std::log10(p.bpp);
    v.emplace_back(rate_on_x ? lr : *qual, rate_on_x ? *qual : lr);
  }
  std::sort(v.begin(), v.end());
  Samples s;
  for (const auto& [a, b] : v) {
    if (!s.x.empty() && a == s.x.back()) continue;
    s.x.push_back(a);
    s.y.push_back(b);
  }
  return s;
}

inline std::optional<double> mean_gap(const Samples& anchor, const Samples& test) {
  if (anchor.x.size() < 2 || test.x.size() < 2) {
    throw ParameterError("BD statistics need at least 2 points per curve");
  }
  const double lo = std::max(anchor.x.front(), test.x.front());
  const double hi = std::min(anchor.x.back(), test.x.back());
  const double span = std::max(anchor.x.back(), test.x.back()) - std::min(anchor.x.front(), test.x.front());
  if (!(hi > lo) || hi - lo < kMinOverlapFraction * span) return std::nullopt;
  const Pchip pa(anchor.x, anchor.y), pt(test.x, test.y);
  const double area = integrate([&](double t) { return pt(t) - pa(t); }, lo, hi);
  return area / (hi - lo);
}

}  // namespace detail

// Mean quality difference (test - anchor) at matched log10 rate.
inline std::optional<double> bd_metric(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test,
                                       Quality q = Quality::kPsnr) {
  return detail::mean_gap(detail::samples(anchor, q, true), detail::samples(test, q, true));
}

// Mean rate difference in percent at matched quality.
inline std::optional<double> bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test,
                                     Quality q = Quality::kPsnr) {
  const auto d = detail::mean_gap(detail::samples(anchor, q, false), detail::samples(test, q, false));
  if (!d) return std::nullopt;
  return 100.0 * (std::pow(10.0, *d) - 1.0);
}

inline std::string format_bd(const std::optional<double>& v, int precision = 1) {
  if (!v) return "--";
  std::ostringstream os;
  os << std::showpos << std::fixed << std::setprecision(precision) << *v;
  return os.str();
}

enum class BinAxis { kBpp, kPsnr };

struct Regime {
  std::string label;
  double lo = -kInfinity, hi = kInfinity;
  bool contains(double v) const { return v >= lo && v < hi; }
};

// 1/3-decade rate bins from 10^(-4/3) to 1, everything lower collapsed.
inline std::vector<Regime> bpp_regimes() {
  auto edge = [](int k) { return std::pow(10.0, k / 3.0); };
  std::vector<Regime> r{{"<0.0464", -kInfinity, edge(-4)}};
  const char* names[] = {"[0.0464, 0.1)", "[0.1, 0.215)", "[0.215, 0.464)", "[0.464, 1)"};
  for (int k = -4; k < 0; ++k) r.push_back({names[k + 4], edge(k), edge(k + 1)});
  r.push_back({">=1", 1.0, kInfinity});
  return r;
}

// 2.5 dB quality bins from 22.5 to 32.5 dB.
inline std::vector<Regime> psnr_regimes() {
  std::vector<Regime> r{{"<22.5", -kInfinity, 22.5}};
  const char* names[] = {"[22.5, 25)", "[25, 27.5)", "[27.5, 30)", "[30, 32.5)"};
  for (int k = 0; k < 4; ++k) r.push_back({names[k], 22.5 + 2.5 * k, 25.0 + 2.5 * k});
  r.push_back({">=32.5", 32.5, kInfinity});
  return r;
}

inline std::vector<Regime> regimes(BinAxis axis) { return axis == BinAxis::kBpp ? bpp_regimes() : psnr_regimes(); }

struct BinnedRegime {
  Regime regime;
  std::size_t representative = 0;     // index into the sorted points
  std::vector<std::size_t> members;    // indices inside the regime
  std::vector<std::size_t> window;     // members plus one neighbour each side
};

inline double bin_value(const RDPoint& p, BinAxis axis) { return axis == BinAxis::kBpp ? p.bpp : p.psnr; }

// Sorts `points` along the binning axis and assigns each to its regime.
// The representative sits at the regime's median binning value (the lower
// of the two middle points for even counts). Empty regimes are omitted.
inline std::vector<BinnedRegime> regime_bin(std::vector<RDPoint>& points, BinAxis axis) {
  std::stable_sort(points.begin(), points.end(),
                   [&](const RDPoint& a, const RDPoint& b) { return bin_value(a, axis) < bin_value(b, axis); });
  std::vector<BinnedRegime> out;
  for (const auto& r : regimes(axis)) {
    BinnedRegime b{r, 0, {}, {}};
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (r.contains(bin_value(points[i], axis))) b.members.push_back(i);
    }
    if (b.members.empty()) continue;
    b.representative = b.members[(b.members.size() - 1) / 2];
    const std::size_t first = b.members.front(), last = b.members.back();
    if (first > 0) b.window.push_back(first - 1);
    b.window.insert(b.window.end(), b.members.begin(), b.members.end());
    if (last + 1 < points.size()) b.window.push_back(last + 1);
    out.push_back(std::move(b));
  }
  return out;
}

inline std::vector<RDPoint> pick(const std::vector<RDPoint>& points, const std::vector<std::size_t>& idx) {
  std::vector<RDPoint> out;
  for (auto i : idx) out.push_back(points[i]);
  return out;
}

// RD curve CSV: codec,setting,bpp,psnr,ssim,dists_db,throughput.
inline constexpr const char* kCsvHeader = "codec,setting,bpp,psnr,ssim,dists_db,throughput";

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string to_csv(const std::vector<RDCurve>& curves) {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      os << c.codec << "," << p.setting << "," << format_number(p.bpp) << "," << format_number(p.psnr) << ","
         << format_number(p.ssim) << "," << (p.dists_db ? format_number(*p.dists_db) : "") << ","
         << format_number(p.throughput) << "\n";
    }
  }
  return os.str();
}

inline double parse_number(const std::string& field, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw FormatError(FormatErrc::kCorruptPayload, "line " + std::to_string(line) + ": bad number '" + field + "'");
  }
}

// Curves in order of first appearance.
inline std::vector<RDCurve> from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.substr(0, line.find_last_not_of("\r") + 1) != kCsvHeader) {
    throw FormatError(FormatErrc::kBadMagic, std::string("RD CSV must start with '") + kCsvHeader + "'");
  }
  std::vector<RDCurve> curves;
  std::map<std::string, std::size_t> index;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 7) {
      throw FormatError(FormatErrc::kCorruptPayload,
                        "line " + std::to_string(number) + ": expected 7 fields, got " + std::to_string(f.size()));
    }
    RDPoint p;
    p.setting = f[1];
    p.bpp = parse_number(f[2], number);
    p.psnr = parse_number(f[3], number);
    p.ssim = parse_number(f[4], number);
    if (!f[5].empty()) p.dists_db = parse_number(f[5], number);
    p.throughput = parse_number(f[6], number);
    auto [it, fresh] = index.emplace(f[0], curves.size());
    if (fresh) curves.push_back({f[0], {}});
    curves[it->second].points.push_back(p);
  }
  return curves;
}

struct ReportRow {
  std::string regime;
  std::string codec;
  RDPoint point;
  // Rate-binned: BD-PSNR, BD-SSIM, BD-DISTS. Quality-binned: BD-Rate on
  // the PSNR, SSIM and DISTS axes.
  std::optional<double> bd[3];
};

// One row per (regime, codec) with BD statistics against the anchor over
// the regime windows. The anchor's own rows are zero.
inline std::vector<ReportRow> bd_report(const RDCurve& anchor_curve, const std::vector<RDCurve>& tests,
                                        BinAxis axis) {
  std::vector<RDPoint> anchor = anchor_curve.points;
  const auto anchor_bins = regime_bin(anchor, axis);
  std::vector<ReportRow> rows;
  const Quality axes[3] = {Quality::kPsnr, Quality::kSsim, Quality::kDists};
  auto stat = [&](const std::vector<RDPoint>& a, const std::vector<RDPoint>& t, Quality q) -> std::optional<double> {
    try {
      return axis == BinAxis::kBpp ? bd_metric(a, t, q) : bd_rate(a, t, q);
    } catch (const ParameterError&) {
      return std::nullopt;
    }
  };
  for (const auto& r : regimes(axis)) {
    const auto ab = std::find_if(anchor_bins.begin(), anchor_bins.end(),
                                 [&](const BinnedRegime& b) { return b.regime.label == r.label; });
    for (const auto& test : tests) {
      std::vector<RDPoint> pts = test.points;
      const auto bins = regime_bin(pts, axis);
      const auto tb = std::find_if(bins.begin(), bins.end(),
                                   [&](const BinnedRegime& b) { return b.regime.label == r.label; });
      if (tb == bins.end()) continue;
      ReportRow row{r.label, test.codec, pts[tb->representative], {}};
      if (ab != anchor_bins.end()) {
        const auto aw = pick(anchor, ab->window), tw = pick(pts, tb->window);
        for (int k = 0; k < 3; ++k) row.bd[k] = stat(aw, tw, axes[k]);
      }
      rows.push_back(row);
    }
    if (ab != anchor_bins.end()) {
      ReportRow row{r.label, anchor_curve.codec, anchor[ab->representative], {}};
      const auto aw = pick(anchor, ab->window);
      for (int k = 0; k < 3; ++k) row.bd[k] = stat(aw, aw, axes[k]);
      rows.push_back(row);
    }
  }
  return rows;
}

// Tab-separated, one header line.
inline std::string format_report(const std::vector<ReportRow>& rows, BinAxis axis) {
  const bool by_rate = axis == BinAxis::kBpp;
  std::ostringstream os;
  os << (by_rate ? "regime_bpp" : "regime_psnr") << "\tcodec\tsetting\tbpp\tpsnr\tssim\tdists_db\tthroughput\t"
     << (by_rate ? "bd_psnr\tbd_ssim\tbd_dists" : "bd_rate_psnr\tbd_rate_ssim\tbd_rate_dists") << "\n";
  for (const auto& r : rows) {
    os << r.regime << "\t" << r.codec << "\t" << r.point.setting << "\t" << std::fixed << std::setprecision(5)
       << r.point.bpp << "\t" << std::setprecision(2) << r.point.psnr << "\t" << std::setprecision(4) << r.point.ssim
       << "\t";
    if (r.point.dists_db) os << std::setprecision(2) << *r.point.dists_db;
    os << "\t" << std::setprecision(2) << r.point.throughput << std::defaultfloat;
    os << "\t" << format_bd(r.bd[0], by_rate ? 2 : 1) << "\t" << format_bd(r.bd[1], by_rate ? 4 : 1) << "\t"
       << format_bd(r.bd[2], by_rate ? 2 : 1) << "\n";
  }
  return os.str();
}

}  // namespace frappe::metrics
