// Copyright 2026 The iqh Authors.
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

#include "iqh/qmetrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>

#include "iqh/error.hpp"

namespace iqh {

namespace {

void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw Error(Errc::kShapeMismatch, "image shapes differ: " + std::to_string(a.width()) + "x" +
                                          std::to_string(a.height()) + "x" + std::to_string(a.channels()) + " vs " +
                                          std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                                          std::to_string(b.channels()));
  }
}

int colour_channels(const Image& img) { return img.channels() == 4 ? 3 : img.channels(); }

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lo + hi);
}

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t j = std::min(i + 1, v.size() - 1);
  return v[i] + (v[j] - v[i]) * (pos - static_cast<double>(i));
}

SnrEstimate make_estimate(SnrMethod method, double linear, double support) {
  return {method, linear, 20.0 * std::log10(linear), support};
}

}  // namespace

double psnr(const Image& ref, const Image& test) {
  require_same_shape(ref, test);
  const auto a = ref.samples();
  const auto b = test.samples();
  if (a.empty()) throw Error(Errc::kTooSmall, "empty image");
  // Integer accumulation keeps the MSE exact.
  unsigned __int128 sse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::int64_t d = static_cast<std::int64_t>(a[i]) - static_cast<std::int64_t>(b[i]);
    sse += static_cast<unsigned __int128>(d * d);
  }
  if (sse == 0) return std::numeric_limits<double>::infinity();
  const double mse = static_cast<double>(sse) / static_cast<double>(a.size());
  const double l = ref.max_value();
  return 10.0 * std::log10(l * l / mse);
}

double ssim(const Image& ref, const Image& test) {
  require_same_shape(ref, test);
  const int w = ref.width(), h = ref.height();
  if (std::min(w, h) < kSsimWindow) throw Error(Errc::kTooSmall, "SSIM needs at least 11x11 pixels");
  std::array<double, kSsimWindow> g{};
  double gs = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    gs += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= gs;

  const double l = ref.max_value();
  const double c1 = (kSsimK1 * l) * (kSsimK1 * l);
  const double c2 = (kSsimK2 * l) * (kSsimK2 * l);
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  const int cc = colour_channels(ref);

  // Separable filtering of x, y, x^2, y^2, xy restricted to valid windows.
  auto filter = [&](const std::vector<double>& src) {
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < kSsimWindow; ++k) s += g[static_cast<std::size_t>(k)] * src[static_cast<std::size_t>(y) * w + x + k];
        tmp[static_cast<std::size_t>(y) * ow + x] = s;
      }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < kSsimWindow; ++k) s += g[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * ow + x];
        out[static_cast<std::size_t>(y) * ow + x] = s;
      }
    return out;
  };

  double total = 0.0;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  for (int c = 0; c < cc; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        x[i] = ref.at(px, py, c);
        y[i] = test.at(px, py, c);
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
    const auto mx = filter(x), my = filter(y), mxx = filter(xx), myy = filter(yy), mxy = filter(xy);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cxy = mxy[i] - mx[i] * my[i];
      sum += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / cc;
}

SnrEstimate snr_hb(const Image& img, const SnrHbOptions& options) { return snr_hb(to_luma(img), options); }

SnrEstimate snr_hb(const Plane& p, const SnrHbOptions& options) {
  const int b = options.block;
  if (b <= 0 || !(options.keep_fraction > 0.0) || options.keep_fraction > 1.0)
    throw Error(Errc::kValidation, "invalid SNR-HB options");
  if (p.width < b || p.height < b) throw Error(Errc::kTooSmall, "image smaller than one SNR block");
  struct Tile {
    double mean, sigma;
  };
  std::vector<Tile> tiles;
  const double n = static_cast<double>(b) * b;
  for (int ty = 0; ty + b <= p.height; ty += b)
    for (int tx = 0; tx + b <= p.width; tx += b) {
      double s = 0.0;
      for (int y = ty; y < ty + b; ++y)
        for (int x = tx; x < tx + b; ++x) s += p(x, y);
      const double mean = s / n;
      double ss = 0.0;
      for (int y = ty; y < ty + b; ++y)
        for (int x = tx; x < tx + b; ++x) ss += (p(x, y) - mean) * (p(x, y) - mean);
      tiles.push_back({mean, std::sqrt(ss / (n - 1.0))});
    }
  std::stable_sort(tiles.begin(), tiles.end(), [](const Tile& a, const Tile& c) { return a.sigma < c.sigma; });
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(options.keep_fraction * static_cast<double>(tiles.size()))));
  std::vector<double> means, sigmas;
  for (std::size_t i = 0; i < keep; ++i) {
    means.push_back(tiles[i].mean);
    sigmas.push_back(std::max(tiles[i].sigma, kSigmaFloor));
  }
  return make_estimate(SnrMethod::kHomogeneousBlocks, median(means) / median(sigmas), static_cast<double>(keep));
}

std::optional<SnrEstimate> snr_ha(const Image& img, const SnrHaOptions& options) {
  return snr_ha(to_luma(img), options);
}

std::optional<SnrEstimate> snr_ha(const Plane& p, const SnrHaOptions& options) {
  const int w = p.width, h = p.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (n < 2) return std::nullopt;
  double s = 0.0, ss = 0.0;
  for (double v : p.values) s += v;
  const double gmean = s / static_cast<double>(n);
  for (double v : p.values) ss += (v - gmean) * (v - gmean);
  const double gsigma = std::sqrt(ss / static_cast<double>(n - 1));
  const double sigma_cap = options.sigma_tol * std::max(gsigma, kSigmaFloor);

  // Noise level for young regions: robust (MAD) sigma of horizontal differences.
  std::vector<double> diffs;
  diffs.reserve(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) diffs.push_back(std::abs(p(x + 1, y) - p(x, y)));
  const double noise = diffs.empty() ? 0.0 : 1.4826 * median(diffs) / std::numbers::sqrt2;

  // Seeds: forward-difference gradient magnitude within the tolerance.
  std::vector<std::pair<double, std::size_t>> seeds;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x + 1 < w ? p(x + 1, y) - p(x, y) : p(x, y) - p(x - 1, y);
      const double dy = y + 1 < h ? p(x, y + 1) - p(x, y) : p(x, y) - p(x, y - 1);
      const double g = std::hypot(dx, dy);
      if (g <= sigma_cap) seeds.emplace_back(g, static_cast<std::size_t>(y) * w + x);
    }
  std::stable_sort(seeds.begin(), seeds.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  constexpr std::size_t kYoung = 25;
  std::vector<char> taken(n, 0);
  double u_sum = 0.0, u_sq = 0.0, u_n = 0.0;
  std::deque<std::size_t> queue;
  for (const auto& [g, seed] : seeds) {
    if (taken[seed]) continue;
    double r_sum = p.values[seed], r_sq = r_sum * r_sum, r_n = 1.0;
    taken[seed] = 1;
    std::vector<std::size_t> members{seed};
    queue.assign(1, seed);
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      const int cx = static_cast<int>(cur % static_cast<std::size_t>(w));
      const int cy = static_cast<int>(cur / static_cast<std::size_t>(w));
      const int nx[4] = {cx + 1, cx - 1, cx, cx};
      const int ny[4] = {cy, cy, cy + 1, cy - 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
        const std::size_t q = static_cast<std::size_t>(ny[k]) * w + nx[k];
        if (taken[q]) continue;
        const double v = p.values[q];
        const double mean = r_sum / r_n;
        const double var = r_n > 1 ? std::max(0.0, (r_sq - r_sum * r_sum / r_n) / (r_n - 1)) : 0.0;
        const double sig = members.size() < kYoung ? noise : std::sqrt(var);
        if (std::abs(v - mean) > 3.0 * std::max(sig, kSigmaFloor)) continue;
        const double n2 = r_n + 1, s2 = r_sum + v, q2 = r_sq + v * v;
        const double var2 = std::max(0.0, (q2 - s2 * s2 / n2) / (n2 - 1));
        if (std::sqrt(var2) > sigma_cap) continue;
        r_n = n2, r_sum = s2, r_sq = q2;
        taken[q] = 1;
        members.push_back(q);
        queue.push_back(q);
      }
    }
    if (r_n >= options.min_area) {
      u_sum += r_sum;
      u_sq += r_sq;
      u_n += r_n;
    }
  }
  if (u_n < 2) return std::nullopt;
  const double mean = u_sum / u_n;
  const double sigma = std::sqrt(std::max(0.0, (u_sq - u_sum * u_sum / u_n) / (u_n - 1)));
  return make_estimate(SnrMethod::kHomogeneousArea, mean / std::max(sigma, kSigmaFloor), u_n);
}

namespace {

struct Line {
  double px = 0.0, py = 0.0;  // point on the line
  double tx = 0.0, ty = 0.0;  // unit direction
  double nx = 0.0, ny = 0.0;  // unit normal
  double rms = 0.0;
};

// Total least squares (principal axis) fit.
Line fit_line(const std::vector<std::pair<double, double>>& pts) {
  Line l;
  const double n = static_cast<double>(pts.size());
  for (const auto& [x, y] : pts) l.px += x, l.py += y;
  l.px /= n, l.py /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    sxx += (x - l.px) * (x - l.px);
    syy += (y - l.py) * (y - l.py);
    sxy += (x - l.px) * (y - l.py);
  }
  const double theta = 0.5 * std::atan2(2 * sxy, sxx - syy);
  l.tx = std::cos(theta), l.ty = std::sin(theta);
  l.nx = -l.ty, l.ny = l.tx;
  double r2 = 0.0;
  for (const auto& [x, y] : pts) {
    const double d = (x - l.px) * l.nx + (y - l.py) * l.ny;
    r2 += d * d;
  }
  l.rms = std::sqrt(r2 / n);
  return l;
}

double otsu_threshold(const std::vector<double>& values) {
  constexpr int kBins = 256;
  const double maxv = *std::max_element(values.begin(), values.end());
  if (maxv <= 0.0) return std::numeric_limits<double>::infinity();
  std::array<double, kBins> hist{};
  for (double v : values) hist[static_cast<std::size_t>(std::min(kBins - 1, static_cast<int>(v / maxv * kBins)))] += 1;
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int i = 0; i < kBins; ++i) sum_all += i * hist[static_cast<std::size_t>(i)];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_i = 0;
  for (int i = 0; i < kBins; ++i) {
    w0 += hist[static_cast<std::size_t>(i)];
    sum0 += i * hist[static_cast<std::size_t>(i)];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) best = between, best_i = i;
  }
  return (best_i + 1) * maxv / kBins;
}

struct Profile {
  std::vector<double> centers;
  std::vector<double> values;
  double at(double x) const {
    if (x <= centers.front()) return values.front();
    if (x >= centers.back()) return values.back();
    const double step = centers[1] - centers[0];
    const auto i = static_cast<std::size_t>((x - centers.front()) / step);
    const std::size_t j = std::min(i + 1, centers.size() - 1);
    const double t = (x - centers[i]) / step;
    return values[i] + (values[j] - values[i]) * t;
  }
};

std::optional<EdgeMeasurement> measure_one(const Plane& p, const Line& line, double t_lo, double t_hi,
                                           const SharpnessOptions& o) {
  const int bins = static_cast<int>(std::lround(2 * o.half_band / o.bin_width));
  std::vector<double> sum(static_cast<std::size_t>(bins), 0.0), cnt(static_cast<std::size_t>(bins), 0.0);
  // Bounding box of the band around the segment.
  const double ext = o.half_band + 1;
  const double xs[4] = {line.px + line.tx * t_lo - line.nx * ext, line.px + line.tx * t_lo + line.nx * ext,
                        line.px + line.tx * t_hi - line.nx * ext, line.px + line.tx * t_hi + line.nx * ext};
  const double ys[4] = {line.py + line.ty * t_lo - line.ny * ext, line.py + line.ty * t_lo + line.ny * ext,
                        line.py + line.ty * t_hi - line.ny * ext, line.py + line.ty * t_hi + line.ny * ext};
  const int x0 = std::max(0, static_cast<int>(std::floor(*std::min_element(xs, xs + 4))));
  const int x1 = std::min(p.width - 1, static_cast<int>(std::ceil(*std::max_element(xs, xs + 4))));
  const int y0 = std::max(0, static_cast<int>(std::floor(*std::min_element(ys, ys + 4))));
  const int y1 = std::min(p.height - 1, static_cast<int>(std::ceil(*std::max_element(ys, ys + 4))));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - line.px, dy = y - line.py;
      const double t = dx * line.tx + dy * line.ty;
      if (t < t_lo || t > t_hi) continue;
      const double d = dx * line.nx + dy * line.ny;
      if (d < -o.half_band || d >= o.half_band) continue;
      const int k = std::min(bins - 1, static_cast<int>((d + o.half_band) / o.bin_width));
      sum[static_cast<std::size_t>(k)] += p(x, y);
      cnt[static_cast<std::size_t>(k)] += 1;
    }
  std::vector<int> filled;
  for (int k = 0; k < bins; ++k)
    if (cnt[static_cast<std::size_t>(k)] > 0) filled.push_back(k);
  if (filled.size() < static_cast<std::size_t>(bins) * 3 / 4) return std::nullopt;

  Profile esf;
  esf.centers.resize(static_cast<std::size_t>(bins));
  esf.values.resize(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) esf.centers[static_cast<std::size_t>(k)] = -o.half_band + (k + 0.5) * o.bin_width;
  // Empty bins: linear interpolation between filled neighbours.
  for (int k = 0; k < bins; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    if (cnt[uk] > 0) {
      esf.values[uk] = sum[uk] / cnt[uk];
      continue;
    }
    auto hi = std::lower_bound(filled.begin(), filled.end(), k);
    if (hi == filled.begin()) {
      esf.values[uk] = sum[static_cast<std::size_t>(*hi)] / cnt[static_cast<std::size_t>(*hi)];
    } else if (hi == filled.end()) {
      const int lo = *(hi - 1);
      esf.values[uk] = sum[static_cast<std::size_t>(lo)] / cnt[static_cast<std::size_t>(lo)];
    } else {
      const int lo = *(hi - 1);
      const double vl = sum[static_cast<std::size_t>(lo)] / cnt[static_cast<std::size_t>(lo)];
      const double vh = sum[static_cast<std::size_t>(*hi)] / cnt[static_cast<std::size_t>(*hi)];
      esf.values[uk] = vl + (vh - vl) * (k - lo) / static_cast<double>(*hi - lo);
    }
  }

  const std::size_t third = static_cast<std::size_t>(bins) / 3;
  std::vector<double> left(esf.values.begin(), esf.values.begin() + static_cast<std::ptrdiff_t>(third));
  std::vector<double> right(esf.values.end() - static_cast<std::ptrdiff_t>(third), esf.values.end());
  const bool rising = median(right) >= median(left);
  if (!rising) {
    std::reverse(esf.values.begin(), esf.values.end());
    std::swap(left, right);
    std::reverse(left.begin(), left.end());
    std::reverse(right.begin(), right.end());
  }
  const double lo = percentile(left, 0.10);
  const double hi = percentile(right, 0.90);
  if (!(hi - lo > 1e-9)) return std::nullopt;
  for (double& v : esf.values) v = (v - lo) / (hi - lo);

  // Edge centre: the 0.5 crossing nearest the fitted line.
  std::optional<double> centre;
  for (std::size_t k = 0; k + 1 < esf.values.size(); ++k) {
    const double a = esf.values[k], b = esf.values[k + 1];
    if (a < 0.5 && b >= 0.5) {
      const double c = esf.centers[k] + (0.5 - a) / (b - a) * o.bin_width;
      if (!centre || std::abs(c) < std::abs(*centre)) centre = c;
    }
  }
  if (!centre) return std::nullopt;
  const double c = *centre;

  EdgeMeasurement m;
  m.rer = esf.at(c + 0.5) - esf.at(c - 0.5);

  const std::size_t nb = esf.values.size();
  std::vector<double> lsf(nb, 0.0);
  for (std::size_t k = 1; k + 1 < nb; ++k) lsf[k] = (esf.values[k + 1] - esf.values[k - 1]) / (2 * o.bin_width);
  const auto peak_it = std::max_element(lsf.begin(), lsf.end());
  const auto peak = static_cast<std::size_t>(std::distance(lsf.begin(), peak_it));
  const double half = *peak_it / 2;
  if (!(half > 0.0)) return std::nullopt;
  std::size_t l = peak, r = peak;
  while (l > 0 && lsf[l] >= half) --l;
  while (r + 1 < nb && lsf[r] >= half) ++r;
  if (lsf[l] >= half || lsf[r] >= half) return std::nullopt;
  const double xl = esf.centers[l] + (half - lsf[l]) / (lsf[l + 1] - lsf[l]) * o.bin_width;
  const double xr = esf.centers[r - 1] + (lsf[r - 1] - half) / (lsf[r - 1] - lsf[r]) * o.bin_width;
  m.fwhm = xr - xl;

  // Hann-tapered DFT at Nyquist, divided by the transfer functions of the
  // centred difference and of the bin averaging.
  const double f = 0.5;
  std::complex<double> acc(0.0, 0.0);
  double dc = 0.0;
  for (std::size_t k = 0; k < nb; ++k) {
    const double x = esf.centers[k] - c;
    if (std::abs(x) > o.half_band) continue;
    const double win = 0.5 * (1.0 + std::cos(std::numbers::pi * x / o.half_band));
    const double v = lsf[k] * win;
    dc += v;
    acc += v * std::polar(1.0, -2.0 * std::numbers::pi * f * x);
  }
  if (!(std::abs(dc) > 0.0)) return std::nullopt;
  auto sinc = [](double a) { return a == 0.0 ? 1.0 : std::sin(a) / a; };
  const double correction = sinc(2 * std::numbers::pi * f * o.bin_width) * sinc(std::numbers::pi * f * o.bin_width);
  double mtf = std::abs(acc) / std::abs(dc) / correction;
  if (mtf < 0.0 || mtf > 1.0) m.mtf_clipped = true;
  m.mtf_nyquist = std::clamp(mtf, 0.0, 1.05);
  return m;
}

}  // namespace

std::vector<EdgeMeasurement> measure_edges(const Plane& p, const SharpnessOptions& o) {
  const int w = p.width, h = p.height;
  std::vector<EdgeMeasurement> out;
  if (w < 5 || h < 5) return out;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> gx(n, 0.0), gy(n, 0.0), mag(n, 0.0), interior;
  interior.reserve(n);
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const double sx = (p(x + 1, y - 1) + 2 * p(x + 1, y) + p(x + 1, y + 1)) -
                        (p(x - 1, y - 1) + 2 * p(x - 1, y) + p(x - 1, y + 1));
      const double sy = (p(x - 1, y + 1) + 2 * p(x, y + 1) + p(x + 1, y + 1)) -
                        (p(x - 1, y - 1) + 2 * p(x, y - 1) + p(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      gx[i] = sx, gy[i] = sy, mag[i] = std::hypot(sx, sy);
      interior.push_back(mag[i]);
    }
  const double thr = otsu_threshold(interior);

  // Non-maximum suppression along the quantised gradient direction.
  std::vector<char> ridge(n, 0);
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (mag[i] < thr) continue;
      double ang = std::atan2(gy[i], gx[i]) * 180.0 / std::numbers::pi;
      if (ang < 0) ang += 180.0;
      int ox = 1, oy = 0;
      if (ang >= 22.5 && ang < 67.5) ox = 1, oy = 1;
      else if (ang >= 67.5 && ang < 112.5) ox = 0, oy = 1;
      else if (ang >= 112.5 && ang < 157.5) ox = -1, oy = 1;
      const double a = mag[static_cast<std::size_t>(y + oy) * w + x + ox];
      const double b = mag[static_cast<std::size_t>(y - oy) * w + x - ox];
      if (mag[i] > a && mag[i] >= b) ridge[i] = 1;
    }

  std::vector<char> seen(n, 0);
  for (std::size_t start = 0; start < n; ++start) {
    if (!ridge[start] || seen[start]) continue;
    std::vector<std::size_t> comp{start};
    seen[start] = 1;
    for (std::size_t qi = 0; qi < comp.size(); ++qi) {
      const int cx = static_cast<int>(comp[qi] % static_cast<std::size_t>(w));
      const int cy = static_cast<int>(comp[qi] / static_cast<std::size_t>(w));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = cx + dx, y = cy + dy;
          if (x < 0 || y < 0 || x >= w || y >= h) continue;
          const std::size_t j = static_cast<std::size_t>(y) * w + x;
          if (ridge[j] && !seen[j]) seen[j] = 1, comp.push_back(j);
        }
    }
    if (comp.size() < o.min_edge_pixels) continue;

    std::vector<std::pair<double, double>> pts;
    for (std::size_t i : comp)
      pts.emplace_back(static_cast<double>(i % static_cast<std::size_t>(w)), static_cast<double>(i / static_cast<std::size_t>(w)));
    const Line coarse = fit_line(pts);

    // Sub-pixel refinement: gradient-weighted centroid along the scan axis
    // closest to the normal.
    const bool scan_x = std::abs(coarse.nx) >= std::abs(coarse.ny);
    std::map<int, std::vector<int>> lines;
    for (const auto& [x, y] : pts) {
      if (scan_x) lines[static_cast<int>(y)].push_back(static_cast<int>(x));
      else lines[static_cast<int>(x)].push_back(static_cast<int>(y));
    }
    std::vector<std::pair<double, double>> refined;
    for (const auto& [fixed, across] : lines) {
      const double mid = std::accumulate(across.begin(), across.end(), 0.0) / static_cast<double>(across.size());
      const int c0 = static_cast<int>(std::lround(mid));
      double ws = 0.0, wp = 0.0;
      for (int k = c0 - 3; k <= c0 + 3; ++k) {
        const int x = scan_x ? k : fixed, y = scan_x ? fixed : k;
        if (x < 1 || y < 1 || x + 1 >= w || y + 1 >= h) continue;
        const double m = mag[static_cast<std::size_t>(y) * w + x];
        ws += m, wp += m * k;
      }
      if (ws <= 0.0) continue;
      const double pos = wp / ws;
      refined.emplace_back(scan_x ? pos : fixed, scan_x ? fixed : pos);
    }
    if (refined.size() < o.min_edge_pixels) continue;
    const Line line = fit_line(refined);
    if (line.rms > o.max_rms_residual) continue;
    const double a = std::atan2(std::abs(line.ty), std::abs(line.tx)) * 180.0 / std::numbers::pi;
    const double tilt = std::min(a, 90.0 - a);
    if (tilt < o.min_tilt_deg || tilt > o.max_tilt_deg) continue;

    double t_lo = std::numeric_limits<double>::infinity(), t_hi = -t_lo;
    for (const auto& [x, y] : refined) {
      const double t = (x - line.px) * line.tx + (y - line.py) * line.ty;
      t_lo = std::min(t_lo, t), t_hi = std::max(t_hi, t);
    }
    auto m = measure_one(p, line, t_lo, t_hi, o);
    if (!m) continue;
    double na = std::atan2(line.ny, line.nx) * 180.0 / std::numbers::pi;
    if (na < 0) na += 180.0;
    if (na >= 180.0) na -= 180.0;
    m->normal_angle_deg = na;
    m->tilt_deg = tilt;
    m->length = t_hi - t_lo;
    m->rms_residual = line.rms;
    out.push_back(*m);
  }
  return out;
}

SharpnessResult sharpness(const Image& img, const SharpnessOptions& options) {
  return sharpness(to_luma(img), options);
}

SharpnessResult sharpness(const Plane& luma, const SharpnessOptions& options) {
  const auto edges = measure_edges(luma, options);
  if (edges.empty()) throw Error(Errc::kNoEdgesFound, "no qualifying straight edges");
  std::array<std::vector<const EdgeMeasurement*>, 3> groups;  // horizontal, vertical, other
  for (const auto& e : edges) {
    const double off_x = std::min(e.normal_angle_deg, 180.0 - e.normal_angle_deg);  // normal vs x axis
    if (off_x <= 22.5) groups[1].push_back(&e);
    else if (std::abs(e.normal_angle_deg - 90.0) <= 22.5) groups[0].push_back(&e);
    else groups[2].push_back(&e);
  }
  auto summarise = [](const std::vector<const EdgeMeasurement*>& g) {
    DirectionSharpness d;
    d.edge_count = g.size();
    if (g.empty()) return d;
    std::vector<double> rer, fwhm, mtf;
    for (const auto* e : g) {
      rer.push_back(e->rer);
      fwhm.push_back(e->fwhm);
      mtf.push_back(e->mtf_nyquist);
      d.mtf_clipped |= e->mtf_clipped;
    }
    d.rer = median(rer);
    d.fwhm = median(fwhm);
    d.mtf_nyquist = median(mtf);
    return d;
  };
  return {summarise(groups[0]), summarise(groups[1]), summarise(groups[2])};
}

bool is_full_reference(const std::string& metric) { return metric == "psnr" || metric == "ssim"; }

std::vector<std::string> metric_outputs(const std::string& metric) {
  if (metric == "sharpness") {
    std::vector<std::string> out;
    for (const char* q : {"rer", "fwhm", "mtf_nyq"})
      for (const char* d : {"horizontal", "vertical", "other"}) out.push_back(std::string(q) + "_" + d);
    return out;
  }
  if (metric == "psnr" || metric == "ssim" || metric == "snr_hb" || metric == "snr_ha") return {metric};
  throw Error(Errc::kValidation, "unknown metric: " + metric);
}

namespace {

// Values of one image, in metric_outputs() order; nullopt entries are undefined.
std::vector<std::optional<double>> evaluate_image(const MetricSpec& m, const Image& img, const Image* ref) {
  const json& p = m.params.is_object() ? m.params : json::object();
  if (m.name == "psnr") return {psnr(*ref, img)};
  if (m.name == "ssim") return {ssim(*ref, img)};
  if (m.name == "snr_hb") {
    SnrHbOptions o;
    o.block = p.value("block", o.block);
    o.keep_fraction = p.value("keep_fraction", o.keep_fraction);
    return {snr_hb(img, o).value_linear};
  }
  if (m.name == "snr_ha") {
    SnrHaOptions o;
    o.min_area = p.value("min_area", o.min_area);
    o.sigma_tol = p.value("sigma_tol", o.sigma_tol);
    auto e = snr_ha(img, o);
    return {e ? std::optional<double>(e->value_linear) : std::nullopt};
  }
  if (m.name == "sharpness") {
    const auto r = sharpness(img);
    std::vector<std::optional<double>> out;
    for (auto field : {&DirectionSharpness::rer, &DirectionSharpness::fwhm, &DirectionSharpness::mtf_nyquist})
      for (const DirectionSharpness* d : {&r.horizontal, &r.vertical, &r.other}) out.push_back(d->*field);
    return out;
  }
  throw Error(Errc::kValidation, "unknown metric: " + m.name);
}

}  // namespace

json to_json(const MetricResult& r) {
  json per = json::object();
  for (const auto& [k, v] : r.per_image) per[k] = v ? number_to_json(*v) : json(nullptr);
  return {{"metric_name", r.metric_name},
          {"per_image", per},
          {"aggregate", number_to_json(r.aggregate)},
          {"count_defined", r.count_defined},
          {"warnings", r.warnings}};
}

MetricResult metric_result_from_json(const json& j) {
  MetricResult r;
  r.metric_name = j.at("metric_name").get<std::string>();
  for (const auto& [k, v] : j.at("per_image").items())
    r.per_image[k] = v.is_null() ? std::nullopt : std::optional<double>(number_from_json(v));
  r.aggregate = number_from_json(j.at("aggregate"));
  r.count_defined = j.at("count_defined").get<std::size_t>();
  if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

std::vector<MetricResult> apply_quality_metric(const DatasetHandle& ds, const MetricSpec& metric,
                                               const std::optional<DatasetHandle>& ref, std::size_t jobs) {
  const auto files = ds.image_files();
  if (files.empty()) throw Error(Errc::kEmptyDataset, "no images in " + ds.images_dir.string());
  std::optional<fs::path> ref_root;
  if (ref) ref_root = ref->images_dir;
  return evaluate_image_set(ds.images_dir, files, metric, ref_root, jobs);
}

std::vector<MetricResult> evaluate_image_set(const fs::path& root, const std::vector<fs::path>& files,
                                             const MetricSpec& metric, const std::optional<fs::path>& ref_root,
                                             std::size_t jobs) {
  const auto names = metric_outputs(metric.name);
  const bool fr = is_full_reference(metric.name);
  if (fr && !ref_root) throw Error(Errc::kMissingReference, metric.name + " needs a reference dataset");
  if (files.empty()) throw Error(Errc::kEmptyDataset, "no images under " + root.string());
  std::vector<fs::path> refs(files.size());
  if (fr) {
    for (std::size_t i = 0; i < files.size(); ++i) {
      if (fs::is_regular_file(*ref_root / files[i])) {
        refs[i] = *ref_root / files[i];
      } else if (fs::is_regular_file(*ref_root / files[i].filename())) {
        refs[i] = *ref_root / files[i].filename();
      } else {
        throw Error(Errc::kMissingReference, "reference lacks " + files[i].generic_string());
      }
    }
  }

  std::vector<std::vector<std::optional<double>>> values(files.size());
  std::vector<std::string> errors(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    try {
      const Image img = read_image(root / files[i]);
      std::optional<Image> r;
      if (fr) r = read_image(refs[i]);
      values[i] = evaluate_image(metric, img, r ? &*r : nullptr);
    } catch (const Error& e) {
      values[i].assign(names.size(), std::nullopt);
      errors[i] = files[i].generic_string() + ": " + e.what();
    }
  });

  std::vector<MetricResult> out;
  for (std::size_t k = 0; k < names.size(); ++k) {
    MetricResult r;
    r.metric_name = names[k];
    for (std::size_t i = 0; i < files.size(); ++i) r.per_image[files[i].generic_string()] = values[i][k];
    double sum = 0.0;
    // Summed in path order so the aggregate is independent of listing order.
    for (const auto& [path, v] : r.per_image) {
      if (!v || std::isnan(*v)) continue;
      sum += *v;
      ++r.count_defined;
    }
    r.aggregate = r.count_defined ? sum / static_cast<double>(r.count_defined) : std::numeric_limits<double>::quiet_NaN();
    for (const auto& e : errors)
      if (!e.empty()) r.warnings.push_back(e);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace iqh
