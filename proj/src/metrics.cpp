#include "csrvolsr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <tuple>

#include "csrvolsr/error.hpp"
#include "csrvolsr/resample.hpp"
#include "csrvolsr/superres_engine.hpp"
#include "csrvolsr/volume_io.hpp"

namespace csrvolsr {

double Psnr::value() const { return identical ? std::numeric_limits<double>::infinity() : db; }

Psnr psnr(std::span<const float> pred, std::span<const float> gt, double peak, std::span<const std::uint8_t> mask) {
  if (pred.size() != gt.size()) throw Error(ErrorKind::ShapeMismatch, "psnr: sizes differ");
  if (!mask.empty() && mask.size() != gt.size()) throw Error(ErrorKind::ShapeMismatch, "psnr: mask size differs");
  if (!(peak > 0.0)) throw Error(ErrorKind::PreconditionViolated, "psnr: peak must be positive");
  double sse = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    sse += d * d;
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::NoForeground, "psnr: empty mask");
  if (sse == 0.0) return {0.0, true};
  return {10.0 * std::log10(peak * peak / (sse / static_cast<double>(n))), false};
}

Psnr psnr(const Volume& pred, const Volume& gt, double peak) {
  if (pred.shape != gt.shape) throw Error(ErrorKind::ShapeMismatch, "psnr: " + to_string(pred.shape) + " vs " + to_string(gt.shape));
  return psnr(pred.data, gt.data, peak);
}

std::vector<double> gaussian_window(int window, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(window));
  const double c = 0.5 * (window - 1);
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - c;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

namespace {

/// Valid separable filtering of a C-order field with the same 1D kernel on
/// every axis.
std::vector<double> filter_valid(const std::vector<double>& f, Shape3 s, const std::vector<double>& g) {
  const int w = static_cast<int>(g.size());
  // along z
  Shape3 s1{s.x, s.y, s.z - w + 1};
  std::vector<double> a(s1.voxels());
  for (int i = 0; i < s.x; ++i)
    for (int j = 0; j < s.y; ++j)
      for (int k = 0; k < s1.z; ++k) {
        double acc = 0.0;
        const double* src = &f[s.index(i, j, k)];
        for (int t = 0; t < w; ++t) acc += g[static_cast<std::size_t>(t)] * src[t];
        a[s1.index(i, j, k)] = acc;
      }
  // along y
  Shape3 s2{s.x, s.y - w + 1, s1.z};
  std::vector<double> b(s2.voxels());
  for (int i = 0; i < s2.x; ++i)
    for (int j = 0; j < s2.y; ++j)
      for (int k = 0; k < s2.z; ++k) {
        double acc = 0.0;
        for (int t = 0; t < w; ++t) acc += g[static_cast<std::size_t>(t)] * a[s1.index(i, j + t, k)];
        b[s2.index(i, j, k)] = acc;
      }
  // along x
  Shape3 s3{s.x - w + 1, s2.y, s2.z};
  std::vector<double> c(s3.voxels());
  for (int i = 0; i < s3.x; ++i)
    for (int j = 0; j < s3.y; ++j)
      for (int k = 0; k < s3.z; ++k) {
        double acc = 0.0;
        for (int t = 0; t < w; ++t) acc += g[static_cast<std::size_t>(t)] * b[s2.index(i + t, j, k)];
        c[s3.index(i, j, k)] = acc;
      }
  return c;
}

}  // namespace

double ssim3d(std::span<const float> pred, std::span<const float> gt, Shape3 shape, const SsimOptions& opt,
              std::span<const std::uint8_t> mask) {
  if (pred.size() != gt.size() || gt.size() != shape.voxels()) throw Error(ErrorKind::ShapeMismatch, "ssim3d: sizes differ");
  if (!mask.empty() && mask.size() != gt.size()) throw Error(ErrorKind::ShapeMismatch, "ssim3d: mask size differs");
  const int w = opt.window;
  if (w < 1 || shape.x < w || shape.y < w || shape.z < w)
    throw Error(ErrorKind::VolumeTooSmall, "ssim3d: volume " + to_string(shape) + " smaller than the window");

  const auto g = gaussian_window(w, opt.sigma);
  const std::size_t n = shape.voxels();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = pred[i];
    y[i] = gt[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, shape, g);
  const auto my = filter_valid(y, shape, g);
  const auto mxx = filter_valid(xx, shape, g);
  const auto myy = filter_valid(yy, shape, g);
  const auto mxy = filter_valid(xy, shape, g);

  const double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
  const double c2 = (opt.k2 * opt.peak) * (opt.k2 * opt.peak);
  const Shape3 v{shape.x - w + 1, shape.y - w + 1, shape.z - w + 1};
  const int h = w / 2;
  double sum = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < v.x; ++i)
    for (int j = 0; j < v.y; ++j)
      for (int k = 0; k < v.z; ++k) {
        if (!mask.empty() && !mask[shape.index(i + h, j + h, k + h)]) continue;
        const std::size_t p = v.index(i, j, k);
        const double sx = mxx[p] - mx[p] * mx[p];
        const double sy = myy[p] - my[p] * my[p];
        const double sxy = mxy[p] - mx[p] * my[p];
        const double num = (2.0 * (mx[p] * my[p]) + c1) * (2.0 * sxy + c2);
        const double den = (mx[p] * mx[p] + my[p] * my[p] + c1) * (sx + sy + c2);
        sum += num / den;
        ++count;
      }
  if (count == 0) throw Error(ErrorKind::NoForeground, "ssim3d: no window centre inside the mask");
  return sum / static_cast<double>(count);
}

double ssim3d(const Volume& pred, const Volume& gt, const SsimOptions& opt) {
  if (pred.shape != gt.shape) throw Error(ErrorKind::ShapeMismatch, "ssim3d: " + to_string(pred.shape) + " vs " + to_string(gt.shape));
  return ssim3d(pred.data, gt.data, gt.shape, opt);
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

const MetricCell& MetricsReport::cell(const std::string& method, double scale) const {
  for (const auto& c : cells)
    if (c.method == method && c.scale == scale) return c;
  throw Error(ErrorKind::PreconditionViolated, "no report cell for " + method);
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string MetricsReport::csv() const {
  std::string out = "method,scale,psnr_mean,psnr_std,ssim_mean,ssim_std,n\n";
  for (const auto& c : cells) {
    out += c.method + "," + fmt("%g", c.scale) + ",";
    out += c.psnr_identical ? std::string("INF,INF") : fmt("%.6f", c.psnr_mean) + "," + fmt("%.6f", c.psnr_std);
    out += "," + fmt("%.6f", c.ssim_mean) + "," + fmt("%.6f", c.ssim_std) + "," + std::to_string(c.n) + "\n";
  }
  return out;
}

std::string MetricsReport::table() const {
  const int col = 24;
  auto pad = [](std::string s, int n) {
    if (static_cast<int>(s.size()) < n) s.resize(static_cast<std::size_t>(n), ' ');
    return s;
  };
  std::string out = pad("Method", 10);
  for (double s : scales) out += " | " + pad(fmt("%gx", s), col);
  out += "\n" + std::string(10, '-');
  for (std::size_t i = 0; i < scales.size(); ++i) out += "-+-" + std::string(col, '-');
  out += "\n";
  for (const char* method : {kBaselineMethod, kModelMethod}) {
    out += pad(method, 10);
    for (double s : scales) {
      const auto& c = cell(method, s);
      const std::string p = c.psnr_identical ? "INF" : fmt("%.2f", c.psnr_mean) + "±" + fmt("%.2f", c.psnr_std);
      // "±" is two bytes in UTF-8; widen the pad so columns line up.
      out += " | " + pad(p + " / " + fmt("%.4f", c.ssim_mean), col + (c.psnr_identical ? 0 : 1));
    }
    out += "\n";
  }
  return out;
}

MetricsReport evaluate(const Model<float>& model, const std::vector<MultiChannelVolume>& subjects,
                       const EvalOptions& opt) {
  if (subjects.empty()) throw Error(ErrorKind::EmptySplit, "no test subjects to evaluate");
  if (opt.scales.empty()) throw Error(ErrorKind::PreconditionViolated, "no evaluation scales");
  MetricsReport report;
  report.scales = opt.scales;
  SsimOptions so;
  so.peak = opt.peak;

  std::vector<MetricCell> base_cells, model_cells;
  for (double s : opt.scales) {
    if (!(s > 1.0)) throw Error(ErrorKind::InvalidScale, "evaluation scale must exceed 1");
    std::vector<double> bp, bs, mp, ms;
    bool b_inf = false, m_inf = false;
    for (const auto& subj : subjects) {
      Shape3 lr_shape, hr_shape;
      std::array<int, 3> origin{};
      for (int a = 0; a < 3; ++a) {
        lr_shape[a] = static_cast<int>(std::floor(subj.shape[a] / s));
        if (lr_shape[a] < 1) throw Error(ErrorKind::VolumeTooSmall, "subject too small for scale " + fmt("%g", s));
        hr_shape[a] = scaled_extent(lr_shape[a], s);
        origin[a] = (subj.shape[a] - hr_shape[a]) / 2;
      }
      SRRequest req;
      req.lr = MultiChannelVolume(lr_shape, subj.spacing_mm);
      req.scale = s;
      req.tile_size = opt.tile_size;
      req.tile_overlap = opt.tile_overlap;
      req.query_chunk = opt.query_chunk;
      std::vector<float> hr;
      for (int c = 0; c < 2; ++c) {
        auto crop_c = crop(subj.channel(c), subj.shape, origin, hr_shape);
        const auto lr_c = resample_tricubic(crop_c, hr_shape, lr_shape);
        std::copy(lr_c.begin(), lr_c.end(), req.lr.channel(c).begin());
        if (c == 0) hr = std::move(crop_c);
      }
      std::vector<std::uint8_t> mask;
      if (opt.mask) {
        mask.resize(hr.size());
        for (std::size_t i = 0; i < hr.size(); ++i) mask[i] = hr[i] > 0.0f;
      }
      Volume lr_dwi(lr_shape, subj.spacing_mm, Modality::normalized_dwi, Normalization::b0_ratio);
      std::copy(req.lr.channel(0).begin(), req.lr.channel(0).end(), lr_dwi.data.begin());
      const Volume base = baseline_resample(lr_dwi, hr_shape);
      const Volume sr = super_resolve(req, model);

      const Psnr pb = psnr(base.data, hr, opt.peak, mask);
      const Psnr pm = psnr(sr.data, hr, opt.peak, mask);
      b_inf |= pb.identical;
      m_inf |= pm.identical;
      bp.push_back(pb.db);
      mp.push_back(pm.db);
      bs.push_back(ssim3d(base.data, hr, hr_shape, so, mask));
      ms.push_back(ssim3d(sr.data, hr, hr_shape, so, mask));
    }
    auto make = [&](const char* method, const std::vector<double>& p, const std::vector<double>& q, bool inf) {
      MetricCell c;
      c.method = method;
      c.scale = s;
      std::tie(c.psnr_mean, c.psnr_std) = mean_std(p);
      std::tie(c.ssim_mean, c.ssim_std) = mean_std(q);
      c.psnr_identical = inf;
      c.n = static_cast<int>(p.size());
      return c;
    };
    base_cells.push_back(make(kBaselineMethod, bp, bs, b_inf));
    model_cells.push_back(make(kModelMethod, mp, ms, m_inf));
  }
  report.cells = base_cells;
  report.cells.insert(report.cells.end(), model_cells.begin(), model_cells.end());
  return report;
}

MetricsReport evaluate(const Model<float>& model, const DatasetManifest& manifest, const EvalOptions& opt) {
  const auto test = manifest.subset(Split::test);
  if (test.empty()) throw Error(ErrorKind::EmptySplit, "manifest has no test subjects");
  std::vector<MultiChannelVolume> subjects;
  for (const auto& e : test) subjects.push_back(load_subject(e.dwi_path, e.t1_path));
  return evaluate(model, subjects, opt);
}

}  // namespace csrvolsr
