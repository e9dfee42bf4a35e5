#include "gfn/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gfn/runtime.hpp"
#include "json.hpp"

namespace gfn {
namespace {

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow);
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - (kSsimWindow - 1) / 2.0;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable valid-mode filtering of an h x w image.
std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& k) {
  const std::int64_t n = static_cast<std::int64_t>(k.size());
  const std::int64_t ow = w - n + 1;
  const std::int64_t oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y * w + x + i)];
      tmp[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((y + i) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  return out;
}

template <typename T>
std::vector<double> grayscale(const Tensor<T>& t, std::int64_t n) {
  const Shape& s = t.shape();
  std::vector<double> g(static_cast<std::size_t>(s.plane()), 0.0);
  for (std::int64_t c = 0; c < s.c; ++c) {
    const T* p = t.plane(n, c);
    for (std::int64_t i = 0; i < s.plane(); ++i) g[static_cast<std::size_t>(i)] += static_cast<double>(p[i]);
  }
  for (double& v : g) v /= static_cast<double>(s.c);
  return g;
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, std::int64_t h, std::int64_t w) {
  static const std::vector<double> k = gaussian_window();
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, k);
  const auto mu_b = filter_valid(b, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k);
  const auto e_bb = filter_valid(bb, h, w, k);
  const auto e_ab = filter_valid(ab, h, w, k);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    sum += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
           ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

Tensor<float> clamped(Tensor<float> t) {
  for (float& v : t.data()) v = std::clamp(v, 0.0f, 1.0f);
  return t;
}

}  // namespace

template <typename T>
Psnr psnr(const Tensor<T>& a, const Tensor<T>& b, double peak) {
  if (!(a.shape() == b.shape())) throw ShapeError("psnr: shape " + a.shape().str() + " != " + b.shape().str());
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  if (a.size() == 0) throw ShapeError("psnr: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {10.0 * std::log10(peak * peak / mse), false};
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& s = a.shape();
  if (!(s == b.shape())) throw ShapeError("ssim: shape " + s.str() + " != " + b.shape().str());
  if (s.h < kSsimWindow) throw ShapeError("ssim: height " + std::to_string(s.h) + " is smaller than the 11x11 window");
  if (s.w < kSsimWindow) throw ShapeError("ssim: width " + std::to_string(s.w) + " is smaller than the 11x11 window");
  if (s.n < 1 || s.c < 1) throw ShapeError("ssim: empty batch or channel axis");
  double total = 0.0;
  for (std::int64_t n = 0; n < s.n; ++n) total += ssim_plane(grayscale(a, n), grayscale(b, n), s.h, s.w);
  return total / static_cast<double>(s.n);
}

template Psnr psnr(const Tensor<float>&, const Tensor<float>&, double);
template Psnr psnr(const Tensor<double>&, const Tensor<double>&, double);
template double ssim(const Tensor<float>&, const Tensor<float>&);
template double ssim(const Tensor<double>&, const Tensor<double>&);

BenchResult bench_inference(const ParamSet<float>& params, const ModelConfig& cfg, const Tensor<float>& input,
                            int repeats, int warmup) {
  if (repeats < kMinRepeats) {
    throw ConfigError("bench_inference needs at least " + std::to_string(kMinRepeats) + " repeats, got " +
                      std::to_string(repeats));
  }
  for (int i = 0; i < warmup; ++i) predict(params, cfg, input);
  BenchResult r;
  r.threads = threads();
  r.width = cfg.width;
  r.input = input.shape();
  const double per = 1.0 / static_cast<double>(std::max<std::int64_t>(1, input.shape().n));
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    predict(params, cfg, input);
    const auto t1 = std::chrono::steady_clock::now();
    r.samples.push_back(std::chrono::duration<double>(t1 - t0).count() * per);
  }
  std::vector<double> sorted = r.samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size() / 2;
  r.median_seconds = sorted.size() % 2 == 1 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  return r;
}

Environment describe_environment(int width) {
  Environment e;
  e.threads = threads();
  e.width = width;
#if defined(__clang__)
  e.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  e.compiler = "gcc " __VERSION__;
#else
  e.compiler = "unknown";
#endif
  e.metric_note =
      "PSNR over all RGB channels, peak 1; SSIM on channel-mean grayscale, 11x11 Gaussian sigma 1.5, "
      "K1 0.01, K2 0.03, valid windows; no border exclusion; outputs clamped to [0,1]";
  return e;
}

std::string EvalReport::to_tsv(bool with_timing) const {
  std::ostringstream os;
  os << "# threads=" << env.threads << "\twidth=" << env.width << "\tcompiler=" << env.compiler << '\n';
  os << "# metrics: " << env.metric_note << '\n';
  os << "variant\tparams\tpsnr_db\tinfinite_psnr\tssim";
  if (with_timing) os << "\tseconds";
  os << "\tdeblur_loss\tdeblur_module\tdual_branch\tfeature_level\tgate\tsr_first\n";
  for (const EvalRow& r : rows) {
    os << r.variant << '\t' << r.params << '\t' << num(r.psnr) << '\t' << r.infinite_psnr << '\t' << num(r.ssim);
    if (with_timing) os << '\t' << num(r.seconds);
    const VariantTraits& t = r.traits;
    os << '\t' << t.deblur_loss << '\t' << t.deblur_module << '\t' << t.dual_branch << '\t' << t.feature_level << '\t'
       << t.gate << '\t' << t.sr_first << '\n';
  }
  for (const auto& e : errors) os << "# error: " << e << '\n';
  return os.str();
}

std::string EvalReport::to_json(bool with_timing) const {
  nlohmann::ordered_json j;
  j["environment"] = {{"threads", env.threads}, {"width", env.width}, {"compiler", env.compiler},
                      {"metrics", env.metric_note}};
  j["rows"] = nlohmann::ordered_json::array();
  for (const EvalRow& r : rows) {
    nlohmann::ordered_json row;
    row["variant"] = r.variant;
    row["params"] = r.params;
    if (std::isfinite(r.psnr)) {
      row["psnr_db"] = r.psnr;
    } else {
      row["psnr_db"] = nullptr;
    }
    row["infinite_psnr"] = r.infinite_psnr;
    row["ssim"] = r.ssim;
    if (with_timing) row["seconds"] = r.seconds;
    const VariantTraits& t = r.traits;
    row["traits"] = {{"deblur_loss", t.deblur_loss}, {"deblur_module", t.deblur_module},
                     {"dual_branch", t.dual_branch}, {"feature_level", t.feature_level},
                     {"gate", t.gate},               {"sr_first", t.sr_first}};
    j["rows"].push_back(row);
  }
  j["errors"] = errors;
  return j.dump(2) + "\n";
}

std::string EvalReport::psnr_vs_time_tsv() const {
  std::ostringstream os;
  os << "variant\tseconds\tpsnr_db\n";
  for (const EvalRow& r : rows) os << r.variant << '\t' << num(r.seconds) << '\t' << num(r.psnr) << '\n';
  return os.str();
}

std::string EvalReport::psnr_vs_params_tsv() const {
  std::ostringstream os;
  os << "variant\tparams\tpsnr_db\n";
  for (const EvalRow& r : rows) os << r.variant << '\t' << r.params << '\t' << num(r.psnr) << '\n';
  return os.str();
}

void EvalReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, std::string> files[] = {{"report.tsv", to_tsv()},
                                                       {"report.json", to_json()},
                                                       {"psnr_vs_time.tsv", psnr_vs_time_tsv()},
                                                       {"psnr_vs_params.tsv", psnr_vs_params_tsv()}};
  for (const auto& [name, text] : files) {
    std::ofstream f(dir / name, std::ios::trunc);
    if (!f) throw DataError("cannot write " + (dir / name).string());
    f << text;
  }
}

QualityScores score_pairs(std::span<const Tensor<float>> pred, std::span<const Tensor<float>> ref) {
  if (pred.size() != ref.size()) throw ShapeError("score_pairs: prediction and reference counts differ");
  if (pred.empty()) throw DataError("score_pairs: nothing to score");
  QualityScores q;
  double psnr_sum = 0.0;
  int finite = 0;
  double ssim_sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Psnr p = psnr(pred[i], ref[i]);
    if (p.infinite) {
      ++q.infinite;
    } else {
      psnr_sum += p.db;
      ++finite;
    }
    ssim_sum += ssim(pred[i], ref[i]);
  }
  q.psnr = finite > 0 ? psnr_sum / finite : std::numeric_limits<double>::infinity();
  q.ssim = ssim_sum / static_cast<double>(pred.size());
  return q;
}

QualityScores evaluate_quality(const ParamSet<float>& params, const ModelConfig& cfg, std::span<const Triplet> data) {
  std::vector<Tensor<float>> pred, ref;
  for (const Triplet& t : data) {
    pred.push_back(clamped(predict(params, cfg, t.lblur).hr));
    ref.push_back(t.h);
  }
  return score_pairs(pred, ref);
}

EvalReport run_ablation(std::span<const Triplet> train_set, std::span<const Triplet> val_set, const AblationConfig& cfg,
                        const std::function<void(const std::string&)>& progress) {
  if (val_set.empty()) throw DataError("ablation needs a non-empty validation set");
  EvalReport report;
  report.env = describe_environment(cfg.width);
  for (Variant v : cfg.variants) {
    const std::string name(variant_name(v));
    try {
      ModelConfig model;
      model.width = cfg.width;
      model.variant = v;
      TrainSession session = TrainSession::start(model, cfg.train);
      RunOptions opts;
      std::ofstream log;
      if (!cfg.work_dir.empty()) {
        const auto dir = cfg.work_dir / name;
        std::filesystem::create_directories(dir);
        log.open(dir / "train_log.tsv", std::ios::trunc);
        opts.log = &log;
        opts.checkpoint_dir = dir / "checkpoint";
      }
      if (progress) progress("training " + name);
      train(session, train_set, opts);
      const QualityScores q = evaluate_quality(session.params, model, val_set);
      const BenchResult bench = bench_inference(session.params, model, val_set.front().lblur, cfg.bench_repeats);
      EvalRow row;
      row.variant = name;
      row.params = session.params.count();
      row.psnr = q.psnr;
      row.infinite_psnr = q.infinite;
      row.ssim = q.ssim;
      row.seconds = bench.median_seconds;
      row.traits = traits(v);
      report.rows.push_back(row);
      if (progress) {
        progress(name + ": psnr " + num(q.psnr) + " dB, ssim " + num(q.ssim) + ", " + num(bench.median_seconds) +
                 " s/image");
      }
    } catch (const std::exception& e) {
      report.errors.push_back(name + ": " + e.what());
      break;
    }
  }
  return report;
}

}  // namespace gfn
