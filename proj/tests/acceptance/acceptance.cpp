// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "rig.hpp"
#include "scratch.hpp"
#include "uqih/cwssim.hpp"
#include "uqih/fid.hpp"
#include "uqih/preprocess.hpp"
#include "uqih/protocol.hpp"
#include "uqih/uq.hpp"

using namespace uqih;
namespace fs = std::filesystem;

namespace {

// Collects failed sub-checks of one criterion.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  bool ok() const { return failures_.empty(); }
  std::string summary() const {
    std::string s;
    for (std::size_t i = 0; i < failures_.size() && i < 5; ++i) s += (i ? "; " : "") + failures_[i];
    if (failures_.size() > 5) s += "; +" + std::to_string(failures_.size() - 5) + " more";
    return s;
  }

 private:
  std::vector<std::string> failures_;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

int failed = 0;

void criterion(const std::string& name, double limit_s, const std::function<void(Checks&)>& body) {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.expect(secs < limit_s, "runtime " + num(secs) + " s over " + num(limit_s) + " s");
  std::printf("%s %-24s %7.2f s (limit %g s)%s%s\n", c.ok() ? "PASS" : "FAIL", name.c_str(), secs, limit_s,
              c.ok() ? "" : "  ", c.summary().c_str());
  std::fflush(stdout);
  if (!c.ok()) ++failed;
}

fid::GaussianStats stats(Eigen::VectorXd mean, Eigen::MatrixXd cov) { return {std::move(mean), std::move(cov)}; }

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

void fid_suite(Checks& c) {
  const auto a = stats(Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity());
  const auto b = stats(Eigen::Vector2d(3, 4), Eigen::Matrix2d::Identity());
  c.expect(fid::frechet_distance(a, a) == 0.0, "identical stats not exactly 0");
  RngStream rng(101);
  const Eigen::MatrixXd spd = testing::random_spd(12, rng, 0.05);
  const auto full = stats(Eigen::VectorXd::Constant(12, 0.3), spd);
  c.expect(fid::frechet_distance(full, full) == 0.0, "identical full-rank stats not exactly 0");
  const double shift = fid::frechet_distance(a, b);
  c.expect(std::abs(shift - 25.0) <= 1e-9, "mean shift gave " + num(shift));
  const double one_d = fid::frechet_distance(stats(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0)),
                                             stats(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0)));
  c.expect(std::abs(one_d - 1.0) <= 1e-9, "1-D case gave " + num(one_d));

  for (int trial = 0; trial < 10; ++trial) {
    const int d = 4 + trial;
    Eigen::MatrixXd mix = Eigen::MatrixXd::Identity(d, d);
    for (int i = 0; i + 1 < d; ++i) mix(i, i + 1) = 0.3 * rng.normal();
    Eigen::MatrixXd x(500, d), y(500, d);
    for (int i = 0; i < 500; ++i) {
      for (int j = 0; j < d; ++j) {
        x(i, j) = rng.normal();
        y(i, j) = 0.2 + 1.3 * rng.normal();
      }
    }
    const fid::EmbeddingSet ex{x * mix, "toy-8x8"};
    const fid::EmbeddingSet ey{y, "toy-8x8"};
    const auto gx = fid::fit_gaussian(ex);
    const auto gy = fid::fit_gaussian(ey);
    const double value = fid::fid(ex, ey, nullptr);
    const double oracle = testing::fid_closed_form(gx.mean, gx.cov, gy.mean, gy.cov);
    c.expect(rel(value, oracle) < 1e-6, "cloud d=" + std::to_string(d) + " rel err " + num(rel(value, oracle)));
  }
}

void sqrtm_suite(Checks& c) {
  RngStream rng(202);
  double worst_res = 0, worst_ns = 0;
  for (int i = 0; i < 200; ++i) {
    const int d = 1 + i % 16;
    const Eigen::MatrixXd a = testing::random_spd(d, rng);
    const Eigen::MatrixXd s = fid::sqrtm_psd(a);
    worst_res = std::max(worst_res, (s * s - a).norm() / a.norm());
    worst_ns = std::max(worst_ns, (s - testing::newton_schulz_sqrt(a)).norm() / s.norm());
  }
  c.expect(worst_res < 1e-8, "worst residual " + num(worst_res));
  c.expect(worst_ns < 1e-6, "worst Newton-Schulz gap " + num(worst_ns));
}

void patch_suite(Checks& c) {
  const preprocess::PatchSpec spec;
  const Image full(spec.canvas, spec.canvas, 1, std::vector<double>(std::size_t(spec.canvas) * spec.canvas, 1.0));
  const auto patches = preprocess::parse_patches(full, spec, "full");
  c.expect(patches.size() == 81, std::to_string(patches.size()) + " patches");
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& p = patches[i];
    if (i % 9 != 8) {
      const auto& right = patches[i + 1];
      c.expect(p.col + spec.patch_size - right.col == 10 && right.row == p.row, "horizontal overlap at " + p.id());
    }
    if (i + 9 < patches.size()) {
      const auto& below = patches[i + 9];
      c.expect(p.row + spec.patch_size - below.row == 10 && below.col == p.col, "vertical overlap at " + p.id());
    }
    c.expect(p.image.width() == spec.patch_size && p.image.height() == spec.patch_size, "patch shape");
  }
  if (!patches.empty()) {
    c.expect(patches.back().row + spec.patch_size <= spec.canvas, "last patch outside canvas");
  }

  RngStream rng(303);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int bins = trial % 4 == 0 ? 256 : 2 + static_cast<int>(rng.uniform() * 62);
    const int modes = 1 + trial % 4;
    std::vector<double> v(64 * 64);
    for (auto& x : v) {
      const int m = static_cast<int>(rng.uniform() * modes);
      x = trial % 3 == 0 ? std::round(rng.uniform() * 20) / 20 : m + 0.2 * rng.normal();
    }
    const Image img(64, 64, 1, v);
    if (preprocess::otsu_threshold(img, bins).value != testing::otsu_exhaustive(img, bins)) ++mismatches;
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " Otsu mismatches");
}

Image mix(const Image& a, const Image& b, double w) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1 - w) * a.data()[i] + w * b.data()[i];
  return Image(a.width(), a.height(), 1, std::move(v));
}

void cwssim_suite(Checks& c) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Image x = testing::smooth_texture(256, seed);
    const double self = cwssim::cwssim(x, x);
    c.expect(std::abs(self - 1.0) <= 1e-9, "self score " + num(self));
    const Image y = roll(x, 0, 2);
    const double cw = cwssim::cwssim(x, y);
    const double ssim = testing::reference_ssim(cwssim::quantize_u8(x), cwssim::quantize_u8(y));
    c.expect(cw > ssim, "shift: cwssim " + num(cw) + " <= ssim " + num(ssim));
    c.expect(cw > 0.9, "shift: cwssim " + num(cw));

    const Image noise = testing::smooth_texture(256, seed + 50, 1.0);
    double prev = self;
    for (double w : {0.1, 0.3, 0.6}) {
      const double s = cwssim::cwssim(x, mix(x, noise, w));
      c.expect(s < prev, "noise mix " + num(w) + " not decreasing");
      prev = s;
    }
  }
}

void uq_suite(Checks& c) {
  const Image t = testing::smooth_texture(32, 9);
  const uq::SampleStack same{"a", {t, t, t, t}, uq::StackKind::McDropout, {}};
  uq::UncertaintyRecord rec{"a", uq::pixelwise_std(same), 0};
  rec.psd = uq::psd(rec.sigma_map);
  c.expect(uq::mpsd({rec, rec}) == 0.0, "identical stacks give nonzero mPSD");

  const uq::SampleStack two{"b", {Image::zeros(8, 8), Image(8, 8, 1, std::vector<double>(64, 2.0))}, uq::StackKind::McDropout, {}};
  c.expect(uq::psd(uq::pixelwise_std(two)) == 1.0, "{0,2} stack PSD != 1");

  RngStream rng(404);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 2 + trial % 9;
    uq::SampleStack s{"c", {}, uq::StackKind::McDropout, {}};
    std::vector<std::vector<double>> raw;
    for (int k = 0; k < m; ++k) {
      std::vector<double> v(24 * 20);
      for (auto& x : v) x = 100 * rng.normal() + 50;
      raw.push_back(v);
      s.samples.emplace_back(24, 20, 1, v);
    }
    const Image sigma = uq::pixelwise_std(s);
    const auto oracle = testing::naive_pixel_std(raw);
    for (std::size_t i = 0; i < oracle.size(); ++i) worst = std::max(worst, std::abs(sigma.data()[i] - oracle[i]));
  }
  c.expect(worst < 1e-10, "pixelwise std max error " + num(worst));

  for (std::uint64_t seed : {11u, 12u}) {
    const Image fixed = testing::smooth_texture(64, seed);
    for (int dy = -5; dy <= 5; ++dy) {
      for (int dx = -5; dx <= 5; ++dx) {
        const auto got = uq::register_translation(roll(fixed, dy, dx), fixed).value;
        c.expect(got == uq::Shift{-dy, -dx},
                 "shift (" + std::to_string(dy) + "," + std::to_string(dx) + ") seed " + std::to_string(seed));
      }
    }
  }
}

void rig_suite(Checks& c) {
  testing::ScratchDir dir("acceptance_rig");
  const testing::RigSpec spec;
  const fs::path sweep = testing::write_rig(dir.path(), spec);
  std::vector<Image> target;
  for (const auto& e : read_image_manifest(dir / "target/manifest.json")) {
    target.push_back(normalize_minmax(load_image(e.path)).value);
  }
  const fid::ToyEmbedder toy;
  std::vector<protocol::LevelResult> levels;
  for (std::size_t i = 0; i < spec.levels.size(); ++i) {
    levels.push_back(protocol::collect_level(dir / ("level" + std::to_string(i)) / "stacks.json", spec.levels[i],
                                             target, toy, {}));
  }
  const auto curve = protocol::build_curve(levels);
  std::string fids, mpsds;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    fids += (i ? "," : "") + num(curve.points[i].fid);
    mpsds += (i ? "," : "") + num(curve.points[i].mpsd);
    if (i > 0) {
      c.expect(curve.points[i].fid > curve.points[i - 1].fid, "FID not increasing: " + fids);
      c.expect(curve.points[i].mpsd > curve.points[i - 1].mpsd, "mPSD not increasing: " + mpsds);
    }
  }
  auto value = [&](const std::optional<double>& v, const char* key) {
    c.expect(v.has_value(), std::string(key) + " undefined");
    return v.value_or(std::nan(""));
  };
  const double sfn = value(curve.spearman_fid_noise, "spearman_fid_noise");
  const double sfm = value(curve.spearman_fid_mpsd, "spearman_fid_mpsd");
  const double pfm = value(curve.pearson_fid_mpsd, "pearson_fid_mpsd");
  c.expect(sfn == 1.0, "spearman_fid_noise " + num(sfn));
  c.expect(sfm >= 0.9, "spearman_fid_mpsd " + num(sfm));
  c.expect(pfm >= 0.8, "pearson_fid_mpsd " + num(pfm));
  std::printf("     rig fid  = [%s]\n     rig mpsd = [%s]\n     pearson_fid_mpsd = %s\n", fids.c_str(),
              mpsds.c_str(), num(pfm).c_str());
}

int uqih(const std::string& args) {
  const std::string cmd = "'" + std::string(UQIH_CLI_PATH) + "' --log-level off " + args + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism_suite(Checks& c) {
  testing::ScratchDir dir("acceptance_det");
  const fs::path sweep = testing::write_rig(dir / "rig");
  const std::string config = " calibrate --config '" + sweep.string() + "'";
  c.expect(uqih("--seed 7 --threads 8 --out '" + (dir / "a").string() + "'" + config) == 0, "first run failed");
  c.expect(uqih("--seed 7 --threads 8 --out '" + (dir / "b").string() + "'" + config) == 0, "rerun failed");
  c.expect(uqih("--seed 7 --threads 1 --out '" + (dir / "c").string() + "'" + config) == 0, "single-thread run failed");
  for (const char* f : {"curve.json", "curve.csv", "fid_vs_noise.svg", "fid_vs_mpsd.svg"}) {
    const std::string a = read_file(dir / "a" / f);
    c.expect(!a.empty(), std::string(f) + " empty");
    c.expect(a == read_file(dir / "b" / f), std::string(f) + " differs on rerun");
    c.expect(a == read_file(dir / "c" / f), std::string(f) + " differs between 1 and 8 threads");
  }
}

}  // namespace

int main() {
  criterion("fid-analytic", 5, fid_suite);
  criterion("sqrtm-oracle", 10, sqrtm_suite);
  criterion("patch-geometry-otsu", 10, patch_suite);
  criterion("cwssim", 30, cwssim_suite);
  criterion("uq-closed-forms", 20, uq_suite);
  criterion("calibration-rig", 120, rig_suite);
  criterion("determinism", 600, determinism_suite);
  std::printf("%s: %d criteria failed\n", failed ? "FAIL" : "PASS", failed);
  return failed ? 1 : 0;
}
