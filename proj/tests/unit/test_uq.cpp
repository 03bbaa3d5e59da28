#include "doctest.h"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "scratch.hpp"
#include "uqih/io.hpp"
#include "uqih/uq.hpp"

using namespace uqih;
using namespace uqih::uq;
using uqih::testing::ScratchDir;

namespace {

Image constant(int w, int h, double v) { return Image(w, h, 1, std::vector<double>(static_cast<std::size_t>(w) * h, v)); }

SampleStack random_stack(int m, int w, int h, std::uint64_t seed, double sigma = 1.0) {
  RngStream rng(seed);
  SampleStack s{"s", {}, StackKind::McDropout, {}};
  for (int k = 0; k < m; ++k) {
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (auto& x : v) x = 3.0 + sigma * rng.normal();
    s.samples.emplace_back(w, h, 1, std::move(v));
  }
  return s;
}

std::vector<std::vector<double>> raw(const SampleStack& s) {
  std::vector<std::vector<double>> out;
  for (const auto& img : s.samples) out.emplace_back(img.data().begin(), img.data().end());
  return out;
}

// Writes a stack manifest whose stacks are given in memory.
void write_fixture(const std::filesystem::path& dir, const std::vector<SampleStack>& stacks, StackKind kind,
                   const std::vector<Image>* sources = nullptr) {
  StackManifest m{kind, {}};
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    StackEntry e{stacks[i].source_id, {}, {}, stacks[i].model_ids};
    if (sources) {
      e.source_path = dir / ("src_" + std::to_string(i) + ".raw");
      save_raw((*sources)[i], e.source_path);
    }
    for (std::size_t k = 0; k < stacks[i].samples.size(); ++k) {
      const auto p = dir / ("s" + std::to_string(i) + "_" + std::to_string(k) + ".raw");
      save_raw(stacks[i].samples[k], p);
      e.sample_paths.push_back(p);
    }
    m.stacks.push_back(e);
  }
  write_stack_manifest(m, dir / "stacks.json");
}

}  // namespace

TEST_CASE("SampleStack validation") {
  SampleStack one{"a", {constant(2, 2, 0)}, StackKind::McDropout, {}};
  CHECK_THROWS_AS(one.validate(), InvalidArgument);
  SampleStack shapes{"a", {constant(2, 2, 0), constant(3, 2, 0)}, StackKind::McDropout, {}};
  CHECK_THROWS_AS(shapes.validate(), InvalidArgument);
  SampleStack ens{"a", {constant(2, 2, 0), constant(2, 2, 1)}, StackKind::Ensemble, {"m1"}};
  CHECK_THROWS_AS(ens.validate(), InvalidArgument);
  ens.model_ids = {"m1", "m1"};
  CHECK_THROWS_AS(ens.validate(), InvalidArgument);
  ens.model_ids = {"m1", "m2"};
  CHECK_NOTHROW(ens.validate());
  CHECK(parse_stack_kind("ENSEMBLE") == StackKind::Ensemble);
  CHECK(to_string(StackKind::McDropout) == "MC_DROPOUT");
}

TEST_CASE("pixelwise_std closed forms") {
  SampleStack same{"a", {constant(4, 4, 0.3), constant(4, 4, 0.3), constant(4, 4, 0.3)}, StackKind::McDropout, {}};
  CHECK(pixelwise_std(same).max() == 0.0);
  SampleStack pair{"a", {constant(4, 4, 0), constant(4, 4, 2)}, StackKind::McDropout, {}};
  const Image sigma = pixelwise_std(pair);
  CHECK(sigma.min() == 1.0);
  CHECK(sigma.max() == 1.0);
  CHECK(psd(sigma) == 1.0);
}

TEST_CASE("pixelwise_std matches the naive loop") {
  const SampleStack s = random_stack(25, 17, 13, 3);
  const Image sigma = pixelwise_std(s);
  const auto oracle = testing::naive_pixel_std(raw(s));
  for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(std::abs(sigma.data()[i] - oracle[i]) < 1e-10);
}

TEST_CASE("pixelwise_std properties") {
  SampleStack s = random_stack(6, 12, 12, 9);
  const Image base = pixelwise_std(s);

  SampleStack perm = s;
  std::reverse(perm.samples.begin(), perm.samples.end());
  std::swap(perm.samples[1], perm.samples[4]);
  const Image p = pixelwise_std(perm);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(p.data()[i] == doctest::Approx(base.data()[i]).epsilon(1e-13));

  SampleStack shifted = s;
  for (auto& img : shifted.samples) {
    for (double& v : img.mutable_data()) v += 1000.0;
  }
  const Image sh = pixelwise_std(shifted);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(sh.data()[i] - base.data()[i]) < 1e-10);

  SampleStack scaled = s;
  for (auto& img : scaled.samples) {
    for (double& v : img.mutable_data()) v *= 4.0;
  }
  CHECK(psd(pixelwise_std(scaled)) == doctest::Approx(4.0 * psd(base)).epsilon(1e-14));

  SampleStack rgb{"c", {}, StackKind::McDropout, {}};
  for (const auto& img : s.samples) {
    std::vector<double> v;
    for (double x : img.data()) v.insert(v.end(), {x - 0.1, x, x + 0.1});
    rgb.samples.emplace_back(12, 12, 3, v);
  }
  const Image g = pixelwise_std(rgb);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(g.data()[i] - base.data()[i]) < 1e-12);
}

TEST_CASE("psd and mpsd") {
  CHECK(psd(constant(3, 3, 1.0)) == 1.0);
  CHECK(psd(Image(2, 1, 1, {0, 2})) == 1.0);
  CHECK(psd(constant(3, 3, 0.0)) == 0.0);
  CHECK(mpsd({{"a", {}, 0.5}}) == 0.5);
  CHECK(mpsd({{"a", {}, 0.0}, {"b", {}, 1.0}}) == 0.5);
  std::vector<UncertaintyRecord> many(3500, UncertaintyRecord{"x", {}, 0.37});
  CHECK(mpsd(many) == doctest::Approx(0.37).epsilon(1e-12));
  CHECK_THROWS_AS(mpsd({}), InvalidArgument);
}

TEST_CASE("register_translation") {
  const Image fixed = testing::smooth_texture(64, 14);
  CHECK(register_translation(fixed, fixed).value == Shift{0, 0});
  const Image moving = roll(fixed, 3, -2);
  CHECK(register_translation(moving, fixed).value == Shift{-3, 2});
  for (int dy = -5; dy <= 5; ++dy) {
    for (int dx = -5; dx <= 5; ++dx) {
      CHECK(register_translation(roll(fixed, dy, dx), fixed, 10).value == Shift{-dy, -dx});
    }
  }
  const auto flat = register_translation(constant(16, 16, 2), constant(16, 16, 2));
  CHECK(flat.value == Shift{0, 0});
  CHECK(flat.warned());
  CHECK_THROWS_AS(register_translation(fixed, testing::smooth_texture(32, 1)), InvalidArgument);
  // Outside the search window the true peak cannot be reported.
  CHECK_FALSE(register_translation(roll(fixed, 8, 0), fixed, 4).value == Shift{-8, 0});
}

TEST_CASE("align_stack") {
  const Image ref = testing::smooth_texture(256, 5);
  SampleStack copies{"a", {ref, ref, ref}, StackKind::McDropout, {}};
  const SampleStack out = align_stack(copies, ref);
  for (const auto& s : out.samples) {
    CHECK(s.width() == 246);
    CHECK(s == crop_border(ref, 5));
  }

  const Image r2 = testing::smooth_texture(64, 6);
  SampleStack shifted{"b", {roll(r2, 1, 2), roll(r2, -3, 0), roll(r2, 2, -1), r2}, StackKind::McDropout, {}};
  auto mad = [](const SampleStack& s) {
    double total = 0;
    int n = 0;
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
      for (std::size_t j = i + 1; j < s.samples.size(); ++j, ++n) total += testing::mean_abs_diff(s.samples[i], s.samples[j]);
    }
    return total / n;
  };
  const AlignOptions opts{3, 10};
  const SampleStack aligned = align_stack(shifted, r2, opts);
  CHECK(mad(aligned) < mad(SampleStack{"b", [&] {
                               std::vector<Image> v;
                               for (const auto& s : shifted.samples) v.push_back(crop_border(s, 3));
                               return v;
                             }(), StackKind::McDropout, {}}));
  CHECK(mad(aligned) == 0.0);

  CHECK_THROWS_AS(align_stack(copies, ref, {128, 10}), InvalidArgument);
  CHECK_THROWS_AS(align_stack(copies, testing::smooth_texture(64, 1)), InvalidArgument);
}

TEST_CASE("evaluate_stacks on fixtures") {
  ScratchDir dir("uq");
  std::vector<SampleStack> stacks;
  stacks.push_back({"b", {constant(8, 8, 0), constant(8, 8, 2)}, StackKind::McDropout, {}});
  stacks.push_back({"a", {constant(8, 8, 5), constant(8, 8, 5)}, StackKind::McDropout, {}});
  write_fixture(dir.path(), stacks, StackKind::McDropout);
  const auto res = evaluate_stacks(dir / "stacks.json", {});
  REQUIRE(res.records.size() == 2);
  CHECK(res.records[0].source_id == "a");
  CHECK(res.records[0].psd == 0.0);
  CHECK(res.records[1].psd == 1.0);
  CHECK(res.mpsd == 0.5);

  write_records(res, dir / "out");
  std::ifstream lines(dir / "out/records.jsonl");
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto rec = nlohmann::json::parse(line);
    const Image sigma = load_image(dir / "out" / rec["sigma_path"].get<std::string>());
    CHECK(std::abs(psd(sigma) - rec["psd"].get<double>()) < 1e-10);
    ++count;
  }
  CHECK(count == 2);
  CHECK(nlohmann::json::parse(read_file(dir / "out/mpsd.json"))["mpsd"] == 0.5);
}

TEST_CASE("evaluate_stacks skips malformed stacks") {
  ScratchDir dir("uqbad");
  std::vector<SampleStack> stacks;
  stacks.push_back({"good", {constant(8, 8, 0), constant(8, 8, 2)}, StackKind::McDropout, {}});
  stacks.push_back({"bad", {constant(8, 8, 0), constant(6, 8, 2)}, StackKind::McDropout, {}});
  write_fixture(dir.path(), stacks, StackKind::McDropout);
  const auto res = evaluate_stacks(dir / "stacks.json", {});
  CHECK(res.records.size() == 1);
  REQUIRE(res.skipped.size() == 1);
  CHECK(res.skipped[0].source_id == "bad");

  std::vector<SampleStack> none{{"bad", {constant(8, 8, 0), constant(6, 8, 2)}, StackKind::McDropout, {}}};
  write_fixture(dir.path(), none, StackKind::McDropout);
  CHECK_THROWS_AS(evaluate_stacks(dir / "stacks.json", {}), InvalidArgument);

  write_file(dir / "broken.json", "{\"kind\":\"MC_DROPOUT\"");
  CHECK_THROWS_AS(evaluate_stacks(dir / "broken.json", {}), IoError);
}

TEST_CASE("ensemble disagreement gives the expected mPSD") {
  // Expected population std of M Gaussian draws, by independent Monte-Carlo.
  const int m = 5;
  const double sigma = 0.2;
  RngStream oracle_rng(999);
  double expected = 0;
  const int trials = 200000;
  for (int t = 0; t < trials; ++t) {
    double x[m], mean = 0, ss = 0;
    for (double& v : x) mean += (v = sigma * oracle_rng.normal());
    mean /= m;
    for (double v : x) ss += (v - mean) * (v - mean);
    expected += std::sqrt(ss / m);
  }
  expected /= trials;

  ScratchDir dir("ens");
  std::vector<SampleStack> stacks;
  for (int i = 0; i < 4; ++i) {
    SampleStack s = random_stack(m, 32, 32, 40 + i, sigma);
    s.source_id = "img" + std::to_string(i);
    s.kind = StackKind::Ensemble;
    s.model_ids = {"m0", "m1", "m2", "m3", "m4"};
    stacks.push_back(std::move(s));
  }
  write_fixture(dir.path(), stacks, StackKind::Ensemble);
  const auto res = evaluate_stacks(dir / "stacks.json", {});
  CHECK(std::abs(res.mpsd - expected) < 0.05 * expected);
}

TEST_CASE("evaluate_stacks with alignment crops to the reference") {
  ScratchDir dir("align");
  const Image src = testing::smooth_texture(64, 3);
  std::vector<SampleStack> stacks{{"x", {roll(src, 2, 0), roll(src, 0, -1), src}, StackKind::McDropout, {}}};
  std::vector<Image> sources{src};
  write_fixture(dir.path(), stacks, StackKind::McDropout, &sources);
  EvaluateOptions opts;
  opts.align = true;
  const auto res = evaluate_stacks(dir / "stacks.json", opts);
  REQUIRE(res.records.size() == 1);
  CHECK(res.records[0].sigma_map.width() == 54);
  CHECK(res.mpsd == 0.0);
  const auto unaligned = evaluate_stacks(dir / "stacks.json", {});
  CHECK(unaligned.mpsd > 0.0);
}

TEST_CASE("stack manifest round-trip") {
  ScratchDir dir("man");
  StackManifest m{StackKind::Ensemble, {{"a", dir / "a.raw", {dir / "x/0.raw", dir / "x/1.raw"}, {"m0", "m1"}}}};
  write_stack_manifest(m, dir / "m.json");
  const auto doc = nlohmann::json::parse(read_file(dir / "m.json"));
  CHECK(doc["kind"] == "ENSEMBLE");
  CHECK(doc["stacks"][0]["sample_paths"][1] == "x/1.raw");
  const auto back = read_stack_manifest(dir / "m.json");
  CHECK(back.kind == StackKind::Ensemble);
  CHECK(back.stacks[0].sample_paths[1] == dir / "x/1.raw");
  CHECK(back.stacks[0].model_ids == std::vector<std::string>{"m0", "m1"});
}
