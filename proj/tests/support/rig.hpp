#pragma once

// Synthetic calibration rig: a mock translator whose outputs are the target
// templates plus per-sample Gaussian perturbations of amplitude alpha(level).

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "uqih/io.hpp"
#include "uqih/uq.hpp"

namespace uqih::testing {

struct RigSpec {
  int images = 200;
  int size = 32;
  int samples = 5;
  std::vector<double> levels{0, 5, 10, 15, 20};
  std::uint64_t seed = 2024;
  bool ensemble = false;
  /// Perturbation amplitude at noise level l (percent).
  double alpha(double level) const { return 0.02 + 0.01 * level; }
};

/// Writes templates, the target manifest, one stack manifest per level and
/// sweep.json under `dir`. Returns the path of sweep.json.
inline std::filesystem::path write_rig(const std::filesystem::path& dir, const RigSpec& spec = {}) {
  namespace fs = std::filesystem;
  std::vector<ManifestEntry> target;
  std::vector<Image> templates;
  for (int i = 0; i < spec.images; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "img%03d", i);
    templates.push_back(smooth_texture(spec.size, spec.seed * 7919 + i, 1.5));
    const fs::path p = dir / "target" / (std::string(id) + ".raw");
    save_raw(templates.back(), p);
    target.push_back({id, p, Photometric::Unspecified, Laterality::Unspecified, false});
  }
  write_image_manifest(target, dir / "target" / "manifest.json");

  nlohmann::json sweep;
  sweep["noise_levels"] = spec.levels;
  sweep["seed"] = spec.seed;
  sweep["embedding_provider"] = "toy-8x8";
  sweep["align"] = false;
  sweep["crop"] = 5;
  sweep["target"] = "target/manifest.json";
  sweep["stack_manifests"] = nlohmann::json::array();
  for (std::size_t li = 0; li < spec.levels.size(); ++li) {
    const double a = spec.alpha(spec.levels[li]);
    const std::string level_dir = "level" + std::to_string(li);
    uq::StackManifest manifest{spec.ensemble ? uq::StackKind::Ensemble : uq::StackKind::McDropout, {}};
    for (int i = 0; i < spec.images; ++i) {
      uq::StackEntry entry{target[i].source_id, target[i].path, {}, {}};
      for (int m = 0; m < spec.samples; ++m) {
        RngStream rng(spec.seed ^ (li * 1000003 + i * 101 + m + 1) * 0x9e3779b97f4a7c15ULL);
        Image out = templates[i];
        for (double& v : out.mutable_data()) v += a * rng.normal();
        const fs::path p = dir / level_dir / (target[i].source_id + "_s" + std::to_string(m) + ".raw");
        save_raw(out, p);
        entry.sample_paths.push_back(p);
        if (spec.ensemble) entry.model_ids.push_back("model" + std::to_string(m));
      }
      manifest.stacks.push_back(std::move(entry));
    }
    write_stack_manifest(manifest, dir / level_dir / "stacks.json");
    sweep["stack_manifests"].push_back(level_dir + "/stacks.json");
  }
  write_file(dir / "sweep.json", sweep.dump(2) + "\n");
  return dir / "sweep.json";
}

}  // namespace uqih::testing
