#include "uqih/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <iostream>
#include <regex>

#include "uqih/cwssim.hpp"
#include "uqih/io.hpp"
#include "uqih/log.hpp"
#include "uqih/parallel.hpp"
#include "uqih/preprocess.hpp"
#include "uqih/protocol.hpp"
#include "uqih/uq.hpp"

namespace uqih::cli {

using nlohmann::json;

std::unique_ptr<fid::EmbeddingProvider> make_provider(const std::string& id) {
  if (id == "toy-8x8") return std::make_unique<fid::ToyEmbedder>();
  static const std::regex projected(R"(toy-8x8-proj(\d+)-seed(\d+))");
  std::smatch m;
  if (std::regex_match(id, m, projected)) {
    return std::make_unique<fid::ToyEmbedder>(std::stoi(m[1].str()), std::stoull(m[2].str()));
  }
  throw InvalidArgument("unknown embedding provider '" + id +
                        "'; external features enter through embedding files");
}

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string log_level = "info";
  std::string out = "uqih-out";
  std::string rerun;
};

bool has_magic(const fs::path& path, const char (&magic)[16]) {
  std::ifstream in(path, std::ios::binary);
  char buf[16] = {};
  in.read(buf, 16);
  return in.gcount() == 16 && std::equal(buf, buf + 16, magic);
}

/// An embedding file, an image manifest (.json) or a single image file.
fid::FidInput load_fid_input(const fs::path& path) {
  if (has_magic(path, fid::kEmbeddingMagic)) return fid::load_embeddings(path);
  std::vector<Image> images;
  if (path.extension() == ".json") {
    for (const auto& e : read_image_manifest(path)) images.push_back(load_image(e.path));
  } else {
    images.push_back(load_image(path));
  }
  for (auto& img : images) img = normalize_minmax(channel_average(img)).value;
  return images;
}

void write_run_config(const Globals& g, const std::string& subcommand,
                      const std::vector<std::string>& args, const CLI::App& app) {
  json doc;
  doc["subcommand"] = subcommand;
  doc["argv"] = args;
  doc["seed"] = g.seed;
  doc["threads"] = thread_count();
  doc["log_level"] = g.log_level;
  doc["out"] = g.out;
  doc["resolved"] = app.config_to_str(true, false);
  write_file(fs::path(g.out) / "run-config.json", doc.dump(2) + "\n");
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw InvalidArgument("bad noise level '" + item + "'");
    }
    if (used != item.size()) throw InvalidArgument("bad noise level '" + item + "'");
    out.push_back(v);
  }
  return out;
}

json cwssim_config_json(const cwssim::PyramidConfig& cfg) {
  return {{"levels", cfg.levels},
          {"orientations", cfg.orientations},
          {"window", cfg.window},
          {"stability_k", cfg.stability_k}};
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Uncertainty calibration harness for unpaired image translation models", "uqih"};
  app.fallthrough();
  app.require_subcommand(0, 1);
  Globals g;
  app.add_option("--seed", g.seed, "Global random seed");
  app.add_option("--threads", g.threads, "Worker threads (fallback: UQIH_THREADS)");
  app.add_option("--log-level", g.log_level, "debug|info|warn|error|off");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--rerun", g.rerun, "Replay a recorded run-config.json");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Segment, normalise and parse images into patches");
  std::string pre_manifest;
  preprocess::PipelineOptions pre_opts;
  bool no_lcc = false;
  pre->add_option("--manifest", pre_manifest, "Image manifest (JSON)")->required();
  pre->add_option("--patch-size", pre_opts.spec.patch_size);
  pre->add_option("--stride", pre_opts.spec.stride);
  pre->add_option("--fill", pre_opts.spec.fill_threshold, "Fill fraction a patch must exceed");
  pre->add_option("--canvas", pre_opts.spec.canvas);
  pre->add_flag("--no-largest-component", no_lcc, "Keep every above-threshold component");

  // augment
  auto* aug = app.add_subcommand("augment", "Write noise-corrupted copies of a test set per level");
  std::string aug_manifest;
  std::string aug_levels = "0,5,10,15,20";
  aug->add_option("--manifest", aug_manifest, "Test image manifest (JSON)")->required();
  aug->add_option("--levels", aug_levels, "Comma-separated noise levels (% of 255)");

  // uq
  auto* uqc = app.add_subcommand("uq", "Pixel-wise std maps, PSD and mPSD of sample stacks");
  std::string uq_manifest;
  uq::EvaluateOptions uq_opts;
  uqc->add_option("--manifest", uq_manifest, "Stack manifest (JSON)")->required();
  uqc->add_flag("--align", uq_opts.align, "Register samples to their source and crop");
  uqc->add_option("--crop", uq_opts.align_opts.crop, "Pixels cropped per side after alignment");
  uqc->add_option("--max-shift", uq_opts.align_opts.max_shift, "Registration search radius");

  // fid
  auto* fidc = app.add_subcommand("fid", "Frechet distance between two image or embedding sets");
  std::string fid_real;
  std::string fid_gen;
  std::string fid_provider = "toy-8x8";
  fidc->add_option("--real", fid_real, "Embedding file or image manifest")->required();
  fidc->add_option("--generated", fid_gen, "Embedding file or image manifest")->required();
  fidc->add_option("--provider", fid_provider, "Embedder for image inputs");

  // cwssim
  auto* cw = app.add_subcommand("cwssim", "Complex wavelet SSIM of an image pair or two manifests");
  std::string cw_a;
  std::string cw_b;
  cwssim::PyramidConfig cw_cfg;
  cw->add_option("--a", cw_a, "Image file or image manifest")->required();
  cw->add_option("--b", cw_b, "Image file or image manifest")->required();
  cw->add_option("--levels", cw_cfg.levels);
  cw->add_option("--orientations", cw_cfg.orientations);
  cw->add_option("--window", cw_cfg.window);
  cw->add_option("--k", cw_cfg.stability_k);

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Run the noise-sweep calibration and write a report");
  std::string cal_config;
  cal->add_option("--config", cal_config, "Sweep configuration (JSON)")->required();

  // report
  auto* rep = app.add_subcommand("report", "Re-render the report for an existing curve.json");
  std::string rep_curve;
  rep->add_option("--curve", rep_curve, "curve.json")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "uqih: " << e.what() << '\n';
    return e.get_exit_code() == 0 ? kOk : kFatal;
  }

  try {
    log::set_level(log::parse_level(g.log_level));
    if (!g.rerun.empty()) {
      const json recorded = json::parse(read_file(g.rerun));
      return run(recorded.at("argv").get<std::vector<std::string>>());
    }
    if (g.threads > 0) set_thread_count(g.threads);

    const fs::path out(g.out);
    auto record = [&](const std::string& name) {
      fs::create_directories(out);
      write_run_config(g, name, args, app);
    };

    if (*pre) {
      pre_opts.segment.keep_largest_component = !no_lcc;
      record("preprocess");
      const auto result = preprocess::run_pipeline(pre_manifest, pre_opts, out);
      log::info("preprocess: " + std::to_string(result.patches.size()) + " patches, " +
                std::to_string(result.errors.size()) + " failed images");
      return result.errors.empty() ? kOk : kPartial;
    }
    if (*aug) {
      protocol::SweepConfig cfg;
      cfg.noise_levels = parse_levels(aug_levels);
      cfg.seed = g.seed;
      cfg.validate();
      record("augment");
      const auto levels = protocol::make_noisy_testsets(aug_manifest, cfg, out);
      json doc = json::array();
      for (const auto& l : levels) {
        doc.push_back({{"noise_percent", l.level},
                       {"manifest", relative_to(l.manifest, out).generic_string()}});
      }
      write_file(out / "levels.json", doc.dump(2) + "\n");
      return kOk;
    }
    if (*uqc) {
      record("uq");
      const auto result = uq::evaluate_stacks(uq_manifest, uq_opts);
      uq::write_records(result, out);
      std::cout << protocol::format_number(result.mpsd) << '\n';
      return result.skipped.empty() ? kOk : kPartial;
    }
    if (*fidc) {
      record("fid");
      const auto provider = make_provider(fid_provider);
      const auto real = load_fid_input(fid_real);
      const auto gen = load_fid_input(fid_gen);
      const double value = fid::fid(real, gen, provider.get());
      std::string provider_id = provider->id();
      if (const auto* set = std::get_if<fid::EmbeddingSet>(&real)) provider_id = set->provider_id;
      const json doc = {{"fid", value}, {"provider_id", provider_id}};
      write_file(out / "fid.json", doc.dump(2) + "\n");
      std::cout << doc.dump() << '\n';
      return kOk;
    }
    if (*cw) {
      record("cwssim");
      std::vector<std::pair<Image, Image>> pairs;
      std::vector<std::string> ids;
      std::vector<std::string> load_errors;
      if (fs::path(cw_a).extension() == ".json" && fs::path(cw_b).extension() == ".json") {
        const auto a_entries = read_image_manifest(cw_a);
        const auto b_entries = read_image_manifest(cw_b);
        for (const auto& ea : a_entries) {
          const auto it = std::find_if(b_entries.begin(), b_entries.end(),
                                       [&](const auto& eb) { return eb.source_id == ea.source_id; });
          ids.push_back(ea.source_id);
          if (it == b_entries.end()) {
            // An empty image pair fails inside cwssim_batch and is recorded there.
            pairs.emplace_back();
            load_errors.push_back("no counterpart for " + ea.source_id);
            continue;
          }
          pairs.emplace_back(channel_average(load_image(ea.path)), channel_average(load_image(it->path)));
          load_errors.emplace_back();
        }
      } else {
        ids.push_back(fs::path(cw_a).filename().string());
        pairs.emplace_back(channel_average(load_image(cw_a)), channel_average(load_image(cw_b)));
        load_errors.emplace_back();
      }
      // Metrics operate on [0,1]-normalised images.
      for (auto& [a, b] : pairs) {
        if (!a.empty()) a = normalize_minmax(a).value;
        if (!b.empty()) b = normalize_minmax(b).value;
      }
      const auto result = cwssim::cwssim_batch(pairs, cw_cfg);
      json doc;
      doc["scores"] = json::array();
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        json item = {{"id", ids[i]}};
        item["score"] = result.scores[i] ? json(*result.scores[i]) : json(nullptr);
        const std::string& err = !load_errors[i].empty() ? load_errors[i] : result.errors[i];
        if (!err.empty()) item["error"] = err;
        doc["scores"].push_back(std::move(item));
      }
      doc["mean"] = result.mean;
      doc["failed"] = result.failed;
      doc["config"] = cwssim_config_json(cw_cfg);
      write_file(out / "cwssim.json", doc.dump(2) + "\n");
      std::cout << doc.dump() << '\n';
      return result.failed == 0 ? kOk : kPartial;
    }
    if (*cal) {
      const fs::path cfg_path(cal_config);
      const json doc = json::parse(read_file(cfg_path));
      protocol::SweepConfig cfg;
      cfg.noise_levels = doc.at("noise_levels").get<std::vector<double>>();
      cfg.seed = doc.value("seed", g.seed);
      cfg.embedding_provider = doc.value("embedding_provider", std::string("toy-8x8"));
      cfg.align = doc.value("align", false);
      cfg.crop = doc.value("crop", 5);
      cfg.validate();
      const auto manifests = doc.at("stack_manifests").get<std::vector<std::string>>();
      if (manifests.size() != cfg.noise_levels.size()) {
        throw InvalidArgument("stack_manifests must list one manifest per noise level");
      }
      if (cfg.noise_levels.size() < 2) throw InvalidArgument("calibration needs at least 2 noise levels");
      auto resolve = [&](const std::string& p) {
        const fs::path path(p);
        return path.is_relative() ? cfg_path.parent_path() / path : path;
      };
      record("calibrate");
      const auto provider = make_provider(cfg.embedding_provider);
      const auto target = load_fid_input(resolve(doc.at("target").get<std::string>()));
      std::vector<protocol::LevelResult> results;
      for (std::size_t i = 0; i < manifests.size(); ++i) {
        log::info("calibrate: level " + protocol::format_number(cfg.noise_levels[i]));
        results.push_back(protocol::collect_level(resolve(manifests[i]), cfg.noise_levels[i], target,
                                                  *provider, cfg));
      }
      const auto curve = protocol::build_curve(results);
      protocol::emit_report(curve, out);
      return kOk;
    }
    if (*rep) {
      record("report");
      protocol::emit_report(protocol::curve_from_json(read_file(rep_curve)), out);
      return kOk;
    }
    std::cerr << app.help();
    return kFatal;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kFatal;
  }
}

}  // namespace uqih::cli
