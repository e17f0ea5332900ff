// povmap: command-line entry point for the whole pipeline and each stage.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "povmap/povmap.hpp"

namespace fs = std::filesystem;
using namespace povmap;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::vector<std::string> set;
  std::string out = "out";
  bool overwrite = false;
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& o) {
  sub->add_option("--config", o.config, "key = value config file");
  sub->add_option("--seed", o.seed, "root seed (overrides the config)");
  sub->add_option("--threads", o.threads, "worker thread cap (overrides the config)");
  sub->add_option("--set", o.set, "KEY=VALUE config override; repeatable");
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
  sub->add_flag("--overwrite", o.overwrite, "replace existing outputs");
  sub->add_flag("-q,--quiet", o.quiet, "no progress messages");
}

/// File, then --set, then dedicated flags.
ChainConfig resolve(const Common& o) {
  ChainConfig c = o.config.empty() ? ChainConfig{} : load_config(o.config);
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorKind::config, "--set expects KEY=VALUE, got '" + kv + "'");
    set_config_value(c, std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))),
                     "--set");
  }
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  require(c.threads >= 1, ErrorKind::config, "threads must be at least 1");
  return c;
}

/// Refuses to replace existing outputs unless --overwrite was given.
void claim(const Common& o, const std::vector<std::string>& names) {
  fs::create_directories(o.out);
  if (o.overwrite) return;
  for (const auto& n : names) {
    const fs::path p = fs::path(o.out) / n;
    require(!fs::exists(p), ErrorKind::io, "refusing to overwrite " + p.string() + " (pass --overwrite)");
  }
}

std::function<void(const std::string&)> logger(const Common& o) {
  return [q = o.quiet](const std::string& s) {
    if (!q) std::cerr << s << '\n';
  };
}

void write_curve(const std::vector<CurvePoint>& curve, const fs::path& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path.string());
  os << "iteration,train_loss,val_accuracy\n";
  for (const auto& p : curve)
    os << p.iteration << ',' << p.train_loss << ',' << fmt_metric(p.val_accuracy, 17) << '\n';
}

Network<float> load_fcn(const std::string& path) {
  Network<float> n = load_checkpoint<float>(path);
  return n.mode() == NetMode::fixed_input ? convolutionalize(n) : n;
}

std::shared_ptr<const World> open_world(const std::string& dir) {
  return std::make_shared<const World>(load_world(dir));
}

// ---------------------------------------------------------------------------

void cmd_gen_world(const Common& o, std::optional<std::size_t> side) {
  ChainConfig c = resolve(o);
  if (side) c.world_side = *side;
  claim(o, {"world", "gen-world.manifest"});
  const std::uint64_t seed = derive_seed(c.seed, "world");
  const World w = generate_world({c.world_side, seed});
  save_world(w, fs::path(o.out) / "world");
  Manifest m;
  m.set("seed", c.seed);
  m.set("world.seed", seed);
  m.set("world.side", c.world_side);
  m.set("world.dir", "world");
  m.set("world.hash", hash_file(fs::path(o.out) / "world" / "world.bin"));
  m.set("world.zero_light_fraction", zero_intensity_fraction(w));
  m.write((fs::path(o.out) / "gen-world.manifest").string());
}

void cmd_pretrain(const Common& o) {
  const ChainConfig c = resolve(o);
  claim(o, {"p1.ckpt", "p1_curve.csv", "pretrain.manifest"});
  auto log = logger(o);
  const P1Result r = pretrain_p1(c, [&](const CurvePoint& p) {
    log("P1 iter " + std::to_string(p.iteration) + " val " + fmt_metric(p.val_accuracy));
  });
  const fs::path out(o.out);
  save_checkpoint(r.net, (out / "p1.ckpt").string());
  write_curve(r.curve, out / "p1_curve.csv");
  Manifest m;
  m.set("seed", c.seed);
  m.set("p1.seed", derive_seed(c.seed, "p1.init"));
  m.set("p1.checkpoint", "p1.ckpt");
  m.set("p1.checkpoint_hash", hash_file(out / "p1.ckpt"));
  m.set("p1.val_accuracy", r.val_accuracy);
  m.set("p1.untrained_accuracy", r.untrained_accuracy);
  m.set("p1.best_iteration", r.best_iteration);
  m.write((out / "pretrain.manifest").string());
}

void cmd_train_lights(const Common& o, const std::string& world_dir, const std::string& p1_path) {
  const ChainConfig c = resolve(o);
  const bool crop = c.p2_crop_baseline || !c.p2_convert_first;
  std::vector<std::string> outs{"p2_fcn.ckpt", "p2_curve.csv", "lights_index.csv", "provenance.csv",
                                "train-lights.manifest"};
  if (crop) outs.insert(outs.end(), {"p2_crop.ckpt", "p2_crop_curve.csv"});
  claim(o, outs);
  auto log = logger(o);
  const auto world = open_world(world_dir);
  const Network<float> p1 = load_checkpoint<float>(p1_path);
  require(p1.mode() == NetMode::fixed_input, ErrorKind::invalid_argument,
          p1_path + ": expected the fixed-input pretraining checkpoint");
  const LightsData lights = prepare_lights(world, c);
  const P2Result r = finetune_p2(p1, lights, c, [&](const std::string& name, const CurvePoint& p) {
    log("P2 " + name + " iter " + std::to_string(p.iteration) + " val " + fmt_metric(p.val_accuracy));
  });
  const fs::path out(o.out);
  write_index(lights.tiles, out / "lights_index.csv", false);
  save_checkpoint(r.fcn, (out / "p2_fcn.ckpt").string());
  write_curve(r.fcn_curve, out / "p2_curve.csv");
  {
    std::ofstream os(out / "provenance.csv");
    os << "layer,tensor,source\n";
    for (const auto& e : r.provenance) os << e.layer << ',' << e.tensor << ',' << to_string(e.source) << '\n';
  }
  Manifest m;
  m.set("seed", c.seed);
  m.set("p2.source", p1_path);
  m.set("p2.source_hash", hash_file(p1_path));
  m.set("p2.dataset_hash", hash_tiles(lights.tiles));
  m.set("p2.tiles", lights.tiles.size());
  m.set("p2.checkpoint", "p2_fcn.ckpt");
  m.set("p2.checkpoint_hash", hash_file(out / "p2_fcn.ckpt"));
  m.set("p2.fcn_val_accuracy", r.fcn_val_accuracy);
  if (r.crop) {
    save_checkpoint(*r.crop, (out / "p2_crop.ckpt").string());
    write_curve(r.crop_curve, out / "p2_crop_curve.csv");
    m.set("p2.crop_checkpoint", "p2_crop.ckpt");
    m.set("p2.crop_val_accuracy", *r.crop_val_accuracy);
  }
  m.write((out / "train-lights.manifest").string());
}

void cmd_convert(const Common& o, const std::string& in, const std::string& name) {
  claim(o, {name});
  const Network<float> net = load_checkpoint<float>(in);
  save_checkpoint(convolutionalize(net), (fs::path(o.out) / name).string());
}

void cmd_features(const Common& o, const std::string& world_dir, const std::string& transfer,
                  const std::string& imgnet, const std::string& groups_csv, const std::string& survey_csv) {
  const ChainConfig c = resolve(o);
  require(groups_csv.empty() == survey_csv.empty(), ErrorKind::invalid_argument,
          "--groups and --survey go together");
  const bool generate = groups_csv.empty();
  std::vector<std::string> outs{"features.csv"};
  if (generate) outs.insert(outs.end(), {"groups.csv", "survey.csv"});
  claim(o, outs);
  const fs::path out(o.out);
  const auto world = open_world(world_dir);
  std::string groups_path = groups_csv, survey_path = survey_csv;
  if (generate) {
    const auto g = generate_groups(*world, c.p3_groups, derive_seed(c.seed, "p3.groups"));
    groups_path = (out / "groups.csv").string();
    survey_path = (out / "survey.csv").string();
    write_groups_csv(g, groups_path);
    write_survey_csv(g, survey_path);
  }
  std::optional<Network<float>> t, i;
  if (!transfer.empty()) t = load_fcn(transfer);
  if (!imgnet.empty()) i = load_fcn(imgnet);
  TableInputs in;
  in.world = world.get();
  in.groups = read_groups_csv(groups_path);
  in.survey_csv = survey_path;
  in.transfer = t ? &*t : nullptr;
  in.imagenet = i ? &*i : nullptr;
  in.hog = c.p3_hog;
  in.tile_px = c.tile_px;
  in.threads = c.threads;
  write_feature_table(build_feature_table(in), (out / "features.csv").string());
}

void cmd_eval_poverty(const Common& o, const std::string& features) {
  const ChainConfig c = resolve(o);
  const FeatureTable t = read_feature_table(features);
  const auto fams = default_families(t);
  require(!fams.empty(), ErrorKind::invalid_argument, features + ": no known feature blocks");
  std::vector<std::string> outs{"reports/table.txt", "eval-poverty.manifest"};
  for (const auto& f : fams) outs.push_back("reports/cv_" + f.name + ".csv");
  const bool has_transfer = std::any_of(fams.begin(), fams.end(), [](const Family& f) { return f.name == "Transfer"; });
  if (has_transfer) outs.push_back("classifier.txt");
  claim(o, outs);
  const fs::path out(o.out);
  fs::create_directories(out / "reports");
  const P3Result r = run_p3(t, c, fams);
  Manifest m;
  m.set("seed", c.seed);
  m.set("p3.features", features);
  m.set("p3.features_hash", hash_file(features));
  for (const auto& [name, rep] : r.reports) {
    write_cv_csv(rep, (out / "reports" / ("cv_" + name + ".csv")).string());
    m.set("p3." + name + ".accuracy", rep.mean.accuracy);
    m.set("p3." + name + ".auc", fmt_metric(rep.mean.auc, 17));
  }
  const std::string table = format_family_table(r.reports);
  {
    std::ofstream os(out / "reports" / "table.txt");
    os << table;
    if (r.conditional) os << '\n' << format_conditional(*r.conditional);
  }
  if (r.map_classifier) save_logreg(*r.map_classifier, (out / "classifier.txt").string());
  m.write((out / "eval-poverty.manifest").string());
  if (!o.quiet) std::cout << table;
}

void cmd_map(const Common& o, const std::string& world_dir, const std::string& model,
             const std::string& classifier, const std::string& regions) {
  const ChainConfig c = resolve(o);
  claim(o, {"map.png", "map.csv", "map_raw.csv", "regions.csv", "region_stats.csv"});
  const auto world = open_world(world_dir);
  const Network<float> net = load_fcn(model);
  const LogRegModel clf = load_logreg(classifier);
  MapResult m;
  if (regions.empty()) {
    m = run_map(*world, net, clf, c);
  } else {
    m.raw = scan(*world, net, clf, c.map_block, c.tile_px, c.threads);
    m.smoothed = smooth_cells(m.raw, c.map_radius);
    m.regions = read_regions(regions, m.raw.rows, m.raw.cols);
    m.stats = aggregate(m.smoothed, m.regions);
  }
  write_map(m, o.out);
}

void cmd_viz(const Common& o, const std::string& world_dir, const std::string& model) {
  const ChainConfig c = resolve(o);
  claim(o, {"filter_scores.csv", "filter_purity.csv", "filter_montage.png"});
  const auto world = open_world(world_dir);
  const Network<float> net = load_checkpoint<float>(model);
  const LightsData lights = prepare_lights(world, c);
  const VizResult v = run_viz(net, lights.tiles, resolve_layer(net, c.viz_layer), c.viz_top);
  write_viz(net, lights.tiles, v, o.out);
  const auto& best = v.filters[v.best];
  if (!o.quiet)
    std::cout << "layer " << v.layer << " filter " << best.filter << ": " << to_string(best.purity.terrain) << ' '
              << best.purity.share << '\n';
}

void cmd_chain(const Common& o) {
  const ChainConfig c = resolve(o);
  claim(o, {"manifest.txt", "config.cfg"});
  run_chain(c, o.out, TransferGraph::linear_chain(), logger(o));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poverty mapping by transfer learning on a synthetic world.", "povmap"};
  app.require_subcommand(1);
  {
    std::ostringstream f;
    f << "Config keys (--config file or --set KEY=VALUE), with defaults:\n";
    const ChainConfig defaults;
    for (const auto& k : config_keys()) {
      const std::string head = "  " + k.name + " = " + k.get(defaults);
      f << head << std::string(head.size() < 30 ? 30 - head.size() : 1, ' ') << k.help << '\n';
    }
    f << "\nExit codes: 0 success, 1 runtime failure, 2 usage error.";
    app.footer(f.str());
  }

  Common common;
  std::optional<std::size_t> side, layer, top;
  std::string world, p1, in, name = "converted.ckpt", transfer, imgnet, groups, survey, features, model, classifier,
                             regions;

  auto* gen = app.add_subcommand("gen-world", "generate and save a synthetic world");
  add_common(gen, common);
  gen->add_option("--side", side, "world side in cells (overrides world.side)");

  auto* pre = app.add_subcommand("pretrain", "train the object classifier on shape images");
  add_common(pre, common);

  auto* tl = app.add_subcommand("train-lights", "fine-tune the pretrained network on nighttime lights");
  add_common(tl, common);
  tl->add_option("--world", world, "world directory")->required();
  tl->add_option("--p1", p1, "pretraining checkpoint")->required();

  auto* cv = app.add_subcommand("convert", "convert a fixed-input checkpoint to fully convolutional");
  add_common(cv, common);
  cv->add_option("--in", in, "input checkpoint")->required();
  cv->add_option("--name", name, "output file name under --out")->capture_default_str();

  auto* fe = app.add_subcommand("features", "build the per-group feature table");
  add_common(fe, common);
  fe->add_option("--world", world, "world directory")->required();
  fe->add_option("--transfer", transfer, "lights-fine-tuned checkpoint");
  fe->add_option("--imgnet", imgnet, "pretraining checkpoint for the object-feature baseline");
  fe->add_option("--groups", groups, "group centres CSV (generated when omitted)");
  fe->add_option("--survey", survey, "household survey CSV (generated with the groups)");

  auto* ev = app.add_subcommand("eval-poverty", "nested cross-validation of every feature family");
  add_common(ev, common);
  ev->add_option("--features", features, "feature table CSV")->required();

  auto* mp = app.add_subcommand("map", "scan the world and write the poverty map");
  add_common(mp, common);
  mp->add_option("--world", world, "world directory")->required();
  mp->add_option("--model", model, "lights-fine-tuned checkpoint")->required();
  mp->add_option("--classifier", classifier, "poverty classifier file")->required();
  mp->add_option("--regions", regions, "block-to-region CSV (default: square grid)");

  auto* vz = app.add_subcommand("viz", "rank validation tiles by filter activation");
  add_common(vz, common);
  vz->add_option("--world", world, "world directory")->required();
  vz->add_option("--model", model, "checkpoint to inspect")->required();
  vz->add_option("--layer", layer, "layer index (overrides viz.layer; default last conv layer)");
  vz->add_option("--top", top, "tiles per filter (overrides viz.top)");

  auto* ch = app.add_subcommand("chain", "run every stage end to end");
  add_common(ch, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gen) cmd_gen_world(common, side);
    if (*pre) cmd_pretrain(common);
    if (*tl) cmd_train_lights(common, world, p1);
    if (*cv) cmd_convert(common, in, name);
    if (*fe) cmd_features(common, world, transfer, imgnet, groups, survey);
    if (*ev) cmd_eval_poverty(common, features);
    if (*mp) cmd_map(common, world, model, classifier, regions);
    if (*vz) {
      Common o = common;
      if (layer) o.set.push_back("viz.layer=" + std::to_string(*layer));
      if (top) o.set.push_back("viz.top=" + std::to_string(*top));
      cmd_viz(o, world, model);
    }
    if (*ch) cmd_chain(common);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << to_string(e.kind()) << ": " << msg << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
