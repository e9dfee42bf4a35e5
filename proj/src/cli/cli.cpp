#include "gfn/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gfn/checkpoint.hpp"
#include "gfn/metrics.hpp"
#include "gfn/runtime.hpp"
#include "json.hpp"

namespace gfn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* x) { return k == x; }) == keys.end()) {
      throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
    }
  }
}

template <typename V>
void read_key(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + (where.empty() ? key : where + "." + key) + "' has the wrong type");
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw DataError("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string data_root(const RunConfig& rc, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!rc.data.root.empty()) return rc.data.root;
  if (const char* env = std::getenv("GFN_DATA_DIR"); env != nullptr && *env != '\0') return env;
  throw UsageError("no dataset directory: pass --data/--output, set data.root, or set GFN_DATA_DIR");
}

std::vector<Variant> parse_variant_list(const std::string& text) {
  if (text.empty() || text == "all") return {all_variants().begin(), all_variants().end()};
  std::vector<Variant> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_variant(item));
  }
  return out;
}

TripletOptions triplet_options(const RunConfig& rc) {
  TripletOptions o;
  o.crop = rc.data.crop;
  o.stride = rc.data.stride;
  o.scales_per_image = rc.data.scales_per_image;
  o.min_scale = rc.data.min_scale;
  o.max_scale = rc.data.max_scale;
  o.seed = rc.seed;
  return o;
}

std::pair<std::int64_t, std::int64_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw UsageError("size must look like WIDTHxHEIGHT, got '" + s + "'");
  try {
    return {std::stoll(s.substr(0, x)), std::stoll(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw UsageError("size must look like WIDTHxHEIGHT, got '" + s + "'");
  }
}

fs::path model_path(const std::string& checkpoint) {
  const fs::path p(checkpoint);
  return fs::is_directory(p) ? p / kModelFile : p;
}

std::vector<fs::path> ppm_files(const fs::path& dir, std::vector<std::string>& skipped) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ppm") {
      files.push_back(e.path());
    } else {
      skipped.push_back(e.path().string() + "\tunsupported format");
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------------------
// Commands

struct GenerateArgs {
  std::string input;
  std::string output;
  int synthetic = 0;
  std::string synthetic_size = "640x480";
};

int cmd_generate(const RunConfig& rc, const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path dst = data_root(rc, a.output);
  std::vector<Image> images;
  std::vector<std::string> rejects;
  if (!a.input.empty()) {
    ImageLoad load = load_images(a.input);
    images = std::move(load.images);
    rejects = std::move(load.rejects);
    for (const auto& w : load.warnings) err << "warning: " << w << '\n';
  } else if (a.synthetic > 0) {
    const auto [w, h] = parse_size(a.synthetic_size);
    fs::create_directories(dst / "sources");
    for (int i = 0; i < a.synthetic; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "scene%03d", i);
      images.push_back(synth_scene(id, h, w, rc.seed));
      write_ppm(dst / "sources" / (std::string(id) + ".ppm"), images.back().pixels);
    }
  } else {
    throw UsageError("generate-data needs --input DIR or --synthetic N");
  }
  const TripletSet set = make_triplets(images, triplet_options(rc));
  for (const auto& w : set.warnings) err << "warning: " << w << '\n';
  const fs::path manifest = save_triplets(dst, set.triplets);
  if (!rejects.empty()) {
    std::string text = "path\treason\n";
    for (const auto& r : rejects) text += r + "\n";
    write_text(dst / "rejects.tsv", text);
  }
  out << "images\t" << images.size() << "\n"
      << "rejected\t" << rejects.size() << "\n"
      << "skipped_scales\t" << set.warnings.size() << "\n"
      << "triplets\t" << set.triplets.size() << "\n"
      << "manifest\t" << manifest.string() << "\n";
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  bool resume = false;
  int stop_after_epochs = -1;
};

int cmd_train(const RunConfig& rc, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path root = data_root(rc, a.data);
  auto [train_set, val_set] = split_every(load_triplets(root), rc.data.val_every);
  if (train_set.empty()) throw DataError("no training triplets in " + root.string());
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "resolved_config.json", rc.to_json());

  TrainSession session;
  if (a.resume) {
    session = load_session(dir / "checkpoint", rc.train);
    if (model_config_json(session.model) != model_config_json(rc.model)) {
      throw ConfigError("checkpoint in " + (dir / "checkpoint").string() + " was written for a different model");
    }
    err << "resuming at stage " << session.stage << " epoch " << session.epoch << " step " << session.global_step
        << '\n';
  } else {
    session = TrainSession::start(rc.model, rc.train);
  }
  std::ofstream log(dir / "train_log.tsv", a.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot write " + (dir / "train_log.tsv").string());

  RunOptions opts;
  opts.log = &log;
  opts.checkpoint_dir = dir / "checkpoint";
  opts.stop_after_epochs = a.stop_after_epochs;
  const TrainHistory hist = train(session, train_set, opts);
  for (const EpochRecord& e : hist.epochs) {
    out << "stage " << e.stage << " epoch " << e.epoch << "\tlr " << lr_at(e.stage, e.epoch, rc.train) << "\tloss "
        << e.mean.total << '\n';
  }
  if (!session.finished()) {
    out << "stopped at stage " << session.stage << " epoch " << session.epoch << "; resume with --resume\n";
    return kOk;
  }
  save_model(dir / "final.gfn", session.params, session.model);
  if (!val_set.empty()) {
    const LossValues v = evaluate_loss(session.params, session.model, val_set, rc.train.alpha);
    out << "validation_loss\t" << v.total << '\n';
  }
  out << "final\t" << (dir / "final.gfn").string() << '\n';
  return kOk;
}

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  bool save_lr = false;
};

void infer_one(const ParamSet<float>& params, const ModelConfig& cfg, const fs::path& in, const fs::path& out_path,
               bool save_lr) {
  const Tensor<float> img = read_ppm(in);
  const Prediction p = predict(params, cfg, img);
  write_ppm(out_path, p.hr);
  if (save_lr && p.lr) {
    write_ppm(out_path.parent_path() / (out_path.stem().string() + "_lr.ppm"), *p.lr);
  }
}

int cmd_infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
  ModelConfig cfg;
  const ParamSet<float> params = load_model(model_path(a.checkpoint), &cfg);
  if (!fs::is_directory(a.input)) {
    if (!fs::exists(a.input)) throw DataError("input " + a.input + " does not exist");
    infer_one(params, cfg, a.input, a.output, a.save_lr);
    out << "wrote\t" << a.output << '\n';
    return kOk;
  }
  fs::create_directories(a.output);
  std::vector<std::string> skipped;
  int done = 0;
  for (const fs::path& p : ppm_files(a.input, skipped)) {
    try {
      infer_one(params, cfg, p, fs::path(a.output) / p.filename(), a.save_lr);
      ++done;
    } catch (const DataError& e) {
      skipped.push_back(p.string() + "\t" + one_line(e.what()));
    } catch (const ShapeError& e) {
      skipped.push_back(p.string() + "\t" + one_line(e.what()));
    }
  }
  for (const auto& s : skipped) err << "skipped\t" << s << '\n';
  out << "processed\t" << done << "\nskipped\t" << skipped.size() << '\n';
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string pred;
  std::string ref;
  std::string out;
};

int cmd_eval(const RunConfig& rc, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  if (!a.pred.empty() || !a.ref.empty()) {
    if (a.pred.empty() || a.ref.empty()) throw UsageError("--pred and --ref must be given together");
    if (!fs::is_directory(a.ref)) throw DataError("reference directory " + a.ref + " does not exist");
    std::vector<std::string> skipped;
    std::ostringstream rows;
    rows << "file\tpsnr_db\tinfinite\tssim\n";
    std::vector<Tensor<float>> preds, refs;
    for (const fs::path& r : ppm_files(a.ref, skipped)) {
      const fs::path p = fs::path(a.pred) / r.filename();
      try {
        Tensor<float> pt = read_ppm(p);
        Tensor<float> rt = read_ppm(r);
        const Psnr ps = psnr(pt, rt);
        const double ss = ssim(pt, rt);
        rows << r.filename().string() << '\t' << (ps.infinite ? "inf" : std::to_string(ps.db)) << '\t'
             << ps.infinite << '\t' << ss << '\n';
        preds.push_back(std::move(pt));
        refs.push_back(std::move(rt));
      } catch (const DataError& e) {
        skipped.push_back(r.string() + "\t" + one_line(e.what()));
      } catch (const ShapeError& e) {
        skipped.push_back(r.string() + "\t" + one_line(e.what()));
      }
    }
    for (const auto& s : skipped) err << "skipped\t" << s << '\n';
    const QualityScores q = score_pairs(preds, refs);
    out << rows.str() << "# mean\tpsnr_db=" << q.psnr << "\tinfinite=" << q.infinite << "\tssim=" << q.ssim << '\n';
    if (!a.out.empty()) {
      fs::create_directories(a.out);
      write_text(fs::path(a.out) / "pairs.tsv", rows.str());
    }
    return kOk;
  }
  if (a.checkpoint.empty()) throw UsageError("eval needs --checkpoint or --pred/--ref");
  ModelConfig cfg;
  const ParamSet<float> params = load_model(model_path(a.checkpoint), &cfg);
  const std::vector<Triplet> data = load_triplets(data_root(rc, a.data));
  if (data.empty()) throw DataError("evaluation set is empty");
  const QualityScores q = evaluate_quality(params, cfg, data);
  const BenchResult b = bench_inference(params, cfg, data.front().lblur);
  EvalReport report;
  report.env = describe_environment(cfg.width);
  report.rows.push_back({std::string(variant_name(cfg.variant)), params.count(), q.psnr, q.infinite, q.ssim,
                         b.median_seconds, traits(cfg.variant)});
  if (!a.out.empty()) report.write(a.out);
  out << report.to_tsv();
  return kOk;
}

struct AblateArgs {
  std::string data;
  std::string out;
  std::string variants;
};

int cmd_ablate(const RunConfig& rc, const AblateArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path root = data_root(rc, a.data);
  auto [train_set, val_set] = split_every(load_triplets(root), rc.data.val_every);
  if (train_set.empty() || val_set.empty()) {
    throw DataError("ablation needs both training and held-out triplets in " + root.string());
  }
  AblationConfig cfg;
  cfg.train = rc.train;
  cfg.width = rc.model.width;
  cfg.variants = parse_variant_list(a.variants);
  cfg.work_dir = fs::path(a.out) / "runs";
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "resolved_config.json", rc.to_json());
  const EvalReport report = run_ablation(train_set, val_set, cfg, [&](const std::string& m) { err << m << '\n'; });
  report.write(a.out);
  out << report.to_tsv();
  if (!report.errors.empty()) throw TrainingError("ablation stopped: " + report.errors.front(), -1);
  return kOk;
}

}  // namespace

RunConfig RunConfig::profile(const std::string& name) {
  RunConfig rc;
  if (name == "default") return rc;
  if (name != "tiny") throw ConfigError("unknown profile '" + name + "' (expected tiny or default)");
  rc.model = ModelConfig::tiny();
  rc.train = TrainConfig::tiny();
  rc.train.stage1 = {4, 1e-4, 0.1, 2};
  rc.train.stage2 = {4, 5e-5, 0.1, 2};
  rc.train.steps_per_epoch = 8;
  rc.data.crop = 128;
  rc.data.stride = 64;
  rc.data.scales_per_image = 1;
  rc.data.val_every = 4;
  return rc;
}

std::string RunConfig::to_json() const {
  ordered_json j;
  j["model"] = ordered_json::parse(model_config_json(model));
  j["train"] = ordered_json::parse(train_config_json(train));
  j["data"] = {{"root", data.root},
               {"crop", data.crop},
               {"stride", data.stride},
               {"scales_per_image", data.scales_per_image},
               {"min_scale", data.min_scale},
               {"max_scale", data.max_scale},
               {"val_every", data.val_every}};
  j["seed"] = seed;
  j["deterministic"] = deterministic;
  j["threads"] = threads;
  return j.dump(2) + "\n";
}

void RunConfig::merge_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + one_line(e.what()));
  }
  reject_unknown(j, {"model", "train", "data", "seed", "deterministic", "threads"}, "");
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m, {"width", "variant", "gate_activation", "res_scale"}, "model");
    read_key(m, "width", model.width, "model");
    if (m.contains("variant")) {
      std::string v;
      read_key(m, "variant", v, "model");
      model.variant = parse_variant(v);
    }
    if (m.contains("gate_activation")) {
      std::string act;
      read_key(m, "gate_activation", act, "model");
      if (act == "sigmoid") {
        model.gate_activation = GateActivation::sigmoid;
      } else if (act == "linear") {
        model.gate_activation = GateActivation::linear;
      } else {
        throw ConfigError("model.gate_activation must be sigmoid or linear");
      }
    }
    read_key(m, "res_scale", model.res_scale, "model");
  }
  if (j.contains("train")) train = train_config_from_json(j["train"].dump(), train);
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, {"root", "crop", "stride", "scales_per_image", "min_scale", "max_scale", "val_every"}, "data");
    read_key(d, "root", data.root, "data");
    read_key(d, "crop", data.crop, "data");
    read_key(d, "stride", data.stride, "data");
    read_key(d, "scales_per_image", data.scales_per_image, "data");
    read_key(d, "min_scale", data.min_scale, "data");
    read_key(d, "max_scale", data.max_scale, "data");
    read_key(d, "val_every", data.val_every, "data");
  }
  read_key(j, "seed", seed, "");
  read_key(j, "deterministic", deterministic, "");
  read_key(j, "threads", threads, "");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gated fusion network for joint deblurring and 4x super-resolution", "gfn"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string profile = "default";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads_flag;
  bool deterministic = false;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--profile", profile, "tiny or default")->check(CLI::IsMember({"tiny", "default"}));
  app.add_option("--seed", seed, "master random seed");
  app.add_option("--threads", threads_flag, "kernel threads");
  app.add_flag("--deterministic", deterministic, "single-threaded, bit-reproducible execution");
  std::string variant_flag;
  std::optional<int> width_flag;
  app.add_option("--variant", variant_flag, "model variant (train)");
  app.add_option("--width", width_flag, "base channel width (train, ablate)");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-data", "synthesize {L_blur, L, H} triplets");
  g->add_option("--input", gen.input, "directory of PPM images");
  g->add_option("--output", gen.output, "dataset directory (default $GFN_DATA_DIR)");
  g->add_option("--synthetic", gen.synthetic, "generate N synthetic scenes instead of reading --input");
  g->add_option("--synthetic-size", gen.synthetic_size, "WIDTHxHEIGHT of synthetic scenes");
  std::optional<int> crop, stride, scales;
  std::optional<double> min_scale, max_scale;
  g->add_option("--crop", crop, "HR crop size (divisible by 4)");
  g->add_option("--stride", stride, "crop stride");
  g->add_option("--scales-per-image", scales, "random rescalings per image");
  g->add_option("--min-scale", min_scale, "smallest rescaling factor");
  g->add_option("--max-scale", max_scale, "largest rescaling factor");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "two-stage training");
  t->add_option("--data", tr.data, "dataset directory (default $GFN_DATA_DIR)");
  t->add_option("--out", tr.out, "run directory")->required();
  t->add_flag("--resume", tr.resume, "continue from <out>/checkpoint");
  t->add_option("--stop-after-epochs", tr.stop_after_epochs, "stop after N epochs (resumable)");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "4x deblurring super-resolution of PPM images");
  i->add_option("--checkpoint", inf.checkpoint, "model file or checkpoint directory")->required();
  i->add_option("--input", inf.input, "PPM file or directory")->required();
  i->add_option("--output", inf.output, "PPM file or directory")->required();
  i->add_flag("--save-lr", inf.save_lr, "also write the deblurred LR image");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "PSNR/SSIM/time evaluation");
  e->add_option("--checkpoint", ev.checkpoint, "model file or checkpoint directory");
  e->add_option("--data", ev.data, "dataset directory");
  e->add_option("--pred", ev.pred, "directory of predicted PPM images");
  e->add_option("--ref", ev.ref, "directory of reference PPM images");
  e->add_option("--out", ev.out, "report directory");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "train and evaluate model variants");
  a->add_option("--data", ab.data, "dataset directory");
  a->add_option("--out", ab.out, "report directory")->required();
  a->add_option("--variants", ab.variants, "comma-separated variants (default all)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);

    RunConfig rc = RunConfig::profile(profile);
    if (!config_path.empty()) {
      if (!fs::is_regular_file(config_path)) throw ConfigError("config file " + config_path + " not found");
      rc.merge_json(read_text(config_path));
    }
    if (seed) rc.seed = *seed;
    if (threads_flag) rc.threads = *threads_flag;
    if (deterministic) rc.deterministic = true;
    if (!variant_flag.empty()) rc.model.variant = parse_variant(variant_flag);
    if (width_flag) rc.model.width = *width_flag;
    if (crop) rc.data.crop = *crop;
    if (stride) rc.data.stride = *stride;
    if (scales) rc.data.scales_per_image = *scales;
    if (min_scale) rc.data.min_scale = *min_scale;
    if (max_scale) rc.data.max_scale = *max_scale;
    rc.train.seed = rc.seed;
    rc.model.validate();
    rc.train.validate();
    if (rc.deterministic) {
      set_threads(1);
    } else if (rc.threads > 0) {
      set_threads(rc.threads);
    }
    if (!*i) err << "config: " << ordered_json::parse(rc.to_json()).dump() << '\n';

    if (*g) return cmd_generate(rc, gen, out, err);
    if (*t) return cmd_train(rc, tr, out, err);
    if (*i) return cmd_infer(inf, out, err);
    if (*e) return cmd_eval(rc, ev, out, err);
    if (*a) return cmd_ablate(rc, ab, out, err);
    throw UsageError("no command given");
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error[usage]: " << one_line(ex.what()) << '\n';
    return kUsage;
  } catch (const UsageError& ex) {
    err << "error[usage]: " << one_line(ex.what()) << '\n';
    return kUsage;
  } catch (const ConfigError& ex) {
    err << "error[config]: " << one_line(ex.what()) << '\n';
    return kConfig;
  } catch (const ShapeError& ex) {
    err << "error[shape]: " << one_line(ex.what()) << '\n';
    return kShape;
  } catch (const CheckpointError& ex) {
    err << "error[checkpoint]: " << one_line(ex.what()) << '\n';
    return kCheckpoint;
  } catch (const DataError& ex) {
    err << "error[data]: " << one_line(ex.what()) << '\n';
    return kData;
  } catch (const TrainingError& ex) {
    err << "error[training]: " << one_line(ex.what()) << '\n';
    return kTraining;
  } catch (const fs::filesystem_error& ex) {
    err << "error[data]: " << one_line(ex.what()) << '\n';
    return kData;
  } catch (const std::invalid_argument& ex) {
    err << "error[config]: " << one_line(ex.what()) << '\n';
    return kConfig;
  } catch (const std::exception& ex) {
    err << "error[internal]: " << one_line(ex.what()) << '\n';
    return kInternal;
  }
}

}  // namespace gfn::cli
