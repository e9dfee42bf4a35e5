#include "gfn/trainer.hpp"

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gfn/checkpoint.hpp"
#include "gfn/ops.hpp"
#include "json.hpp"

namespace gfn {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ordered_json schedule_json(const StageSchedule& s) {
  ordered_json j;
  j["epochs"] = s.epochs;
  j["lr"] = s.lr;
  j["decay"] = s.decay;
  j["decay_every"] = s.decay_every;
  return j;
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* x) { return k == x; }) == keys.end()) {
      throw ConfigError("unknown config key '" + where + (where.empty() ? "" : ".") + k + "'");
    }
  }
}

template <typename V>
void read_key(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + key + "' has the wrong type");
  }
}

StageSchedule schedule_from(const json& j, StageSchedule s, const std::string& name) {
  reject_unknown(j, {"epochs", "lr", "decay", "decay_every"}, name);
  const std::string p = name + ".";
  read_key(j, "epochs", s.epochs, p);
  read_key(j, "lr", s.lr, p);
  read_key(j, "decay", s.decay, p);
  read_key(j, "decay_every", s.decay_every, p);
  return s;
}

const StageSchedule& schedule(const TrainConfig& cfg, int stage) {
  if (stage == 1) return cfg.stage1;
  if (stage == 2) return cfg.stage2;
  throw ConfigError("training stage must be 1 or 2, got " + std::to_string(stage));
}

template <typename T>
double mse_value(const Tensor<T>& a, const Tensor<T>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

std::vector<std::size_t> epoch_order(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> order;
  order.reserve(count);
  std::vector<std::size_t> perm(n);
  while (order.size() < count) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < n && order.size() < count; ++i) order.push_back(perm[i]);
  }
  return order;
}

struct Batch {
  Tensor<float> lblur, l, h;
};

Batch stack(std::span<const Triplet> items) {
  std::vector<Tensor<float>> lb, l, h;
  for (const Triplet& t : items) {
    lb.push_back(t.lblur);
    l.push_back(t.l);
    h.push_back(t.h);
  }
  return {stack_batch<float>(lb), stack_batch<float>(l), stack_batch<float>(h)};
}

bool trainable_in_stage(const std::string& name, int stage) { return stage != 1 || name.rfind("gate/", 0) != 0; }

FusionMode fusion_for_stage(int stage) { return stage == 1 ? FusionMode::direct_sum : FusionMode::gated; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void log_step(std::ostream* log, const StepRecord& r) {
  if (log == nullptr) return;
  *log << r.step << '\t' << r.stage << '\t' << r.epoch << '\t' << fmt(r.lr) << '\t' << fmt(r.loss.sr) << '\t'
       << fmt(r.loss.deblur) << '\t' << fmt(r.loss.total) << '\n';
}

// One optimizer step on a prepared batch.
LossValues step_on_batch(TrainSession& s, const Batch& b, int stage, double lr) {
  Graph<float> graph(true);
  Binder<float> binder(graph, s.params, [stage](const std::string& n) { return trainable_in_stage(n, stage); });
  ForwardOptions fo;
  fo.fusion = fusion_for_stage(stage);
  const ModelOutput<float> out = gfn_forward(binder, graph.leaf(b.lblur), s.model, fo);
  const Loss<float> loss = compute_loss<float>(out.hr, graph.leaf(b.h), out.lr, std::optional(graph.leaf(b.l)),
                                               effective_alpha(s.config, s.model.variant));
  if (!std::isfinite(loss.values.total)) {
    throw TrainingError("non-finite loss at step " + std::to_string(s.global_step), s.global_step);
  }
  graph.backward(loss.total);
  std::map<std::string, Tensor<float>*> ptrs;
  for (const auto& name : s.params.names()) ptrs[name] = &s.params.at(name);
  adam_step(ptrs, binder.gradients(), s.adam, lr);
  return loss.values;
}

}  // namespace

TrainConfig TrainConfig::tiny() {
  TrainConfig cfg;
  cfg.batch_size = 2;
  return cfg;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  for (const auto* s : {&stage1, &stage2}) {
    if (s->epochs < 1) throw ConfigError("stage epochs must be positive");
    if (!(s->lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(s->decay > 0.0)) throw ConfigError("learning-rate decay must be positive");
    if (s->decay_every < 1) throw ConfigError("decay_every must be positive");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw ConfigError("adam hyperparameters out of range");
  }
}

std::string train_config_json(const TrainConfig& cfg) {
  ordered_json j;
  j["alpha"] = cfg.alpha;
  j["stage1"] = schedule_json(cfg.stage1);
  j["stage2"] = schedule_json(cfg.stage2);
  j["batch_size"] = cfg.batch_size;
  j["adam"] = {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}};
  j["augment"] = {{"rotate90", cfg.augment.rotate90}, {"hflip", cfg.augment.hflip}};
  j["seed"] = cfg.seed;
  j["steps_per_epoch"] = cfg.steps_per_epoch;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  reject_unknown(j, {"alpha", "stage1", "stage2", "batch_size", "adam", "augment", "seed", "steps_per_epoch"}, "");
  TrainConfig cfg = base;
  read_key(j, "alpha", cfg.alpha, "");
  if (j.contains("stage1")) cfg.stage1 = schedule_from(j["stage1"], cfg.stage1, "stage1");
  if (j.contains("stage2")) cfg.stage2 = schedule_from(j["stage2"], cfg.stage2, "stage2");
  read_key(j, "batch_size", cfg.batch_size, "");
  if (j.contains("adam")) {
    reject_unknown(j["adam"], {"beta1", "beta2", "eps"}, "adam");
    read_key(j["adam"], "beta1", cfg.adam.beta1, "adam.");
    read_key(j["adam"], "beta2", cfg.adam.beta2, "adam.");
    read_key(j["adam"], "eps", cfg.adam.eps, "adam.");
  }
  if (j.contains("augment")) {
    reject_unknown(j["augment"], {"rotate90", "hflip"}, "augment");
    read_key(j["augment"], "rotate90", cfg.augment.rotate90, "augment.");
    read_key(j["augment"], "hflip", cfg.augment.hflip, "augment.");
  }
  read_key(j, "seed", cfg.seed, "");
  read_key(j, "steps_per_epoch", cfg.steps_per_epoch, "");
  cfg.validate();
  return cfg;
}

std::uint64_t config_hash(const TrainConfig& train, const ModelConfig& model) {
  return fnv1a(train_config_json(train) + "\n" + model_config_json(model));
}

double lr_at(int stage, std::int64_t epoch, const TrainConfig& cfg) {
  const StageSchedule& s = schedule(cfg, stage);
  if (epoch < 0) throw ConfigError("epoch must be >= 0, got " + std::to_string(epoch));
  return s.lr * std::pow(s.decay, static_cast<double>(epoch / s.decay_every));
}

template <typename T>
Loss<T> compute_loss(const Var<T>& hr, const Var<T>& h, const std::optional<Var<T>>& lr,
                     const std::optional<Var<T>>& l, double alpha) {
  Loss<T> out;
  out.total = ops::mse_loss(hr, h);
  out.values.sr = mse_value(hr.value(), h.value());
  if (lr) {
    if (!l) throw ShapeError("compute_loss: deblurred output given without a sharp LR target");
    const Var<T> db = ops::mse_loss(*lr, *l);
    out.values.deblur = mse_value(lr->value(), l->value());
    if (alpha != 0.0) out.total = ops::add(out.total, ops::scale(db, alpha));
  }
  out.values.total = out.values.sr + alpha * out.values.deblur;
  return out;
}

template Loss<float> compute_loss(const Var<float>&, const Var<float>&, const std::optional<Var<float>>&,
                                  const std::optional<Var<float>>&, double);
template Loss<double> compute_loss(const Var<double>&, const Var<double>&, const std::optional<Var<double>>&,
                                   const std::optional<Var<double>>&, double);

double effective_alpha(const TrainConfig& cfg, Variant v) { return traits(v).deblur_loss ? cfg.alpha : 0.0; }

AugmentDraw draw_augment(Rng& rng, const AugmentConfig& cfg) {
  // Both draws are always taken so disabling one switch does not shift the
  // other's random stream.
  AugmentDraw d;
  const int k = static_cast<int>(rng.below(4));
  const bool flip = rng.coin();
  d.rotations = cfg.rotate90 ? k : 0;
  d.flip = cfg.hflip && flip;
  return d;
}

Tensor<float> apply_augment(const Tensor<float>& t, const AugmentDraw& d) {
  Tensor<float> cur = t;
  for (int r = 0; r < ((d.rotations % 4) + 4) % 4; ++r) {
    const Shape& s = cur.shape();
    Tensor<float> rot({s.n, s.c, s.w, s.h});
    // Counter-clockwise: out(y, x) = in(x, W - 1 - y).
    for (std::int64_t n = 0; n < s.n; ++n) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        for (std::int64_t y = 0; y < s.w; ++y) {
          for (std::int64_t x = 0; x < s.h; ++x) rot.at(n, c, y, x) = cur.at(n, c, x, s.w - 1 - y);
        }
      }
    }
    cur = std::move(rot);
  }
  if (d.flip) {
    const Shape& s = cur.shape();
    for (std::int64_t n = 0; n < s.n; ++n) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        for (std::int64_t y = 0; y < s.h; ++y) {
          float* row = cur.plane(n, c) + y * s.w;
          std::reverse(row, row + s.w);
        }
      }
    }
  }
  return cur;
}

Triplet augment(const Triplet& t, const AugmentDraw& d) {
  const Shape& lb = t.lblur.shape();
  const Shape& hs = t.h.shape();
  if (!(t.l.shape() == lb)) throw ShapeError("augment: L " + t.l.shape().str() + " != L_blur " + lb.str());
  if (hs.h != 4 * lb.h) throw ShapeError("augment: H height must be 4x the LR height");
  if (hs.w != 4 * lb.w) throw ShapeError("augment: H width must be 4x the LR width");
  Triplet out = t;
  out.lblur = apply_augment(t.lblur, d);
  out.l = apply_augment(t.l, d);
  out.h = apply_augment(t.h, d);
  return out;
}

Triplet augment(const Triplet& t, Rng& rng, const AugmentConfig& cfg) { return augment(t, draw_augment(rng, cfg)); }

TrainSession TrainSession::start(const ModelConfig& model, const TrainConfig& config) {
  config.validate();
  model.validate();
  TrainSession s;
  s.model = model;
  s.config = config;
  s.params = init_params<float>(model, derive_seed(config.seed, "init"));
  s.adam.hyper = config.adam;
  return s;
}

StepRecord train_step(TrainSession& session, std::span<const Triplet> items, int stage, int epoch, double lr) {
  StepRecord rec;
  rec.step = session.global_step;
  rec.stage = stage;
  rec.epoch = epoch;
  rec.lr = lr;
  rec.loss = step_on_batch(session, stack(items), stage, lr);
  ++session.global_step;
  return rec;
}

TrainHistory train(TrainSession& s, std::span<const Triplet> data, const RunOptions& opts) {
  s.config.validate();
  if (data.empty()) throw DataError("training set is empty");
  TrainHistory hist;
  if (opts.log != nullptr && s.global_step == 0 && s.stage == 1 && s.epoch == 0) *opts.log << kLogHeader << '\n';
  int epochs_run = 0;
  bool stop = false;
  while (!s.finished() && !stop) {
    if (s.epoch >= schedule(s.config, s.stage).epochs) {
      if (s.stage == 1) {
        s.stage = 2;
        s.epoch = 0;
        s.adam = AdamState<float>{};
        s.adam.hyper = s.config.adam;
        if (opts.log != nullptr) *opts.log << "# event\tstage=2\tgate=enabled\tstep=" << s.global_step << '\n';
        if (!opts.checkpoint_dir.empty()) save_session(opts.checkpoint_dir / "stage1", s);
      } else {
        s.stage = 3;
        if (opts.log != nullptr) *opts.log << "# event\tfinished\tstep=" << s.global_step << '\n';
      }
      if (!opts.checkpoint_dir.empty()) save_session(opts.checkpoint_dir, s);
      continue;
    }
    if (opts.only_stage && s.stage != *opts.only_stage) break;
    if (opts.stop_after_epochs >= 0 && epochs_run >= opts.stop_after_epochs) break;

    const int stage = s.stage;
    const int epoch = s.epoch;
    const double lr = lr_at(stage, epoch, s.config);
    const std::size_t B = static_cast<std::size_t>(s.config.batch_size);
    const std::size_t steps = s.config.steps_per_epoch > 0 ? static_cast<std::size_t>(s.config.steps_per_epoch)
                                                           : (data.size() + B - 1) / B;
    const std::size_t count = s.config.steps_per_epoch > 0 ? steps * B : data.size();
    const auto keys = {static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(epoch)};
    Rng order_rng(derive_seed(s.config.seed, "batch", keys));
    Rng aug_rng(derive_seed(s.config.seed, "augment", keys));
    const std::vector<std::size_t> order = epoch_order(data.size(), count, order_rng);

    LossValues sum;
    std::size_t done = 0;
    for (std::size_t st = 0; st < steps; ++st) {
      std::vector<Triplet> items;
      for (std::size_t i = st * B; i < std::min(count, (st + 1) * B); ++i) {
        items.push_back(augment(data[order[i]], aug_rng, s.config.augment));
      }
      const StepRecord rec = train_step(s, items, stage, epoch, lr);
      hist.steps.push_back(rec);
      log_step(opts.log, rec);
      sum.sr += rec.loss.sr;
      sum.deblur += rec.loss.deblur;
      sum.total += rec.loss.total;
      ++done;
      if (opts.stop_when && opts.stop_when(rec)) {
        stop = true;
        break;
      }
    }
    const double inv = 1.0 / static_cast<double>(done);
    const LossValues mean{sum.total * inv, sum.sr * inv, sum.deblur * inv};
    if (stop && done < steps) break;
    hist.epochs.push_back({stage, epoch, mean});
    s.last_epoch_mean = mean;
    ++s.epoch;
    ++epochs_run;
    if (opts.log != nullptr) opts.log->flush();
    if (!opts.checkpoint_dir.empty()) save_session(opts.checkpoint_dir, s);
  }
  return hist;
}

TrainHistory train_stage1(TrainSession& session, std::span<const Triplet> data, RunOptions opts) {
  if (session.stage != 1) throw ConfigError("train_stage1 requires a session in stage 1");
  opts.only_stage = 1;
  return train(session, data, opts);
}

TrainHistory train_stage2(TrainSession& session, std::span<const Triplet> data, RunOptions opts) {
  if (session.stage != 2) throw ConfigError("train_stage2 requires a session that finished stage 1");
  opts.only_stage = 2;
  return train(session, data, opts);
}

LossValues evaluate_loss(const ParamSet<float>& params, const ModelConfig& model, std::span<const Triplet> data,
                         double alpha, FusionMode fusion, int batch) {
  if (data.empty()) throw DataError("evaluation set is empty");
  LossValues sum;
  for (std::size_t i = 0; i < data.size(); i += static_cast<std::size_t>(batch)) {
    const auto items = data.subspan(i, std::min<std::size_t>(static_cast<std::size_t>(batch), data.size() - i));
    const Batch b = stack(items);
    Graph<float> graph(false);
    Binder<float> binder(graph, params);
    ForwardOptions fo;
    fo.fusion = fusion;
    const ModelOutput<float> out = gfn_forward(binder, graph.leaf(b.lblur), model, fo);
    const Loss<float> loss = compute_loss<float>(out.hr, graph.leaf(b.h), out.lr, std::optional(graph.leaf(b.l)),
                                                 traits(model.variant).deblur_loss ? alpha : 0.0);
    const double w = static_cast<double>(items.size());
    sum.sr += w * loss.values.sr;
    sum.deblur += w * loss.values.deblur;
    sum.total += w * loss.values.total;
  }
  const double inv = 1.0 / static_cast<double>(data.size());
  return {sum.total * inv, sum.sr * inv, sum.deblur * inv};
}

std::string meta_json(const CheckpointMeta& m) {
  ordered_json j;
  j["stage"] = m.stage;
  j["epoch"] = m.epoch;
  j["global_step"] = m.global_step;
  j["running"] = {{"total", m.running.total}, {"sr", m.running.sr}, {"deblur", m.running.deblur}};
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016" PRIx64, m.config_hash);
  j["config_hash"] = hex;
  return j.dump(2) + "\n";
}

CheckpointMeta parse_meta(const std::string& text) {
  CheckpointMeta m;
  try {
    const json j = json::parse(text);
    m.stage = j.at("stage").get<int>();
    m.epoch = j.at("epoch").get<int>();
    m.global_step = j.at("global_step").get<std::int64_t>();
    m.running.total = j.at("running").at("total").get<double>();
    m.running.sr = j.at("running").at("sr").get<double>();
    m.running.deblur = j.at("running").at("deblur").get<double>();
    m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
  }
  return m;
}

void save_session(const std::filesystem::path& dir, const TrainSession& s) {
  std::filesystem::create_directories(dir);
  save_model(dir / kModelFile, s.params, s.model);
  adam_to_archive(s.adam).save(dir / kAdamFile);
  CheckpointMeta m{s.stage, s.epoch, s.global_step, s.last_epoch_mean, config_hash(s.config, s.model)};
  std::ofstream f(dir / kMetaFile, std::ios::trunc);
  if (!f) throw CheckpointError("cannot write " + (dir / kMetaFile).string());
  f << meta_json(m);
}

TrainSession load_session(const std::filesystem::path& dir, const TrainConfig& config) {
  TrainSession s;
  s.params = load_model(dir / kModelFile, &s.model);
  s.adam = adam_from_archive(TensorArchive::load(dir / kAdamFile));
  std::ifstream f(dir / kMetaFile);
  if (!f) throw CheckpointError("missing " + (dir / kMetaFile).string());
  std::stringstream ss;
  ss << f.rdbuf();
  const CheckpointMeta m = parse_meta(ss.str());
  if (m.config_hash != config_hash(config, s.model)) {
    throw ConfigError("checkpoint in " + dir.string() + " was written with a different configuration");
  }
  s.config = config;
  s.stage = m.stage;
  s.epoch = m.epoch;
  s.global_step = m.global_step;
  s.last_epoch_mean = m.running;
  return s;
}

}  // namespace gfn
