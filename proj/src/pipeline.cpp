#include "hazardfuse/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "hazardfuse/common.hpp"
#include "hazardfuse/fusion/checkpoint.hpp"
#include "hazardfuse/fusion/spec_json.hpp"
#include "hazardfuse/data/png_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hf {

FusionSpec approach_from_id(const std::string& id) {
  static const FusionKind kinds[] = {FusionKind::late_proportional, FusionKind::late_overlay,
                                     FusionKind::early, FusionKind::mid, FusionKind::none};
  for (const auto kind : kinds) {
    const std::string prefix = std::string(fusion_kind_name(kind)) + "_";
    if (id.rfind(prefix, 0) != 0) continue;
    std::vector<Modality> mods;
    std::string rest = id.substr(prefix.size());
    std::size_t pos = 0;
    while (pos < rest.size()) {
      const std::size_t next = rest.find('_', pos);
      const std::string tok = rest.substr(pos, next == std::string::npos ? next : next - pos);
      mods.push_back(modality_from_name(tok));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    return FusionSpec::make(kind, mods);
  }
  throw std::invalid_argument("unknown approach id: " + id +
                              " (expected <fusion>_<modality>[_<modality>])");
}

std::vector<std::string> standard_approach_ids() {
  return {"none_depth",        "none_hha",
          "none_rgb",          "early_rgb_depth",
          "early_rgb_hha",     "late_overlay_rgb_depth",
          "late_overlay_rgb_hha", "mid_rgb_depth",
          "mid_rgb_hha",       "late_proportional_rgb_depth",
          "late_proportional_rgb_hha"};
}

void RunConfig::validate() const {
  if (approach_ids.empty()) throw std::invalid_argument("config: no approaches listed");
  for (const auto& id : approach_ids) approach_from_id(id);
  if (val_fraction < 0 || val_fraction > 0.9)
    throw std::invalid_argument("config: val_fraction must be in [0, 0.9]");
  if (theta_det < 0 || theta_det > 1)
    throw std::invalid_argument("config: theta_det must be in [0,1]");
  if (!thresholds.empty() && !std::is_sorted(thresholds.begin(), thresholds.end()))
    throw std::invalid_argument("config: thresholds must be sorted");
  hp.validate();
  if (!use_synth && corpus_path.empty())
    throw std::invalid_argument("config: corpus path required when synth is disabled");
}

namespace {

json synth_to_json(const SynthConfig& s, std::uint64_t seed) {
  return json{{"seed", seed},           {"frames", s.n_frames}, {"groups", s.n_groups},
              {"width", s.width},       {"height", s.height},   {"noise", s.noise},
              {"z_max", s.z_max},       {"min_lying", s.min_lying},
              {"max_lying", s.max_lying}, {"min_camo", s.min_camo},
              {"max_camo", s.max_camo}, {"min_wire", s.min_wire},
              {"max_wire", s.max_wire}, {"min_pillar", s.min_pillar},
              {"max_pillar", s.max_pillar}, {"standing_prob", s.standing_prob}};
}

SynthConfig synth_from_json(const json& j) {
  SynthConfig s;
  s.n_frames = j.value("frames", s.n_frames);
  s.n_groups = j.value("groups", s.n_groups);
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.noise = j.value("noise", s.noise);
  s.z_max = j.value("z_max", s.z_max);
  s.min_lying = j.value("min_lying", s.min_lying);
  s.max_lying = j.value("max_lying", s.max_lying);
  s.min_camo = j.value("min_camo", s.min_camo);
  s.max_camo = j.value("max_camo", s.max_camo);
  s.min_wire = j.value("min_wire", s.min_wire);
  s.max_wire = j.value("max_wire", s.max_wire);
  s.min_pillar = j.value("min_pillar", s.min_pillar);
  s.max_pillar = j.value("max_pillar", s.max_pillar);
  s.standing_prob = j.value("standing_prob", s.standing_prob);
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json_file(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json report_to_json(const MetricsReport& r) {
  json j{{"threshold", r.threshold},
         {"precision", r.precision},
         {"recall", r.recall},
         {"f1", r.f1},
         {"trip_iou", r.trip_iou},
         {"counts",
          {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}}}};
  if (r.trip_obj_detection)
    j["trip_obj_detection"] = *r.trip_obj_detection;
  else
    j["trip_obj_detection"] = nullptr;
  return j;
}

std::vector<const LabeledFrame*> with_modalities(const std::vector<const LabeledFrame*>& frames,
                                                 const std::vector<Modality>& mods) {
  std::vector<const LabeledFrame*> out;
  for (const auto* f : frames) {
    bool ok = true;
    for (const auto m : mods) {
      if (m == Modality::depth && !f->depth) ok = false;
      if (m == Modality::hha && !f->hha) ok = false;
    }
    if (ok) out.push_back(f);
  }
  return out;
}

EvalFrame make_eval_frame(const FusionNetwork<float>& net, const LabeledFrame& frame,
                          const std::string& source, bool per_image) {
  const PredictionMap map = predict(net, frame, source, per_image);
  EvalFrame ef;
  const Eigen::Index hw = static_cast<Eigen::Index>(map.probs.height()) * map.probs.width();
  ef.trip_prob.assign(map.probs.data(), map.probs.data() + hw);  // channel 0 = trip
  ef.gt = rasterize_labels(frame);
  ef.instances = gt_instances(frame.polygons, ef.gt);
  return ef;
}

void write_loss_csv(const fs::path& path, const TrainResult& tr) {
  std::string text = "iteration,train_loss\n";
  char line[64];
  for (std::size_t i = 0; i < tr.train_loss.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.9g\n", i, tr.train_loss[i]);
    text += line;
  }
  write_text(path, text);
  if (!tr.val_loss.empty()) {
    std::string vt = "iteration,val_loss\n";
    for (const auto& [it, loss] : tr.val_loss) {
      std::snprintf(line, sizeof(line), "%d,%.9g\n", it, loss);
      vt += line;
    }
    write_text(path.parent_path() / (path.stem().string() + "_val.csv"), vt);
  }
}

struct FoldData {
  std::vector<const LabeledFrame*> train, val, test;
};

FoldData split_fold(const Corpus& corpus, const FoldPlan::Fold& fold, double val_fraction,
                    std::uint64_t seed) {
  FoldData d;
  for (const auto& f : corpus.frames)
    (f.floor_id == fold.test_floor ? d.test : d.train).push_back(&f);
  if (val_fraction > 0 && d.train.size() >= 2) {
    std::mt19937_64 rng(seed);
    std::shuffle(d.train.begin(), d.train.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(d.train.size()));
    n_val = std::min(n_val, d.train.size() - 1);
    d.val.assign(d.train.begin(), d.train.begin() + static_cast<std::ptrdiff_t>(n_val));
    d.train.erase(d.train.begin(), d.train.begin() + static_cast<std::ptrdiff_t>(n_val));
    // Deterministic artifact order regardless of the shuffle.
    auto by_id = [](const LabeledFrame* a, const LabeledFrame* b) {
      return a->frame_id < b->frame_id;
    };
    std::sort(d.train.begin(), d.train.end(), by_id);
    std::sort(d.val.begin(), d.val.end(), by_id);
  }
  return d;
}

}  // namespace

RunConfig run_config_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.jobs = j.value("jobs", cfg.jobs);
  if (j.contains("corpus")) {
    const auto& c = j.at("corpus");
    if (c.contains("path")) {
      cfg.corpus_path = c.at("path").get<std::string>();
      cfg.use_synth = false;
    }
    if (c.contains("synth")) {
      cfg.use_synth = true;
      cfg.synth = synth_from_json(c.at("synth"));
    }
  }
  if (j.contains("approaches")) {
    const auto& a = j.at("approaches");
    cfg.approach_ids.clear();
    if (a.is_string()) {
      if (a.get<std::string>() != "all11")
        throw std::invalid_argument("config: approaches must be a list or \"all11\"");
      cfg.approach_ids = standard_approach_ids();
    } else {
      for (const auto& e : a) cfg.approach_ids.push_back(e.get<std::string>());
    }
  }
  if (j.contains("hyperparams")) cfg.hp = hyperparams_from_json(j.at("hyperparams"), cfg.hp);
  if (j.contains("hp_overrides"))
    for (const auto& [id, hj] : j.at("hp_overrides").items())
      cfg.hp_overrides[id] = hyperparams_from_json(hj, cfg.hp);
  if (j.contains("training")) {
    const auto& t = j.at("training");
    cfg.parent_iterations = t.value("parent_iterations", cfg.parent_iterations);
    cfg.val_fraction = t.value("val_fraction", cfg.val_fraction);
  }
  cfg.theta_det = j.value("theta_det", cfg.theta_det);
  if (j.contains("thresholds")) {
    const auto& t = j.at("thresholds");
    if (t.is_array()) {
      for (const auto& v : t) cfg.thresholds.push_back(v.get<double>());
    } else {
      const double start = t.value("start", 0.0), stop = t.value("stop", 1.0),
                   step = t.value("step", 0.01);
      for (double v = start; v <= stop + 1e-12; v += step) cfg.thresholds.push_back(v);
    }
  }
  cfg.late_prop_per_image = j.value("late_prop_per_image", cfg.late_prop_per_image);
  cfg.validate();
  return cfg;
}

std::string run_config_to_json_text(const RunConfig& cfg) {
  json j{{"schema_version", kSchemaVersion},
         {"tool_version", kToolVersion},
         {"seed", cfg.seed},
         {"approaches", cfg.approach_ids},
         {"hyperparams", hyperparams_to_json(cfg.hp)},
         {"training",
          {{"parent_iterations", cfg.parent_iterations}, {"val_fraction", cfg.val_fraction}}},
         {"theta_det", cfg.theta_det},
         {"late_prop_per_image", cfg.late_prop_per_image}};
  if (cfg.use_synth)
    j["corpus"] = json{{"synth", synth_to_json(cfg.synth, cfg.seed)}};
  else
    j["corpus"] = json{{"path", cfg.corpus_path}};
  json overrides = json::object();
  for (const auto& [id, hp] : cfg.hp_overrides) overrides[id] = hyperparams_to_json(hp);
  j["hp_overrides"] = overrides;
  const auto thresholds = cfg.thresholds.empty() ? default_thresholds() : cfg.thresholds;
  j["thresholds"] = thresholds;
  return j.dump(2) + "\n";
}

std::pair<int, int> ensure_hha(Corpus& corpus, const HhaConfig& cfg, bool write_back) {
  int encoded = 0, skipped = 0;
  for (auto& frame : corpus.frames) {
    if (frame.hha) continue;
    if (!frame.depth) {
      ++skipped;
      continue;
    }
    const HhaFrameResult r = encode_hha_frame(*frame.depth, cfg);
    frame.hha = r.hha;
    ++encoded;
    if (write_back) {
      const fs::path dir = fs::path(corpus.root) / frame.floor_id / "hha";
      fs::create_directories(dir);
      write_png_u8((dir / (frame.frame_id + ".png")).string(), r.hha);
      write_json_file(dir / (frame.frame_id + ".json"),
                      json{{"schema_version", kSchemaVersion},
                           {"gravity_direction",
                            {r.gravity.direction.x(), r.gravity.direction.y(),
                             r.gravity.direction.z()}},
                           {"gravity_fallback", r.gravity.fallback},
                           {"aligned_fraction", r.gravity.aligned_fraction},
                           {"iterations_used", r.gravity.iterations_used},
                           {"ground_height_m", r.ground.height_m},
                           {"ground_clamped", r.ground.clamped}});
    }
  }
  if (skipped > 0) log_info("encode-hha: skipped " + std::to_string(skipped) + " frames without depth");
  return {encoded, skipped};
}

namespace {

struct ApproachPlan {
  std::string id;
  FusionSpec spec;
  Hyperparams hp;
};

std::vector<ApproachPlan> plan_approaches(const RunConfig& cfg) {
  std::vector<ApproachPlan> out;
  for (const auto& id : cfg.approach_ids) {
    ApproachPlan p;
    p.id = id;
    p.spec = approach_from_id(id);
    p.hp = cfg.hp;
    if (auto it = cfg.hp_overrides.find(id); it != cfg.hp_overrides.end()) p.hp = it->second;
    p.spec.hp = p.hp;
    out.push_back(std::move(p));
  }
  return out;
}

// Everything one fold produces, assembled before writing.
void run_fold(const RunConfig& cfg, const Corpus& corpus, const FoldPlan& plan, std::size_t k,
              const std::vector<ApproachPlan>& approaches, const std::vector<double>& thresholds,
              const fs::path& out_dir, FoldOutcome& outcome) {
  const auto& fold = plan.folds[k];
  outcome.test_floor = fold.test_floor;
  const fs::path fold_dir = out_dir / ("fold" + std::to_string(k));
  const FoldData data =
      split_fold(corpus, fold, cfg.val_fraction, derive_seed(cfg.seed, {k, 0x5f17u}));
  log_info("fold " + std::to_string(k) + ": test=" + fold.test_floor + " train=" +
           std::to_string(data.train.size()) + " val=" + std::to_string(data.val.size()) +
           " test_frames=" + std::to_string(data.test.size()));

  // Parents: single-modality networks trained from scratch on this fold's
  // training floors, standing in for the paper's externally pre-trained nets.
  bool need_rgb_parent = false, need_hha_parent = false;
  for (const auto& ap : approaches) {
    if (ap.spec.fusion == FusionKind::late_overlay) continue;
    for (const auto m : ap.spec.modalities)
      (m == Modality::rgb ? need_rgb_parent : need_hha_parent) = true;
  }

  ParentSet parents;
  FusionNetwork<float> parent_rgb, parent_hha;
  auto train_parent = [&](Modality m, std::uint64_t tag) {
    FusionSpec pspec = FusionSpec::make(FusionKind::none, {m});
    pspec.hp = cfg.hp;
    pspec.hp.max_iterations = cfg.parent_iterations;
    pspec.hp.seed = derive_seed(cfg.seed, {k, tag});
    auto net = build_network<float>(pspec);
    std::mt19937_64 rng(derive_seed(pspec.hp.seed, {0x1217u}));
    net.init_scratch(rng);
    auto frames = with_modalities(data.train, pspec.modalities);
    auto vals = with_modalities(data.val, pspec.modalities);
    if (frames.empty())
      throw std::runtime_error("fold " + std::to_string(k) + ": no training frames provide " +
                               modality_name(m));
    auto tr = train(net, frames, vals, pspec.hp);
    if (tr.diverged)
      throw std::runtime_error("fold " + std::to_string(k) + ": parent " + modality_name(m) +
                               " diverged: " + tr.divergence_reason);
    CheckpointMeta meta;
    meta.network_id = std::string("fold") + std::to_string(k) + "_parent_" + modality_name(m);
    meta.rng_seed = pspec.hp.seed;
    meta.hp = pspec.hp;
    save_checkpoint((fold_dir / "parents" / modality_name(m)).string(), net, meta);
    return net;
  };
  if (need_rgb_parent) {
    parent_rgb = train_parent(Modality::rgb, 0xA0u);
    parents.rgb = &parent_rgb;
  }
  if (need_hha_parent) {
    parent_hha = train_parent(Modality::hha, 0xB0u);
    parents.hha = &parent_hha;
  }

  std::map<std::string, FusionNetwork<float>> trained_singles;

  for (std::size_t a = 0; a < approaches.size(); ++a) {
    const auto& ap = approaches[a];
    FusionSpec spec = ap.spec;
    spec.hp.seed = derive_seed(cfg.seed, {k, 1000 + a});

    auto net = build_network<float>(spec);
    CheckpointMeta meta;
    meta.network_id = "fold" + std::to_string(k) + "_" + ap.id;
    meta.rng_seed = spec.hp.seed;
    meta.hp = spec.hp;

    if (spec.fusion == FusionKind::late_overlay) {
      const std::string rgb_id = "none_rgb";
      const std::string other_id = std::string("none_") + modality_name(spec.modalities[1]);
      const auto rit = trained_singles.find(rgb_id);
      const auto oit = trained_singles.find(other_id);
      if (rit == trained_singles.end() || oit == trained_singles.end())
        throw std::runtime_error(
            ap.id + " needs trained single-modality checkpoints; list " + rgb_id + " and " +
            other_id + " before it in the approaches so its arms are trained first");
      for (std::size_t arm = 0; arm < 2; ++arm) {
        const auto& src = (arm == 0 ? rit : oit)->second.arms[0].params();
        auto& dst = net.arms[arm].params();
        for (std::size_t i = 0; i < dst.size(); ++i) {
          dst[i].w = src[i].w;
          dst[i].b = src[i].b;
        }
      }
      meta.parents = {"fold" + std::to_string(k) + "_" + rgb_id,
                      "fold" + std::to_string(k) + "_" + other_id};
    } else {
      std::mt19937_64 rng(derive_seed(spec.hp.seed, {0x1217u}));
      init_transfer(net, parents, rng);
      if (parents.rgb || parents.hha) {
        if (parents.rgb) meta.parents.push_back("fold" + std::to_string(k) + "_parent_rgb");
        if (parents.hha) meta.parents.push_back("fold" + std::to_string(k) + "_parent_hha");
      }
      auto frames = with_modalities(data.train, spec.modalities);
      auto vals = with_modalities(data.val, spec.modalities);
      if (frames.empty())
        throw std::runtime_error("fold " + std::to_string(k) + ": no training frames provide " +
                                 ap.id + "'s modalities");
      auto tr = train(net, frames, vals, spec.hp, cfg.late_prop_per_image);
      write_loss_csv(fold_dir / "loss" / (ap.id + ".csv"), tr);
      if (tr.diverged)
        throw std::runtime_error("fold " + std::to_string(k) + ": " + ap.id +
                                 " diverged: " + tr.divergence_reason);
      outcome.training[ap.id] = std::move(tr);
    }

    save_checkpoint((fold_dir / "networks" / ap.id).string(), net, meta);
    if (spec.fusion == FusionKind::none) trained_singles[ap.id] = net;

    const auto test_frames = with_modalities(data.test, spec.modalities);
    if (test_frames.empty())
      throw std::runtime_error("fold " + std::to_string(k) + ": no test frames provide " + ap.id +
                               "'s modalities");
    std::vector<EvalFrame> eval_frames;
    for (const auto* f : test_frames)
      eval_frames.push_back(make_eval_frame(net, *f, meta.network_id, cfg.late_prop_per_image));

    Curve curve = pr_sweep(eval_frames, thresholds, cfg.theta_det);
    const CurvePoint op = operating_point(curve);
    write_curve_csv((fold_dir / "curves" / (ap.id + ".csv")).string(), curve);
    write_json_file(fold_dir / "reports" / (ap.id + ".json"),
                    json{{"schema_version", kSchemaVersion},
                         {"approach", ap.id},
                         {"fold", k},
                         {"test_floor", fold.test_floor},
                         {"operating_point", report_to_json(op.report)},
                         {"config_echo",
                          {{"theta_det", cfg.theta_det},
                           {"n_thresholds", thresholds.size()},
                           {"seed", cfg.seed},
                           {"hyperparams", hyperparams_to_json(spec.hp)}}}});
    outcome.curves[ap.id] = std::move(curve);
    outcome.operating_points[ap.id] = op.report;
  }
}

}  // namespace

CrossvalOutcome run_crossval(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const fs::path out(out_dir);
  fs::create_directories(out);
  write_text(out / "resolved_config.json", run_config_to_json_text(cfg));

  Corpus corpus;
  if (cfg.use_synth) {
    const fs::path corpus_dir = out / "corpus";
    write_synth_corpus(corpus_dir.string(), cfg.seed, cfg.synth);
    corpus = load_corpus(corpus_dir.string());
  } else {
    corpus = load_corpus(cfg.corpus_path);
  }

  const auto approaches = plan_approaches(cfg);
  bool needs_hha = false;
  for (const auto& ap : approaches)
    for (const auto m : ap.spec.modalities) needs_hha |= (m == Modality::hha);
  if (needs_hha) {
    const auto [encoded, skipped] = ensure_hha(corpus, cfg.hha, /*write_back=*/cfg.use_synth);
    log_info("hha: encoded " + std::to_string(encoded) + ", skipped " + std::to_string(skipped));
  }

  CrossvalOutcome outcome;
  outcome.plan = make_folds(corpus.frames);
  {
    json folds = json::array();
    for (const auto& f : outcome.plan.folds)
      folds.push_back({{"test_floor", f.test_floor}, {"train_floors", f.train_floors}});
    write_json_file(out / "folds.json", json{{"schema_version", kSchemaVersion}, {"folds", folds}});
  }

  const auto thresholds = cfg.thresholds.empty() ? default_thresholds() : cfg.thresholds;
  outcome.folds.resize(outcome.plan.folds.size());

  std::vector<std::string> failures(outcome.plan.folds.size());
  auto process = [&](std::size_t k) {
    try {
      run_fold(cfg, corpus, outcome.plan, k, approaches, thresholds, out, outcome.folds[k]);
    } catch (const std::exception& e) {
      failures[k] = e.what();
      write_json_file(out / ("fold" + std::to_string(k)) / "FAILED.json",
                      json{{"error", e.what()}});
    }
  };

  if (cfg.jobs <= 1 || outcome.plan.folds.size() <= 1) {
    for (std::size_t k = 0; k < outcome.plan.folds.size(); ++k) process(k);
  } else {
    std::vector<std::thread> pool;
    std::mutex mu;
    std::size_t next = 0;
    const int n = std::min<int>(cfg.jobs, static_cast<int>(outcome.plan.folds.size()));
    for (int t = 0; t < n; ++t)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t k;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= outcome.plan.folds.size()) return;
            k = next++;
          }
          process(k);
        }
      });
    for (auto& t : pool) t.join();
  }

  for (std::size_t k = 0; k < failures.size(); ++k)
    if (!failures[k].empty())
      throw std::runtime_error("fold " + std::to_string(k) +
                               " failed (partial artifacts kept): " + failures[k]);

  // Cross-fold aggregation: mean of per-fold operating-point metrics and
  // pointwise-averaged curves.
  std::string table = "approach,fusion,modalities,precision,recall,f1,trip_iou,trip_obj_det\n";
  json summary_avg = json::object();
  for (const auto& ap : approaches) {
    std::vector<MetricsReport> reports;
    std::vector<Curve> curves;
    for (const auto& fo : outcome.folds) {
      reports.push_back(fo.operating_points.at(ap.id));
      curves.push_back(fo.curves.at(ap.id));
    }
    const AggregateReport agg = crossval_aggregate(reports);
    outcome.averaged[ap.id] = agg;
    outcome.averaged_curves[ap.id] = average_curves(curves);
    write_curve_csv((out / "mean" / "curves" / (ap.id + ".csv")).string(),
                    outcome.averaged_curves[ap.id]);

    json aj{{"approach", ap.id},
            {"folds", agg.folds},
            {"precision", agg.precision},
            {"recall", agg.recall},
            {"f1", agg.f1},
            {"trip_iou", agg.trip_iou},
            {"trip_obj_detection",
             agg.trip_obj_detection ? json(*agg.trip_obj_detection) : json(nullptr)}};
    write_json_file(out / "mean" / "reports" / (ap.id + ".json"), aj);
    summary_avg[ap.id] = aj;

    std::string mods;
    for (const auto m : ap.spec.modalities) {
      if (!mods.empty()) mods += "+";
      mods += modality_name(m);
    }
    char row[256];
    std::snprintf(row, sizeof(row), "%s,%s,%s,%.4f,%.4f,%.4f,%.4f,", ap.id.c_str(),
                  fusion_kind_name(ap.spec.fusion), mods.c_str(), agg.precision, agg.recall,
                  agg.f1, agg.trip_iou);
    table += row;
    if (agg.trip_obj_detection) {
      std::snprintf(row, sizeof(row), "%.4f", *agg.trip_obj_detection);
      table += row;
    }
    table += "\n";
  }
  write_text(out / "table.csv", table);

  json fold_summaries = json::array();
  for (std::size_t k = 0; k < outcome.folds.size(); ++k) {
    json fj{{"fold", k}, {"test_floor", outcome.folds[k].test_floor}};
    json ops = json::object();
    for (const auto& [id, report] : outcome.folds[k].operating_points)
      ops[id] = report_to_json(report);
    fj["operating_points"] = ops;
    fold_summaries.push_back(std::move(fj));
  }
  write_json_file(out / "summary.json", json{{"schema_version", kSchemaVersion},
                                             {"tool_version", kToolVersion},
                                             {"seed", cfg.seed},
                                             {"theta_det", cfg.theta_det},
                                             {"folds", fold_summaries},
                                             {"averaged", summary_avg}});
  return outcome;
}

GridDef grid_def_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  GridDef g;
  auto fill = [&](const char* key, std::vector<double>& dst) {
    if (!j.contains(key)) return;
    dst.clear();
    for (const auto& v : j.at(key)) dst.push_back(v.get<double>());
  };
  fill("base_lrs", g.base_lrs);
  fill("final_mults", g.final_mults);
  fill("first_mults", g.first_mults);
  fill("shared_mults", g.shared_mults);
  fill("dropouts", g.dropouts);
  g.early_fixed_final_mult = j.value("early_fixed_final_mult", g.early_fixed_final_mult);
  return g;
}

GridRunOutcome run_grid_search(const RunConfig& cfg, const std::string& approach_id,
                               const GridDef& grid, const std::string& out_dir) {
  const fs::path out(out_dir);
  fs::create_directories(out);
  write_text(out / "resolved_config.json", run_config_to_json_text(cfg));

  Corpus corpus;
  if (cfg.use_synth) {
    const fs::path corpus_dir = out / "corpus";
    write_synth_corpus(corpus_dir.string(), cfg.seed, cfg.synth);
    corpus = load_corpus(corpus_dir.string());
  } else {
    corpus = load_corpus(cfg.corpus_path);
  }

  FusionSpec spec = approach_from_id(approach_id);
  spec.hp = cfg.hp;
  if (auto it = cfg.hp_overrides.find(approach_id); it != cfg.hp_overrides.end())
    spec.hp = it->second;

  bool needs_hha = spec.fusion != FusionKind::none || spec.modalities[0] == Modality::hha;
  for (const auto m : spec.modalities) needs_hha |= (m == Modality::hha);
  if (needs_hha) ensure_hha(corpus, cfg.hha, cfg.use_synth);

  // Single train/validation split over the whole corpus.
  std::vector<const LabeledFrame*> all;
  for (const auto& f : corpus.frames) all.push_back(&f);
  all = with_modalities(all, spec.modalities);
  const double vf = cfg.val_fraction > 0 ? cfg.val_fraction : 0.25;
  std::mt19937_64 rng(derive_seed(cfg.seed, {0x6791du}));
  std::shuffle(all.begin(), all.end(), rng);
  const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(vf * all.size()));
  std::vector<const LabeledFrame*> val(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<const LabeledFrame*> tr(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());

  ParentSet parents;
  FusionNetwork<float> parent_rgb, parent_hha;
  auto train_parent = [&](Modality m, std::uint64_t tag) {
    FusionSpec pspec = FusionSpec::make(FusionKind::none, {m});
    pspec.hp = cfg.hp;
    pspec.hp.max_iterations = cfg.parent_iterations;
    pspec.hp.seed = derive_seed(cfg.seed, {tag});
    auto net = build_network<float>(pspec);
    std::mt19937_64 prng(derive_seed(pspec.hp.seed, {0x1217u}));
    net.init_scratch(prng);
    auto res = train(net, with_modalities(tr, pspec.modalities),
                     with_modalities(val, pspec.modalities), pspec.hp);
    if (res.diverged) throw std::runtime_error("grid-search parent diverged");
    return net;
  };
  bool need_rgb = false, need_hha_parent = false;
  for (const auto m : spec.modalities) (m == Modality::rgb ? need_rgb : need_hha_parent) = true;
  if (spec.fusion == FusionKind::late_overlay)
    throw std::runtime_error("grid-search over late_overlay is undefined: it has no trainable "
                             "fusion parameters");
  if (need_rgb) {
    parent_rgb = train_parent(Modality::rgb, 0xA0u);
    parents.rgb = &parent_rgb;
  }
  if (need_hha_parent) {
    parent_hha = train_parent(Modality::hha, 0xB0u);
    parents.hha = &parent_hha;
  }

  GridRunOutcome out_res;
  out_res.combos = enumerate_grid(spec.fusion, grid, spec.hp);
  out_res.result = grid_search<float>(spec, grid, tr, val, &parents, cfg.seed, cfg.jobs);

  json ranking = json::array();
  int rank = 0;
  for (const auto& cell : out_res.result.ranked)
    ranking.push_back({{"rank", rank++},
                       {"hyperparams", hyperparams_to_json(cell.hp)},
                       {"val_loss", std::isfinite(cell.val_loss) ? json(cell.val_loss) : json(nullptr)},
                       {"diverged", cell.diverged}});
  write_json_file(out / "grid_ranking.json", json{{"schema_version", kSchemaVersion},
                                                  {"approach", approach_id},
                                                  {"n_combos", out_res.combos.size()},
                                                  {"ranking", ranking}});
  return out_res;
}

}  // namespace hf
