#include "hazardfuse/data/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "hazardfuse/common.hpp"
#include "hazardfuse/data/png_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hf {

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j;
  in >> j;
  return j;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json polygons_to_json(const std::string& frame_id, const std::vector<PolygonLabel>& polys) {
  json arr = json::array();
  for (const auto& p : polys) {
    json verts = json::array();
    for (const auto& v : p.vertices) verts.push_back({v.x(), v.y()});
    arr.push_back({{"class", p.cls}, {"vertices", verts}});
  }
  return json{{"schema_version", kSchemaVersion}, {"frame_id", frame_id}, {"polygons", arr}};
}

std::vector<PolygonLabel> polygons_from_json(const json& j) {
  std::vector<PolygonLabel> out;
  for (const auto& pj : j.at("polygons")) {
    PolygonLabel p;
    p.cls = pj.value("class", "trip");
    for (const auto& vj : pj.at("vertices"))
      p.vertices.emplace_back(vj.at(0).get<double>(), vj.at(1).get<double>());
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

Intrinsics load_intrinsics_file(const std::string& path) {
  const json j = read_json_file(path);
  Intrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  k.validate();
  return k;
}

void save_intrinsics(const std::string& root, const Intrinsics& k) {
  fs::create_directories(root);
  write_json_file(fs::path(root) / "intrinsics.json",
                  json{{"schema_version", kSchemaVersion},
                       {"fx", k.fx},
                       {"fy", k.fy},
                       {"cx", k.cx},
                       {"cy", k.cy},
                       {"width", k.width},
                       {"height", k.height}});
}

Corpus load_corpus(const std::string& root) {
  const fs::path rootp(root);
  if (!fs::is_directory(rootp)) throw std::runtime_error("corpus root not found: " + root);

  Corpus corpus;
  corpus.root = root;

  bool have_intrinsics = false;
  if (fs::exists(rootp / "intrinsics.json")) {
    corpus.intrinsics = load_intrinsics_file((rootp / "intrinsics.json").string());
    have_intrinsics = true;
  }

  std::vector<std::string> floors;
  for (const auto& e : fs::directory_iterator(rootp))
    if (e.is_directory() && fs::is_directory(e.path() / "rgb")) floors.push_back(e.path().filename().string());
  std::sort(floors.begin(), floors.end());

  for (const auto& floor : floors) {
    const fs::path fdir = rootp / floor;
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(fdir / "rgb"))
      if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());

    for (const auto& id : ids) {
      LabeledFrame frame;
      frame.frame_id = id;
      frame.floor_id = floor;
      frame.color = read_png_u8((fdir / "rgb" / (id + ".png")).string());
      if (frame.color.channels != 3)
        throw std::runtime_error("colour image is not 3-channel: " + id);

      if (!have_intrinsics) {
        corpus.intrinsics = Intrinsics::default_for(frame.color.width, frame.color.height);
        log_warn("no intrinsics.json in " + root + "; assuming defaults for " +
                 std::to_string(frame.color.width) + "x" + std::to_string(frame.color.height));
        have_intrinsics = true;
      }

      const fs::path dpath = fdir / "depth" / (id + ".png");
      if (fs::exists(dpath)) {
        const ImageU16 d16 = read_png_u16(dpath.string());
        if (d16.width != frame.color.width || d16.height != frame.color.height)
          throw std::runtime_error("depth/colour dimension mismatch in frame " + id);
        DepthImage d(d16.width, d16.height, corpus.intrinsics);
        d.depth_mm = d16.pixels;
        frame.depth = std::move(d);
      }

      const fs::path hpath = fdir / "hha" / (id + ".png");
      if (fs::exists(hpath)) frame.hha = read_png_u8(hpath.string());

      const fs::path lpath = fdir / "labels" / (id + ".json");
      if (fs::exists(lpath)) {
        try {
          frame.polygons = polygons_from_json(read_json_file(lpath));
        } catch (const std::exception& e) {
          log_warn("malformed label file for frame " + id + ": " + e.what());
        }
      }

      const fs::path tpath = fdir / "truth" / (id + ".json");
      if (fs::exists(tpath)) {
        const json t = read_json_file(tpath);
        SynthTruth truth;
        const auto& g = t.at("gravity_cam");
        truth.gravity_cam = Eigen::Vector3d(g.at(0).get<double>(), g.at(1).get<double>(),
                                            g.at(2).get<double>());
        truth.ground_height_m = t.at("ground_height_m").get<double>();
        truth.pitch_deg = t.value("pitch_deg", 0.0);
        frame.truth = truth;
      }

      corpus.frames.push_back(std::move(frame));
    }
  }

  if (corpus.frames.empty()) throw std::runtime_error("empty corpus at " + root);
  return corpus;
}

void save_frame(const std::string& root, const LabeledFrame& frame) {
  const fs::path fdir = fs::path(root) / frame.floor_id;
  fs::create_directories(fdir / "rgb");
  write_png_u8((fdir / "rgb" / (frame.frame_id + ".png")).string(), frame.color);

  if (frame.depth) {
    fs::create_directories(fdir / "depth");
    ImageU16 d16(frame.depth->width, frame.depth->height, 1);
    d16.pixels = frame.depth->depth_mm;
    write_png_u16((fdir / "depth" / (frame.frame_id + ".png")).string(), d16);
  }
  if (frame.hha) {
    fs::create_directories(fdir / "hha");
    write_png_u8((fdir / "hha" / (frame.frame_id + ".png")).string(), *frame.hha);
  }
  fs::create_directories(fdir / "labels");
  write_json_file(fdir / "labels" / (frame.frame_id + ".json"),
                  polygons_to_json(frame.frame_id, frame.polygons));

  if (frame.truth) {
    fs::create_directories(fdir / "truth");
    write_json_file(fdir / "truth" / (frame.frame_id + ".json"),
                    json{{"schema_version", kSchemaVersion},
                         {"gravity_cam",
                          {frame.truth->gravity_cam.x(), frame.truth->gravity_cam.y(),
                           frame.truth->gravity_cam.z()}},
                         {"ground_height_m", frame.truth->ground_height_m},
                         {"pitch_deg", frame.truth->pitch_deg}});
  }
}

FoldPlan make_folds(const std::vector<LabeledFrame>& frames) {
  std::set<std::string> floors;
  for (const auto& f : frames) floors.insert(f.floor_id);
  if (floors.size() < 2)
    throw std::runtime_error("cross-validation needs >= 2 floors, corpus has " +
                             std::to_string(floors.size()));
  FoldPlan plan;
  for (const auto& test : floors) {
    FoldPlan::Fold fold;
    fold.test_floor = test;
    for (const auto& other : floors)
      if (other != test) fold.train_floors.push_back(other);
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

ImageU8 rasterize_labels(const LabeledFrame& frame) {
  return rasterize(frame.polygons, frame.color.width, frame.color.height);
}

std::vector<const LabeledFrame*> frames_of_floor(const Corpus& corpus, const std::string& floor,
                                                 bool invert) {
  std::vector<const LabeledFrame*> out;
  for (const auto& f : corpus.frames)
    if ((f.floor_id == floor) != invert) out.push_back(&f);
  return out;
}

}  // namespace hf
