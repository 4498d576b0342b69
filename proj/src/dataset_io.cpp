#include "dr/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dr {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, int line, const std::string& what) {
  throw InputError(origin + ":" + std::to_string(line) + ": " + what);
}

json parse_line(const std::string& text, const std::string& origin, int line) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(origin, line, "malformed JSON record");
  return j;
}

}  // namespace

SceneFile read_scenes_stream(std::istream& is, const std::string& origin) {
  SceneFile file;
  std::string text;
  int line = 0;
  bool have_header = false;
  while (std::getline(is, text)) {
    ++line;
    if (text.empty()) continue;
    json j = parse_line(text, origin, line);
    if (!have_header) {
      if (!j.is_object() || !j.contains("m") || !j["m"].is_number_integer())
        fail(origin, line, "expected header line {\"m\": <feature dim>}");
      file.feature_dim = j["m"].get<int>();
      if (file.feature_dim <= 0) fail(origin, line, "feature dimension must be positive");
      have_header = true;
      continue;
    }
    Scene scene;
    if (!j.is_object() || !j.contains("scene_id") || !j["scene_id"].is_string())
      fail(origin, line, "scene record needs a string scene_id");
    scene.scene_id = j["scene_id"].get<std::string>();
    if (!j.contains("objects") || !j["objects"].is_array())
      fail(origin, line, "scene record needs an objects array");
    for (const json& obj : j["objects"]) {
      if (!obj.is_array() || static_cast<int>(obj.size()) != file.feature_dim)
        fail(origin, line, "object feature vector must have length " +
                               std::to_string(file.feature_dim));
      std::vector<double> feat;
      feat.reserve(obj.size());
      for (const json& x : obj) {
        if (!x.is_number()) fail(origin, line, "feature values must be numbers");
        feat.push_back(x.get<double>());
      }
      scene.objects.push_back(std::move(feat));
    }
    if (j.contains("labels")) {
      if (!j["labels"].is_array()) fail(origin, line, "labels must be an array");
      std::vector<LabeledAtom> labels;
      for (const json& rec : j["labels"]) {
        LabeledAtom a;
        if (!rec.is_object() || !rec.contains("pred") || !rec.contains("args") ||
            !rec.contains("value"))
          fail(origin, line, "label records need pred, args and value");
        a.pred = rec["pred"].get<std::string>();
        for (const json& arg : rec["args"]) a.args.push_back(arg.get<int>());
        a.value = rec["value"].get<int>();
        if (a.value != 0 && a.value != 1) fail(origin, line, "label value must be 0 or 1");
        labels.push_back(std::move(a));
      }
      scene.labels = std::move(labels);
    }
    file.scenes.push_back(std::move(scene));
  }
  if (!have_header) throw InputError(origin + ": missing dataset header line");
  return file;
}

SceneFile read_scenes(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read dataset file '" + path + "'");
  return read_scenes_stream(is, path);
}

void write_scenes_stream(const SceneFile& file, std::ostream& os) {
  os << json{{"m", file.feature_dim}}.dump() << '\n';
  for (const Scene& scene : file.scenes) {
    json j;
    j["scene_id"] = scene.scene_id;
    j["objects"] = json::array();
    for (const auto& obj : scene.objects) j["objects"].push_back(obj);
    if (scene.labeled()) {
      json labels = json::array();
      for (const LabeledAtom& a : *scene.labels)
        labels.push_back({{"pred", a.pred}, {"args", a.args}, {"value", a.value}});
      j["labels"] = std::move(labels);
    }
    os << j.dump() << '\n';
  }
}

void write_scenes(const SceneFile& file, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write dataset file '" + path + "'");
  write_scenes_stream(file, os);
  if (!os) throw InputError("failed writing dataset file '" + path + "'");
}

}  // namespace dr
