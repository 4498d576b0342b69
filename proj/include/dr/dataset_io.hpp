#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dr/grounding.hpp"

namespace dr {

/// Scene files are line-delimited JSON: a header line declaring the feature
/// dimension, then one scene object per line:
///   {"m": 8}
///   {"scene_id": "s0", "objects": [[...], ...], "labels": [{"pred": "chair",
///    "args": [0], "value": 1}, ...]}
/// The labels field is optional. Doubles round-trip exactly.
struct SceneFile {
  int feature_dim = 0;
  std::vector<Scene> scenes;
};

SceneFile read_scenes(const std::string& path);
SceneFile read_scenes_stream(std::istream& is, const std::string& origin);
void write_scenes(const SceneFile& file, const std::string& path);
void write_scenes_stream(const SceneFile& file, std::ostream& os);

}  // namespace dr
