#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dr/oracle.hpp"
#include "dr/dataset_io.hpp"
#include "dr/synth.hpp"

using namespace dr;

namespace {

const char* kDefaultRules =
    "pred chair/1 @types; pred cushion/1 @types; pred armRest/1 @types; pred bench/1 @types\n"
    "pred table/1 @types; pred leg/1 @types; pred cat/1 @types; pred tail/1 @types\n"
    "pred car/1 @types; pred wheel/1 @types; pred sofa/1 @types\n"
    "pred partOf/2\n"
    "forall x,y: chair(x) & partOf(y,x) -> cushion(y) | armRest(y)\n"
    "forall x,y: cushion(x) & partOf(x,y) -> chair(y) | bench(y)\n"
    "forall x: ~partOf(x,x)\n"
    "forall x,y: partOf(x,y) -> ~partOf(y,x)\n";

SynthConfig small_config() {
  SynthConfig c;
  c.n_labeled_scenes = 3;
  c.n_unlabeled_scenes = 4;
  c.n_test_scenes = 2;
  c.objects_per_scene_min = 3;
  c.objects_per_scene_max = 5;
  c.n_type_classes = 11;
  c.feature_dim = 4;
  c.relation_rule_strength = 1.0;
  c.feature_noise_sigma = 0.5;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("config parsing covers every key and rejects junk") {
  SynthConfig c = parse_synth_config(
      "n_labeled_scenes = 2\nn_unlabeled_scenes = 3\nn_test_scenes = 1\n"
      "objects_per_scene_min = 2\nobjects_per_scene_max = 4\n"
      "n_type_classes = 3\nfeature_dim = 5\ntype_prior = 0.5,0.25,0.25\n"
      "relation_rule_strength = 0.8\nfeature_noise_sigma = 0.3\nseed = 9\n"
      "# trailing comment\n");
  CHECK(c.n_labeled_scenes == 2);
  CHECK(c.type_prior == std::vector<double>{0.5, 0.25, 0.25});
  CHECK(c.relation_rule_strength == 0.8);
  CHECK(c.seed == 9);

  CHECK_THROWS_AS(parse_synth_config("bogus_key = 1"), InputError);
  CHECK_THROWS_AS(parse_synth_config("n_type_classes = 1"), InputError);
  CHECK_THROWS_AS(parse_synth_config("type_prior = 0.5,0.1"), InputError);
  CHECK_THROWS_AS(parse_synth_config("objects_per_scene_min = 5\nobjects_per_scene_max = 3"),
                  InputError);
  CHECK_THROWS_AS(parse_synth_config("relation_rule_strength = 1.5"), InputError);
}

TEST_CASE("zero scene counts give an empty dataset") {
  KnowledgeBase kb = parse_kb(kDefaultRules);
  SynthConfig c = small_config();
  c.n_labeled_scenes = c.n_unlabeled_scenes = c.n_test_scenes = 0;
  GeneratedDataset ds = generate(c, kb);
  CHECK(ds.labeled.empty());
  CHECK(ds.unlabeled.empty());
  CHECK(ds.test.empty());
}

TEST_CASE("full rule strength makes every labeled world satisfy the knowledge base") {
  KnowledgeBase kb = parse_kb(kDefaultRules);
  GeneratedDataset ds = generate(small_config(), kb);
  REQUIRE(ds.labeled.size() == 3);
  REQUIRE(ds.test.size() == 2);
  for (const Scene* scene : {&ds.labeled[0], &ds.labeled[1], &ds.labeled[2], &ds.test[0], &ds.test[1]}) {
    REQUIRE(scene->labeled());
    const HerbrandBase base(*scene, kb.signature);
    const World w = world_from_labels(*scene, base);
    for (const Formula& f : kb.formulas) CHECK(valuation(f, w, base, *scene) == 1);
  }
  for (const Scene& scene : ds.unlabeled) CHECK_FALSE(scene.labeled());
}

TEST_CASE("exactly one type atom holds per object") {
  KnowledgeBase kb = parse_kb(kDefaultRules);
  GeneratedDataset ds = generate(small_config(), kb);
  const auto groups = kb.groups();
  REQUIRE(groups.size() == 1);
  for (const Scene& scene : ds.labeled) {
    const HerbrandBase base(scene, kb.signature);
    const World w = world_from_labels(scene, base);
    for (int obj = 0; obj < scene.size(); ++obj) {
      int live = 0;
      for (int pred : groups[0].second) live += w.truth(base.index_of(pred, {&obj, 1})) ? 1 : 0;
      CHECK(live == 1);
    }
  }
}

TEST_CASE("class imbalance follows the prior") {
  KnowledgeBase kb = parse_kb("pred a/1 @types; pred b/1 @types\nforall x: a(x) | b(x)");
  SynthConfig c;
  c.n_labeled_scenes = 0;
  c.n_unlabeled_scenes = 0;
  c.n_test_scenes = 2000;
  c.objects_per_scene_min = 5;
  c.objects_per_scene_max = 5;
  c.n_type_classes = 2;
  c.feature_dim = 2;
  c.type_prior = {0.99, 0.01};
  c.seed = 11;
  GeneratedDataset ds = generate(c, kb);

  std::size_t minority = 0, total = 0;
  for (const Scene& scene : ds.test) {
    const HerbrandBase base(scene, kb.signature);
    const World w = world_from_labels(scene, base);
    for (int obj = 0; obj < scene.size(); ++obj) {
      ++total;
      if (w.truth(base.index_of("b", {&obj, 1}))) ++minority;
    }
  }
  REQUIRE(total == 10000);
  const double freq = static_cast<double>(minority) / static_cast<double>(total);
  CHECK(freq > 0.01 - 0.003);
  CHECK(freq < 0.01 + 0.003);
}

TEST_CASE("generation is deterministic per seed and differs across seeds") {
  KnowledgeBase kb = parse_kb(kDefaultRules);
  GeneratedDataset a = generate(small_config(), kb);
  GeneratedDataset b = generate(small_config(), kb);
  SynthConfig other = small_config();
  other.seed = 8;
  GeneratedDataset c = generate(other, kb);

  REQUIRE(a.labeled.size() == b.labeled.size());
  CHECK(a.labeled[0].objects == b.labeled[0].objects);
  CHECK(a.labeled[0].labels == b.labeled[0].labels);
  CHECK(a.unlabeled[1].objects == b.unlabeled[1].objects);
  CHECK(a.labeled[0].objects != c.labeled[0].objects);
}

TEST_CASE("dataset files round-trip") {
  KnowledgeBase kb = parse_kb(kDefaultRules);
  GeneratedDataset ds = generate(small_config(), kb);
  const auto dir = std::filesystem::temp_directory_path() / "dr_synth_test";
  std::filesystem::remove_all(dir);
  write_dataset(ds, dir.string());
  GeneratedDataset back = read_dataset(dir.string());

  CHECK(back.feature_dim == ds.feature_dim);
  REQUIRE(back.labeled.size() == ds.labeled.size());
  REQUIRE(back.unlabeled.size() == ds.unlabeled.size());
  REQUIRE(back.test.size() == ds.test.size());
  for (std::size_t i = 0; i < ds.labeled.size(); ++i) {
    CHECK(back.labeled[i].scene_id == ds.labeled[i].scene_id);
    CHECK(back.labeled[i].objects == ds.labeled[i].objects);
    CHECK(back.labeled[i].labels == ds.labeled[i].labels);
  }
  CHECK_FALSE(back.unlabeled[0].labeled());
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed dataset files name the offending line") {
  const auto dir = std::filesystem::temp_directory_path() / "dr_synth_bad";
  std::filesystem::create_directories(dir);
  const auto path = dir / "broken.jsonl";
  {
    std::ofstream os(path);
    os << "{\"m\": 3}\n";
    os << "{\"scene_id\": \"s0\", \"objects\": [[1.0, 2.0, 3.0]]}\n";
    os << "{\"scene_id\": \"s1\", \"objects\": [[1.0, 2.0]]}\n";  // wrong length
  }
  try {
    read_scenes(path.string());
    FAIL("expected a parse error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }

  {
    std::ofstream os(path);
    os << "{\"m\": 3}\n";
    os << "{\"scene_id\": \"s0\", \"objects\": [[1.0, 2.0, 3.0]\n";  // truncated JSON
  }
  CHECK_THROWS_AS(read_scenes(path.string()), InputError);

  {
    std::ofstream os(path);
    os << "{\"m\": 3}\n";
  }
  CHECK(read_scenes(path.string()).scenes.empty());  // header-only file
  std::filesystem::remove_all(dir);
}

TEST_CASE("generator validates its inputs") {
  KnowledgeBase no_group = parse_kb("pred p/1\nforall x: p(x)");
  CHECK_THROWS_AS(generate(small_config(), no_group), InputError);

  KnowledgeBase kb = parse_kb(kDefaultRules);
  SynthConfig wrong = small_config();
  wrong.n_type_classes = 5;  // group has 11 members
  CHECK_THROWS_AS(generate(wrong, kb), InputError);
}
