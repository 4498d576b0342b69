#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dr/model.hpp"
#include "dr/rng.hpp"
#include "support/example1.hpp"

using namespace dr;

TEST_CASE("tape: parameter passthrough, constants, accumulation") {
  GradTape tape;
  Var x = tape.param(1, 3.0);

  SUBCASE("passthrough gradient is a unit vector") {
    auto g = tape.gradient(x, 3);
    CHECK(g == std::vector<double>{0.0, 1.0, 0.0});
  }

  SUBCASE("constant output gives the zero vector") {
    Var c = tape.constant(5.0);
    auto g = tape.gradient(c, 3);
    CHECK(g == std::vector<double>{0.0, 0.0, 0.0});
  }

  SUBCASE("reuse of a parameter accumulates") {
    Var y = x * x + 2.0 * x;  // d/dx = 2x + 2 = 8
    auto g = tape.gradient(y, 2);
    CHECK(g[1] == doctest::Approx(8.0).epsilon(1e-12));
  }

  SUBCASE("a value from another tape is rejected") {
    GradTape other;
    Var z = other.param(0, 1.0);
    CHECK_THROWS_AS(tape.gradient(z, 1), Error);
  }
}

TEST_CASE("tape: elementary derivatives") {
  GradTape tape;
  Var x = tape.param(0, 0.7);
  Var y = tape.param(1, -1.3);
  Var out = log(exp(x) + 1.0) * tanh(y) + x / y;
  auto g = tape.gradient(out, 2);

  const double eps = 1e-6;
  auto f = [](double a, double b) {
    return std::log(std::exp(a) + 1.0) * std::tanh(b) + a / b;
  };
  CHECK(g[0] == doctest::Approx((f(0.7 + eps, -1.3) - f(0.7 - eps, -1.3)) / (2 * eps)).epsilon(1e-6));
  CHECK(g[1] == doctest::Approx((f(0.7, -1.3 + eps) - f(0.7, -1.3 - eps)) / (2 * eps)).epsilon(1e-6));
}

TEST_CASE("clamp cuts gradients outside the window") {
  GradTape tape;
  Var x = tape.param(0, 1e-9);
  Var y = clamp_min(x, 1e-7);
  CHECK(y.v == 1e-7);
  CHECK(tape.gradient(y, 1)[0] == 0.0);
  Var z = clamp_min(tape.param(0, 0.5), 1e-7);
  CHECK(tape.gradient(z, 1)[0] == 1.0);
}

namespace {

std::vector<PredicateSig> small_signature() {
  return {{"ta", 1, "types"}, {"tb", 1, "types"}, {"tc", 1, "types"}, {"u", 1, ""}, {"r", 2, ""}};
}

Scene random_scene(Rng& rng, int n_objects, int m) {
  Scene s;
  s.scene_id = "rand";
  for (int i = 0; i < n_objects; ++i) {
    std::vector<double> feat(static_cast<std::size_t>(m));
    for (double& x : feat) x = rng.normal();
    s.objects.push_back(std::move(feat));
  }
  return s;
}

}  // namespace

TEST_CASE("predict: zero weights give sigmoid(0) and uniform softmax") {
  ModelConfig config;
  config.feature_dim = 3;
  Params params = make_params(small_signature(), config, 1);
  std::fill(params.theta.begin(), params.theta.end(), 0.0);

  Rng rng(5);
  Scene scene = random_scene(rng, 2, 3);
  const int obj = 0;
  CHECK(predict(params, {"u", 1, ""}, scene, {&obj, 1}) == 0.5);
  const std::vector<int> pair = {0, 1};
  CHECK(predict(params, {"r", 2, ""}, scene, pair) == 0.5);

  double sum = 0.0;
  for (const char* name : {"ta", "tb", "tc"}) {
    const double p = predict(params, {name, 1, "types"}, scene, {&obj, 1});
    CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("predict: bare linear unit reproduces direct arithmetic") {
  // w = [1, -1], b = 0, input [2, 1] -> sigmoid(1)
  std::vector<PredicateSig> sig = {{"p", 1, ""}};
  ModelConfig config;
  config.feature_dim = 2;
  config.unary_hidden = 0;
  Params params = make_params(sig, config, 0);
  const HeadLayout& h = params.head_by_key("p");
  params.theta[h.w(0, 0)] = 1.0;
  params.theta[h.w(0, 1)] = -1.0;
  params.theta[h.b(0)] = 0.0;

  Scene scene;
  scene.scene_id = "s";
  scene.objects = {{2.0, 1.0}};
  const int obj = 0;
  CHECK(predict(params, sig[0], scene, {&obj, 1}) ==
        doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("predict: dimension mismatches are rejected") {
  ModelConfig config;
  config.feature_dim = 3;
  Params params = make_params(small_signature(), config, 1);
  Rng rng(5);
  Scene scene = random_scene(rng, 2, 3);
  const std::vector<int> pair = {0, 1};
  CHECK_THROWS_AS(predict(params, {"u", 1, ""}, scene, pair), InputError);
  Scene bad = scene;
  bad.objects[0].pop_back();
  const int obj = 0;
  CHECK_THROWS_AS(predict(params, {"u", 1, ""}, bad, {&obj, 1}), InputError);
}

TEST_CASE("taped and untaped predict agree bitwise; groups stay normalized") {
  ModelConfig config;
  config.feature_dim = 4;
  auto sig = small_signature();
  Rng rng(17);
  for (int round = 0; round < 50; ++round) {
    Params params = make_params(sig, config, rng.next_u64());
    Scene scene = random_scene(rng, 3, 4);
    const int obj = static_cast<int>(rng.below(3));
    double sum = 0.0;
    for (const auto& pred : sig) {
      std::vector<int> objects{obj};
      if (pred.arity == 2) objects.push_back(static_cast<int>(rng.below(3)));
      const double plain = predict(params, pred, scene, objects);
      GradTape tape;
      const Var taped = predict(params, pred, scene, objects, tape);
      CHECK(plain == taped.v);
      CHECK(plain >= 0.0);
      CHECK(plain <= 1.0);
      if (pred.grouped()) sum += plain;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gradient matches central finite differences on 100 random draws") {
  ModelConfig config;
  config.feature_dim = 3;
  config.unary_hidden = 2;
  config.relation_hidden = 2;
  config.group_hidden = 3;
  auto sig = small_signature();
  Rng rng(99);
  double worst = 0.0;
  for (int round = 0; round < 100; ++round) {
    Params params = make_params(sig, config, rng.next_u64());
    Scene scene = random_scene(rng, 2, 3);
    const PredicateSig& pred = sig[rng.below(sig.size())];
    std::vector<int> objects{static_cast<int>(rng.below(2))};
    if (pred.arity == 2) objects.push_back(static_cast<int>(rng.below(2)));

    GradTape tape;
    const Var out = predict(params, pred, scene, objects, tape);
    const std::vector<double> grad = tape.gradient(out, params.size());

    const double eps = 1e-5;
    double scale = 0.0;
    for (double g : grad) scale = std::max(scale, std::abs(g));
    for (std::size_t j = 0; j < params.size(); ++j) {
      Params shifted = params;
      shifted.theta[j] += eps;
      const double up = predict(shifted, pred, scene, objects);
      shifted.theta[j] -= 2 * eps;
      const double down = predict(shifted, pred, scene, objects);
      const double fd = (up - down) / (2 * eps);
      worst = std::max(worst, std::abs(fd - grad[j]) / std::max(scale, 1e-8));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("predict is continuous in theta") {
  ModelConfig config;
  config.feature_dim = 3;
  auto sig = small_signature();
  Params params = make_params(sig, config, 3);
  Rng rng(4);
  Scene scene = random_scene(rng, 2, 3);
  const int obj = 0;
  const double base = predict(params, sig[3], scene, {&obj, 1});
  double prev_gap = 1.0;
  for (double delta : {1e-2, 1e-4, 1e-6}) {
    Params shifted = params;
    for (double& t : shifted.theta) t += delta;
    const double gap = std::abs(predict(shifted, sig[3], scene, {&obj, 1}) - base);
    CHECK(gap <= prev_gap + 1e-15);
    prev_gap = gap;
  }
  CHECK(prev_gap < 1e-4);
}

TEST_CASE("group_log_prob matches log of the softmax coordinate") {
  ModelConfig config;
  config.feature_dim = 3;
  auto sig = small_signature();
  Params params = make_params(sig, config, 11);
  Rng rng(12);
  Scene scene = random_scene(rng, 2, 3);
  const auto probs = group_predict(params, "types", scene, 1);
  REQUIRE(probs.size() == 3);
  for (int m = 0; m < 3; ++m)
    CHECK(group_log_prob(params, "types", scene, 1, m) ==
          doctest::Approx(std::log(probs[static_cast<std::size_t>(m)])).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  ModelConfig config;
  config.feature_dim = 5;
  auto sig = small_signature();
  Params params = make_params(sig, config, 21);

  const std::string path = (std::filesystem::temp_directory_path() / "dr_ckpt_test.bin").string();
  save_checkpoint(params, sig, path);
  Checkpoint ck = load_checkpoint(path);

  CHECK(ck.signature == sig);
  CHECK(ck.params.feature_dim == params.feature_dim);
  REQUIRE(ck.params.theta.size() == params.theta.size());
  for (std::size_t j = 0; j < params.theta.size(); ++j) {
    const double a = params.theta[j];
    const double b = ck.params.theta[j];
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  }
  REQUIRE(ck.params.heads.size() == params.heads.size());
  for (std::size_t i = 0; i < params.heads.size(); ++i) {
    CHECK(ck.params.heads[i].key == params.heads[i].key);
    CHECK(ck.params.heads[i].offset == params.heads[i].offset);
    CHECK(ck.params.heads[i].hidden == params.heads[i].hidden);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects junk") {
  const std::string path = (std::filesystem::temp_directory_path() / "dr_junk.bin").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(path), InputError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.bin"), InputError);
  std::filesystem::remove(path);
}

TEST_CASE("example 1 params reproduce the degree table exactly") {
  drtest::Example1 ex = drtest::make_example1();
  for (const auto& [name, values] : ex.unary) {
    for (int obj = 0; obj < 2; ++obj) {
      const double expected = obj == 0 ? values.first : values.second;
      CHECK(predict(ex.params, {name, 1, ""}, ex.scene, {&obj, 1}) ==
            doctest::Approx(expected).epsilon(1e-12));
    }
  }
  for (int first = 0; first < 2; ++first)
    for (int second = 0; second < 2; ++second) {
      const std::vector<int> objects = {first, second};
      CHECK(predict(ex.params, {"partOf", 2, ""}, ex.scene, objects) ==
            doctest::Approx(ex.part_of[first][second]).epsilon(1e-12));
    }
}
