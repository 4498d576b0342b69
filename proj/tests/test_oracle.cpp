#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dr/oracle.hpp"
#include "support/example1.hpp"

using namespace dr;

TEST_CASE("world_probability multiplies the Bernoulli factors") {
  World w;
  SUBCASE("single atom") {
    w.bits = {1};
    const double degrees[] = {0.7};
    CHECK(world_probability(w, degrees) == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("two atoms, both true") {
    w.bits = {1, 1};
    const double degrees[] = {0.9, 0.95};
    CHECK(world_probability(w, degrees) == doctest::Approx(0.855).epsilon(1e-12));
  }
  SUBCASE("two atoms, one false") {
    w.bits = {1, 0};
    const double degrees[] = {0.9, 0.95};
    CHECK(world_probability(w, degrees) == doctest::Approx(0.045).epsilon(1e-12));
  }
  SUBCASE("size mismatch is an error") {
    w.bits = {1, 0};
    const double degrees[] = {0.9};
    CHECK_THROWS_AS(world_probability(w, degrees), InputError);
  }
}

TEST_CASE("world probabilities sum to one over the whole base") {
  Rng rng(5);
  for (int round = 0; round < 5; ++round) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<double> degrees(n);
    for (double& d : degrees) d = rng.uniform01();
    double total = 0.0;
    World w;
    w.bits.assign(n, 0);
    for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
      for (std::size_t i = 0; i < n; ++i) w.bits[i] = (mask >> i) & 1u;
      total += world_probability(w, degrees);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("valuation follows classical semantics on the chair rule") {
  drtest::Example1 ex = drtest::make_example1();
  const HerbrandBase base(ex.scene, ex.kb.signature);
  World w;
  w.bits.assign(base.size(), 0);
  const int a = 0, b = 1;
  const std::vector<int> ba = {b, a};
  w.bits[base.index_of("chair", {&a, 1})] = 1;
  w.bits[base.index_of("partOf", ba)] = 1;
  w.bits[base.index_of("cushion", {&b, 1})] = 1;
  CHECK(valuation(ex.kb.formulas[0], w, base, ex.scene) == 1);

  w.bits[base.index_of("cushion", {&b, 1})] = 0;
  CHECK(valuation(ex.kb.formulas[0], w, base, ex.scene) == 0);  // antecedent true at (a,b)

  KnowledgeBase irr = parse_kb("pred partOf/2\nforall x: ~partOf(x,x)");
  const HerbrandBase base2(ex.scene, irr.signature);
  World w2;
  w2.bits.assign(base2.size(), 0);
  CHECK(valuation(irr.formulas[0], w2, base2, ex.scene) == 1);
  const std::vector<int> aa = {a, a};
  w2.bits[base2.index_of("partOf", aa)] = 1;
  CHECK(valuation(irr.formulas[0], w2, base2, ex.scene) == 0);
}

TEST_CASE("eval coincides with valuation on crisp degrees") {
  KnowledgeBase kb = parse_kb(
      "pred p/1; pred q/1; pred r/2\n"
      "forall x,y: p(x) & r(x,y) -> q(y)\n"
      "forall x: ~p(x) | q(x)\n");
  Scene scene = drtest::one_hot_scene(2);
  Rng rng(9);
  for (int round = 0; round < 30; ++round) {
    std::map<std::string, std::vector<double>> table = {
        {"p", {double(rng.below(2)), double(rng.below(2))}},
        {"q", {double(rng.below(2)), double(rng.below(2))}},
    };
    Params params = drtest::craft_unary_params(kb, 2, table);
    // Crisp relation: r(i, j) = bit(i), saturated through the first object's
    // one-hot slot (a linear pair head cannot express arbitrary tables).
    const HeadLayout& r = params.head_by_key("r");
    for (int i = 0; i < 2; ++i)
      params.theta[r.w(0, i)] = rng.below(2) ? 1000.0 : -1000.0;

    const HerbrandBase base(scene, kb.signature);
    const std::vector<double> degrees = atom_degrees(base, scene, params);
    World w;
    w.bits.assign(base.size(), 0);
    for (std::size_t i = 0; i < base.size(); ++i) {
      REQUIRE((degrees[i] == 0.0 || degrees[i] == 1.0));
      w.bits[i] = degrees[i] == 1.0 ? 1 : 0;
    }
    for (const Formula& f : kb.formulas) {
      for (const Binding& b : enumerate_bindings(f, scene)) {
        const double fuzzy = eval(f, b, scene, params).value;
        const int crisp = valuation_at(f.body(), f, b, w, base);
        CHECK(fuzzy == static_cast<double>(crisp));
      }
    }
  }
}

TEST_CASE("exact probability: single-atom knowledge bases") {
  KnowledgeBase kb = parse_kb("pred p/1\nforall x: p(x)");
  Scene scene = drtest::one_hot_scene(1);
  Params params = drtest::craft_unary_params(kb, 1, {{"p", {0.7}}});
  CHECK(exact_kb_probability(kb, scene, params) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("exact probability: implication over one object matches PRL") {
  KnowledgeBase kb = parse_kb("pred p/1; pred q/1\nforall x: p(x) -> q(x)");
  Scene scene = drtest::one_hot_scene(1);
  Params params = drtest::craft_unary_params(kb, 1, {{"p", {0.855}}, {"q", {0.55}}});
  const double exact = exact_kb_probability(kb, scene, params);
  CHECK(exact == doctest::Approx(0.61525).epsilon(1e-12));
  CHECK(std::abs(exact - prl_kb_product(kb, scene, params)) < 1e-9);
}

TEST_CASE("exact probability: repeated atom shows the f^2 gap") {
  KnowledgeBase kb = parse_kb("pred p/1\nforall x: p(x) & p(x)");
  Scene scene = drtest::one_hot_scene(1);
  Params params = drtest::craft_unary_params(kb, 1, {{"p", {0.7}}});
  CHECK(exact_kb_probability(kb, scene, params) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(prl_kb_product(kb, scene, params) == doctest::Approx(0.49).epsilon(1e-12));

  const ExactnessReport report = check_prl_exactness(kb, scene, params);
  CHECK_FALSE(report.assumptions_hold);
  CHECK(report.exact == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(report.prl == doctest::Approx(0.49).epsilon(1e-12));
}

TEST_CASE("enumeration cap raises an input error") {
  KnowledgeBase kb = parse_kb("pred r/2\nforall x: ~r(x,x)");
  Scene scene = drtest::one_hot_scene(6);  // 36 atoms > 24
  ModelConfig mc;
  mc.feature_dim = 6;
  Params params = make_params(kb.signature, mc, 1);
  CHECK_THROWS_AS(exact_kb_probability(kb, scene, params), InputError);
  CHECK_NOTHROW(exact_kb_probability(kb, drtest::one_hot_scene(4, "ok"),
                                     drtest::craft_unary_params(kb, 4, {})));
}

TEST_CASE("adding a formula never increases the exact probability") {
  Rng rng(31);
  for (int round = 0; round < 20; ++round) {
    DisjointInstance inst = random_disjoint_instance(rng, 12);
    if (inst.kb.formulas.size() < 2) continue;
    KnowledgeBase partial = inst.kb;
    partial.formulas.pop_back();
    const double with_fewer = exact_kb_probability(partial, inst.scene, inst.params);
    const double with_all = exact_kb_probability(inst.kb, inst.scene, inst.params);
    CHECK(with_all <= with_fewer + 1e-12);
  }
}

TEST_CASE("serial reference agrees with the parallel kernel") {
  Rng rng(47);
  for (int round = 0; round < 25; ++round) {
    DisjointInstance inst = random_disjoint_instance(rng, 14);
    const double parallel = exact_kb_probability(inst.kb, inst.scene, inst.params);
    const double serial = exact_kb_probability_serial(inst.kb, inst.scene, inst.params);
    CHECK(parallel == doctest::Approx(serial).epsilon(1e-12));
  }
}

TEST_CASE("single-use premise holds on the generated instances and PRL is exact") {
  Rng rng(2024);
  for (int round = 0; round < 200; ++round) {
    DisjointInstance inst = random_disjoint_instance(rng, 16);
    const ExactnessReport report = check_prl_exactness(inst.kb, inst.scene, inst.params);
    REQUIRE(report.assumptions_hold);
    REQUIRE(report.abs_diff < 1e-9);
  }
}

TEST_CASE("sharing one atom across formulas violates the premise") {
  KnowledgeBase kb = parse_kb(
      "pred p/1; pred q/1; pred s/1\n"
      "forall x: p(x) -> q(x)\n"
      "forall x: p(x) | s(x)\n");
  Scene scene = drtest::one_hot_scene(1);
  Params params = drtest::craft_unary_params(kb, 1, {{"p", {0.3}}, {"q", {0.6}}, {"s", {0.5}}});
  const ExactnessReport report = check_prl_exactness(kb, scene, params);
  CHECK_FALSE(report.assumptions_hold);
  CHECK(report.abs_diff >= 0.0);  // report emitted, no equality asserted
}

TEST_CASE("quantified reuse across instantiations also violates the premise") {
  // forall x,y: p(x) & q(y) uses p(o) in several instantiations; the product
  // over bindings squares it, so PRL must diverge from the exact value.
  KnowledgeBase kb = parse_kb("pred p/1; pred q/1\nforall x,y: p(x) & q(y)");
  Scene scene = drtest::one_hot_scene(2);
  Params params = drtest::craft_unary_params(kb, 2, {{"p", {0.9, 0.8}}, {"q", {0.7, 0.6}}});
  const ExactnessReport report = check_prl_exactness(kb, scene, params);
  CHECK_FALSE(report.assumptions_hold);
  const double exact = 0.9 * 0.8 * 0.7 * 0.6;
  CHECK(report.exact == doctest::Approx(exact).epsilon(1e-9));
  CHECK(report.abs_diff > 1e-3);
}

TEST_CASE("exactness report serializes as one line") {
  drtest::Example1 ex = drtest::make_example1();
  const ExactnessReport report = check_prl_exactness(ex.kb, ex.scene, ex.params);
  const std::string line = report.to_line();
  CHECK(line.find('\n') == std::string::npos);
  CHECK(line.find("\"exact\":") != std::string::npos);
  CHECK(line.find("\"assumptions_hold\":") != std::string::npos);
}

TEST_CASE("labels round-trip through worlds") {
  drtest::Example1 ex = drtest::make_example1();
  const HerbrandBase base(ex.scene, ex.kb.signature);
  Rng rng(3);
  World w;
  w.bits.assign(base.size(), 0);
  for (auto& bit : w.bits) bit = static_cast<std::uint8_t>(rng.below(2));
  Scene labeled = ex.scene;
  labeled.labels = labels_from_world(w, base);
  CHECK(world_from_labels(labeled, base) == w);

  labeled.labels->pop_back();
  CHECK_THROWS_AS(world_from_labels(labeled, base), InputError);
}
