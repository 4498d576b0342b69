// Compares the OpenMP kernels against their serial reference implementations
// on representative workloads: exact world enumeration and the full-grounding
// loss sweep.

#include <chrono>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "dr/oracle.hpp"
#include "dr/parallel.hpp"
#include "dr/synth.hpp"

using namespace dr;

namespace {

double time_ms(const std::function<double()>& fn, double* result) {
  const auto start = std::chrono::steady_clock::now();
  *result = fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

void report(const char* name, double serial_ms, double parallel_ms, double serial_value,
            double parallel_value) {
  std::printf("%-24s serial %10.2f ms   parallel %10.2f ms   speedup %5.2fx   |diff| %.3g\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms,
              std::abs(serial_value - parallel_value));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  int atoms = 22;
  int scenes = 400;
  int threads = 0;
  app.add_option("--atoms", atoms, "Herbrand base size for the enumeration benchmark");
  app.add_option("--scenes", scenes, "unlabeled scene count for the sweep benchmark");
  app.add_option("--threads", threads, "OpenMP thread cap");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) par::set_threads(threads);

  std::printf("threads: %d\n", par::max_threads());

  {
    // One scene whose base has exactly `atoms` unary atoms.
    std::string source = "pred q0/1\nforall x: q0(x)\n";
    KnowledgeBase kb = parse_kb(source);
    Scene scene;
    scene.scene_id = "bench";
    for (int i = 0; i < atoms; ++i) scene.objects.push_back({1.0, 0.0});
    ModelConfig mc;
    mc.feature_dim = 2;
    mc.unary_hidden = 2;
    Params params = make_params(kb.signature, mc, 1);

    double serial_value = 0.0, parallel_value = 0.0;
    const double serial_ms = time_ms(
        [&] {
          return exact_kb_probability_serial(kb, scene, params,
                                             static_cast<std::size_t>(atoms));
        },
        &serial_value);
    const double parallel_ms = time_ms(
        [&] {
          return exact_kb_probability(kb, scene, params, static_cast<std::size_t>(atoms));
        },
        &parallel_value);
    report("world enumeration", serial_ms, parallel_ms, serial_value, parallel_value);
  }

  {
    KnowledgeBase kb = parse_kb(
        "pred a/1 @types; pred b/1 @types; pred c/1 @types\n"
        "pred partOf/2\n"
        "forall x,y: a(x) & partOf(y,x) -> b(y) | c(y)\n"
        "forall x,y: b(x) & partOf(x,y) -> a(y) | c(y)\n"
        "forall x: ~partOf(x,x)\n"
        "forall x,y: partOf(x,y) -> ~partOf(y,x)\n");
    SynthConfig sc;
    sc.n_labeled_scenes = 0;
    sc.n_unlabeled_scenes = scenes;
    sc.n_test_scenes = 0;
    sc.objects_per_scene_min = 6;
    sc.objects_per_scene_max = 10;
    sc.n_type_classes = 3;
    sc.feature_dim = 8;
    sc.seed = 1;
    GeneratedDataset ds = generate(sc, kb);
    ModelConfig mc;
    mc.feature_dim = 8;
    Params params = make_params(kb.signature, mc, 2);

    double serial_value = 0.0, parallel_value = 0.0;
    const double serial_ms =
        time_ms([&] { return kb_dr_loss_serial(kb, ds.unlabeled, params); }, &serial_value);
    const double parallel_ms =
        time_ms([&] { return kb_dr_loss(kb, ds.unlabeled, params); }, &parallel_value);
    report("grounding loss sweep", serial_ms, parallel_ms, serial_value, parallel_value);
  }

  return 0;
}
