#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dr/dataset_io.hpp"
#include "dr/diagnostics.hpp"
#include "dr/oracle.hpp"
#include "dr/parallel.hpp"
#include "dr/synth.hpp"
#include "dr/train.hpp"

namespace {

using namespace dr;

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

KnowledgeBase load_kb(const std::string& path) { return parse_kb(slurp(path)); }

Checkpoint load_matching_checkpoint(const std::string& path, const KnowledgeBase& kb) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.signature == kb.signature))
    throw InputError("checkpoint '" + path + "' was trained for a different signature");
  return ck;
}

void check_feature_dim(const SceneFile& file, const Params& params, const std::string& origin) {
  if (file.feature_dim != params.feature_dim)
    throw InputError(origin + " declares feature dimension " +
                     std::to_string(file.feature_dim) + " but the checkpoint expects " +
                     std::to_string(params.feature_dim));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

int run_validate(const std::string& kb_path) {
  KnowledgeBase kb;
  try {
    kb = parse_kb(slurp(kb_path));
  } catch (const ParseError& e) {
    std::cout << e.what() << '\n';
    return 2;
  }
  const auto violations = validate(kb);
  for (const std::string& v : violations) std::cout << v << '\n';
  return violations.empty() ? 0 : 2;
}

int run_eval(const std::string& kb_path, const std::string& data_path,
             const std::string& ckpt_path, const std::string& binding_text,
             const std::string& scene_filter) {
  const KnowledgeBase kb = load_kb(kb_path);
  const Checkpoint ck = load_matching_checkpoint(ckpt_path, kb);
  const SceneFile data = read_scenes(data_path);
  check_feature_dim(data, ck.params, data_path);

  std::vector<int> binding_objects;
  if (!binding_text.empty()) {
    std::istringstream is(binding_text);
    std::string piece;
    while (std::getline(is, piece, ','))
      binding_objects.push_back(std::stoi(piece));
  }

  for (std::size_t fi = 0; fi < kb.formulas.size(); ++fi) {
    const Formula& f = kb.formulas[fi];
    if (!binding_objects.empty()) {
      if (binding_objects.size() != f.quantified_vars().size()) continue;
      for (const Scene& scene : data.scenes) {
        if (!scene_filter.empty() && scene.scene_id != scene_filter) continue;
        for (int obj : binding_objects)
          if (obj < 0 || obj >= scene.size())
            throw InputError("binding object index out of range for scene '" + scene.scene_id +
                             "'");
        const EvalResult r = eval(f, Binding{binding_objects}, scene, ck.params);
        std::cout << "formula " << fi << " scene " << scene.scene_id << " binding ("
                  << binding_text << ") degree " << fmt(r.value) << '\n';
      }
    }
    const double loss = forall_loss(f, data.scenes, ck.params);
    std::cout << "formula " << fi << " loss " << fmt(loss) << '\n';
  }
  std::cout << "total " << fmt(kb_dr_loss(kb, data.scenes, ck.params)) << '\n';
  return 0;
}

int run_oracle_check(const std::string& kb_path, const std::string& data_path,
                     const std::string& ckpt_path) {
  const KnowledgeBase kb = load_kb(kb_path);
  const Checkpoint ck = load_matching_checkpoint(ckpt_path, kb);
  const SceneFile data = read_scenes(data_path);
  check_feature_dim(data, ck.params, data_path);

  bool ok = true;
  for (const Scene& scene : data.scenes) {
    const ExactnessReport report = check_prl_exactness(kb, scene, ck.params);
    const std::string inner = report.to_line();
    std::cout << "{\"scene\":\"" << scene.scene_id << "\"," << inner.substr(1) << '\n';
    if (report.assumptions_hold && report.abs_diff >= 1e-9) ok = false;
  }
  return ok ? 0 : 2;
}

int run_synth(const std::string& kb_path, const std::string& config_path,
              const std::string& out_dir, bool quiet) {
  const KnowledgeBase kb = load_kb(kb_path);
  const SynthConfig config = read_synth_config(config_path);
  const GeneratedDataset ds = generate(config, kb);
  write_dataset(ds, out_dir);
  if (!quiet)
    std::cout << "wrote " << ds.labeled.size() << " labeled, " << ds.unlabeled.size()
              << " unlabeled, " << ds.test.size() << " test scenes to " << out_dir << '\n';
  return 0;
}

int run_train(const std::string& kb_path, const std::string& data_dir,
              const std::string& config_path, const std::string& out_dir, bool quiet) {
  const KnowledgeBase kb = load_kb(kb_path);
  const TrainConfig config = read_train_config(config_path);
  const GeneratedDataset ds = read_dataset(data_dir);

  const TrainResult result =
      train(kb, ds.labeled, ds.unlabeled, ds.test, ds.feature_dim, config);

  std::filesystem::create_directories(out_dir);
  const auto out = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  save_checkpoint(result.params, kb.signature, out("checkpoint.bin"));
  emit_csv(result.metrics, out("metrics.csv"));
  if (!quiet && !result.metrics.empty()) {
    const DiagnosticsRecord& last = result.metrics.back();
    std::cout << "final iteration " << last.iteration << " type_accuracy "
              << fmt(last.type_accuracy) << " relation_auc " << fmt(last.relation_auc) << '\n';
  }
  return 0;
}

int run_diagnose(const std::string& kb_path, const std::string& data_dir,
                 const std::string& ckpt_path, const std::string& out_path, bool quiet) {
  const KnowledgeBase kb = load_kb(kb_path);
  const Checkpoint ck = load_matching_checkpoint(ckpt_path, kb);
  const SceneFile test =
      read_scenes((std::filesystem::path(data_dir) / "test.jsonl").string());
  check_feature_dim(test, ck.params, data_dir + "/test.jsonl");

  DiagnosticsRecord rec;
  rec.iteration = 0;
  const bool has_implication =
      std::any_of(kb.formulas.begin(), kb.formulas.end(),
                  [](const Formula& f) { return f.is_implication(); });
  if (has_implication && !test.scenes.empty()) {
    const auto [mp, mt] = avg_weights(kb, test.scenes, ck.params);
    rec.avg_d_mp = mp;
    rec.avg_d_mt = mt;
    const CrCuRatios r = cr_cu_ratios(kb, test.scenes, ck.params);
    rec.cr_mp = r.cr_mp;
    rec.cr_mt = r.cr_mt;
    rec.cu_mp = r.cu_mp;
    rec.cu_mt = r.cu_mt;
  }
  rec.supervised_loss = supervised_loss(test.scenes, kb, ck.params);
  rec.dr_loss = kb_dr_loss(kb, test.scenes, ck.params);
  const EvalMetrics m = evaluate(kb, ck.params, test.scenes);
  rec.type_accuracy = m.type_accuracy;
  rec.relation_auc = m.relation_auc;

  emit_csv({&rec, 1}, out_path);
  if (!quiet) std::cout << "wrote " << out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable reasoning over first-order knowledge bases"};
  app.require_subcommand(1);

  bool quiet = false;
  int threads = 0;
  app.add_flag("--quiet", quiet, "machine-readable output only");
  app.add_option("--threads", threads, "cap OpenMP fan-out (default: env DR_THREADS)");

  std::string kb_path, data_path, ckpt_path, config_path, out_path, binding_text, scene_filter;

  CLI::App* validate_cmd = app.add_subcommand("validate", "check a knowledge base file");
  validate_cmd->add_option("--kb", kb_path, "knowledge base file")->required();

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "print per-formula degrees and losses on a dataset");
  eval_cmd->add_option("--kb", kb_path)->required();
  eval_cmd->add_option("--data", data_path, "scene file (jsonl)")->required();
  eval_cmd->add_option("--checkpoint", ckpt_path)->required();
  eval_cmd->add_option("--binding", binding_text, "comma-separated object indices");
  eval_cmd->add_option("--scene", scene_filter, "restrict --binding output to one scene id");

  CLI::App* oracle_cmd =
      app.add_subcommand("oracle-check", "compare PRL against exact world enumeration");
  oracle_cmd->add_option("--kb", kb_path)->required();
  oracle_cmd->add_option("--data", data_path)->required();
  oracle_cmd->add_option("--checkpoint", ckpt_path)->required();

  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--kb", kb_path)->required();
  synth_cmd->add_option("--config", config_path)->required();
  synth_cmd->add_option("--out", out_path, "output directory")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--kb", kb_path)->required();
  train_cmd->add_option("--data", data_path, "dataset directory")->required();
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--out", out_path, "output directory")->required();

  CLI::App* diagnose_cmd =
      app.add_subcommand("diagnose", "reasoning-quality metrics for a checkpoint");
  diagnose_cmd->add_option("--kb", kb_path)->required();
  diagnose_cmd->add_option("--data", data_path, "dataset directory")->required();
  diagnose_cmd->add_option("--checkpoint", ckpt_path)->required();
  diagnose_cmd->add_option("--out", out_path, "output CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (threads == 0) {
    if (const char* env = std::getenv("DR_THREADS")) threads = std::atoi(env);
  }
  if (threads > 0) dr::par::set_threads(threads);

  try {
    if (validate_cmd->parsed()) return run_validate(kb_path);
    if (eval_cmd->parsed()) return run_eval(kb_path, data_path, ckpt_path, binding_text, scene_filter);
    if (oracle_cmd->parsed()) return run_oracle_check(kb_path, data_path, ckpt_path);
    if (synth_cmd->parsed()) return run_synth(kb_path, config_path, out_path, quiet);
    if (train_cmd->parsed()) return run_train(kb_path, data_path, config_path, out_path, quiet);
    if (diagnose_cmd->parsed())
      return run_diagnose(kb_path, data_path, ckpt_path, out_path, quiet);
  } catch (const dr::NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
