// Experiment harness CLI: run / eval / gradcheck / dumpdata.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sr4ir/config.hpp"
#include "sr4ir/gradcheck.hpp"
#include "sr4ir/rng.hpp"
#include "sr4ir/serialize.hpp"

namespace {

using namespace sr4ir;

struct CliArgs {
  std::string verb;
  std::string config_path;
  std::vector<std::string> sets;
  std::string output;
  std::string checkpoint;
  bool resume = false;
};

void usage() {
  std::fprintf(stderr,
               "usage: sr4ir <verb> [options]\n"
               "verbs:\n"
               "  run        execute the configured run matrix\n"
               "  eval       load a checkpoint and print test metrics\n"
               "  gradcheck  finite-difference check of every autodiff op\n"
               "  dumpdata   materialize the dataset as PPM files + manifest\n"
               "options:\n"
               "  --config PATH     flat key=value config file\n"
               "  --set key=value   override one config key (repeatable)\n"
               "  --output DIR      override output_dir\n"
               "  --checkpoint PATH checkpoint file (eval)\n"
               "  --resume          continue interrupted runs from checkpoints\n");
}

CliArgs parse_args(int argc, char** argv) {
  CliArgs a;
  check(argc >= 2, "missing verb; try --help");
  a.verb = argv[1];
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    const auto next = [&]() -> std::string {
      check(i + 1 < argc, "flag " + arg + " expects a value");
      return argv[++i];
    };
    if (arg == "--config")
      a.config_path = next();
    else if (arg == "--set")
      a.sets.push_back(next());
    else if (arg == "--output")
      a.output = next();
    else if (arg == "--checkpoint")
      a.checkpoint = next();
    else if (arg == "--resume")
      a.resume = true;
    else
      fail("unknown flag: " + arg);
  }
  return a;
}

ExperimentConfig resolve_config(const CliArgs& a) {
  ExperimentConfig cfg;
  if (!a.config_path.empty()) cfg = parse_config_file(a.config_path);
  for (const std::string& kv : a.sets) apply_override(cfg, kv);
  if (!a.output.empty()) cfg.output_dir = a.output;
  finalize_config(cfg);
  return cfg;
}

int cmd_run(const CliArgs& args) {
  ExperimentConfig cfg = resolve_config(args);
  run_experiment(cfg, args.resume, /*verbose=*/true);
  std::printf("[ok] wrote %s/summary.csv\n", cfg.output_dir.c_str());
  return 0;
}

int cmd_eval(const CliArgs& args) {
  check(!args.checkpoint.empty(), "eval: --checkpoint is required");
  ExperimentConfig cfg = resolve_config(args);
  check(cfg.scenarios.size() == 1,
        "eval: select exactly one scenario (e.g. --set run.scenarios=SR4IR)");
  const ScenarioKind scenario = cfg.scenarios[0];
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seeds[0];
  RunData data = load_run_data(cfg.dataset, tc.seed);
  TrainerState st = make_trainer(scenario, cfg.net, tc, cfg.dataset, data);
  check(load_checkpoint(args.checkpoint, st), "eval: checkpoint not found: " + args.checkpoint);
  Metrics m = evaluate(cfg.net, eval_input_for(scenario), st.sr, st.feat, st.head, data.test,
                       cfg.dataset.degradation.scale, tc.batch_size);
  std::printf("scenario: %s\n", scenario_name(scenario));
  std::printf("%s: %.6f\n",
              cfg.net.task_kind == TaskKind::classification ? "top1" : "miou", m.task_metric);
  std::printf("psnr: %.6g dB\n", m.psnr_db);
  std::printf("mean_task_loss: %.6g\n", m.mean_task_loss);
  return 0;
}

int cmd_gradcheck() {
  const auto results = run_gradcheck();
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-24s max_rel_err=%.3e  %s\n", r.op.c_str(), r.max_rel_err,
                r.pass ? "ok" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  std::printf("%s\n", all_pass ? "gradcheck: all ops ok" : "gradcheck: FAILURES");
  return all_pass ? 0 : 1;
}

int cmd_dumpdata(const CliArgs& args) {
  ExperimentConfig cfg = resolve_config(args);
  const std::string dir = cfg.output_dir + "/dataset";
  const int n = dump_dataset(cfg.dataset, dir, stream_seed(cfg.train.seed, "data"));
  std::printf("[ok] wrote %d samples under %s (manifest.txt lists them)\n", n, dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc >= 2 && (std::strcmp(argv[1], "--help") == 0 || std::strcmp(argv[1], "-h") == 0)) {
    usage();
    return 0;
  }
  try {
    const CliArgs args = parse_args(argc, argv);
    if (args.verb == "run") return cmd_run(args);
    if (args.verb == "eval") return cmd_eval(args);
    if (args.verb == "gradcheck") return cmd_gradcheck();
    if (args.verb == "dumpdata") return cmd_dumpdata(args);
    usage();
    fail("unknown verb: " + args.verb);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
