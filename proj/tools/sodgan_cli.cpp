// sodgan command-line driver: orchestrates corpus generation, the training
// stages, synthesis, downstream training, evaluation, analysis, sweeps and
// ablations. Errors exit nonzero with a machine-readable JSON record on
// stderr (2 config, 3 dependency, 4 filter-too-strict, 5 I/O).

#include <CLI11.hpp>
#include <iostream>

#include "sodgan/cli_runner.hpp"

using namespace sodgan;

namespace {

struct GlobalArgs {
  std::string config_file;
  std::vector<std::string> overrides;
};

json load_user_config(const GlobalArgs& args) {
  if (args.config_file.empty()) return json::object();
  require(fs::exists(args.config_file), ErrKind::config,
          "config file not found: " + args.config_file);
  try {
    return json::parse(read_text_file(args.config_file));
  } catch (const json::exception& e) {
    fail(ErrKind::config, std::string("config file is not valid JSON: ") + e.what());
  }
}

void add_global_flags(CLI::App* cmd, GlobalArgs& args) {
  cmd->add_option("--config", args.config_file, "JSON config file (merged over defaults)");
  cmd->add_option("--set", args.overrides,
                  "dotted-path override, e.g. --set gan.epochs=20 (repeatable)");
}

int report_error(const Error& e) {
  json rec{{"error",
            {{"kind", err_kind_name(e.kind())}, {"message", e.what()}, {"exit_code", e.exit_code()}}}};
  if (const auto* se = dynamic_cast<const SynthesisError*>(&e))
    rec["error"]["acceptance_rate"] = se->acceptance_rate;
  std::cerr << rec.dump() << std::endl;
  return e.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sodgan: synthetic image-mask pairs for salient object detection"};
  app.require_subcommand(1);

  GlobalArgs args;
  std::string axis, values_csv, preds_dir, analyze_data = "corpus";
  int workers = 0;

  auto* c_corpus = app.add_subcommand("corpus", "generate the labeled toy corpus");
  auto* c_gan = app.add_subcommand("train-gan", "train the conditional image generator");
  auto* c_den = app.add_subcommand("train-den", "train the embedding network and few-shot set");
  auto* c_mg = app.add_subcommand("train-maskgen", "train the few-shot mask branch (+ D_q)");
  auto* c_dq = app.add_subcommand("train-dq", "train the quality discriminator");
  auto* c_synth = app.add_subcommand("synthesize", "generate the filtered synthetic dataset");
  auto* c_sod = app.add_subcommand("train-sod", "train the downstream saliency network");
  auto* c_eval = app.add_subcommand("eval", "evaluate predictions on the held-out split");
  auto* c_analyze = app.add_subcommand("analyze", "dataset statistics (center bias, size, ...)");
  auto* c_sweep = app.add_subcommand("sweep", "sweep data amount or truncation");
  auto* c_ablate = app.add_subcommand("ablate", "component ablations");

  for (auto* cmd : {c_corpus, c_gan, c_den, c_mg, c_dq, c_synth, c_sod, c_eval, c_analyze, c_sweep,
                    c_ablate})
    add_global_flags(cmd, args);

  c_synth->add_option("--workers", workers, "parallel synthesis workers (0 = config)");
  c_eval->add_option("--preds", preds_dir, "directory of prediction rasters {id}.png");
  c_analyze->add_option("--data", analyze_data, "corpus or synth")->capture_default_str();
  c_sweep->add_option("--axis", axis, "data-amount or lambda")->required();
  c_sweep->add_option("--values", values_csv, "comma-separated axis values")->required();
  c_ablate->add_option("--axis", axis, "den-vs-vae, oaff, head or dq")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    cli::Context ctx = cli::make_context(load_user_config(args), args.overrides);
    if (workers > 0) ctx.cfg["synth"]["workers"] = workers;

    if (c_corpus->parsed()) {
      cli::cmd_corpus(ctx);
    } else if (c_gan->parsed()) {
      cli::cmd_train_gan(ctx);
    } else if (c_den->parsed()) {
      cli::cmd_train_den(ctx);
    } else if (c_mg->parsed()) {
      cli::cmd_train_maskgen(ctx);
    } else if (c_dq->parsed()) {
      cli::cmd_train_dq(ctx);
    } else if (c_synth->parsed()) {
      cli::cmd_synthesize(ctx);
    } else if (c_sod->parsed()) {
      cli::cmd_train_sod(ctx);
    } else if (c_eval->parsed()) {
      const auto r = cli::cmd_eval(ctx, preds_dir);
      std::cout << "mae=" << fixed6(r.report.mae) << " max_f=" << fixed6(r.report.max_f)
                << " mean_f=" << fixed6(r.report.mean_f)
                << " s_measure=" << fixed6(r.report.s_measure) << " auc=" << fixed6(r.report.auc)
                << " mean_iou=" << fixed6(r.mean_iou) << " n=" << r.count << std::endl;
    } else if (c_analyze->parsed()) {
      cli::cmd_analyze(ctx, analyze_data);
    } else if (c_sweep->parsed()) {
      std::vector<std::string> values;
      std::istringstream in(values_csv);
      std::string v;
      while (std::getline(in, v, ','))
        if (!v.empty()) values.push_back(v);
      cli::cmd_sweep(ctx, axis, values);
    } else if (c_ablate->parsed()) {
      cli::cmd_ablate(ctx, axis);
    }
  } catch (const Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"kind", "internal"}, {"message", e.what()}, {"exit_code", 1}}}}.dump()
              << std::endl;
    return 1;
  }
  return 0;
}
