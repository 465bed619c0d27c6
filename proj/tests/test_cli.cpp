#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

#include "sodgan/common.hpp"
#include "sodgan/types.hpp"

#include <json.hpp>

using namespace sodgan;
using nlohmann::json;

// End-to-end pipeline exercise at micro scale (16x16, 3 classes) through the
// real binary: artifact layout, exit codes, reproducibility, sweep/ablate
// row contracts.

namespace {

struct CmdResult {
  int code = -1;
  std::string out, err;
};

CmdResult run_cli(const fs::path& home, const std::string& args) {
  static int counter = 0;
  const fs::path out = home / ("cli_out_" + std::to_string(counter) + ".txt");
  const fs::path err = home / ("cli_err_" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = "SODGAN_HOME=" + home.string() + " " + SODGAN_CLI_PATH + " " + args +
                          " 1>" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = fs::exists(out) ? read_text_file(out) : "";
  r.err = fs::exists(err) ? read_text_file(err) : "";
  return r;
}

fs::path fresh_home(const std::string& name) {
  const fs::path home = fs::temp_directory_path() / name;
  fs::remove_all(home);
  fs::create_directories(home);
  return home;
}

void write_micro_config(const fs::path& home) {
  const json cfg{
      {"image_size", 16},
      {"class_count", 3},
      {"latent_dim", 8},
      {"threads", 2},
      {"corpus", {{"n_per_class", 6}, {"seed", 5}}},
      {"gan", {{"base_channels", 16}, {"emb_dim", 4}, {"epochs", 4}, {"batch", 6}}},
      {"schedule", {{"T", 8}}},
      {"den", {{"warmup_steps", 30}, {"epochs", 1}, {"batch", 6}, {"eval_cap", 4}}},
      {"maskgen", {{"reduced_channels", 4}, {"epochs", 8}}},
      {"dq", {{"epochs", 1}, {"steps_per_epoch", 8}, {"batch", 4}}},
      {"policy", {{"tau", 0.05}}},
      {"synth", {{"n_keep", 9}, {"workers", 2}}},
      {"sod", {{"epochs", 1}, {"batch", 4}, {"base", 8}}},
      {"eval", {{"cap", 6}}},
  };
  write_text_file(home / "config.json", cfg.dump(1));
}

std::string cfg_arg(const fs::path& home) { return "--config " + (home / "config.json").string(); }

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("cli pipeline end to end at micro scale", "[cli]") {
  const fs::path home = fresh_home("sodgan_cli_e2e");
  write_micro_config(home);
  const std::string cfg = cfg_arg(home);

  SECTION("config errors name the offending key and exit 2") {
    write_text_file(home / "bad.json", R"({"gan": {"epoch": 3}})");
    const auto r = run_cli(home, "corpus --config " + (home / "bad.json").string());
    REQUIRE(r.code == 2);
    REQUIRE(r.err.find("gan.epoch") != std::string::npos);

    const auto r2 = run_cli(home, "corpus " + cfg + " --set gan.nope=1");
    REQUIRE(r2.code == 2);
    const auto r3 = run_cli(home, "corpus " + cfg + " --set gan.epochs=oops");
    REQUIRE(r3.code == 2);
  }

  SECTION("missing upstream checkpoints exit 3 before writing artifacts") {
    const auto r = run_cli(home, "train-den " + cfg);
    REQUIRE(r.code == 3);
    REQUIRE(r.err.find("error") != std::string::npos);
    REQUIRE_FALSE(fs::exists(home / "models" / "den.bin"));
    REQUIRE_FALSE(fs::exists(home / "runs" / "train-den.json"));
  }

  SECTION("full pipeline") {
    REQUIRE(run_cli(home, "corpus " + cfg).code == 0);
    REQUIRE(fs::exists(home / "corpus" / "corpus.jsonl"));
    REQUIRE(fs::exists(home / "runs" / "corpus.json"));
    // resolved config materializes every default
    const auto run_rec = json::parse(read_text_file(home / "runs" / "corpus.json"));
    REQUIRE(run_rec.at("config").at("eval").at("beta2").get<double>() == 0.3);
    REQUIRE(run_rec.at("config").at("image_size").get<int>() == 16);

    REQUIRE(run_cli(home, "train-gan " + cfg).code == 0);
    REQUIRE(fs::exists(home / "models" / "gan.bin"));
    REQUIRE(fs::exists(home / "models" / "gan_d.bin"));

    REQUIRE(run_cli(home, "train-den " + cfg).code == 0);
    REQUIRE(fs::exists(home / "models" / "den.bin"));
    REQUIRE(fs::exists(home / "models" / "fewshot.jsonl"));

    REQUIRE(run_cli(home, "train-maskgen " + cfg).code == 0);
    REQUIRE(fs::exists(home / "models" / "maskgen.bin"));
    REQUIRE(fs::exists(home / "models" / "dq.bin"));

    REQUIRE(run_cli(home, "train-dq " + cfg).code == 0);

    REQUIRE(run_cli(home, "synthesize " + cfg).code == 0);
    REQUIRE(fs::exists(home / "synth" / "manifest.jsonl"));
    const std::string manifest = read_text_file(home / "synth" / "manifest.jsonl");

    // reproducibility: wipe and regenerate with 1 worker
    fs::remove_all(home / "synth");
    REQUIRE(run_cli(home, "synthesize " + cfg + " --workers 1").code == 0);
    REQUIRE(read_text_file(home / "synth" / "manifest.jsonl") == manifest);

    REQUIRE(run_cli(home, "train-sod " + cfg).code == 0);
    REQUIRE(fs::exists(home / "models" / "sod.bin"));

    const auto ev = run_cli(home, "eval " + cfg);
    REQUIRE(ev.code == 0);
    REQUIRE(fs::exists(home / "eval" / "report.json"));
    REQUIRE(fs::exists(home / "eval" / "pr_curve.csv"));
    const auto report = json::parse(read_text_file(home / "eval" / "report.json"));
    REQUIRE(report.at("mae").get<double>() >= 0.0);
    REQUIRE(report.at("mae").get<double>() <= 1.0);

    // predictions copied from ground truth -> perfect scores
    const fs::path preds = home / "gt_preds";
    fs::create_directories(preds);
    std::istringstream jsonl(read_text_file(home / "corpus" / "corpus.jsonl"));
    std::string line;
    while (std::getline(jsonl, line)) {
      if (line.empty()) continue;
      const auto rec = json::parse(line);
      if (rec.at("split").get<std::string>() != "test") continue;
      const std::string fid = entry_file_id(rec.at("id").get<int>());
      fs::copy_file(home / "corpus" / "masks" / (fid + ".png"), preds / (fid + ".png"));
    }
    const auto evp = run_cli(home, "eval " + cfg + " --preds " + preds.string());
    REQUIRE(evp.code == 0);
    const auto perfect = json::parse(read_text_file(home / "eval" / "report.json"));
    REQUIRE(perfect.at("mae").get<double>() == 0.0);
    REQUIRE(perfect.at("max_f").get<double>() == 1.0);

    REQUIRE(run_cli(home, "analyze " + cfg + " --data corpus").code == 0);
    REQUIRE(fs::exists(home / "analysis-corpus" / "stats.json"));
    REQUIRE(fs::exists(home / "analysis-corpus" / "center_bias.png"));
    REQUIRE(run_cli(home, "analyze " + cfg + " --data synth").code == 0);
    REQUIRE(fs::exists(home / "analysis-synth" / "stats.json"));

    // sweep: one row per lambda value
    const auto sw = run_cli(home,
                            "sweep " + cfg +
                                " --axis lambda --values 0.2,0.4,0.6,0.8,1.0"
                                " --set synth.n_keep=6 --set sod.epochs=1");
    REQUIRE(sw.code == 0);
    const auto sweep_rows = json::parse(read_text_file(home / "sweep-lambda.json"));
    REQUIRE(sweep_rows.size() == 5);
    REQUIRE(count_lines(read_text_file(home / "sweep-lambda.csv")) == 6);  // header + 5

    const auto swd =
        run_cli(home, "sweep " + cfg + " --axis data-amount --values 4,8 --set sod.epochs=1");
    REQUIRE(swd.code == 0);
    REQUIRE(json::parse(read_text_file(home / "sweep-data-amount.json")).size() == 2);

    // ablations: row-per-variant contracts
    const auto ah = run_cli(home, "ablate " + cfg + " --axis head --set maskgen.epochs=4");
    REQUIRE(ah.code == 0);
    const auto head_rows = json::parse(read_text_file(home / "ablate-head.json"));
    REQUIRE(head_rows.size() == 6);
    std::set<std::string> heads;
    for (const auto& r : head_rows) heads.insert(r.at("value").get<std::string>());
    REQUIRE(heads == std::set<std::string>{"cnn-s", "cnn-m", "cnn-l", "mlp-s", "mlp-m", "mlp-l"});

    const auto ao = run_cli(home, "ablate " + cfg + " --axis oaff --set maskgen.epochs=4");
    REQUIRE(ao.code == 0);
    REQUIRE(json::parse(read_text_file(home / "ablate-oaff.json")).size() == 3);

    const auto aq = run_cli(home,
                            "ablate " + cfg + " --axis dq --set synth.n_keep=6 --set sod.epochs=1");
    REQUIRE(aq.code == 0);
    REQUIRE(json::parse(read_text_file(home / "ablate-dq.json")).size() == 2);

    const auto av = run_cli(home, "ablate " + cfg + " --axis den-vs-vae --set maskgen.epochs=4");
    REQUIRE(av.code == 0);
    REQUIRE(json::parse(read_text_file(home / "ablate-den-vs-vae.json")).size() == 2);

    // unknown axes are config errors
    REQUIRE(run_cli(home, "sweep " + cfg + " --axis nope --values 1").code == 2);
    REQUIRE(run_cli(home, "ablate " + cfg + " --axis nope").code == 2);
  }

  fs::remove_all(home);
}

TEST_CASE("filter-too-strict surfaces exit code 4 with the acceptance rate", "[cli]") {
  const fs::path home = fresh_home("sodgan_cli_strict");
  write_micro_config(home);
  const std::string cfg = cfg_arg(home);
  REQUIRE(run_cli(home, "corpus " + cfg).code == 0);
  REQUIRE(run_cli(home, "train-gan " + cfg + " --set gan.epochs=1").code == 0);
  REQUIRE(run_cli(home, "train-den " + cfg).code == 0);
  REQUIRE(run_cli(home, "train-maskgen " + cfg + " --set maskgen.epochs=2").code == 0);
  REQUIRE(run_cli(home, "train-dq " + cfg).code == 0);

  const auto r = run_cli(home, "synthesize " + cfg + " --set policy.tau=0.9999999");
  REQUIRE(r.code == 4);
  const auto err = json::parse(r.err);
  REQUIRE(err.at("error").at("kind").get<std::string>() == "filter-too-strict");
  REQUIRE(err.at("error").contains("acceptance_rate"));
  fs::remove_all(home);
}
