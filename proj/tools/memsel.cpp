#include <cstdint>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "memsel/cli.hpp"
#include "memsel/errors.hpp"

namespace {

struct Flags {
  memsel::CommandOptions options;
  std::uint64_t seed = 0;
  int workers = 0;
  bool no_enhance = false;
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help,
                      Flags& f) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--out", f.options.out, "Run directory for every output")->required();
  sub->add_option("--workers", f.workers, "Worker threads (default: available cores)");
  sub->callback([&f, name] { f.options.command = name; });
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory sample selection for continual semantic segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", memsel::kToolVersion);
  Flags f;

  CLI::App* gen = add_command(app, "gen-world", "Generate a synthetic world", f);
  gen->add_option("--config", f.options.config, "Config file")->required();
  gen->add_option("--seed", f.seed, "Override world.seed");

  CLI::App* train = add_command(app, "train-agent", "Train the selection agent", f);
  train->add_option("--config", f.options.config, "Config file")->required();
  train->add_option("--world", f.options.world, "World file")->required();
  train->add_option("--seed", f.seed, "Override training.seed");

  CLI::App* dep = add_command(app, "deploy", "Run the continual task with a trained agent", f);
  dep->add_option("--config", f.options.config, "Config file")->required();
  dep->add_option("--world", f.options.world, "World file")->required();
  dep->add_option("--agent", f.options.agent, "Agent checkpoint")->required();
  dep->add_option("--seed", f.seed, "Override deployment.seed");
  dep->add_flag("--no-enhance", f.no_enhance, "Select only, skip enhancement");

  CLI::App* base = add_command(app, "baseline", "Run the continual task with a fixed rule", f);
  base->add_option("--config", f.options.config, "Config file")->required();
  base->add_option("--world", f.options.world, "World file")->required();
  base->add_option("--policy", f.options.policy, "random | diversity_high | diversity_low | nhs")
      ->required();
  base->add_option("--seed", f.seed, "Override deployment.seed");

  CLI::App* ana = add_command(app, "analyze", "Summarise the selections of a run", f);
  ana->add_option("--run", f.options.run, "Directory of a deploy or baseline run")->required();

  std::filesystem::path manifest;
  CLI::App* re = app.add_subcommand("rerun", "Replay the command recorded in a manifest");
  re->add_option("--manifest", manifest, "manifest.json of an earlier run")->required();
  re->add_option("--out", f.options.out, "New run directory")->required();
  re->callback([&f] { f.options.command = "rerun"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(memsel::ExitCode::kConfig);
  }

  try {
    if (f.options.command == "rerun") {
      memsel::rerun(manifest, f.options.out);
      return 0;
    }
    for (CLI::App* sub : {gen, train, dep, base}) {
      if (sub->parsed() && sub->count("--seed") > 0) f.options.seed = f.seed;
    }
    if (f.workers > 0) f.options.workers = f.workers;
    f.options.enhance = !f.no_enhance;
    memsel::execute(memsel::resolve(f.options), f.options.out);
  } catch (const memsel::Error& e) {
    std::cerr << "memsel: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "memsel: internal error: " << e.what() << '\n';
    return static_cast<int>(memsel::ExitCode::kInvariant);
  }
  return 0;
}
