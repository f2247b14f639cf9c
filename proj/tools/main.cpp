#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "ganno/config_json.hpp"
#include "ganno/harness/experiment.hpp"
#include "ganno/harness/plots.hpp"

namespace fs = std::filesystem;
using namespace ganno;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::optional<int> workers;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Options& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "experiment JSON file");
  if (config_required) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "base seed (overrides the config)");
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--data", o.data, "dataset root (overrides the config)");
  cmd->add_option("--workers", o.workers, "parallel evaluation jobs");
  cmd->add_flag("--quiet", o.quiet, "suppress progress output");
}

void write_error(const Options& o, const std::string& kind, const std::string& context,
                 const std::string& message) {
  const Json record = {{"status", "error"},
                       {"kind", kind},
                       {"context", context},
                       {"message", message}};
  std::cerr << record.dump() << '\n';
  if (!o.out.empty()) {
    std::error_code ec;
    fs::create_directories(o.out, ec);
    std::ofstream(fs::path(o.out) / "error.json") << record.dump(2) << '\n';
  }
}

int run(harness::Mode mode, const Options& o) {
  harness::ExperimentConfig cfg =
      harness::experiment_from_json(read_json_file(o.config));
  cfg.mode = mode;
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (!o.data.empty()) {
    cfg.train_env.data.root = o.data;
    cfg.eval_env.data.root = o.data;
  }
  const auto result = harness::run_experiment(cfg, o.out, [&](const std::string& line) {
    if (!o.quiet) std::cerr << line << (line.empty() || line.back() != '\n' ? "\n" : "");
  });
  std::cout << harness::render_table(result.table);
  return 0;
}

int plot(const Options& o) {
  const fs::path root = o.out;
  const fs::path traces = root / "traces";
  if (!fs::is_directory(traces)) throw LoadError("no traces under " + root.string());
  std::vector<harness::NamedTrace> all;
  for (const auto& entry : fs::recursive_directory_iterator(traces)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    auto name = fs::relative(entry.path(), traces).replace_extension().generic_string();
    all.push_back({std::move(name), harness::parse_trace_csv(text)});
  }
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });
  const auto written = harness::emit_plots(all, root / "plots");
  if (!o.quiet) {
    std::cerr << "wrote " << written.size() << " files for " << all.size() << " traces\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layerwise learning-rate control with multi-agent reinforcement learning"};
  app.require_subcommand(1);
  Options o;
  struct Sub {
    const char* name;
    const char* help;
    harness::Mode mode;
  };
  const Sub subs[] = {
      {"train", "train agents, then evaluate them on the grid", harness::Mode::train},
      {"evaluate", "evaluate a saved policy on the grid", harness::Mode::evaluate},
      {"baseline", "evaluate fixed schedules on the grid", harness::Mode::baseline},
      {"ablate", "train and evaluate agents with masked observations",
       harness::Mode::ablate}};
  std::vector<std::pair<CLI::App*, harness::Mode>> modes;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, o, true);
    modes.emplace_back(cmd, s.mode);
  }
  auto* plot_cmd = app.add_subcommand("plot", "render curves for the traces of a run");
  add_common(plot_cmd, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string context = "cli";
  try {
    if (plot_cmd->parsed()) return plot(o);
    for (const auto& [cmd, mode] : modes) {
      if (cmd->parsed()) {
        context = cmd->get_name();
        return run(mode, o);
      }
    }
  } catch (const harness::RunError& e) {
    write_error(o, e.kind(), e.context(), e.what());
    return 1;
  } catch (const std::exception& e) {
    write_error(o, harness::error_kind(e), context, e.what());
    return 1;
  }
  return 1;
}
