// Command-line front end: twin experiments, method comparisons, ensemble-size
// sweeps and the built-in invariant suite.

#include "da/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  std::string method = "all";
};

da::ExperimentConfig resolve_config(const CommonArgs& args) {
  da::ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = da::load_config(args.config_path);
  }
  if (args.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(args.seed);
  }
  if (!args.out_dir.empty()) {
    cfg.output_dir = args.out_dir;
  }
  if (args.method != "all") {
    cfg.methods = {args.method};
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Experiment config file (JSON)");
  cmd->add_option("--seed", args.seed, "Override the experiment seed");
  cmd->add_option("--out", args.out_dir, "Output directory for records and CSV");
  cmd->add_option("--method", args.method, "Method to run")
      ->check(CLI::IsMember({"pod", "ism", "tr", "all"}));
}

void print_comparison(const da::ExperimentConfig& cfg, const da::RunRecord& record,
                      std::ostream& out) {
  const auto row = [&out](const std::string& nens, const std::string& name,
                          double value, const std::string& note) {
    out << std::setw(5) << nens << " | " << std::setw(12) << std::left << name
        << std::right << " | ";
    if (note.empty()) {
      out << std::scientific << std::setprecision(3) << value << "\n";
    } else {
      out << note << "\n";
    }
  };
  out << " Nens | Method       | RMSE\n";
  out << "------+--------------+-----------\n";
  row("N/A", "Background", record.background_rmse, "");
  const std::string nens = std::to_string(cfg.nens);
  for (const auto& [key, label] :
       {std::pair<std::string, std::string>{"pod", "POD-4D-EnKF"},
        {"ism", "ISM"},
        {"tr", "TR-4D-EnKF"}}) {
    const da::MethodRecord* m = record.find(key);
    if (m == nullptr) continue;
    row(nens, label, m->rmse, m->ok ? "" : ("error: " + m->error));
  }
}

int run_command(const CommonArgs& args) {
  const da::ExperimentConfig cfg = resolve_config(args);
  const da::RunRecord record = da::run_twin_experiment(cfg);
  print_comparison(cfg, record, std::cout);
  if (!cfg.output_dir.empty()) {
    std::cout << "records written to " << cfg.output_dir << "\n";
  }
  for (const da::MethodRecord& m : record.methods) {
    if (!m.ok) return 2;
  }
  return 0;
}

int compare_command(const CommonArgs& args) {
  CommonArgs all = args;
  all.method = "all";
  return run_command(all);
}

int sweep_command(const CommonArgs& args) {
  da::ExperimentConfig cfg = resolve_config(args);
  bool ok = true;
  for (const int nens : {10, 20, 40, 80}) {
    cfg.nens = nens;
    const da::RunRecord record = da::run_twin_experiment(cfg);
    print_comparison(cfg, record, std::cout);
    std::cout << "\n";
    for (const da::MethodRecord& m : record.methods) ok &= m.ok;
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TR-4D-EnKF hybrid ensemble-variational assimilation toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  CLI::App* run = app.add_subcommand("run", "Run one twin experiment");
  add_common(run, args);
  CLI::App* compare =
      app.add_subcommand("compare", "Run all methods side by side");
  add_common(compare, args);
  CLI::App* sweep =
      app.add_subcommand("sweep", "Sweep ensemble sizes {10, 20, 40, 80}");
  add_common(sweep, args);
  app.add_subcommand("validate", "Run the built-in invariant suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(args);
    if (compare->parsed()) return compare_command(args);
    if (sweep->parsed()) return sweep_command(args);
    return da::run_validation_suite(std::cout) ? 0 : 3;
  } catch (const std::exception& e) {
    const nlohmann::json error{{"error", e.what()},
                               {"type", typeid(e).name()}};
    std::cerr << error.dump() << "\n";
    return 1;
  }
}
