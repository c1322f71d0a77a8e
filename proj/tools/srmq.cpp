#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "srmq/cli.hpp"

namespace {

struct Options {
  std::string config;
  std::string table;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string format = "csv";
  bool json = false;
};

srmq::Config load(const Options& opt) {
  srmq::Config config = opt.config.empty() ? srmq::parse_config("") : srmq::load_config(opt.config);
  if (opt.seed) srmq::apply_seed(config, *opt.seed);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scheduled Q-learning current control for a switched reluctance motor"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opt.config, "INI configuration file (defaults apply when omitted)");
    cmd->add_option("--seed", opt.seed, "Overrides training and scenario seeds");
    cmd->add_flag("--json", opt.json, "Print the JSON report instead of the text report");
  };

  auto* train = app.add_subcommand("train", "Train the Q-core table and write it to --out");
  add_common(train);
  train->add_option("--out", opt.out, "Table file to write")->required();

  auto* run = app.add_subcommand("run", "Run the configured scenario against a trained table");
  auto* compare = app.add_subcommand("compare", "Run scheduled Q-learning and delta modulation side by side");
  for (auto* cmd : {run, compare}) {
    add_common(cmd);
    cmd->add_option("--table", opt.table, "Table file from 'train'");
    cmd->add_option("--out", opt.out, "Output directory")->required();
    cmd->add_option("--format", opt.format, "Trace format")->check(CLI::IsMember({"csv", "jsonl"}));
  }
  compare->get_option("--table")->required();

  auto* oracle = app.add_subcommand("oracle", "Riccati and model-based policy iteration at every grid node");
  add_common(oracle);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : srmq::kExitValidation;
  }

  const srmq::RunReport report = srmq::guarded([&] {
    const srmq::Config config = load(opt);
    if (train->parsed()) return srmq::cmd_train(config, opt.out);
    const auto format = srmq::parse_trace_format(opt.format);
    if (run->parsed()) return srmq::cmd_run(config, opt.table, opt.out, format);
    if (compare->parsed()) return srmq::cmd_compare(config, opt.table, opt.out, format);
    return srmq::cmd_oracle(config);
  });

  std::ostream& os = report.exit_code == 0 ? std::cout : std::cerr;
  os << (opt.json ? report.json + "\n" : report.text);
  return report.exit_code;
}
