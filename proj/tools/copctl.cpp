// copctl: run scenarios, verify ledgers, render reports.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cop/core/errors.hpp"
#include "cop/harness/community.hpp"

namespace {

int run_cmd(const std::string& file, const std::string& out, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> shards, const std::string& transport) {
  auto s = cop::load_scenario(file);
  if (seed) s.seed = *seed;
  if (shards) s.shards = *shards;
  if (transport == "tcp") {
    s.tcp = true;
    s.virtual_clock = false;
  } else if (transport == "inproc") {
    s.tcp = false;
  }
  const auto r = cop::run(s, out);
  std::cout << r.render();
  if (!out.empty()) std::cout << "\nartifacts in " << out << "\n";
  return r.false_positives == 0 && r.false_negatives == 0 ? 0 : 3;
}

int verify_cmd(const std::string& ledger, std::size_t shards, const std::string& laws) {
  std::optional<std::filesystem::path> laws_json;
  if (!laws.empty()) laws_json = laws;
  const auto r = cop::replay_verify(ledger, shards, laws_json);
  std::cout << "ledger " << ledger << ": chain verified\n\n" << r.render();
  return r.failed_verdicts.empty() ? 0 : 3;
}

int report_cmd(const std::string& dir) {
  const auto path = std::filesystem::path(dir) / "report.json";
  std::ifstream in(path);
  if (!in) throw cop::Error(cop::ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::cout << cop::Report::from_json(ss.str()).render();
  const auto bin = std::filesystem::path(dir) / "verdicts.bin";
  if (std::filesystem::exists(bin)) {
    const auto contents = cop::read_report_stream(bin);
    std::uint64_t failed = 0;
    for (const auto& v : contents.verdicts) failed += v.failed();
    std::cout << "\nverdict stream: " << contents.verdicts.size() << " verdicts (" << failed << " failed), "
              << contents.notifications.size() << " notifications\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"copctl: law-governed community runner and inspector"};
  app.require_subcommand(1);

  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> shards;
  std::string transport;
  auto* run = app.add_subcommand("run", "run a scenario");
  run->add_option("scenario", scenario, "scenario file (YAML)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "artifact directory");
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--shards", shards, "inspector shards per law")->check(CLI::PositiveNumber);
  run->add_option("--transport", transport, "inproc or tcp")->check(CLI::IsMember({"inproc", "tcp"}));

  std::string ledger;
  std::size_t verify_shards = 1;
  std::string laws;
  auto* verify = app.add_subcommand("verify", "verify a ledger file and replay it offline");
  verify->add_option("ledger", ledger, "ledger file")->required()->check(CLI::ExistingFile);
  verify->add_option("--shards", verify_shards, "inspector shards")->check(CLI::PositiveNumber);
  verify->add_option("--laws", laws, "laws.json (default: next to the ledger directory)");

  std::string dir;
  auto* report = app.add_subcommand("report", "render the report of a run");
  report->add_option("out", dir, "artifact directory of a run")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*run) return run_cmd(scenario, out, seed, shards, transport);
    if (*verify) return verify_cmd(ledger, verify_shards, laws);
    if (*report) return report_cmd(dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
