#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>

#include "nsteams/cli.hpp"
#include "support.hpp"

using namespace nst;
using cli::Json;

namespace {

const std::filesystem::path kSource = std::filesystem::path(NSTEAMS_MODELS_DIR).parent_path();

// Runs in-process from the source root, so paths match the golden files.
cli::CommandOutcome run(std::vector<std::string> args) {
  auto old = std::filesystem::current_path();
  std::filesystem::current_path(kSource);
  auto out = cli::run(args);
  std::filesystem::current_path(old);
  return out;
}

struct Process {
  int exit_code = 0;
  std::string out;
};

Process run_binary(const std::string& args) {
  std::string cmd = "cd '" + kSource.string() + "' && '" + NSTEAMS_CLI_PATH + "' " + args + " 2>/dev/null";
  Process p;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::array<char, 4096> buf{};
  std::size_t got;
  while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) p.out.append(buf.data(), got);
  int status = pclose(pipe);
  p.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return p;
}

Json golden(const std::string& name) { return Json::parse(test::read_file((kSource / "tests/golden" / name).string())); }

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("nsteams_cli_" + name);
}

}  // namespace

TEST(Cli, CheckCausalityPrintsTheWitness) {
  auto out = run({"check", "models/random_order.nst", "--property", "c", "--json"});
  ASSERT_EQ(out.exit_code, 0) << out.diagnostics;
  auto m = test::load("random_order.nst");
  EXPECT_EQ(out.machine->at("properties").at(0), cli::report::property(m, check_c(m)));
  EXPECT_EQ(*out.machine, golden("check_c.json"));
  EXPECT_NE(out.report.find("stage 1 (ws0)"), std::string::npos);
}

TEST(Cli, DeadlockedModelFailsDeadlockFreeness) {
  auto out = run({"check", "models/deadlock.nst", "--property", "df", "--json"});
  EXPECT_EQ(out.exit_code, 1);
  auto m = test::load("deadlock.nst");
  EXPECT_EQ(out.machine->at("properties").at(0), cli::report::property(m, check_df(m)));
  EXPECT_EQ(*out.machine, golden("check_df.json"));
}

TEST(Cli, MutualObservationReportsTheCopyPolicy) {
  auto out = run({"check", "models/mutual.nst", "--property", "sm", "--json"});
  EXPECT_EQ(out.exit_code, 1);
  auto m = test::load("mutual.nst");
  auto copy = dsl::parse_policy(test::read_file(test::model_path("mutual_copy.policy")), m);
  const auto& ce = out.machine->at("properties").at(0).at("counterexample");
  EXPECT_EQ(ce.at("omega"), m.signal_label(0));
  EXPECT_EQ(ce.at("policy"), dsl::serialize_policy(copy, m));
  EXPECT_EQ(*out.machine, golden("check_sm.json"));
}

TEST(Cli, CheckAllIncludesTheDeclaredOrdering) {
  auto out = run({"check", "models/random_order.nst", "--json"});
  EXPECT_EQ(out.exit_code, 0);
  const auto& props = out.machine->at("properties");
  ASSERT_EQ(props.size(), 5u);
  EXPECT_EQ(props.at(4).at("property"), "rcs");
  for (const auto& p : props) EXPECT_TRUE(p.at("verdict").get<bool>());
}

TEST(Cli, ReduceWritesTheLibraryReduction) {
  auto path = temp_file("static.nst");
  auto out = run({"reduce", "models/random_order.nst", "--mode", "policy-free", "-o", path.string()});
  ASSERT_EQ(out.exit_code, 0) << out.diagnostics;
  auto m = test::load("random_order.nst");
  auto r = static_reduce(m);
  EXPECT_EQ(test::read_file(path.string()), dsl::serialize_static(r));
  EXPECT_EQ(out.machine->at("certificate"), cli::report::values(certify_values(m, r)));
  EXPECT_EQ(test::read_file(path.string()), test::read_file(test::data_path("random_order.static.nst")));
}

TEST(Cli, VerifyCountsEveryPolicy) {
  auto out = run({"verify", "models/random_order.nst", "tests/data/random_order.static.nst", "--json"});
  EXPECT_EQ(out.exit_code, 0);
  EXPECT_EQ(out.machine->at("summary"), "512/512 policies equal");
  EXPECT_EQ(*out.machine, golden("verify.json"));
}

TEST(Cli, VerifyFailsOnACorruptedReduction) {
  auto m = test::load("random_order.nst");
  auto r = static_reduce(m);
  for (auto& [h, c] : r.cost) c = c * 2;
  auto path = temp_file("corrupt.nst");
  cli::write_text(path.string(), dsl::serialize_static(r));
  auto out = run({"verify", "models/random_order.nst", path.string()});
  EXPECT_EQ(out.exit_code, 1);
  EXPECT_NE(out.report.find("ok: false"), std::string::npos);
}

TEST(Cli, OptimizeMatchesTheLibrary) {
  auto out = run({"optimize", "models/random_order.nst", "--reduced", "tests/data/random_order.static.nst", "--json"});
  ASSERT_EQ(out.exit_code, 0) << out.diagnostics;
  auto m = test::load("random_order.nst");
  auto r = dsl::parse_static(test::read_file(test::data_path("random_order.static.nst")));
  EXPECT_EQ(out.machine->at("result"), cli::report::optimization(m, enumerate_optimal(m)));
  EXPECT_EQ(out.machine->at("comparison"), cli::report::comparison(compare_argmin(m, r)));
  EXPECT_EQ(*out.machine, golden("optimize.json"));
}

TEST(Cli, SimulateMatchesTheLibrary) {
  auto out = run({"simulate", "models/random_order.nst", "--policy", "const:0", "--samples", "2000", "--seed", "7",
                  "--trace", "1", "--json"});
  ASSERT_EQ(out.exit_code, 0) << out.diagnostics;
  auto m = test::load("random_order.nst");
  MonteCarloOptions opt;
  opt.samples = 2000;
  opt.seed = 7;
  opt.trace_samples = 1;
  auto est = monte_carlo(m, &declared_ordering(m), constant_policy(m), opt);
  EXPECT_EQ(out.machine->at("estimate"), cli::report::estimate(m, est, 7, m.expected_cost(constant_policy(m))));
  EXPECT_EQ(*out.machine, golden("simulate.json"));
}

TEST(Cli, SimulateReportsADeadlock) {
  auto out = run({"simulate", "models/deadlock.nst", "--policy", "const:1", "--samples", "10"});
  EXPECT_EQ(out.exit_code, 1);
  EXPECT_NE(out.diagnostics.find("DeadlockEncountered"), std::string::npos);
}

TEST(Cli, OtherReductionModesCertify) {
  auto path = temp_file("reduced.nst");
  for (std::vector<std::string> extra : {std::vector<std::string>{"--mode", "sm", "--policy", "const:1"},
                                         std::vector<std::string>{"--mode", "decouple"}}) {
    std::vector<std::string> args{"reduce", "models/random_order.nst", "-o", path.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    auto out = run(args);
    EXPECT_EQ(out.exit_code, 0) << out.diagnostics;
    EXPECT_TRUE(out.machine->at("certificate").at("ok").get<bool>());
  }
  auto out = run({"reduce", "models/nested_chain.nst", "--mode", "nested", "-o", path.string()});
  EXPECT_EQ(out.exit_code, 0) << out.diagnostics;
  EXPECT_NO_THROW(dsl::load_model(test::read_file(path.string())));
}

TEST(Cli, ReducingANonCausalModelIsAFalseVerdict) {
  auto out = run({"reduce", "models/deadlock.nst", "--mode", "policy-free", "-o", temp_file("x.nst").string()});
  EXPECT_EQ(out.exit_code, 1);
  EXPECT_NE(out.diagnostics.find("NotCausal"), std::string::npos);
}

TEST(Cli, GenerateWritesParseableModels) {
  auto dir = temp_file("gen");
  std::filesystem::remove_all(dir);
  auto out = run({"generate", "--count", "5", "--seed", "3", "-o", dir.string(), "--json"});
  ASSERT_EQ(out.exit_code, 0) << out.diagnostics;
  auto batch = generate_batch(3, 5);
  const auto& models = out.machine->at("models");
  ASSERT_EQ(models.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    auto text = test::read_file(models.at(k).at("file").get<std::string>());
    EXPECT_EQ(text, dsl::serialize(batch[k]));
    EXPECT_EQ(models.at(k).at("c").get<bool>(), check_c(Model(batch[k])).verdict);
  }
}

TEST(Cli, UsageErrorsExitWithTwoAndHelp) {
  for (std::vector<std::string> args : {std::vector<std::string>{}, {"check"}, {"frobnicate"},
                                        {"check", "models/random_order.nst", "--property", "xyz"},
                                        {"reduce", "models/random_order.nst", "--mode", "sm", "-o", "/dev/null"},
                                        {"check", "no/such/file.nst"}}) {
    auto out = run(args);
    EXPECT_EQ(out.exit_code, 2);
    EXPECT_FALSE(out.diagnostics.empty());
  }
  auto out = run({"check"});
  EXPECT_NE(out.diagnostics.find("Usage"), std::string::npos);
}

TEST(Cli, ParseErrorsCarryTheirLocation) {
  auto path = temp_file("bad.nst");
  auto text = test::read_file(test::model_path("random_order.nst"));
  text.replace(text.find("1/2 1/2"), 7, "1/0 1/2");
  cli::write_text(path.string(), text);
  auto out = run({"check", path.string()});
  EXPECT_EQ(out.exit_code, 2);
  EXPECT_NE(out.diagnostics.find("10:"), std::string::npos) << out.diagnostics;
  EXPECT_NE(out.diagnostics.find("ZeroDenominator"), std::string::npos);
}

TEST(Cli, HelpExitsCleanly) {
  auto out = run({"--help"});
  EXPECT_EQ(out.exit_code, 0);
  EXPECT_NE(out.report.find("simulate"), std::string::npos);
  auto sim = run({"simulate", "--help"});
  EXPECT_NE(sim.report.find("sample  stage  omega  dm  measurement  action  cost"), std::string::npos);
}

TEST(Cli, MachineReportReparsesAndMatchesTheHumanReport) {
  auto out = run({"check", "models/random_order.nst", "--property", "c", "--json"});
  EXPECT_EQ(Json::parse(out.output()), *out.machine);
  EXPECT_EQ(cli::report::human(*out.machine), out.report);
}

TEST(Cli, ExecutableMatchesTheGoldenReports) {
  struct Case {
    std::string args, golden;
    int exit_code;
  };
  const std::vector<Case> cases{
      {"check models/random_order.nst --property c --json", "check_c.json", 0},
      {"check models/deadlock.nst --property df --json", "check_df.json", 1},
      {"check models/mutual.nst --property sm --json", "check_sm.json", 1},
      {"verify models/random_order.nst tests/data/random_order.static.nst --json", "verify.json", 0},
      {"optimize models/random_order.nst --reduced tests/data/random_order.static.nst --json", "optimize.json", 0},
      {"simulate models/random_order.nst --policy const:0 --samples 2000 --seed 7 --trace 1 --json", "simulate.json", 0},
  };
  for (const auto& c : cases) {
    auto p = run_binary(c.args);
    EXPECT_EQ(p.exit_code, c.exit_code) << c.args;
    EXPECT_EQ(Json::parse(p.out), golden(c.golden)) << c.args;
  }
}

TEST(Cli, BudgetComesFromTheEnvironment) {
  auto p = run_binary("optimize models/random_order.nst");
  EXPECT_EQ(p.exit_code, 0);
  auto q = run_binary("--budget 100 optimize models/random_order.nst");
  EXPECT_EQ(q.exit_code, 2);
  setenv("NSTEAMS_BUDGET", "100", 1);
  auto r = run({"optimize", "models/random_order.nst"});
  unsetenv("NSTEAMS_BUDGET");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.diagnostics.find("BudgetExceeded"), std::string::npos);
}
