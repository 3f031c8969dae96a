#pragma once

// Command-line front end.  Every subcommand loads its inputs, calls the
// library and turns the result into a report through the builders in
// nst::cli::report, which tests call directly on library results.
//
// Exit codes: 0 when the command succeeds and every verdict is true, 1 when
// a verdict is false or a certificate or precondition fails, 2 for usage,
// input and parse errors.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dsl.hpp"
#include "dsl_static.hpp"
#include "error.hpp"
#include "generate.hpp"
#include "model.hpp"
#include "optimize.hpp"
#include "parallel.hpp"
#include "properties.hpp"
#include "reduction.hpp"
#include "simulate.hpp"

namespace nst::cli {

using Json = nlohmann::ordered_json;

struct CommandOutcome {
  int exit_code = 0;
  std::string report;           // human-readable report
  std::optional<Json> machine;  // same content with stable key order
  std::string diagnostics;      // text for stderr
  bool json = false;            // --json was given

  // What the executable writes to stdout.
  std::string output() const {
    if (json && machine) return machine->dump(2) + "\n";
    return report;
  }
};

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
}

// Codes that describe bad input rather than a false verdict.
inline bool is_input_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::SyntaxError:
    case ErrorCode::ZeroDenominator:
    case ErrorCode::DuplicateRow:
    case ErrorCode::UnknownSymbol:
    case ErrorCode::UnknownSection:
    case ErrorCode::NormalizationError:
    case ErrorCode::MissingEntry:
    case ErrorCode::GroundMismatch:
    case ErrorCode::NotAFactor:
    case ErrorCode::UnknownDm:
    case ErrorCode::BadPrefix:
    case ErrorCode::MissingOrdering:
    case ErrorCode::BudgetExceeded:
    case ErrorCode::ModelMismatch:
    case ErrorCode::EmptySample:
    case ErrorCode::InvalidArgument:
    case ErrorCode::IoError:
      return true;
    default:
      return false;
  }
}

namespace report {

inline std::string ordering_text(const Model& m, const Ordering& psi) {
  IntrinsicModel spec = m.spec();
  spec.ordering = psi;
  spec.nested.clear();
  std::string text = dsl::serialize(spec);
  return text.substr(text.find("\nordering ") + 1);
}

inline Json counterexample(const Model& m, const Counterexample& ce) {
  Json j;
  j["omega"] = m.signal_label(ce.signal);
  j["policy"] = ce.policy ? Json(dsl::serialize_policy(*ce.policy, m)) : Json(nullptr);
  j["actions"] = ce.action ? Json(m.action_label(*ce.action)) : Json(nullptr);
  j["reason"] = ce.reason;
  return j;
}

inline Json property(const Model& m, const PropertyReport& r) {
  Json j;
  j["property"] = property_name(r.property);
  j["verdict"] = r.verdict;
  if (r.ordering) j["witness"] = ordering_text(m, *r.ordering);
  if (r.counterexample) j["counterexample"] = counterexample(m, *r.counterexample);
  return j;
}

inline Json rcs(const OrderingCheck& c) {
  Json j;
  j["property"] = "rcs";
  j["verdict"] = c.ok;
  if (!c.ok) {
    j["stage"] = c.stage;
    j["message"] = c.message;
  }
  return j;
}

inline Json values(const ValueCertificate& c) {
  Json j;
  j["kind"] = "value condition";
  j["ok"] = c.ok;
  j["exhaustive"] = c.exhaustive;
  j["policies"] = c.policies;
  j["equal"] = c.policies - c.mismatch_count;
  Json mm = Json::array();
  for (const auto& x : c.mismatches) {
    mm.push_back(Json{{"policy", x.index}, {"dynamic", to_string(x.dynamic)}, {"reduced", to_string(x.reduced)}});
  }
  j["mismatches"] = mm;
  return j;
}

inline Json nested(const NestedCertificate& c) {
  Json j;
  j["kind"] = "partially nested";
  j["ok"] = c.ok();
  j["actions_agree"] = c.actions_agree;
  j["static_round_trip"] = c.static_round_trip;
  j["dynamic_round_trip"] = c.dynamic_round_trip;
  j["values_equal"] = c.values_equal;
  j["exhaustive"] = c.exhaustive;
  j["dynamic_policies"] = c.dynamic_policies;
  j["static_policies"] = c.static_policies;
  if (!c.detail.empty()) j["detail"] = c.detail;
  return j;
}

inline Json decoupling(const DecouplingCertificate& c) {
  Json j;
  j["kind"] = "decoupling";
  j["ok"] = c.ok();
  j["original_optimum"] = to_string(c.original_optimum);
  j["decoupled_optimum"] = to_string(c.decoupled_optimum);
  j["c_max"] = to_string(c.c_max);
  j["exhaustive"] = c.exhaustive;
  j["pairs"] = c.pairs;
  return j;
}

inline constexpr std::size_t kArgminListed = 256;

inline Json optimization(const Model& m, const OptimizationResult& r) {
  Json j;
  j["optimum"] = to_string(r.optimum);
  j["evaluated"] = r.evaluated;
  j["argmin_size"] = r.argmin.size();
  Json idx = Json::array();
  for (std::size_t k = 0; k < r.argmin.size() && k < kArgminListed; ++k) idx.push_back(r.argmin[k]);
  j["argmin"] = idx;
  j["representative"] = dsl::serialize_policy(r.representative, m);
  return j;
}

inline Json comparison(const ArgminComparison& c) {
  Json j;
  j["applicable"] = c.applicable;
  j["equal"] = c.equal;
  j["dynamic_optimum"] = to_string(c.dynamic_optimum);
  j["static_optimum"] = to_string(c.static_optimum);
  j["dynamic_argmin_size"] = c.dynamic_argmin.size();
  j["static_argmin_size"] = c.static_argmin.size();
  j["difference_count"] = c.difference_count;
  Json d = Json::array();
  for (const auto& x : c.differences) {
    d.push_back(Json{{"policy", x.policy}, {"dynamic", to_string(x.dynamic)}, {"reduced", to_string(x.reduced)}});
  }
  j["differences"] = d;
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

inline std::string decimal(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline Json estimate(const Model& m, const MonteCarloEstimate& e, std::uint64_t seed, const std::optional<Rational>& exact) {
  Json j;
  j["samples"] = e.samples;
  j["seed"] = seed;
  j["mean"] = to_string(e.mean);
  j["mean_decimal"] = decimal(e.mean_value());
  j["standard_error"] = decimal(e.standard_error);
  if (exact) {
    j["exact"] = to_string(*exact);
    j["within_3se"] = std::abs(e.mean_value() - to_double(*exact)) <= 3 * e.standard_error;
  }
  if (!e.traces.empty()) {
    std::ostringstream os;
    for (const auto& [k, t] : e.traces) write_trace(os, m, k, t);
    j["trace"] = os.str();
  }
  return j;
}

// Renders a report as indented "key: value" lines.  Multi-line strings and
// nested objects become indented blocks.
inline void render(std::ostream& os, const Json& j, std::size_t indent) {
  const std::string pad(indent, ' ');
  auto scalar = [](const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  for (auto it = j.begin(); it != j.end(); ++it) {
    const Json& v = it.value();
    const std::string key = j.is_object() ? it.key() : "-";
    if (v.is_object()) {
      os << pad << key << ":\n";
      render(os, v, indent + 2);
    } else if (v.is_array() && !v.empty() && v.front().is_object()) {
      os << pad << key << ":\n";
      for (const auto& e : v) {
        os << pad << "  -\n";
        render(os, e, indent + 4);
      }
    } else if (v.is_array()) {
      os << pad << key << ":";
      if (v.empty()) os << " none";
      for (const auto& e : v) os << ' ' << scalar(e);
      os << "\n";
    } else if (v.is_string() && v.get<std::string>().find('\n') != std::string::npos) {
      os << pad << key << ":\n";
      std::istringstream in(v.get<std::string>());
      for (std::string line; std::getline(in, line);) os << pad << "  " << line << "\n";
    } else {
      os << pad << key << ": " << scalar(v) << "\n";
    }
  }
}

inline std::string human(const Json& j) {
  std::ostringstream os;
  render(os, j, 0);
  return os.str();
}

}  // namespace report

namespace detail {

struct Globals {
  bool json = false;
  unsigned jobs = 1;
  std::uint64_t budget = 0;  // zero: NSTEAMS_BUDGET or the built-in default
  std::uint64_t effective_budget() const { return budget ? budget : enumeration_budget(); }
};

inline Model load(const std::string& path) { return dsl::load_model(read_text(path)); }

// A policy argument is a policy document, or "const:K" for the profile
// playing action K everywhere.
inline PolicyProfile load_policy(const std::string& arg, const Model& m) {
  if (arg.rfind("const:", 0) == 0) {
    int k = 0;
    try {
      k = std::stoi(arg.substr(6));
    } catch (...) {
      throw Error(ErrorCode::InvalidArgument, "bad constant policy '" + arg + "'");
    }
    for (std::size_t i = 0; i < m.n(); ++i) {
      if (k < 0 || static_cast<std::size_t>(k) >= m.action_size(i)) {
        throw Error(ErrorCode::InvalidArgument, "DM " + std::to_string(i + 1) + " has no action number " + arg.substr(6));
      }
    }
    return constant_policy(m, k);
  }
  return dsl::parse_policy(read_text(arg), m);
}

inline CommandOutcome finish(Json j, bool ok) {
  CommandOutcome out;
  out.exit_code = ok ? 0 : 1;
  out.report = report::human(j);
  out.machine = std::move(j);
  return out;
}

inline CommandOutcome check(const Globals& g, const std::string& file, const std::string& prop, bool strict) {
  Model m = load(file);
  CheckOptions opt;
  opt.strict = strict;
  Json j;
  j["command"] = "check";
  j["file"] = file;
  Json props = Json::array();
  bool ok = true;
  auto add = [&](Json p) {
    ok = ok && p["verdict"].get<bool>();
    props.push_back(std::move(p));
  };
  if (prop == "sm" || prop == "all") add(report::property(m, check_sm(m, opt)));
  if (prop == "df" || prop == "all") add(report::property(m, check_df(m, opt)));
  if (prop == "ci" || prop == "all") add(report::property(m, check_ci(m, opt)));
  if (prop == "c" || prop == "all") add(report::property(m, check_c(m, opt)));
  if (prop == "rcs" || (prop == "all" && m.spec().ordering)) add(report::rcs(check_rcs(m, declared_ordering(m))));
  (void)g;
  j["properties"] = props;
  j["ok"] = ok;
  return finish(std::move(j), ok);
}

struct ReduceArgs {
  std::string file, mode, policy, output, labels = "auto", reference = "uniform";
};

inline CommandOutcome reduce(const Globals& g, const ReduceArgs& a) {
  Model m = load(a.file);
  Json j;
  j["command"] = "reduce";
  j["file"] = a.file;
  j["mode"] = a.mode;
  j["output"] = a.output;
  bool ok = true;
  if (a.mode == "policy-free" || a.mode == "sm") {
    ReducedStaticModel r;
    if (a.mode == "sm") {
      if (a.policy.empty()) throw Error(ErrorCode::InvalidArgument, "--mode sm needs --policy");
      r = sm_reduce(m, load_policy(a.policy, m));
    } else {
      StaticOptions opt;
      opt.labels = a.labels == "union" ? LabelMode::Union : a.labels == "tagged" ? LabelMode::Tagged : LabelMode::Auto;
      opt.reference = a.reference == "dyadic" ? ReferenceKind::Dyadic : ReferenceKind::Uniform;
      r = static_reduce(m, opt);
    }
    write_text(a.output, dsl::serialize_static(r));
    j["labels"] = r.labels == StageLabels::Union ? "union" : "tagged";
    j["reference"] = reference_name(r.reference_kind);
    j["stages"] = r.n;
    j["density_rows"] = r.density.size();
    j["cost_rows"] = r.cost.size();
    auto cert = certify_values(m, r, g.jobs, g.effective_budget());
    j["certificate"] = report::values(cert);
    ok = cert.ok;
  } else if (a.mode == "nested") {
    auto r = nested_reduce(m);
    write_text(a.output, dsl::serialize(r.static_spec));
    auto cert = certify_nested(m, r, g.jobs, g.effective_budget());
    j["certificate"] = report::nested(cert);
    ok = cert.ok();
  } else {
    auto dec = decouple(m);
    write_text(a.output, dsl::serialize(dec.spec));
    j["c_max"] = to_string(dec.c_max);
    try {
      auto cert = certify_decoupling(m, dec, g.jobs, g.effective_budget());
      j["certificate"] = report::decoupling(cert);
      ok = cert.ok();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BudgetExceeded) throw;
      j["certificate"] = Json{{"kind", "decoupling"}, {"skipped", e.what()}};
    }
  }
  j["ok"] = ok;
  return finish(std::move(j), ok);
}

inline CommandOutcome optimize(const Globals& g, const std::string& file, const std::string& reduced) {
  Model m = load(file);
  OptimizeOptions opt;
  opt.jobs = g.jobs;
  opt.budget = g.effective_budget();
  Json j;
  j["command"] = "optimize";
  j["file"] = file;
  bool ok = true;
  if (reduced.empty()) {
    j["result"] = report::optimization(m, enumerate_optimal(m, opt));
  } else {
    auto r = dsl::parse_static(read_text(reduced));
    j["reduced"] = reduced;
    j["result"] = report::optimization(m, enumerate_optimal(m, opt));
    auto cmp = compare_argmin(m, r, opt);
    j["comparison"] = report::comparison(cmp);
    ok = cmp.equal;
  }
  j["ok"] = ok;
  return finish(std::move(j), ok);
}

struct SimulateArgs {
  std::string file, policy, ordering = "auto";
  std::uint64_t samples = 100000, seed = 1;
  std::size_t trace = 0;
  bool full_sweep = false;
};

inline CommandOutcome simulate(const Globals& g, const SimulateArgs& a) {
  Model m = load(a.file);
  PolicyProfile gamma = load_policy(a.policy, m);
  std::optional<Ordering> psi;
  std::string used = "greedy";
  if (a.ordering == "declared" || (a.ordering == "auto" && m.spec().ordering)) {
    psi = declared_ordering(m);
    used = "declared";
  } else if (a.ordering == "witness" || a.ordering == "auto") {
    auto c = check_c(m);
    if (c.verdict) {
      psi = *c.ordering;
      used = "witness";
    } else if (a.ordering == "witness") {
      throw Error(ErrorCode::NotCausal, "the model has no causal ordering to simulate along");
    }
  }
  MonteCarloOptions opt;
  opt.samples = a.samples;
  opt.seed = a.seed;
  opt.jobs = g.jobs;
  opt.trace_samples = a.trace;
  const Ordering* p = psi ? &*psi : nullptr;
  auto est = monte_carlo(m, p, gamma, opt);
  std::optional<Rational> exact;
  try {
    exact = m.expected_cost(gamma);
  } catch (const Error&) {
  }
  Json j;
  j["command"] = "simulate";
  j["file"] = a.file;
  j["policy"] = a.policy;
  j["ordering"] = used;
  j["estimate"] = report::estimate(m, est, a.seed, exact);
  if (a.full_sweep) j["full_sweep"] = to_string(full_sweep(m, p, gamma));
  j["ok"] = true;
  return finish(std::move(j), true);
}

inline CommandOutcome verify(const Globals& g, const std::string& dyn, const std::string& stat) {
  Model m = load(dyn);
  auto r = dsl::parse_static(read_text(stat));
  auto cert = certify_values(m, r, g.jobs, g.effective_budget());
  Json j;
  j["command"] = "verify";
  j["dynamic"] = dyn;
  j["static"] = stat;
  j["summary"] = std::to_string(cert.policies - cert.mismatch_count) + "/" + std::to_string(cert.policies) +
                 " policies equal";
  j["certificate"] = report::values(cert);
  j["ok"] = cert.ok;
  return finish(std::move(j), cert.ok);
}

struct GenerateArgs {
  std::size_t count = 10;
  std::uint64_t seed = 1;
  std::string directory;
  std::size_t max_dms = 3, max_alphabet = 3;
};

inline CommandOutcome generate(const Globals& g, const GenerateArgs& a) {
  GeneratorOptions opt;
  opt.max_dms = a.max_dms;
  opt.max_signal_alphabet = opt.max_action_alphabet = opt.max_measurement_alphabet = a.max_alphabet;
  if (a.max_dms < 1 || a.max_alphabet < 1) throw Error(ErrorCode::InvalidArgument, "sizes must be at least 1");
  auto batch = generate_batch(a.seed, a.count, opt);
  std::error_code ec;
  std::filesystem::create_directories(a.directory, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + a.directory + "': " + ec.message());
  std::vector<Verdicts> verdicts(batch.size());
  parallel_for(batch.size(), g.jobs, [&](std::size_t k) { verdicts[k] = all_verdicts(Model(batch[k])); });
  Json files = Json::array();
  for (std::size_t k = 0; k < batch.size(); ++k) {
    std::ostringstream name;
    name << "model_" << std::setw(4) << std::setfill('0') << k + 1 << ".nst";
    auto path = (std::filesystem::path(a.directory) / name.str()).string();
    write_text(path, dsl::serialize(batch[k]));
    const auto& v = verdicts[k];
    files.push_back(Json{{"file", path}, {"sm", v.sm}, {"df", v.df}, {"ci", v.ci}, {"c", v.c}});
  }
  Json j;
  j["command"] = "generate";
  j["count"] = a.count;
  j["seed"] = a.seed;
  j["directory"] = a.directory;
  j["models"] = files;
  j["ok"] = true;
  return finish(std::move(j), true);
}

inline constexpr const char* kTraceHelp =
    "Trace dump (--trace K): the first K samples, one tab-separated line per stage with columns\n"
    "  sample  stage  omega  dm  measurement  action  cost\n"
    "omega lists the signal symbols w0 ws0 w1..wN separated by spaces, DMs are numbered from 1 and the\n"
    "path cost is repeated on every line.  A path that stops early ends with a line whose dm column is\n"
    "'deadlock' or 'ambiguous'.";

}  // namespace detail

// Parses `args` (without the program name) and runs one subcommand.
inline CommandOutcome run(const std::vector<std::string>& args) {
  CLI::App app{"Non-sequential team decision problems: property checks, reductions, optimization, simulation",
               "nsteams"};
  app.require_subcommand(1);
  app.fallthrough();
  detail::Globals g;
  app.add_flag("--json", g.json, "Print the machine-readable report");
  app.add_option("--jobs", g.jobs, "Worker threads for certificate checks")->check(CLI::PositiveNumber);
  app.add_option("--budget", g.budget, "Largest exhaustive enumeration (default: NSTEAMS_BUDGET or 10000000)");

  std::string file, prop = "all", reduced, dyn, stat;
  bool strict = false;
  auto* check = app.add_subcommand("check", "Check solvability and causality properties");
  check->add_option("FILE", file, "Model file")->required()->check(CLI::ExistingFile);
  check->add_option("--property", prop, "Property to check")
      ->check(CLI::IsMember({"sm", "df", "ci", "c", "rcs", "all"}));
  check->add_flag("--strict", strict, "Quantify over every signal, not just the support of the prior");

  detail::ReduceArgs ra;
  auto* reduce = app.add_subcommand("reduce", "Build and certify a reduced model");
  reduce->add_option("FILE", ra.file, "Model file")->required()->check(CLI::ExistingFile);
  reduce->add_option("--mode", ra.mode, "Reduction")
      ->required()
      ->check(CLI::IsMember({"policy-free", "sm", "nested", "decouple"}));
  reduce->add_option("--policy", ra.policy, "Policy file or const:K (mode sm)");
  reduce->add_option("-o,--output", ra.output, "Output file")->required();
  reduce->add_option("--labels", ra.labels, "Stage labels (mode policy-free)")
      ->check(CLI::IsMember({"auto", "union", "tagged"}));
  reduce->add_option("--reference", ra.reference, "Reference measure (mode policy-free)")
      ->check(CLI::IsMember({"uniform", "dyadic"}));

  auto* optimize = app.add_subcommand("optimize", "Minimize expected cost over all deterministic policies");
  optimize->add_option("FILE", file, "Model file")->required()->check(CLI::ExistingFile);
  optimize->add_option("--reduced", reduced, "Static reduction of FILE whose argmin is compared")
      ->check(CLI::ExistingFile);

  detail::SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Estimate expected cost by sampling closed-loop paths");
  simulate->add_option("FILE", sa.file, "Model file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--policy", sa.policy, "Policy file or const:K")->required();
  simulate->add_option("--samples", sa.samples, "Sample count");
  simulate->add_option("--seed", sa.seed, "Seed");
  simulate->add_option("--trace", sa.trace, "Dump the first K sampled paths");
  simulate->add_option("--ordering", sa.ordering, "Ordering to follow")
      ->check(CLI::IsMember({"auto", "declared", "witness", "greedy"}));
  simulate->add_flag("--full-sweep", sa.full_sweep, "Also report the exact prior-weighted sweep over the support");
  simulate->footer(detail::kTraceHelp);

  auto* verify = app.add_subcommand("verify", "Check the value condition between a model and its static reduction");
  verify->add_option("DYN", dyn, "Model file")->required()->check(CLI::ExistingFile);
  verify->add_option("STATIC", stat, "Static reduced model file")->required()->check(CLI::ExistingFile);

  detail::GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Write a batch of random models");
  generate->add_option("--count", ga.count, "Number of models")->required();
  generate->add_option("--seed", ga.seed, "Seed")->required();
  generate->add_option("-o,--output", ga.directory, "Output directory")->required();
  generate->add_option("--max-dms", ga.max_dms, "Largest number of DMs");
  generate->add_option("--max-alphabet", ga.max_alphabet, "Largest alphabet size");

  CommandOutcome out;
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, err;
    int code = app.exit(e, o, err);
    out.exit_code = code == 0 ? 0 : 2;
    out.report = o.str();
    out.diagnostics = err.str();
    if (code != 0) out.diagnostics += "\n" + app.help();
    return out;
  }
  try {
    if (check->parsed()) out = detail::check(g, file, prop, strict);
    if (reduce->parsed()) out = detail::reduce(g, ra);
    if (optimize->parsed()) out = detail::optimize(g, file, reduced);
    if (simulate->parsed()) out = detail::simulate(g, sa);
    if (verify->parsed()) out = detail::verify(g, dyn, stat);
    if (generate->parsed()) out = detail::generate(g, ga);
  } catch (const ValidationError& e) {
    out = {};
    out.exit_code = 2;
    for (const auto& d : e.diagnostics()) out.diagnostics += d.to_string() + "\n";
  } catch (const Error& e) {
    out = {};
    out.exit_code = is_input_error(e.code()) ? 2 : 1;
    out.diagnostics = std::string(e.what()) + "\n";
  }
  out.json = g.json;
  return out;
}

}  // namespace nst::cli
