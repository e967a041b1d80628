#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dito/basis.hpp"
#include "dito/catalog.hpp"
#include "dito/dif.hpp"
#include "dito/error.hpp"
#include "dito/fdsolver.hpp"
#include "dito/io.hpp"
#include "dito/montecarlo.hpp"
#include "dito/scheme.hpp"

namespace dito::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalFailure = 3, kBudgetExceeded = 4 };

struct KeySpec {
  const char* name;
  const char* default_value;
  const char* help;
};

inline constexpr KeySpec kKeys[] = {
    {"preset", "", "named bundle of defaults (see the preset list)"},
    {"seed", "1", "u64 seed of the random streams"},
    {"threads", "1", "worker threads for Monte-Carlo paths"},
    {"out", ".", "output directory"},
    {"dimension", "1", "state dimension n"},
    {"driver", "bernoulli", "driver id from the catalog"},
    {"field", "em-identity", "scheme field id from the catalog"},
    {"payoff", "quad", "payoff id from the catalog"},
    {"sigma", "1", "volatility parameter of the field"},
    {"mu", "0", "drift parameter of the field"},
    {"strike", "1", "payoff strike (centre for bump)"},
    {"width", "0.2", "payoff smoothing width"},
    {"x0", "0", "initial state, comma separated; one value is broadcast"},
    {"dt", "1", "step length of the decomposed step"},
    {"truncation", "0", "tensor correction truncation; 0 means exhaustive"},
    {"N", "16", "time steps"},
    {"T", "1", "horizon"},
    {"M", "16384", "Monte-Carlo samples"},
    {"sampler", "pseudo", "pseudo | sobol | halton"},
    {"randomizations", "8", "independent randomizations for sobol/halton (>= 8)"},
    {"grid", "16,32,64,128", "increasing N values for the order fit"},
    {"reference", "fine:4096", "fine:<N_ref> or analytic:<value>"},
    {"noise", "0.2", "allowed Monte-Carlo noise as a fraction of the smallest error"},
};

inline const KeySpec& key_spec(const std::string& name) {
  for (const auto& k : kKeys) {
    if (name == k.name) return k;
  }
  fail(Errc::ConfigError, "unknown key '" + name + "'");
}

struct Command {
  const char* name;
  const char* description;
  std::vector<std::string> keys;
  KeyValues defaults{};  ///< command-specific defaults over the key table
};

inline const std::vector<Command>& commands() {
  static const std::vector<Command> table = [] {
    const std::vector<std::string> common{"preset", "seed", "threads", "out"};
    const std::vector<std::string> model{"dimension", "driver", "field", "payoff", "sigma", "mu", "strike", "width", "x0"};
    auto join = [](std::vector<std::string> a, const std::vector<std::string>& b) {
      a.insert(a.end(), b.begin(), b.end());
      return a;
    };
    std::vector<Command> t;
    t.push_back({"decompose", "one-step chaos decomposition of the payoff", join(join(common, model), {"dt", "truncation"})});
    t.push_back({"solve", "backward induction on the reachable-state lattice", join(join(common, model), {"N", "T"})});
    t.push_back({"simulate", "simulate one path and export it", join(join(common, model), {"N", "T", "sampler"})});
    t.push_back({"estimate", "Monte-Carlo / QMC estimate of E[f(X_T)]",
                 join(join(common, model), {"N", "T", "M", "sampler", "randomizations"})});
    t.push_back({"converge", "weak-order fit over an N grid",
                 join(join(common, model), {"T", "M", "sampler", "randomizations", "grid", "reference", "noise"})});
    t.push_back({"complete-market", "rate experiment for the 3-atom design in the plane",
                 join(common, {"dimension", "grid", "reference", "noise"}), {{"dimension", "2"}}});
    t.push_back({"catalog", "list built-in drivers, fields, payoffs and presets", {}});
    return t;
  }();
  return table;
}

inline const Command& command(const std::string& name) {
  for (const auto& c : commands()) {
    if (name == c.name) return c;
  }
  fail(Errc::ConfigError, "unknown command '" + name + "'");
}

inline const std::map<std::string, KeyValues>& presets() {
  static const std::map<std::string, KeyValues> table{
      {"bernoulli-linear",
       {{"driver", "bernoulli"}, {"field", "walk"}, {"payoff", "identity"}, {"dimension", "1"}, {"x0", "0"},
        {"dt", "1"}, {"N", "4"}}},
      {"trinomial-n3",
       {{"driver", "trinomial"}, {"field", "em-identity"}, {"payoff", "quad"}, {"dimension", "1"}, {"x0", "0"},
        {"sigma", "1"}, {"mu", "0"}, {"N", "3"}}},
      {"walsh-2",
       {{"driver", "walsh-n"}, {"field", "em-identity"}, {"payoff", "quad"}, {"dimension", "2"}, {"x0", "0"},
        {"sigma", "1"}, {"mu", "0"}, {"N", "4"}}},
      {"highdim-100",
       {{"driver", "walsh-n"}, {"field", "em-identity"}, {"payoff", "mean-square-100d"}, {"dimension", "100"},
        {"x0", "0"}, {"sigma", "1"}, {"mu", "0"}, {"N", "16"}, {"M", "16384"}, {"sampler", "sobol"}}},
      {"moment-matched-1d",
       {{"driver", "bernoulli"}, {"field", "em-gbm"}, {"payoff", "smooth-call"}, {"dimension", "1"}, {"x0", "1"},
        {"sigma", "0.2"}, {"mu", "0.05"}, {"strike", "1"}, {"width", "0.2"}, {"N", "16"},
        {"grid", "16,32,64,128"}, {"reference", "fine:4096"}}},
      {"complete-market-2d",
       {{"driver", "trinomial-3pt-120deg"}, {"field", "em-gbm"}, {"payoff", "smooth-product-call"},
        {"dimension", "2"}, {"x0", "1"}, {"sigma", "0.2"}, {"mu", "0"}, {"strike", "1"}, {"width", "0.2"},
        {"N", "16"}, {"grid", "16,32,64,128"}, {"reference", "fine:4096"}}},
  };
  return table;
}

/// Command name plus raw key=value parameters (before defaults are applied).
struct RunConfig {
  std::string command;
  KeyValues values;
};

/// Defaults <- preset <- explicit values; rejects keys the command does not accept.
inline KeyValues resolve(const RunConfig& config) {
  const Command& cmd = command(config.command);
  auto accepted = [&cmd](const std::string& key) {
    return std::find(cmd.keys.begin(), cmd.keys.end(), key) != cmd.keys.end();
  };
  for (const auto& [key, value] : config.values) {
    if (!accepted(key)) fail(Errc::ConfigError, "unknown key '" + key + "' for command " + config.command);
  }
  KeyValues resolved;
  for (const auto& key : cmd.keys) resolved[key] = key_spec(key).default_value;
  for (const auto& [key, value] : cmd.defaults) resolved[key] = value;
  if (const auto it = config.values.find("preset"); it != config.values.end() && !it->second.empty()) {
    const auto p = presets().find(it->second);
    if (p == presets().end()) fail(Errc::ConfigError, "key 'preset': unknown preset '" + it->second + "'");
    for (const auto& [key, value] : p->second) {
      if (accepted(key)) resolved[key] = value;
    }
  }
  for (const auto& [key, value] : config.values) resolved[key] = value;
  return resolved;
}

/// Typed access to resolved values; parse failures name the key.
class Params {
 public:
  explicit Params(KeyValues values) : values_(std::move(values)) {}

  const std::string& text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) fail(Errc::ConfigError, "missing key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const std::string& s = text(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    fail(Errc::ConfigError, "key '" + key + "': '" + s + "' is not a finite number");
  }

  std::uint64_t u64(const std::string& key) const { return parse_u64(key, text(key)); }

  std::size_t count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

  std::size_t positive(const std::string& key) const {
    const std::size_t v = count(key);
    if (v == 0) fail(Errc::ConfigError, "key '" + key + "' must be positive");
    return v;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split(key)) {
      Params p(KeyValues{{key, item}});
      out.push_back(p.real(key));
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : split(key)) out.push_back(static_cast<std::size_t>(parse_u64(key, item)));
    return out;
  }

 private:
  static std::uint64_t parse_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
      fail(Errc::ConfigError, "key '" + key + "': '" + s + "' is not a non-negative integer");
    }
    return v;
  }

  std::vector<std::string> split(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(text(key));
    for (std::string item; std::getline(ss, item, ',');) out.emplace_back(trim(item));
    if (out.empty()) fail(Errc::ConfigError, "key '" + key + "' is empty");
    return out;
  }

  KeyValues values_;
};

namespace detail {

struct Model {
  std::size_t dimension;
  DriverLaw driver;
  SchemeField field;
  Payoff payoff;
  std::vector<double> x0;
};

inline Model model(const Params& p) {
  const std::size_t n = p.positive("dimension");
  std::vector<double> x0 = p.reals("x0");
  if (x0.size() == 1) x0.assign(n, x0.front());
  if (x0.size() != n) fail(Errc::ConfigError, "key 'x0' has " + std::to_string(x0.size()) + " entries, expected " + std::to_string(n));
  return {n, catalog::make_driver(p.text("driver"), n),
          catalog::make_field(p.text("field"), n, p.real("sigma"), p.real("mu")),
          catalog::make_payoff(p.text("payoff"), p.real("strike"), p.real("width")), std::move(x0)};
}

inline Sampler sampler(const Params& p) {
  Sampler s;
  s.seed = p.u64("seed");
  const std::string& kind = p.text("sampler");
  if (kind == "pseudo") return s;
  s.kind = Sampler::Kind::LowDiscrepancy;
  if (kind == "sobol") {
    s.sequence = LowDiscrepancyKind::Sobol;
  } else if (kind == "halton") {
    s.sequence = LowDiscrepancyKind::Halton;
  } else {
    fail(Errc::ConfigError, "key 'sampler': expected pseudo, sobol or halton");
  }
  return s;
}

inline EstimatorConfig estimator(const Params& p, std::size_t steps) {
  Model m = model(p);
  EstimatorConfig c(std::move(m.field), std::move(m.driver), std::move(m.payoff), std::move(m.x0), steps);
  c.horizon = p.real("T");
  c.samples = p.positive("M");
  c.sampler = sampler(p);
  c.randomizations = p.positive("randomizations");
  c.threads = p.positive("threads");
  return c;
}

inline Reference reference(const Params& p) {
  const std::string& s = p.text("reference");
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (kind == "fine") return Reference::fine_grid(arg.empty() ? kDefaultFineSteps : Params(KeyValues{{"reference", arg}}).positive("reference"));
  if (kind == "analytic" && !arg.empty()) return Reference::analytic(Params(KeyValues{{"reference", arg}}).real("reference"));
  fail(Errc::ConfigError, "key 'reference': expected fine:<N_ref> or analytic:<value>");
}

inline WeakOrderOptions order_options(const Params& p) {
  WeakOrderOptions o;
  o.noise_ratio = p.real("noise");
  if (!(o.noise_ratio > 0.0)) fail(Errc::ConfigError, "key 'noise' must be positive");
  return o;
}

inline std::string join_index(const std::vector<int>& index) {
  std::string s;
  for (std::size_t i = 0; i < index.size(); ++i) s += (i ? ":" : "") + std::to_string(index[i]);
  return s;
}

inline const char* to_string(ChaosDecomposition::Mode m) {
  switch (m) {
    case ChaosDecomposition::Mode::Tensor:
      return "tensor";
    case ChaosDecomposition::Mode::WeakFinite:
      return "weak-finite";
    case ChaosDecomposition::Mode::Walsh:
      return "walsh";
    case ChaosDecomposition::Mode::WeakPoints:
      return "weak-points";
  }
  return "";
}

struct Output {
  std::filesystem::path dir;

  std::ofstream open(const std::string& name) const {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) fail(Errc::ConfigError, "key 'out': cannot write " + (dir / name).string());
    return f;
  }
};

inline ChaosDecomposition decompose(const Params& p) {
  Model m = model(p);
  const double dt = p.real("dt");
  const StatePoint state{0, 0.0, m.x0};
  const Payoff payoff = m.payoff;
  const SpaceTimeFunction f = [payoff](double, std::span<const double> x) { return payoff(x); };
  switch (m.driver.kind()) {
    case DriverLaw::Kind::FinitePoints:
      return decompose_weak_scheme(f, state, m.field, m.driver, dt);
    case DriverLaw::Kind::WalshUniform: {
      const auto drivers = m.driver.walsh_drivers();
      const auto rest = walsh_complement(drivers, m.driver.resolution());
      return decompose_weak_scheme(f, state, m.field, drivers, rest, dt);
    }
    case DriverLaw::Kind::FiniteIID:
    case DriverLaw::Kind::GaussianIID: {
      const auto laws_span = m.driver.coordinate_laws();
      const std::vector<IncrementLaw> laws(laws_span.begin(), laws_span.end());
      std::vector<OrthonormalSystem> bases;
      for (const auto& law : laws) bases.push_back(gram_schmidt_basis(law, law.is_finite() ? law.support_size() : 6));
      std::size_t truncation = p.count("truncation");
      if (truncation == 0) truncation = full_truncation(bases);
      return decompose_scheme(f, state, m.field, laws, bases, truncation, dt);
    }
  }
  fail(Errc::InvalidArgument, "unsupported driver");
}

inline KeyValues run_decompose(const Params& p, const Output& out, std::ostream& log) {
  const ChaosDecomposition d = decompose(p);
  auto csv = out.open("decomposition.csv");
  csv << "term,index,coefficient\n";
  log << "term         index        coefficient\n";
  auto row = [&](const char* term, const std::string& index, double v) {
    csv << term << ',' << index << ',' << format_double(v) << '\n';
    char line[128];
    std::snprintf(line, sizeof line, "%-12s %-12s % .17g\n", term, index.c_str(), v);
    log << line;
  };
  for (std::size_t j = 0; j < d.martingale_coeffs.size(); ++j) row("martingale", std::to_string(j + 1), d.martingale_coeffs[j]);
  row("drift", "", d.drift_coeff);
  for (const auto& c : d.corrections) row("correction", join_index(c.index), c.coefficient);
  return {{"mode", to_string(d.mode)},
          {"dt", format_double(d.dt)},
          {"martingale_terms", std::to_string(d.martingale_coeffs.size())},
          {"correction_terms", std::to_string(d.corrections.size())},
          {"drift", format_double(d.drift_coeff)},
          {"spanning_defect", format_double(spanning_defect(d))}};
}

inline KeyValues run_solve(const Params& p, const Output& out) {
  Model m = model(p);
  const std::size_t steps = p.positive("N");
  const auto sol = backward_solve(m.field, m.driver, m.payoff, m.x0, steps, p.real("T"));
  auto csv = out.open("lattice.csv");
  write_lattice_csv(csv, sol);
  return {{"root_value", format_double(sol.root_value())},
          {"nodes", std::to_string(sol.node_count())},
          {"steps", std::to_string(steps)},
          {"max_equation_residual", format_double(max_equation_residual(sol, m.field, m.driver))}};
}

inline KeyValues run_simulate(const Params& p, const Output& out) {
  Model m = model(p);
  const std::size_t steps = p.positive("N");
  const auto path = simulate_path(m.field, m.driver, sampler(p), m.x0, steps, p.real("T"));
  auto csv = out.open("path.csv");
  write_path_csv(csv, path);
  KeyValues s{{"steps", std::to_string(steps)}};
  for (std::size_t i = 0; i < std::min<std::size_t>(path.dimension(), 8); ++i) {
    s["terminal_x" + std::to_string(i + 1)] = format_double(path.terminal()[i]);
  }
  return s;
}

inline KeyValues run_estimate(const Params& p) {
  const EstimatorConfig c = estimator(p, p.positive("N"));
  const auto run = estimate(c);
  return {{"estimate", format_double(run.estimate)},
          {"stderr", format_double(run.standard_error)},
          {"samples", std::to_string(run.samples)},
          {"sampler", p.text("sampler")}};
}

inline KeyValues run_converge(const Params& p, const Output& out) {
  const EstimatorConfig c = estimator(p, 1);
  const auto grid = p.counts("grid");
  const auto fit = weak_order(c, grid, reference(p), order_options(p));
  auto csv = out.open("order.csv");
  write_order_csv(csv, fit);
  return order_summary(fit);
}

inline KeyValues run_complete_market(const Params& p, const Output& out) {
  const auto grid = p.counts("grid");
  const Reference ref = reference(p);
  if (ref.kind != Reference::Kind::FineGrid) fail(Errc::ConfigError, "key 'reference': complete-market needs fine:<N_ref>");
  const auto result = complete_market_experiment(p.positive("dimension"), grid, ref.fine_steps, order_options(p));
  auto csv = out.open("order.csv");
  write_order_csv(csv, result.fit);
  KeyValues s = order_summary(result.fit);
  s["design_mean_error"] = format_double(result.design_mean_error);
  s["design_covariance_error"] = format_double(result.design_covariance_error);
  s["design_third_moment_mismatch"] = format_double(result.design_mismatch);
  s["family_min_third_moment_mismatch"] = format_double(result.search.min_mismatch);
  s["family_candidates"] = std::to_string(result.search.candidates);
  return s;
}

inline int exit_code(Errc code) {
  switch (code) {
    case Errc::NonFiniteState:
    case Errc::DegenerateMoments:
      return kNumericalFailure;
    case Errc::NodeBudgetExceeded:
    case Errc::ExplosionGuard:
    case Errc::ResolutionExceeded:
    case Errc::NoiseDominated:
      return kBudgetExceeded;
    default:
      return kConfigError;
  }
}

}  // namespace detail

inline void list_catalog(std::ostream& out) {
  catalog::list(out);
  out << "presets:\n";
  for (const auto& [name, values] : presets()) {
    out << "  " << name << " ";
    bool first = true;
    for (const auto& [k, v] : values) {
      out << (first ? " " : ", ") << k << '=' << v;
      first = false;
    }
    out << '\n';
  }
}

/// Runs one command. Writes `summary.txt`, the command's CSV and the audit
/// file `audit.cfg` (resolved keys, reusable as --config) into `out`.
inline int run(const RunConfig& config, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    if (config.command == "catalog") {
      resolve(config);
      list_catalog(out);
      return kOk;
    }
    const KeyValues resolved = resolve(config);
    const Params p(resolved);
    p.positive("threads");
    detail::Output output{p.text("out")};
    std::filesystem::create_directories(output.dir);
    const auto start = std::chrono::steady_clock::now();
    KeyValues summary;
    if (config.command == "decompose") {
      summary = detail::run_decompose(p, output, out);
    } else if (config.command == "solve") {
      summary = detail::run_solve(p, output);
    } else if (config.command == "simulate") {
      summary = detail::run_simulate(p, output);
    } else if (config.command == "estimate") {
      summary = detail::run_estimate(p);
    } else if (config.command == "converge") {
      summary = detail::run_converge(p, output);
    } else {
      summary = detail::run_complete_market(p, output);
    }
    {
      auto f = output.open("summary.txt");
      write_key_values(f, summary);
    }
    {
      KeyValues audit = resolved;
      audit.erase("out");
      auto f = output.open("audit.cfg");
      f << "# dito " << config.command << '\n';
      write_key_values(f, audit);
    }
    write_key_values(out, summary);
    out << "runtime_seconds=" << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
        << '\n';
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return detail::exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: ConfigError: key 'out': " << e.what() << '\n';
    return kConfigError;
  }
}

/// Key reference appended to each subcommand's --help.
inline std::string keys_help(const Command& cmd) {
  std::ostringstream s;
  if (cmd.keys.empty()) return "Keys: none\n";
  s << "Keys (key=value on the command line or in --config files):\n";
  for (const auto& key : cmd.keys) {
    const KeySpec& k = key_spec(key);
    const auto own = cmd.defaults.find(key);
    const std::string value = own != cmd.defaults.end() ? own->second : k.default_value;
    char line[200];
    std::snprintf(line, sizeof line, "  %-16s %s (default: %s)\n", k.name, k.help,
                  value.empty() ? "none" : value.c_str());
    s << line;
  }
  return s.str();
}

/// Entry point: `dito <command> [--config f] [--out d] [--seed s] [--threads k] [key=value ...]`.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"dito: discrete Ito decompositions, lattice solvers and Monte-Carlo experiments"};
  app.require_subcommand(1);
  struct Flags {
    std::string config, out, seed, threads;
    std::vector<std::string> overrides;
  };
  std::map<std::string, Flags> flags;
  for (const auto& cmd : commands()) {
    Flags& f = flags[cmd.name];
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.description);
    if (!cmd.keys.empty()) {
      sub->add_option("--config", f.config, "flat key=value file, # comments");
      sub->add_option("--out", f.out, "output directory (key out)");
      sub->add_option("--seed", f.seed, "u64 seed (key seed)");
      sub->add_option("--threads", f.threads, "worker threads (key threads)");
      sub->add_option("overrides", f.overrides, "key=value overrides");
    }
    sub->footer(keys_help(cmd));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  const CLI::App* chosen = app.get_subcommands().front();
  const Flags& f = flags[chosen->get_name()];
  RunConfig config{chosen->get_name(), {}};
  try {
    if (!f.config.empty()) {
      std::ifstream in(f.config);
      if (!in) fail(Errc::ConfigError, "cannot read config file " + f.config);
      config.values = parse_key_values(in);
    }
    for (const auto& item : f.overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0) fail(Errc::ConfigError, "expected key=value, got '" + item + "'");
      config.values[std::string(trim(item.substr(0, eq)))] = std::string(trim(item.substr(eq + 1)));
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  if (!f.out.empty()) config.values["out"] = f.out;
  if (!f.seed.empty()) config.values["seed"] = f.seed;
  if (!f.threads.empty()) config.values["threads"] = f.threads;
  return run(config, out, err);
}

}  // namespace dito::cli
