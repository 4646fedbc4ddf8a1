#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "apsgd/error.hpp"
#include "apsgd/experiments.hpp"

namespace apsgd {

namespace {

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"problem",
       {"name", "C", "zeta", "h_diag", "noise_diag", "noise_scale", "n", "d", "flip_prob", "data_seed", "batch",
        "data_file"}},
      {"optimizer",
       {"algorithm", "source", "preconditioner", "eta", "r", "beta", "beta_mode", "beta_C", "epsilon", "exponent",
        "t_thresh", "W", "c_w", "S", "tau", "delta", "omega", "K", "eta_schedule", "bias_corrected", "auto"}},
      {"run",
       {"id", "seeds", "T", "log_every", "x0", "escape_level", "f_threshold", "lambda_every", "est_error_every"}},
      {"sweep", {"axis", "values"}},
      {"estimation", {"etas", "C", "c_w", "T_factor", "delta"}},
  };
  return keys;
}

[[noreturn]] void config_error(const std::string& field, const std::string& msg) {
  throw Error(ErrorKind::ConfigError, field + ": " + msg);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

RawConfig flatten(const boost::property_tree::ptree& tree) {
  RawConfig raw;
  for (const auto& [section, body] : tree) {
    if (body.empty()) config_error(section, "keys must live inside a section");
    auto it = allowed_keys().find(section);
    if (it == allowed_keys().end()) config_error(section, "unknown section");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) config_error(section + "." + key, "unknown key");
      raw[section + "." + key] = trim(value.data());
    }
  }
  return raw;
}

class Reader {
 public:
  explicit Reader(const RawConfig& raw) : raw_(raw) {}

  bool has(const std::string& f) const { return raw_.count(f) > 0; }

  std::string str(const std::string& f, const std::string& def) const {
    auto it = raw_.find(f);
    return it == raw_.end() ? def : it->second;
  }

  double num(const std::string& f, double def) const { return has(f) ? parse_num(f, raw_.at(f)) : def; }

  std::optional<double> opt_num(const std::string& f) const {
    if (!has(f)) return std::nullopt;
    return parse_num(f, raw_.at(f));
  }

  long integer(const std::string& f, long def) const {
    if (!has(f)) return def;
    return parse_int(f, raw_.at(f));
  }

  bool flag(const std::string& f, bool def) const {
    if (!has(f)) return def;
    const std::string& v = raw_.at(f);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    config_error(f, "expected a boolean, got '" + v + "'");
  }

  std::vector<double> nums(const std::string& f) const {
    std::vector<double> out;
    for (const auto& item : split(f)) out.push_back(parse_num(f, item));
    return out;
  }

  std::vector<std::string> split(const std::string& f) const {
    std::vector<std::string> out;
    if (!has(f)) return out;
    std::stringstream ss(raw_.at(f));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) config_error(f, "empty list entry");
      out.push_back(item);
    }
    return out;
  }

  static double parse_num(const std::string& f, const std::string& v) {
    double out = 0.0;
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end || !std::isfinite(out)) config_error(f, "expected a number, got '" + v + "'");
    return out;
  }

  static long parse_int(const std::string& f, const std::string& v) {
    long out = 0;
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec == std::errc() && p == end) return out;
    // Accept integral values written as floats, e.g. 1e4.
    const double d = parse_num(f, v);
    if (d != std::floor(d) || std::abs(d) > 9e15) config_error(f, "expected an integer, got '" + v + "'");
    return static_cast<long>(d);
  }

 private:
  const RawConfig& raw_;
};

std::vector<std::uint64_t> parse_seeds(const Reader& r) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : r.split("run.seeds")) {
    const auto dots = item.find("..");
    if (dots != std::string::npos) {
      const long a = Reader::parse_int("run.seeds", trim(item.substr(0, dots)));
      const long b = Reader::parse_int("run.seeds", trim(item.substr(dots + 2)));
      if (a < 0 || b < a) config_error("run.seeds", "bad range '" + item + "'");
      for (long s = a; s <= b; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    } else {
      const long s = Reader::parse_int("run.seeds", item);
      if (s < 0) config_error("run.seeds", "seeds must be >= 0");
      seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }
  if (!r.has("run.seeds")) seeds.push_back(0);
  if (seeds.empty()) config_error("run.seeds", "empty seed list");
  return seeds;
}

ProblemPtr build_problem(const Reader& r, std::string& name) {
  name = r.str("problem.name", "");
  if (name.empty()) config_error("problem.name", "missing");
  try {
    if (name == "saddle") return make_saddle_problem();
    if (name == "counterexample") return make_counterexample(r.num("problem.C", 10.0), r.num("problem.zeta", 0.05));
    if (name == "quadratic") {
      const auto h = r.nums("problem.h_diag");
      if (h.empty()) config_error("problem.h_diag", "missing");
      const int d = static_cast<int>(h.size());
      Vector noise;
      if (r.has("problem.noise_diag")) {
        const auto nd = r.nums("problem.noise_diag");
        if (nd.size() != h.size()) config_error("problem.noise_diag", "length must match problem.h_diag");
        noise = Eigen::Map<const Vector>(nd.data(), d);
      } else {
        noise = Vector::Constant(d, r.num("problem.noise_scale", 1.0));
      }
      return make_quadratic_gaussian(SymMatrix::diagonal(Eigen::Map<const Vector>(h.data(), d)),
                                     SymMatrix::diagonal(noise));
    }
    if (name == "logistic") {
      LabeledData data;
      if (r.has("problem.data_file")) {
        data = load_labeled_csv(r.str("problem.data_file", ""));
      } else {
        const long n = r.integer("problem.n", 2000);
        const long d = r.integer("problem.d", 20);
        if (n < 1 || d < 1) config_error("problem.n", "n and d must be >= 1");
        const long seed = r.integer("problem.data_seed", 0);
        if (seed < 0) config_error("problem.data_seed", "must be >= 0");
        data = make_separable_with_noise(static_cast<int>(n), static_cast<int>(d), r.num("problem.flip_prob", 0.1),
                                         static_cast<std::uint64_t>(seed));
      }
      return make_logistic_regression(std::move(data), static_cast<int>(r.integer("problem.batch", 100)));
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    config_error("problem", e.what());
  }
  config_error("problem.name", "unknown problem '" + name + "'");
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "sgd") return Algorithm::Sgd;
  if (s == "rmsprop") return Algorithm::RmsProp;
  if (s == "rmsprop_burnin") return Algorithm::RmsPropBurnIn;
  if (s == "large_step") return Algorithm::LargeStep;
  config_error("optimizer.algorithm", "unknown algorithm '" + s + "'");
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Sgd: return "sgd";
    case Algorithm::RmsProp: return "rmsprop";
    case Algorithm::RmsPropBurnIn: return "rmsprop_burnin";
    case Algorithm::LargeStep: return "large_step";
  }
  return "?";
}

RawConfig load_raw_config(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return flatten(tree);
}

RawConfig parse_raw_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return flatten(tree);
}

FirstOrderInputs first_order_inputs(const StochasticProblem& problem, const Vector& x0) {
  const auto G = problem.exact_G(x0);
  if (!G) throw Error(ErrorKind::MissingOracle, problem.name() + " has no exact second moment");
  const auto L = problem.smoothness().L;
  const auto fs = problem.f_star();
  if (!L || !fs) throw Error(ErrorKind::MissingOracle, problem.name() + " lacks L or f*");
  const Vector m = problem.grad(x0);
  const double noise_trace = G->trace() - m.squaredNorm();
  const double gap = problem.eval_f(x0) - *fs;
  return FirstOrderInputs{*L, noise_trace + 2.0 * *L * gap, 1.0, gap};
}

ExperimentConfig resolve_config(const RawConfig& raw) {
  for (const auto& [field, value] : raw) {
    const auto dot = field.find('.');
    const auto it = dot == std::string::npos ? allowed_keys().end() : allowed_keys().find(field.substr(0, dot));
    if (it == allowed_keys().end() || !it->second.count(field.substr(dot + 1))) config_error(field, "unknown key");
  }
  Reader r(raw);
  ExperimentConfig cfg;
  cfg.raw = raw;
  cfg.problem = build_problem(r, cfg.problem_name);
  const int dim = cfg.problem->dim();

  cfg.algorithm = parse_algorithm(r.str("optimizer.algorithm", "rmsprop"));
  const std::string source = r.str("optimizer.source", "estimator");
  if (source == "idealized") {
    cfg.source = ASource::Idealized;
  } else if (source == "estimator") {
    cfg.source = ASource::Estimator;
  } else {
    config_error("optimizer.source", "expected idealized or estimator");
  }

  HyperParams& hp = cfg.hp;
  try {
    hp.variant = parse_preconditioner_variant(r.str("optimizer.preconditioner", "full"));
  } catch (const Error& e) {
    config_error("optimizer.preconditioner", e.what());
  }
  if (cfg.algorithm == Algorithm::Sgd && !r.has("optimizer.preconditioner")) hp.variant = PreconditionerVariant::Identity;
  hp.epsilon = r.num("optimizer.epsilon", 1e-8);
  hp.exponent = r.num("optimizer.exponent", -0.5);
  // beta is a number, or "schedule(C)" as shorthand for beta_mode = schedule
  // with beta_C = C, so one sweep axis can mix fixed and scheduled values.
  std::optional<double> beta_shorthand_C;
  {
    const std::string b = r.str("optimizer.beta", "0.99");
    if (b.rfind("schedule(", 0) == 0 && b.size() > 10 && b.back() == ')') {
      beta_shorthand_C = Reader::parse_num("optimizer.beta", b.substr(9, b.size() - 10));
    } else {
      hp.beta = Reader::parse_num("optimizer.beta", b);
    }
  }
  hp.tau = r.num("optimizer.tau", 0.1);
  hp.delta_prob = r.num("optimizer.delta", 0.1);
  hp.omega = r.num("optimizer.omega", 5.0);
  hp.K_const = r.num("optimizer.K", 0.125);
  hp.bias_corrected = r.flag("optimizer.bias_corrected", false);
  try {
    hp.eta_schedule = parse_eta_schedule(r.str("optimizer.eta_schedule", "constant"));
  } catch (const Error& e) {
    config_error("optimizer.eta_schedule", e.what());
  }
  const std::string beta_mode = r.str("optimizer.beta_mode", beta_shorthand_C ? "schedule" : "fixed");
  if (beta_shorthand_C) {
    if (beta_mode != "schedule") config_error("optimizer.beta", "schedule(C) conflicts with beta_mode = fixed");
    if (r.has("optimizer.beta_C")) config_error("optimizer.beta_C", "already given by optimizer.beta");
    hp.beta_C = *beta_shorthand_C;
    if (!(*hp.beta_C > 0)) config_error("optimizer.beta", "schedule constant must be > 0");
  } else if (beta_mode == "schedule") {
    hp.beta_C = r.num("optimizer.beta_C", 1.0);
    if (!(*hp.beta_C > 0)) config_error("optimizer.beta_C", "must be > 0");
  } else if (beta_mode != "fixed") {
    config_error("optimizer.beta_mode", "expected fixed or schedule");
  } else if (r.has("optimizer.beta_C")) {
    config_error("optimizer.beta_C", "only valid with beta_mode = schedule");
  }

  cfg.run_id = r.str("run.id", "run");
  if (cfg.run_id.empty() || cfg.run_id.find_first_of("/\\") != std::string::npos) {
    config_error("run.id", "must be a plain name");
  }
  cfg.seeds = parse_seeds(r);
  if (r.has("run.x0")) {
    const auto x0 = r.nums("run.x0");
    if (static_cast<int>(x0.size()) != dim) {
      config_error("run.x0", "expected " + std::to_string(dim) + " entries");
    }
    cfg.x0 = Eigen::Map<const Vector>(x0.data(), dim);
  }

  // Step size: a number, or "auto" resolved from the problem's constants.
  const std::string eta_s = r.str("optimizer.eta", "0.001");
  const std::string T_s = r.str("run.T", "1000");
  std::optional<long> auto_T;
  if (eta_s == "auto") {
    const std::string mode = r.str("optimizer.auto", "first_order");
    try {
      if (mode == "first_order" || mode == "first_order_inexact") {
        if (hp.variant != PreconditionerVariant::Identity) {
          config_error("optimizer.auto", "first-order auto supports the identity preconditioner only");
        }
        const auto fo = first_order_params(first_order_inputs(*cfg.problem, cfg.start()), hp.tau,
                                           mode == "first_order");
        hp.eta = fo.eta;
        auto_T = fo.T;
      } else if (mode == "second_order") {
        const Vector x = cfg.start();
        PreconditionerConstants k;
        switch (hp.variant) {
          case PreconditionerVariant::Identity: k = constants_identity(*cfg.problem, x); break;
          case PreconditionerVariant::Diagonal: k = constants_diagonal(*cfg.problem, x, hp.epsilon); break;
          default: k = constants_full_matrix(*cfg.problem, x, hp.epsilon); break;
        }
        auto smooth = cfg.problem->smoothness();
        if (!smooth.M_step) {
          Rng rng(0x5eed);
          smooth.M_step = estimate_step_bound(*cfg.problem, hp.kind(), x, 2000, rng);
        }
        const auto so = second_order_params(k, smooth, hp.tau, hp.delta_prob, hp.omega, hp.K_const);
        const auto keep = hp;
        hp = so.hp;
        hp.variant = keep.variant;
        hp.epsilon = keep.epsilon;
        hp.exponent = keep.exponent;
        hp.beta = keep.beta;
        hp.beta_C = keep.beta_C;
        hp.bias_corrected = keep.bias_corrected;
        hp.eta_schedule = keep.eta_schedule;
      } else {
        config_error("optimizer.auto", "expected first_order, first_order_inexact or second_order");
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      config_error("optimizer.auto", e.what());
    }
  } else {
    if (r.has("optimizer.auto")) config_error("optimizer.auto", "only valid with eta = auto");
    hp.eta = Reader::parse_num("optimizer.eta", eta_s);
  }
  // Explicit keys win over values filled in by the auto rule.
  const bool second_order_auto = eta_s == "auto" && r.str("optimizer.auto", "first_order") == "second_order";
  if (r.has("optimizer.r")) {
    hp.r = r.num("optimizer.r", hp.eta);
  } else if (!second_order_auto) {
    hp.r = hp.eta;
  }
  hp.t_thresh = r.integer("optimizer.t_thresh", hp.t_thresh);
  hp.S = r.integer("optimizer.S", hp.S);
  if (r.has("optimizer.W")) {
    const std::string w = r.str("optimizer.W", "");
    hp.W = w == "auto" ? burn_in_length(hp.eta, r.num("optimizer.c_w", 1.0)) : Reader::parse_int("optimizer.W", w);
  }

  if (T_s == "auto") {
    if (!auto_T) config_error("run.T", "auto requires optimizer.eta = auto with a first-order rule");
    cfg.T = *auto_T;
  } else {
    cfg.T = Reader::parse_int("run.T", T_s);
  }
  if (cfg.T < 1) config_error("run.T", "must be >= 1");
  cfg.log_every = r.integer("run.log_every", 1);
  if (cfg.log_every < 1) config_error("run.log_every", "must be >= 1");
  cfg.lambda_every = r.integer("run.lambda_every", 0);
  cfg.est_error_every = r.integer("run.est_error_every", 0);
  if (cfg.lambda_every < 0) config_error("run.lambda_every", "must be >= 0");
  if (cfg.est_error_every < 0) config_error("run.est_error_every", "must be >= 0");
  cfg.escape_level = r.num("run.escape_level", -0.1);
  cfg.f_threshold = r.opt_num("run.f_threshold");

  cfg.est_etas = r.nums("estimation.etas");
  cfg.est_C = r.num("estimation.C", 1.0);
  cfg.est_c_w = r.num("estimation.c_w", 4.0);
  cfg.est_T_factor = r.num("estimation.T_factor", 20.0);
  cfg.est_delta = r.num("estimation.delta", 0.05);
  for (double e : cfg.est_etas) {
    if (!(e > 0)) config_error("estimation.etas", "entries must be > 0");
  }
  if (!(cfg.est_T_factor > 4.0)) config_error("estimation.T_factor", "must exceed 4");

  try {
    hp.validate();
    if (cfg.algorithm == Algorithm::LargeStep) {
      if (hp.r < hp.eta) throw Error(ErrorKind::InvalidParam, "large-step mode needs r >= eta");
      if (cfg.source == ASource::Estimator && hp.S < 1) throw Error(ErrorKind::InvalidParam, "S must be >= 1");
    }
    if (cfg.algorithm == Algorithm::RmsPropBurnIn && hp.W < 1) {
      throw Error(ErrorKind::InvalidParam, "rmsprop_burnin needs W >= 1");
    }
    if (cfg.source == ASource::Idealized && hp.variant != PreconditionerVariant::Identity &&
        !cfg.problem->exact_G(cfg.start())) {
      throw Error(ErrorKind::MissingOracle, "idealized source needs a problem with exact G");
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    config_error("optimizer", e.what());
  }
  return cfg;
}

}  // namespace apsgd
