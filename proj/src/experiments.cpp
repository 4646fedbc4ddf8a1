#include "apsgd/experiments.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "apsgd/error.hpp"

namespace apsgd {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ runs

RunResult execute(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opt) {
  Rng rng(seed);
  const StochasticProblem& p = *cfg.problem;
  switch (cfg.algorithm) {
    case Algorithm::Sgd: return run_preconditioned_sgd(p, cfg.source, cfg.hp, cfg.T, rng, opt);
    case Algorithm::RmsProp: return run_rmsprop(p, cfg.hp, cfg.T, rng, opt);
    case Algorithm::RmsPropBurnIn: return run_rmsprop_with_burnin(p, cfg.hp, cfg.T, rng, opt);
    case Algorithm::LargeStep: return run_large_step_variant(p, cfg.source, cfg.hp, cfg.T, rng, opt);
  }
  throw Error(ErrorKind::InvalidParam, "unknown algorithm");
}

Summarizer::Summarizer(long T, double escape_level, std::optional<double> f_threshold)
    : T_(T), escape_level_(escape_level), f_threshold_(f_threshold) {}

void Summarizer::add(const TrajectoryRecord& rec) {
  if (rec.kind != StepKind::Normal && rec.kind != StepKind::Large) return;
  if (!any_ || rec.f < min_f_) min_f_ = rec.f;
  any_ = true;
  final_f_ = rec.f;
  if (!escape_ && rec.f <= escape_level_) escape_ = rec.iter;
  if (f_threshold_ && !hit_threshold_ && rec.f <= *f_threshold_) hit_threshold_ = rec.iter;
  if (rec.iter >= 1 && rec.iter > T_ - 1000) {
    tail_sum_ += rec.f;
    ++tail_n_;
  }
  if (rec.est_error) sup_err_ = std::max(sup_err_.value_or(0.0), *rec.est_error);
}

RunSummary Summarizer::finish() const {
  RunSummary s;
  s.final_f = final_f_;
  s.min_f = min_f_;
  s.iters_to_threshold = hit_threshold_;
  s.escape_time = escape_;
  if (tail_n_ > 0) s.mean_last_1000_f = tail_sum_ / static_cast<double>(tail_n_);
  s.sup_est_error = sup_err_;
  return s;
}

RunSummary run_to_file(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& traj_path) {
  if (traj_path.has_parent_path()) fs::create_directories(traj_path.parent_path());
  const fs::path tmp(traj_path.string() + ".tmp");
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::DataFormatError, "cannot write " + tmp.string());
  const int dim = cfg.problem->dim();
  const auto header = trajectory_header(dim);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';

  Summarizer summ(cfg.T, cfg.escape_level, cfg.f_threshold);
  RunOptions opt;
  opt.x0 = cfg.x0;
  opt.log_every = cfg.log_every;
  opt.lambda_every = cfg.lambda_every;
  opt.est_error_every = cfg.est_error_every;
  opt.sink = [&](const TrajectoryRecord& rec) {
    out << trajectory_row(rec, dim <= 8) << '\n';
    summ.add(rec);
  };

  std::string status = "ok";
  try {
    execute(cfg, seed, opt);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NonFinite && e.kind() != ErrorKind::SingularMatrix) {
      out.close();
      fs::remove(tmp);
      throw;
    }
    status = "diverged";
  }
  out.flush();
  out.close();
  fs::rename(tmp, traj_path);

  RunSummary s = summ.finish();
  s.run_id = cfg.run_id;
  s.seed = seed;
  s.status = status;
  return s;
}

// ----------------------------------------------------------------- utils

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::NonFinite:
      case ErrorKind::SingularMatrix:
      case ErrorKind::PreconditionViolated: return 3;
      default: return 2;
    }
  }
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
  return 1;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::InvalidParam, "slope needs >= 2 points");
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) throw Error(ErrorKind::InvalidParam, "log-log slope needs positive values");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (!(sxx > 0)) throw Error(ErrorKind::InvalidParam, "slope needs distinct x values");
  return sxy / sxx;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error(ErrorKind::InvalidParam, "quantile of empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace {

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  return out;
}

std::string summary_text(const std::vector<RunSummary>& rows) {
  std::string out;
  const auto h = summary_header();
  for (std::size_t i = 0; i < h.size(); ++i) out += (i ? "," : "") + h[i];
  out += '\n';
  for (const auto& r : rows) out += summary_row(r) + '\n';
  return out;
}

std::optional<double> as_number(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

bool value_less(const std::string& a, const std::string& b) {
  const auto na = as_number(a), nb = as_number(b);
  if (na && nb) return *na < *nb;
  if (na != nb && (na || nb)) return na.has_value();
  return a < b;
}

struct Job {
  std::size_t condition = 0;
  std::uint64_t seed = 0;
};

struct Condition {
  std::string label;
  std::string dir;  // relative to the summary directory; empty for plain runs
  std::vector<std::string> values;
  ExperimentConfig cfg;
};

int run_conditions(std::vector<Condition> conds, const fs::path& root, const CliContext& ctx, std::ostream& log) {
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < conds.size(); ++c)
    for (auto s : conds[c].cfg.seeds) jobs.push_back({c, s + ctx.seed_offset});

  std::vector<RunSummary> results(jobs.size());
  parallel_for(jobs.size(), ctx.jobs, [&](std::size_t i) {
    const Job& j = jobs[i];
    const Condition& c = conds[j.condition];
    const fs::path rel = (c.dir.empty() ? fs::path() : fs::path(c.dir)) / ("seed_" + std::to_string(j.seed) + ".csv");
    RunSummary s = run_to_file(c.cfg, j.seed, root / rel);
    s.condition = c.label;
    s.trajectory_file = rel.generic_string();
    results[i] = std::move(s);
  });

  std::vector<std::size_t> order(jobs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& va = conds[jobs[a].condition].values;
    const auto& vb = conds[jobs[b].condition].values;
    for (std::size_t k = 0; k < va.size(); ++k) {
      if (value_less(va[k], vb[k])) return true;
      if (value_less(vb[k], va[k])) return false;
    }
    return jobs[a].seed < jobs[b].seed;
  });
  std::vector<RunSummary> sorted;
  int diverged = 0;
  for (auto i : order) {
    if (results[i].status != "ok") ++diverged;
    sorted.push_back(results[i]);
  }
  write_file_atomic(root / "summary.csv", summary_text(sorted));
  log << "wrote " << sorted.size() << " trajectories and " << (root / "summary.csv").string() << '\n';
  if (diverged > 0) {
    log << diverged << " run(s) diverged; partial trajectories kept\n";
    return 3;
  }
  return 0;
}

template <class F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace

// -------------------------------------------------------------- commands

int cmd_run(const fs::path& config, const CliContext& ctx, std::ostream& log) {
  return guarded(log, [&] {
    ExperimentConfig cfg = resolve_config(load_raw_config(config));
    std::vector<Condition> conds;
    conds.push_back({"", "", {}, std::move(cfg)});
    const fs::path root = ctx.out_dir / conds[0].cfg.run_id;
    return run_conditions(std::move(conds), root, ctx, log);
  });
}

int cmd_sweep(const fs::path& config, std::vector<SweepAxis> axes, const CliContext& ctx, std::ostream& log) {
  return guarded(log, [&] {
    const RawConfig base = load_raw_config(config);
    if (axes.empty()) {
      auto a = base.find("sweep.axis");
      if (a == base.end()) throw Error(ErrorKind::ConfigError, "sweep.axis: no sweep axis given");
      auto v = base.find("sweep.values");
      std::vector<std::string> values;
      if (v != base.end()) {
        std::stringstream ss(v->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
          const auto b = item.find_first_not_of(" \t");
          const auto e = item.find_last_not_of(" \t");
          if (b != std::string::npos) values.push_back(item.substr(b, e - b + 1));
        }
      }
      axes.push_back({a->second, values});
    }
    for (const auto& [name, values] : axes) {
      if (values.empty()) throw Error(ErrorKind::ConfigError, name + ": empty value list");
      if (name.rfind("sweep.", 0) == 0) throw Error(ErrorKind::ConfigError, name + ": cannot sweep the sweep section");
    }

    std::vector<Condition> conds;
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
      RawConfig raw = base;
      raw.erase("sweep.axis");
      raw.erase("sweep.values");
      std::string label;
      std::vector<std::string> values;
      for (std::size_t k = 0; k < axes.size(); ++k) {
        const auto& v = axes[k].second[idx[k]];
        raw[axes[k].first] = v;
        label += (k ? ";" : "") + axes[k].first + "=" + v;
        values.push_back(v);
      }
      char prefix[16];
      std::snprintf(prefix, sizeof prefix, "c%03zu_", conds.size());
      conds.push_back({label, prefix + slug(label), values, resolve_config(raw)});

      std::size_t k = 0;
      while (k < axes.size() && ++idx[k] == axes[k].second.size()) idx[k++] = 0;
      if (k == axes.size()) break;
    }
    const fs::path root = ctx.out_dir / conds.front().cfg.run_id;
    log << "sweep: " << conds.size() << " conditions x " << conds.front().cfg.seeds.size() << " seeds\n";
    return run_conditions(std::move(conds), root, ctx, log);
  });
}

EstimationScalingResult estimation_scaling(const ExperimentConfig& cfg, std::uint64_t seed) {
  const StochasticProblem& p = *cfg.problem;
  const Vector x0 = cfg.start();
  if (!p.exact_G(x0)) throw Error(ErrorKind::MissingOracle, p.name() + " has no exact second moment");
  if (!p.conditional_sigma(x0)) throw Error(ErrorKind::MissingOracle, p.name() + " has no conditional variance");
  if (cfg.est_etas.size() < 2) throw Error(ErrorKind::ConfigError, "estimation.etas: need at least two values");

  EstimationScalingResult out;
  std::vector<double> etas, gs, as;
  for (std::size_t i = 0; i < cfg.est_etas.size(); ++i) {
    const double eta = cfg.est_etas[i];
    HyperParams hp = cfg.hp;
    hp.eta = hp.r = eta;
    hp.eta_schedule = EtaSchedule::Constant;
    hp.beta_C.reset();
    hp.beta = beta_schedule(eta, cfg.est_C);
    hp.W = burn_in_length(eta, cfg.est_c_w);
    const long T = static_cast<long>(std::ceil(cfg.est_T_factor / (1.0 - hp.beta)));

    EstimationScalingRow row;
    row.eta = eta;
    row.beta = hp.beta;
    row.W = hp.W;
    row.T = T;
    row.sigma_max = *p.conditional_sigma(x0);
    Vector prev = x0;
    SymMatrix G_prev = *p.exact_G(x0);

    RunOptions opt;
    opt.x0 = x0;
    opt.log_aux = false;
    opt.est_error_every = 1;
    opt.sink = [&](const TrajectoryRecord& rec) {
      if (rec.iter < 1) return;
      row.sup_g_error = std::max(row.sup_g_error, rec.g_est_error.value_or(0.0));
      row.sup_a_error = std::max(row.sup_a_error, rec.est_error.value_or(0.0));
      row.sigma_max = std::max(row.sigma_max, *p.conditional_sigma(rec.x));
      const double step = (rec.x - prev).norm();
      const SymMatrix G = *p.exact_G(rec.x);
      if (step > 0) {
        row.M = std::max(row.M, step / eta);
        row.L_G = std::max(row.L_G, op_norm(G - G_prev) / step);
      }
      prev = rec.x;
      G_prev = G;
    };
    Rng rng = Rng(seed).split(i);
    run_rmsprop_with_burnin(p, hp, T, rng, opt);

    // The first post-burn-in estimate averages W + 1 samples.
    EstimationBoundInputs in;
    in.sigma_max = row.sigma_max;
    in.M_step = row.M;
    in.L_G = row.L_G;
    in.eta = eta;
    in.beta = hp.beta;
    in.T = hp.W + 1;
    in.d = p.dim();
    in.delta_prob = cfg.est_delta;
    row.bound = estimation_error_bound(in);

    etas.push_back(eta);
    gs.push_back(row.sup_g_error);
    as.push_back(row.sup_a_error);
    out.rows.push_back(row);
  }
  // Exactly zero errors (no noise) leave the fit undefined.
  const auto fit = [&](const std::vector<double>& ys) {
    const bool positive = std::all_of(ys.begin(), ys.end(), [](double y) { return y > 0; });
    return positive ? loglog_slope(etas, ys) : std::numeric_limits<double>::quiet_NaN();
  };
  out.slope_g = fit(gs);
  out.slope_a = fit(as);
  return out;
}

int cmd_estimation_scaling(const fs::path& config, const CliContext& ctx, std::ostream& log) {
  return guarded(log, [&] {
    const ExperimentConfig cfg = resolve_config(load_raw_config(config));
    if (cfg.est_etas.size() < 2) throw Error(ErrorKind::ConfigError, "estimation.etas: need at least two values");
    const auto res = estimation_scaling(cfg, cfg.seeds.front() + ctx.seed_offset);
    std::string csv = "eta,beta,W,T,sup_g_error,sup_a_error,sigma_max,M,L_G,bound,ratio\n";
    for (const auto& r : res.rows) {
      csv += format_double(r.eta) + ',' + format_double(r.beta) + ',' + std::to_string(r.W) + ',' +
             std::to_string(r.T) + ',' + format_double(r.sup_g_error) + ',' + format_double(r.sup_a_error) + ',' +
             format_double(r.sigma_max) + ',' + format_double(r.M) + ',' + format_double(r.L_G) + ',' +
             format_double(r.bound) + ',' + format_double(r.sup_g_error / r.bound) + '\n';
    }
    const fs::path root = ctx.out_dir / cfg.run_id;
    write_file_atomic(root / "estimation_scaling.csv", csv);
    write_file_atomic(root / "estimation_fit.csv",
                      "slope_g,slope_a\n" + format_double(res.slope_g) + ',' + format_double(res.slope_a) + '\n');
    log << "slope(sup ||G_hat - G||) = " << res.slope_g << ", slope(sup ||A_hat - A||) = " << res.slope_a << '\n';
    return 0;
  });
}

int cmd_report(const std::vector<fs::path>& summaries, const CliContext& ctx, std::ostream& log) {
  return guarded(log, [&] {
    if (summaries.empty()) throw Error(ErrorKind::ConfigError, "report: no summary files");
    const fs::path root = ctx.out_dir / "report";
    std::string index = "bands_file,summary,run_id,condition,seeds\n";
    std::size_t k = 0;
    for (const auto& path : summaries) {
      const auto rows = read_summary_csv(path);
      std::vector<std::pair<std::string, std::vector<const RunSummary*>>> groups;
      for (const auto& r : rows) {
        const std::string key = r.run_id + '\n' + r.condition;
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
        if (it == groups.end()) {
          groups.push_back({key, {}});
          it = groups.end() - 1;
        }
        it->second.push_back(&r);
      }
      for (const auto& [key, members] : groups) {
        std::map<long, std::vector<double>> by_iter;
        for (const RunSummary* r : members) {
          for (const auto& rec : read_trajectory_csv(path.parent_path() / r->trajectory_file)) {
            if (rec.kind == StepKind::Normal || rec.kind == StepKind::Large) by_iter[rec.iter].push_back(rec.f);
          }
        }
        std::string csv = "iter,n,q10,q50,q90\n";
        for (const auto& [iter, vals] : by_iter) {
          csv += std::to_string(iter) + ',' + std::to_string(vals.size()) + ',' + format_double(quantile(vals, 0.1)) +
                 ',' + format_double(quantile(vals, 0.5)) + ',' + format_double(quantile(vals, 0.9)) + '\n';
        }
        const std::string& cond = members.front()->condition;
        const std::string name = "bands_" + std::to_string(k++) + "_" + slug(members.front()->run_id) +
                                 (cond.empty() ? "" : "_" + slug(cond)) + ".csv";
        write_file_atomic(root / name, csv);
        index += name + ',' + path.generic_string() + ',' + members.front()->run_id + ',' + cond + ',' +
                 std::to_string(members.size()) + '\n';
      }
    }
    write_file_atomic(root / "bands_index.csv", index);
    log << "wrote " << k << " band file(s) to " << root.string() << '\n';
    return 0;
  });
}

}  // namespace apsgd
