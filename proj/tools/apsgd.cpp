#include <CLI11.hpp>

#include <iostream>
#include <thread>

#include "apsgd/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Adaptive preconditioned SGD experiments"};
  app.require_subcommand(1);

  apsgd::CliContext ctx;
  ctx.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out_dir = "out";
  app.add_option("--out", out_dir, "Output directory")->envname("APSGD_OUT_DIR");
  app.add_option("--jobs", ctx.jobs, "Worker threads for independent runs")->check(CLI::PositiveNumber);
  app.add_option("--seed-offset", ctx.seed_offset, "Added to every configured seed");

  std::string config;
  auto* run = app.add_subcommand("run", "Run every seed of a config");
  run->add_option("config", config)->required();

  auto* sweep = app.add_subcommand("sweep", "Cross product of axis values x seeds");
  sweep->add_option("config", config)->required();
  std::vector<std::string> axes, values;
  sweep->add_option("--axis", axes, "Config field, e.g. optimizer.eta (repeatable)");
  sweep->add_option("--values", values, "Comma-separated values for the matching --axis")->allow_extra_args(false);

  auto* est = app.add_subcommand("estimation-scaling", "Estimation error against eta");
  est->add_option("config", config)->required();

  std::vector<std::string> files;
  auto* report = app.add_subcommand("report", "Quantile bands from summary files");
  report->add_option("files", files)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  ctx.out_dir = out_dir;

  if (run->parsed()) return apsgd::cmd_run(config, ctx, std::cerr);
  if (est->parsed()) return apsgd::cmd_estimation_scaling(config, ctx, std::cerr);
  if (report->parsed()) {
    std::vector<std::filesystem::path> paths(files.begin(), files.end());
    return apsgd::cmd_report(paths, ctx, std::cerr);
  }
  if (axes.size() != values.size()) {
    std::cerr << "error: each --axis needs exactly one --values\n";
    return 2;
  }
  std::vector<apsgd::SweepAxis> spec;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    std::vector<std::string> vals;
    std::stringstream ss(values[i]);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) vals.push_back(item);
    }
    spec.push_back({axes[i], vals});
  }
  return apsgd::cmd_sweep(config, spec, ctx, std::cerr);
}
