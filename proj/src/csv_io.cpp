#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "apsgd/error.hpp"
#include "apsgd/experiments.hpp"

namespace apsgd {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out;
}

double parse_cell(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw Error(ErrorKind::DataFormatError, what + ": bad number '" + s + "'");
  return v;
}

long parse_long_cell(const std::string& s, const std::string& what) {
  long v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw Error(ErrorKind::DataFormatError, what + ": bad integer '" + s + "'");
  return v;
}

std::optional<double> opt_cell(const std::string& s, const std::string& what) {
  if (s.empty()) return std::nullopt;
  return parse_cell(s, what);
}

std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : ""; }
std::string opt_str(const std::optional<long>& v) { return v ? std::to_string(*v) : ""; }

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error(ErrorKind::DataFormatError, "float formatting failed");
  return std::string(buf, p);
}

std::vector<std::string> trajectory_header(int dim) {
  std::vector<std::string> h{"iter", "step_kind", "f", "grad_norm", "lambda_min_H", "est_error"};
  if (dim <= 8) {
    for (int i = 0; i < dim; ++i) h.push_back("x_" + std::to_string(i));
  }
  return h;
}

std::string trajectory_row(const TrajectoryRecord& rec, bool with_x) {
  std::string out = std::to_string(rec.iter);
  out += ',';
  out += to_string(rec.kind);
  out += ',' + format_double(rec.f);
  out += ',' + format_double(rec.grad_norm);
  out += ',' + opt_str(rec.lambda_min_H);
  out += ',' + opt_str(rec.est_error);
  if (with_x) {
    for (Eigen::Index i = 0; i < rec.x.size(); ++i) out += ',' + format_double(rec.x(i));
  }
  return out;
}

std::vector<TrajectoryRecord> read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataFormatError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::DataFormatError, path.string() + ": empty file");
  const auto header = split_row(line);
  const std::vector<std::string> fixed = trajectory_header(0);
  if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin())) {
    throw Error(ErrorKind::DataFormatError, path.string() + ": not a trajectory file");
  }
  const std::size_t nx = header.size() - fixed.size();
  std::vector<TrajectoryRecord> out;
  long seq = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::DataFormatError, path.string() + ": row " + std::to_string(seq + 1) + " has " +
                                                  std::to_string(cells.size()) + " cells");
    }
    TrajectoryRecord r;
    r.seq = seq++;
    r.iter = parse_long_cell(cells[0], "iter");
    r.kind = parse_step_kind(cells[1]);
    r.f = parse_cell(cells[2], "f");
    r.grad_norm = parse_cell(cells[3], "grad_norm");
    r.lambda_min_H = opt_cell(cells[4], "lambda_min_H");
    r.est_error = opt_cell(cells[5], "est_error");
    r.x.resize(static_cast<Eigen::Index>(nx));
    for (std::size_t i = 0; i < nx; ++i) r.x(static_cast<Eigen::Index>(i)) = parse_cell(cells[6 + i], "x");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> summary_header() {
  return {"run_id",          "condition",        "seed",          "status",
          "final_f",         "min_f",            "iters_to_threshold", "escape_time",
          "mean_last_1000_f", "sup_est_error",   "trajectory_file"};
}

std::string summary_row(const RunSummary& s) {
  return join({s.run_id, s.condition, std::to_string(s.seed), s.status, format_double(s.final_f),
               format_double(s.min_f), opt_str(s.iters_to_threshold), opt_str(s.escape_time),
               opt_str(s.mean_last_1000_f), opt_str(s.sup_est_error), s.trajectory_file});
}

std::vector<RunSummary> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataFormatError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_row(line) != summary_header()) {
    throw Error(ErrorKind::DataFormatError, path.string() + ": summary schema mismatch");
  }
  std::vector<RunSummary> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_row(line);
    if (c.size() != summary_header().size()) throw Error(ErrorKind::DataFormatError, path.string() + ": bad row");
    RunSummary s;
    s.run_id = c[0];
    s.condition = c[1];
    s.seed = static_cast<std::uint64_t>(parse_long_cell(c[2], "seed"));
    s.status = c[3];
    s.final_f = parse_cell(c[4], "final_f");
    s.min_f = parse_cell(c[5], "min_f");
    if (!c[6].empty()) s.iters_to_threshold = parse_long_cell(c[6], "iters_to_threshold");
    if (!c[7].empty()) s.escape_time = parse_long_cell(c[7], "escape_time");
    s.mean_last_1000_f = opt_cell(c[8], "mean_last_1000_f");
    s.sup_est_error = opt_cell(c[9], "sup_est_error");
    s.trajectory_file = c[10];
    out.push_back(std::move(s));
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::DataFormatError, "cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error(ErrorKind::DataFormatError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace apsgd
