#include "reswm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "reswm/metrics.hpp"
#include "reswm/trainer.hpp"

namespace reswm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

MetricsTable read_metrics(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("emit_report: missing " + path);
  MetricsTable t;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("emit_report: empty metrics file");
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) t.columns.push_back(cell);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream rs(line);
    while (std::getline(rs, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != t.columns.size())
      throw std::runtime_error("emit_report: ragged metrics row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string svg_num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// One panel: polylines over a shared x column, linearly scaled into the box.
void svg_panel(std::ostream& os, const MetricsTable& t, const std::vector<std::string>& series,
               const std::vector<std::string>& colors, const std::string& title, double x0,
               double y0, double w, double h) {
  os << "<rect x=\"" << svg_num(x0) << "\" y=\"" << svg_num(y0) << "\" width=\"" << svg_num(w)
     << "\" height=\"" << svg_num(h) << "\" fill=\"none\" stroke=\"#888\"/>\n";
  os << "<text x=\"" << svg_num(x0 + 6) << "\" y=\"" << svg_num(y0 + 16)
     << "\" font-size=\"12\" font-family=\"monospace\">" << title << "</text>\n";
  if (t.rows.size() < 2) return;
  auto col = [&](const std::string& name) -> int {
    for (size_t i = 0; i < t.columns.size(); ++i)
      if (t.columns[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int xc = col("env_step");
  if (xc < 0) return;
  double xmin = t.rows.front()[static_cast<size_t>(xc)];
  double xmax = t.rows.back()[static_cast<size_t>(xc)];
  if (xmax == xmin) xmax = xmin + 1;
  double ymin = 0, ymax = 0;
  bool first = true;
  for (const auto& s : series) {
    const int c = col(s);
    if (c < 0) continue;
    for (const auto& r : t.rows) {
      const double v = r[static_cast<size_t>(c)];
      if (first) {
        ymin = ymax = v;
        first = false;
      }
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (first) return;
  if (ymax == ymin) ymax = ymin + 1;
  for (size_t si = 0; si < series.size(); ++si) {
    const int c = col(series[si]);
    if (c < 0) continue;
    os << "<polyline fill=\"none\" stroke=\"" << colors[si % colors.size()]
       << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : t.rows) {
      const double px = x0 + (r[static_cast<size_t>(xc)] - xmin) / (xmax - xmin) * w;
      const double py = y0 + h - (r[static_cast<size_t>(c)] - ymin) / (ymax - ymin) * h;
      os << svg_num(px) << ',' << svg_num(py) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << svg_num(x0 + 6) << "\" y=\"" << svg_num(y0 + 30 + 14 * static_cast<double>(si))
       << "\" font-size=\"10\" font-family=\"monospace\" fill=\"" << colors[si % colors.size()]
       << "\">" << series[si] << "</text>\n";
  }
}

json smoothness_json(const SmoothnessReport& r) {
  return json{{"mean_abs_delta", r.mean_abs_delta},
              {"energy", r.energy},
              {"residual_energy", r.residual_energy},
              {"high_freq_ratio", r.high_freq_ratio}};
}

}  // namespace

void emit_report(const std::string& run_dir) {
  MetricsTable t = read_metrics(run_dir + "/metrics.csv");

  json rep;
  rep["columns"] = t.columns;
  if (t.rows.empty()) {
    rep["final"] = nullptr;
  } else {
    json fin;
    const auto& last = t.rows.back();
    for (size_t i = 0; i < t.columns.size(); ++i) fin[t.columns[i]] = last[i];
    rep["final"] = fin;
  }

  rep["config"] = nullptr;
  const std::string cfg_path = run_dir + "/config.resolved";
  if (fs::exists(cfg_path)) {
    json cfg_echo = json::object();
    std::ifstream is(cfg_path);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) cfg_echo[line.substr(0, eq)] = line.substr(eq + 1);
    }
    rep["config"] = cfg_echo;
  }

  rep["smoothness"] = nullptr;
  const std::string ckpt_path = run_dir + "/final.ckpt";
  if (fs::exists(ckpt_path)) {
    CheckpointData ck = read_checkpoint(ckpt_path);
    Config cfg = Config::from_text(ck.config_text);
    Trainer tr(cfg, run_dir);
    tr.load_checkpoint(ckpt_path);
    const Task task = parse_task(cfg.task);
    auto [state, frame] = env_reset(task, cfg.seed);
    Agent::Carry carry = tr.agent().initial_carry(tr.model());
    CounterRng unused(0);
    std::vector<std::vector<double>> actions, residuals;
    double total = 0;
    const int adim = action_dim(task);
    for (int step = 0; step < kEpisodeLen; ++step) {
      std::vector<double> a = tr.agent().act(tr.model(), carry, frame, false, unused);
      std::vector<double> d(static_cast<size_t>(adim));
      for (int i = 0; i < adim; ++i) d[static_cast<size_t>(i)] = carry.delta_prev[i];
      StepResult res = env_step(state, a);
      total += res.reward;
      actions.push_back(std::move(a));
      residuals.push_back(std::move(d));
      state = res.state;
      frame = res.frame;
    }
    rep["smoothness"] = smoothness_json(smoothness_metrics(actions, residuals));
    rep["smoothness"]["episode_return"] = total;
  }

  {
    std::ofstream os(run_dir + "/report.json", std::ios::trunc);
    os << rep.dump(2) << '\n';
  }

  {
    std::ofstream os(run_dir + "/curves.svg", std::ios::trunc);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
          "viewBox=\"0 0 640 480\">\n";
    svg_panel(os, t, {"eval_return_mean"}, {"#1f6fd1"}, "evaluation return", 40, 20, 560, 200);
    svg_panel(os, t, {"recon_loss", "actor_loss", "critic_loss"},
              {"#1f6fd1", "#d1411f", "#2a9232"}, "training losses", 40, 250, 560, 200);
    os << "</svg>\n";
  }
}

void write_pgm(const std::string& path, int height, int width,
               const std::vector<double>& values) {
  if (height <= 0 || width <= 0 ||
      values.size() != static_cast<size_t>(height) * static_cast<size_t>(width))
    throw std::invalid_argument("write_pgm: bad dimensions");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
  os << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : values) {
    const double c = std::clamp(v, 0.0, 1.0);
    os.put(static_cast<char>(static_cast<int>(std::lround(c * 255.0))));
  }
}

}  // namespace reswm
