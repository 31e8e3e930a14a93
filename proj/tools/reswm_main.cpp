#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "reswm/metrics.hpp"
#include "reswm/report.hpp"
#include "reswm/trainer.hpp"

namespace fs = std::filesystem;
using namespace reswm;

namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::unique_ptr<Trainer> trainer_from_checkpoint(const std::string& path) {
  CheckpointData ck = read_checkpoint(path);
  Config cfg = Config::from_text(ck.config_text);
  auto tr = std::make_unique<Trainer>(cfg, fs::path(path).parent_path().string());
  tr->load_checkpoint(path);
  return tr;
}

struct EpisodeRecord {
  double ret = 0;
  std::vector<std::vector<double>> actions, residuals;
  std::vector<Frame> frames;
};

EpisodeRecord greedy_episode(Trainer& tr, std::uint64_t env_seed) {
  const Task task = parse_task(tr.config().task);
  const int adim = action_dim(task);
  auto [state, frame] = env_reset(task, env_seed);
  Agent::Carry carry = tr.agent().initial_carry(tr.model());
  CounterRng unused(0);
  EpisodeRecord rec;
  for (int t = 0; t < kEpisodeLen; ++t) {
    rec.frames.push_back(frame);
    std::vector<double> a = tr.agent().act(tr.model(), carry, frame, false, unused);
    std::vector<double> d(static_cast<size_t>(adim));
    for (int i = 0; i < adim; ++i) d[static_cast<size_t>(i)] = carry.delta_prev[i];
    StepResult res = env_step(state, a);
    rec.ret += res.reward;
    rec.actions.push_back(std::move(a));
    rec.residuals.push_back(std::move(d));
    state = res.state;
    frame = res.frame;
  }
  return rec;
}

int run_train(Config cfg, const std::string& out_dir) {
  Trainer tr(cfg, out_dir);
  tr.run();
  std::cout << "run complete: " << out_dir << " (" << tr.env_steps() << " env steps)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reswm: residual-action world model on tiny pixel control tasks"};
  app.require_subcommand(1);

  // train / ablate share options
  std::string task = "pendulum", config_path, out_dir = "run";
  long long steps = -1;
  std::int64_t seed = -1;
  std::string variant = "full";

  auto add_train_opts = [&](CLI::App* cmd) {
    cmd->add_option("--task", task, "pendulum or pointmass");
    cmd->add_option("--steps", steps, "total environment steps");
    cmd->add_option("--seed", seed, "run seed");
    cmd->add_option("--config", config_path, "config file (key=value lines)");
    cmd->add_option("--out", out_dir, "run directory");
  };
  CLI::App* train = app.add_subcommand("train", "train a model");
  add_train_opts(train);
  CLI::App* ablate = app.add_subcommand("ablate", "train an ablation variant");
  add_train_opts(ablate);
  ablate->add_option("--variant", variant, "full, v1, v2 or v3")->required();

  std::string ckpt_path, eval_out;
  int episodes = 10;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint greedily");
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval_cmd->add_option("--episodes", episodes, "episode count");
  eval_cmd->add_option("--out", eval_out, "per-episode CSV output");

  std::string attn_ckpt, attn_task = "pendulum", attn_out = "attn";
  int attn_episodes = 1;
  CLI::App* attn = app.add_subcommand("attn", "dump frames and attention maps");
  attn->add_option("--checkpoint", attn_ckpt, "checkpoint file")->required();
  attn->add_option("--task", attn_task, "environment task");
  attn->add_option("--episodes", attn_episodes, "episode count");
  attn->add_option("--out", attn_out, "output directory");

  std::string report_dir;
  CLI::App* report = app.add_subcommand("report", "emit report.json and curves.svg");
  report->add_option("--run", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (train->parsed() || ablate->parsed()) {
      Config cfg;
      if (!config_path.empty()) cfg = Config::load(config_path);
      if (train->count("--task") || ablate->count("--task")) cfg.task = task;
      if (steps >= 0) cfg.total_env_steps = steps;
      if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
      if (ablate->parsed()) {
        cfg.no_residual = cfg.no_odl = cfg.no_reg = false;
        if (variant == "v1")
          cfg.no_residual = true;
        else if (variant == "v2")
          cfg.no_odl = true;
        else if (variant == "v3")
          cfg.no_reg = true;
        else if (variant != "full") {
          std::cerr << "unknown variant '" << variant << "' (expected full, v1, v2 or v3)\n";
          return 1;
        }
      }
      return run_train(cfg, out_dir);
    }

    if (eval_cmd->parsed()) {
      auto tr = trainer_from_checkpoint(ckpt_path);
      std::ofstream csv;
      if (!eval_out.empty()) {
        csv.open(eval_out, std::ios::trunc);
        csv << "episode,return,mean_abs_delta,energy,residual_energy,high_freq_ratio\n";
      }
      double total = 0;
      for (int e = 0; e < episodes; ++e) {
        EpisodeRecord rec =
            greedy_episode(*tr, mix(tr->config().seed + 0x9E37u * static_cast<unsigned>(e + 1)));
        SmoothnessReport sm = smoothness_metrics(rec.actions, rec.residuals);
        total += rec.ret;
        std::printf("episode %d: return=%.4f mean_abs_delta=%.5f energy=%.5f high_freq=%.4f\n", e,
                    rec.ret, sm.mean_abs_delta, sm.energy, sm.high_freq_ratio);
        if (csv.is_open())
          csv << e << ',' << rec.ret << ',' << sm.mean_abs_delta << ',' << sm.energy << ','
              << sm.residual_energy << ',' << sm.high_freq_ratio << '\n';
      }
      std::printf("mean return over %d episodes: %.4f\n", episodes,
                  total / std::max(1, episodes));
      return 0;
    }

    if (attn->parsed()) {
      auto tr = trainer_from_checkpoint(attn_ckpt);
      if (attn_task != tr->config().task)
        throw std::runtime_error("attn: checkpoint was trained on task '" + tr->config().task +
                                 "'");
      fs::create_directories(attn_out);
      const Task t = parse_task(attn_task);
      for (int e = 0; e < attn_episodes; ++e) {
        auto [state, frame] = env_reset(t, mix(tr->config().seed + static_cast<unsigned>(e)));
        Agent::Carry carry = tr->agent().initial_carry(tr->model());
        CounterRng unused(0);
        Frame prev = frame;
        for (int step = 0; step < kEpisodeLen; ++step) {
          if (step % 20 == 0) {
            char name[64];
            auto dump = [&](const char* kind, const AttentionMap& m) {
              std::vector<double> v = m.weights;
              double peak = 0;
              for (double x : v) peak = std::max(peak, x);
              if (peak > 0)
                for (double& x : v) x /= peak;
              std::snprintf(name, sizeof(name), "/e%d_%s_%03d.pgm", e, kind, step);
              write_pgm(attn_out + name, m.height, m.width, v);
            };
            std::snprintf(name, sizeof(name), "/e%d_frame_%03d.pgm", e, step);
            write_pgm(attn_out + name, frame.height, frame.width,
                      std::vector<double>(frame.pixels.begin(), frame.pixels.end()));
            dump("attn_enc", attention_map(tr->model(), frame, prev, false));
            dump("attn_diff", attention_map(tr->model(), frame, prev, true));
          }
          std::vector<double> a = tr->agent().act(tr->model(), carry, frame, false, unused);
          StepResult res = env_step(state, a);
          state = res.state;
          prev = frame;
          frame = res.frame;
        }
      }
      std::cout << "attention maps written to " << attn_out << "\n";
      return 0;
    }

    if (report->parsed()) {
      emit_report(report_dir);
      std::cout << "report written to " << report_dir << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
