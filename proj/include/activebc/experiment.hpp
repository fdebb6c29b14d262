#pragma once

// Demo-count sweep (train, offline MSE, closed-loop trials per cell) and the
// intermediate-placement study.

#include "activebc/dataset.hpp"
#include "activebc/policy.hpp"
#include "activebc/rollout.hpp"
#include "activebc/scene.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace activebc {

struct GridCell {
  std::size_t demo_count = 0;
  Representation representation = Representation::delta;
  double train_mse = 0.0;
  double test_mse = 0.0;
  int successes = 0;
  int trials = 0;
  std::vector<FailureReason> outcomes;
  std::vector<std::size_t> train_ids;
  std::string error;  // non-empty if the cell could not be completed
};

struct EvalGrid {
  std::vector<GridCell> cells;

  const GridCell* find(std::size_t demo_count, Representation r) const {
    for (const auto& c : cells)
      if (c.demo_count == demo_count && c.representation == r) return &c;
    return nullptr;
  }
};

struct GridOptions {
  std::vector<std::size_t> demo_counts{2, 4, 8, 16, 32, 64};
  int rollouts = 5;
  std::uint64_t seed = 1;  // subsampling and evaluation scenes
  PolicyConfig policy;     // representation is overridden per cell
  int jobs = 1;
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const GridCell&)> on_cell;
};

// Fixed evaluation scenes, alternating left, right, left, ...
inline std::vector<SceneSpec> evaluation_scenes(std::uint64_t seed, int count) {
  std::vector<SceneSpec> out;
  for (int i = 0; i < count; ++i)
    out.push_back(make_training_scene(i % 2 == 0 ? Side::left : Side::right,
                                      derive_seed(seed, 0xe7a1 + static_cast<std::uint64_t>(i))));
  return out;
}

inline std::vector<WindowSample> windows_for(const std::vector<Episode>& pool,
                                             const std::vector<std::size_t>& ids, int history) {
  std::vector<WindowSample> out;
  for (auto id : ids) {
    auto w = build_windows(pool.at(id), history, id);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

inline std::filesystem::path cell_checkpoint_path(const std::filesystem::path& dir,
                                                  std::size_t demo_count, Representation r) {
  return dir / ("policy_" + std::string(to_string(r)) + "_" + std::to_string(demo_count) + ".abcw");
}

inline GridCell run_cell(const std::vector<Episode>& pool, const SplitSpec& splits,
                         std::size_t demo_count, Representation rep, const GridOptions& opts) {
  GridCell cell;
  cell.demo_count = demo_count;
  cell.representation = rep;
  try {
    const SplitSpec sub = subsample_train(splits, demo_count, opts.seed);
    cell.train_ids = sub.train_ids;
    PolicyConfig cfg = opts.policy;
    cfg.representation = rep;
    const auto train_w = windows_for(pool, sub.train_ids, cfg.history);
    const auto val_w = windows_for(pool, sub.val_ids, cfg.history);
    const auto test_w = windows_for(pool, sub.test_ids, cfg.history);
    TrainedPolicy policy = train(cfg, pool, train_w, val_w);
    if (opts.checkpoint_dir) {
      const auto path = cell_checkpoint_path(*opts.checkpoint_dir, demo_count, rep);
      save_policy(policy, path);
      auto log_path = path;
      log_path.replace_extension(".log");
      dataset_dir::write_text(log_path, format_training_log(policy));
    }
    cell.train_mse = report_mse(policy, pool, train_w);
    cell.test_mse = report_mse(policy, pool, test_w);
    for (const auto& scene : evaluation_scenes(opts.seed, opts.rollouts)) {
      PolicyRunner runner(policy);
      const auto r = rollout(runner, scene);
      cell.outcomes.push_back(r.failure_reason);
      cell.successes += r.success ? 1 : 0;
      ++cell.trials;
    }
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

// Cells are independent; with jobs > 1 they run on worker threads and the
// result is identical to a sequential run.
inline EvalGrid run_grid(const std::vector<Episode>& pool, const SplitSpec& splits,
                         const GridOptions& opts) {
  struct Job {
    std::size_t demo_count;
    Representation rep;
  };
  std::vector<Job> jobs;
  for (auto n : opts.demo_counts)
    for (auto r : {Representation::delta, Representation::absolute}) jobs.push_back({n, r});
  EvalGrid grid;
  grid.cells.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex report;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      grid.cells[i] = run_cell(pool, splits, jobs[i].demo_count, jobs[i].rep, opts);
      if (opts.on_cell) {
        std::lock_guard lock(report);
        opts.on_cell(grid.cells[i]);
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(opts.jobs, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return grid;
}

inline std::string format_grid_csv(const EvalGrid& g) {
  std::ostringstream os;
  os << "demo_count,representation,train_mse_e3,test_mse_e3,successes\n";
  for (const auto& c : g.cells) {
    os << c.demo_count << ',' << to_string(c.representation) << ',';
    if (c.error.empty())
      os << format_mse(c.train_mse) << ',' << format_mse(c.test_mse) << ',' << c.successes;
    else
      os << "nan,nan,0";
    os << '\n';
  }
  return os.str();
}

inline std::string format_grid_text(const EvalGrid& g) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s | %-26s | %-26s\n", "Demo", "Delta", "Position");
  os << line;
  std::snprintf(line, sizeof line, "%-6s | %8s %8s %8s | %8s %8s %8s\n", "Count", "Train",
                "Test", "Success", "Train", "Test", "Success");
  os << line << std::string(64, '-') << '\n';
  std::vector<std::size_t> counts;
  for (const auto& c : g.cells)
    if (std::find(counts.begin(), counts.end(), c.demo_count) == counts.end())
      counts.push_back(c.demo_count);
  auto part = [](const GridCell* c) {
    char buf[64];
    if (c == nullptr || !c->error.empty())
      std::snprintf(buf, sizeof buf, "%8s %8s %8s", "error", "-", "-");
    else
      std::snprintf(buf, sizeof buf, "%8s %8s %5d/%-2d", format_mse(c->train_mse).c_str(),
                    format_mse(c->test_mse).c_str(), c->successes, c->trials);
    return std::string(buf);
  };
  for (auto n : counts) {
    std::snprintf(line, sizeof line, "%-6zu | %s | %s\n", n,
                  part(g.find(n, Representation::delta)).c_str(),
                  part(g.find(n, Representation::absolute)).c_str());
    os << line;
  }
  os << "MSE values x 1e-3.\n";
  for (const auto& c : g.cells)
    if (!c.error.empty())
      os << "cell " << c.demo_count << ' ' << to_string(c.representation) << " failed: " << c.error
         << '\n';
  return os.str();
}

// ---- intermediate placements ----

inline constexpr double kTerminalMatchTolerance = 0.1;

struct TerminalConfigs {
  JointConfig left;
  JointConfig right;
};

// Mean final configuration of the left and of the right demonstrations.
inline TerminalConfigs demonstrated_terminals(const std::vector<Episode>& pool,
                                              const std::vector<std::size_t>& ids) {
  TerminalConfigs out;
  out.left.q.fill(0.0);
  out.right.q.fill(0.0);
  int nl = 0, nr = 0;
  for (auto id : ids) {
    const auto& ep = pool.at(id);
    const bool left = ep.meta.scene.side_label == Side::left;
    auto& dst = left ? out.left : out.right;
    for (std::size_t j = 0; j < kNumJoints; ++j) dst[j] += ep.joints.back()[j];
    (left ? nl : nr) += 1;
  }
  if (nl == 0 || nr == 0) throw std::invalid_argument("terminal configs need left and right demos");
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    out.left[j] /= nl;
    out.right[j] /= nr;
  }
  return out;
}

// L-infinity distance over the arm joints q0..q4.
inline double arm_distance(const JointConfig& a, const JointConfig& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < kGripper; ++j) d = std::max(d, std::abs(a[j] - b[j]));
  return d;
}

struct GenTrial {
  bool success = false;
  FailureReason reason = FailureReason::no_close;
  JointConfig terminal;
  double dist_left = 0.0;
  double dist_right = 0.0;
  bool toward_demonstrated = false;  // failure ending near a demonstrated terminal
};

struct GenCell {
  double azimuth = 0.0;
  Representation representation = Representation::delta;
  bool skipped = false;
  std::string note;
  std::vector<GenTrial> trials;

  int successes() const {
    return static_cast<int>(std::count_if(trials.begin(), trials.end(),
                                          [](const GenTrial& t) { return t.success; }));
  }
};

struct GeneralizationTable {
  TerminalConfigs terminals;
  std::vector<GenCell> cells;
};

struct GeneralizationOptions {
  std::vector<double> azimuths{0.20, -0.20, 0.30, -0.30, 0.40, -0.40};
  int rollouts = 5;
  std::uint64_t seed = 1;
};

// Scene at an intermediate azimuth whose plant passes the partial-visibility
// check, or nothing if the azimuth is out of range or no seed works.
inline std::optional<SceneSpec> visible_intermediate_scene(double azimuth, std::uint64_t seed,
                                                           std::string* why = nullptr) {
  SceneSpec base;
  try {
    base = make_intermediate_scene(azimuth, seed);
  } catch (const std::invalid_argument& e) {
    if (why) *why = e.what();
    return std::nullopt;
  }
  for (int attempt = 0; attempt < scene_params::kSceneAttempts; ++attempt) {
    SceneSpec s = base;
    s.seed = attempt == 0 ? seed : derive_seed(seed, 0x1000 + static_cast<std::uint64_t>(attempt));
    if (is_partially_visible(home_visibility(s))) return s;
  }
  if (why) *why = "no plant seed passes the partial-visibility check";
  return std::nullopt;
}

inline GenCell run_generalization_cell(TrainedPolicy& policy, double azimuth,
                                       const TerminalConfigs& terminals,
                                       const GeneralizationOptions& opts) {
  GenCell cell;
  cell.azimuth = azimuth;
  cell.representation = policy.config.representation;
  std::vector<SceneSpec> scenes;
  for (int i = 0; i < opts.rollouts; ++i) {
    std::string why;
    const auto s = visible_intermediate_scene(
        azimuth, derive_seed(opts.seed, 0x6e11 + static_cast<std::uint64_t>(i)), &why);
    if (!s) {
      cell.skipped = true;
      cell.note = why;
      return cell;
    }
    scenes.push_back(*s);
  }
  for (const auto& scene : scenes) {
    PolicyRunner runner(policy);
    const auto r = rollout(runner, scene);
    GenTrial t;
    t.success = r.success;
    t.reason = r.failure_reason;
    t.terminal = r.joints.back();
    t.dist_left = arm_distance(t.terminal, terminals.left);
    t.dist_right = arm_distance(t.terminal, terminals.right);
    t.toward_demonstrated =
        !t.success && std::min(t.dist_left, t.dist_right) <= kTerminalMatchTolerance;
    cell.trials.push_back(t);
  }
  return cell;
}

inline GeneralizationTable run_generalization(TrainedPolicy& delta_policy,
                                              TrainedPolicy& position_policy,
                                              const TerminalConfigs& terminals,
                                              const GeneralizationOptions& opts = {}) {
  if (delta_policy.config.representation != Representation::delta ||
      position_policy.config.representation != Representation::absolute)
    throw std::invalid_argument("expected a delta policy and an absolute-position policy");
  GeneralizationTable table;
  table.terminals = terminals;
  for (double az : opts.azimuths)
    for (TrainedPolicy* p : {&delta_policy, &position_policy})
      table.cells.push_back(run_generalization_cell(*p, az, terminals, opts));
  return table;
}

inline std::string format_generalization(const GeneralizationTable& t) {
  std::ostringstream os;
  char line[200];
  std::snprintf(line, sizeof line, "%8s %-9s %8s  %s\n", "azimuth", "model", "success",
                "failures (reason, dist_left, dist_right)");
  os << line;
  for (const auto& c : t.cells) {
    if (c.skipped) {
      std::snprintf(line, sizeof line, "%+8.2f %-9s %8s  skipped: %s\n", c.azimuth,
                    std::string(to_string(c.representation)).c_str(), "-", c.note.c_str());
      os << line;
      continue;
    }
    std::snprintf(line, sizeof line, "%+8.2f %-9s %5d/%-2zu ", c.azimuth,
                  std::string(to_string(c.representation)).c_str(), c.successes(),
                  c.trials.size());
    os << line;
    for (const auto& tr : c.trials) {
      if (tr.success) continue;
      std::snprintf(line, sizeof line, " (%s %.3f %.3f%s)", std::string(to_string(tr.reason)).c_str(),
                    tr.dist_left, tr.dist_right, tr.toward_demonstrated ? " near-demo" : "");
      os << line;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace activebc
