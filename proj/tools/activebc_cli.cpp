// Command-line entry point: demo generation, training, evaluation, rollouts,
// frame dumps and the teleop server.
//
// Exit codes: 0 success, 2 usage error, 1 runtime failure.

#include "activebc/activebc.hpp"
#include "activebc/teleop_server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace activebc;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Effective settings, echoed to a file so that a run can be repeated.
class ConfigEcho {
 public:
  explicit ConfigEcho(std::string command) { add("command", std::move(command)); }

  template <typename T>
  void add(const std::string& key, const T& value) {
    std::ostringstream os;
    if constexpr (std::is_floating_point_v<T>)
      os << activebc::detail::format_double(value);
    else
      os << value;
    lines_.push_back(key + "=" + os.str());
  }

  void write(const fs::path& path) const {
    std::string text;
    for (const auto& l : lines_) text += l + "\n";
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    dataset_dir::write_text(path, text);
  }

 private:
  std::vector<std::string> lines_;
};

fs::path echo_path_for_file(const fs::path& out) {
  return fs::path(out.string() + ".config.txt");
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? "," : "") + activebc::detail::format_double(v[i]);
  return s;
}

// ---- gen-demos ----

struct GenDemosArgs {
  std::size_t n = 80;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 1;
  fs::path out;
};

int cmd_gen_demos(const GenDemosArgs& a) {
  if (a.n == 0 || a.n % 2 != 0) throw UsageError("--n must be a positive even number");
  ConfigEcho echo("gen-demos");
  echo.add("n", a.n);
  echo.add("seed", a.seed);
  echo.add("split_seed", a.split_seed);
  echo.add("out", a.out.string());
  const ExpertConfig cfg;
  echo.add("expert_gain", cfg.gain);
  echo.add("expert_noise_sigma", cfg.noise_sigma);
  echo.add("expert_center_tol", cfg.center_tol);
  echo.add("expert_settle_frames", cfg.settle_frames);
  echo.add("expert_episode_len", cfg.episode_len);
  fs::create_directories(a.out / "pool");
  echo.write(a.out / "config_gen_demos.txt");

  std::ostringstream manifest;
  manifest << "id,side,scene_seed,expert_seed,azimuth,close_frame\n";
  std::vector<Side> sides;
  std::size_t i = 0;
  for (const auto& e : plan_demo_set(a.n, a.seed)) {
    const SceneSpec scene = make_training_scene(e.side, e.scene_seed);
    const Episode ep = run_expert(scene, cfg, e.expert_seed);
    const Verdict v = judge_episode(ep);
    if (!v.success)
      throw Error("expert self-check failed on episode " + std::to_string(i) + ": " +
                  std::string(to_string(v.reason)));
    write_episode(ep, dataset_dir::episode_path(a.out, i));
    manifest << i << ',' << to_string(e.side) << ',' << scene.seed << ',' << e.expert_seed << ','
             << activebc::detail::format_double(scene.plant_azimuth) << ',' << *v.close_frame
             << '\n';
    sides.push_back(e.side);
    ++i;
  }
  dataset_dir::write_text(a.out / "manifest.txt", manifest.str());
  if (a.n % 20 == 0) {
    dataset_dir::write_text(a.out / "splits.txt",
                            encode_splits(make_splits(std::span<const Side>(sides), a.split_seed)));
    std::printf("wrote %zu episodes and splits to %s\n", a.n, a.out.string().c_str());
  } else {
    std::printf("wrote %zu episodes to %s (no splits: balanced splits need a multiple of 20)\n",
                a.n, a.out.string().c_str());
  }
  return 0;
}

// ---- train ----

struct TrainArgs {
  fs::path data;
  std::size_t demos = 4;
  std::string repr = "delta";
  int history = 20;
  std::uint64_t seed = 1;
  int epochs = 40;
  int batch = 32;
  double lr = 1e-3;
  fs::path out;
};

PolicyConfig policy_config(int history, int epochs, int batch, double lr, std::uint64_t seed) {
  PolicyConfig cfg;
  cfg.history = history;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.lr = lr;
  cfg.seed = seed;
  return cfg;
}

void check_policy_flags(int history, int epochs, int batch, double lr) {
  if (history < 1) throw UsageError("--H must be >= 1");
  if (epochs < 1) throw UsageError("--epochs must be >= 1");
  if (batch < 1) throw UsageError("--batch must be >= 1");
  if (!(lr > 0)) throw UsageError("--lr must be positive");
}

int cmd_train(const TrainArgs& a) {
  check_policy_flags(a.history, a.epochs, a.batch, a.lr);
  Representation rep;
  try {
    rep = representation_from_string(a.repr);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.demos == 0 || a.demos % 2 != 0) throw UsageError("--demos must be a positive even number");
  PolicyConfig cfg = policy_config(a.history, a.epochs, a.batch, a.lr, a.seed);
  cfg.representation = rep;

  ConfigEcho echo("train");
  echo.add("data", a.data.string());
  echo.add("demos", a.demos);
  echo.add("repr", to_string(rep));
  echo.add("H", a.history);
  echo.add("seed", a.seed);
  echo.add("epochs", a.epochs);
  echo.add("batch", a.batch);
  echo.add("lr", a.lr);
  echo.add("out", a.out.string());

  const SplitSpec splits = subsample_train(dataset_dir::read_splits(a.data), a.demos, a.seed);
  const auto pool = dataset_dir::read_pool(a.data);
  echo.add("train_ids", join(splits.train_ids));
  echo.write(echo_path_for_file(a.out));

  const auto train_w = windows_for(pool, splits.train_ids, a.history);
  const auto val_w = windows_for(pool, splits.val_ids, a.history);
  TrainedPolicy policy = train(cfg, pool, train_w, val_w, [](const EpochLog& e) {
    std::printf("epoch %3d  train %s  val %s\n", e.epoch, format_mse(e.train_mse).c_str(),
                format_mse(e.val_mse).c_str());
    std::fflush(stdout);
  });
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  save_policy(policy, a.out);
  auto log_path = a.out;
  log_path.replace_extension(".log");
  dataset_dir::write_text(log_path, format_training_log(policy));
  std::printf("best epoch %d: train MSE %s  val MSE %s  (x1e-3)\n", policy.best_epoch,
              format_mse(report_mse(policy, pool, train_w)).c_str(),
              format_mse(report_mse(policy, pool, val_w)).c_str());
  return 0;
}

// ---- eval-grid ----

struct GridArgs {
  fs::path data;
  fs::path out;
  std::vector<std::size_t> demo_counts{2, 4, 8, 16, 32, 64};
  std::uint64_t seed = 1;
  int history = 20;
  int epochs = 40;
  int batch = 32;
  double lr = 1e-3;
  int rollouts = 5;
  int jobs = 1;
};

int cmd_eval_grid(const GridArgs& a) {
  check_policy_flags(a.history, a.epochs, a.batch, a.lr);
  if (a.rollouts < 1) throw UsageError("--rollouts must be >= 1");
  if (a.jobs < 1) throw UsageError("--jobs must be >= 1");
  for (auto n : a.demo_counts)
    if (n == 0 || n % 2 != 0) throw UsageError("demo counts must be positive and even");
  ConfigEcho echo("eval-grid");
  echo.add("data", a.data.string());
  echo.add("out", a.out.string());
  echo.add("demo_counts", join(a.demo_counts));
  echo.add("seed", a.seed);
  echo.add("H", a.history);
  echo.add("epochs", a.epochs);
  echo.add("batch", a.batch);
  echo.add("lr", a.lr);
  echo.add("rollouts", a.rollouts);
  echo.add("jobs", a.jobs);

  const SplitSpec splits = dataset_dir::read_splits(a.data);
  const auto pool = dataset_dir::read_pool(a.data);
  fs::create_directories(a.out / "checkpoints");
  echo.write(a.out / "config_eval_grid.txt");

  GridOptions opts;
  opts.demo_counts = a.demo_counts;
  opts.seed = a.seed;
  opts.rollouts = a.rollouts;
  opts.jobs = a.jobs;
  opts.policy = policy_config(a.history, a.epochs, a.batch, a.lr, a.seed);
  opts.checkpoint_dir = a.out / "checkpoints";
  opts.on_cell = [](const GridCell& c) {
    if (c.error.empty())
      std::printf("%3zu demos %-8s train %8s  test %8s  success %d/%d\n", c.demo_count,
                  std::string(to_string(c.representation)).c_str(),
                  format_mse(c.train_mse).c_str(), format_mse(c.test_mse).c_str(), c.successes,
                  c.trials);
    else
      std::printf("%3zu demos %-8s failed: %s\n", c.demo_count,
                  std::string(to_string(c.representation)).c_str(), c.error.c_str());
    std::fflush(stdout);
  };
  const EvalGrid grid = run_grid(pool, splits, opts);
  dataset_dir::write_text(a.out / "grid.csv", format_grid_csv(grid));
  const std::string text = format_grid_text(grid);
  dataset_dir::write_text(a.out / "grid.txt", text);
  std::printf("\n%s", text.c_str());
  return 0;
}

// ---- rollout ----

struct RolloutArgs {
  fs::path ckpt;
  std::string side;
  double azimuth = 0.0;
  bool has_azimuth = false;
  std::uint64_t seed = 1;
  int steps = kRolloutSteps;
  fs::path episode_out;
  fs::path config_out = "rollout.config.txt";
};

SceneSpec rollout_scene(const RolloutArgs& a) {
  if (a.has_azimuth == !a.side.empty()) throw UsageError("give exactly one of --side or --azimuth");
  if (!a.side.empty()) {
    Side s;
    try {
      s = side_from_string(a.side);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (s == Side::intermediate) throw UsageError("--side must be left or right");
    return make_training_scene(s, a.seed);
  }
  std::string why;
  const auto scene = visible_intermediate_scene(a.azimuth, a.seed, &why);
  if (!scene) throw UsageError("azimuth " + activebc::detail::format_double(a.azimuth) + ": " + why);
  return *scene;
}

int cmd_rollout(const RolloutArgs& a) {
  if (a.steps < 1) throw UsageError("--steps must be >= 1");
  const SceneSpec scene = rollout_scene(a);
  ConfigEcho echo("rollout");
  echo.add("ckpt", a.ckpt.string());
  echo.add("side", to_string(scene.side_label));
  echo.add("azimuth", scene.plant_azimuth);
  echo.add("seed", a.seed);
  echo.add("scene_seed", scene.seed);
  echo.add("steps", a.steps);
  echo.add("episode_out", a.episode_out.string());
  echo.write(a.config_out);

  TrainedPolicy policy = load_policy(a.ckpt);
  PolicyRunner runner(policy);
  const RolloutResult r = rollout(runner, scene, a.steps);
  std::printf("t,q0,q1,q2,q3,q4,q5,p0,p1,p2,p3,p4,p5,center_err_px\n");
  for (std::size_t t = 0; t < r.joints.size(); ++t) {
    std::printf("%zu", t);
    for (double v : r.joints[t].q) std::printf(",%.6f", v);
    for (std::size_t j = 0; j < kNumJoints; ++j)
      std::printf(",%.6f", t < r.predictions.size() ? r.predictions[t][j] : 0.0);
    if (r.centering_error_px[t])
      std::printf(",%.3f\n", *r.centering_error_px[t]);
    else
      std::printf(",none\n");
  }
  std::printf("verdict: %s (%s)\n", r.success ? "success" : "failure",
              std::string(to_string(r.failure_reason)).c_str());
  if (!r.fault.empty()) std::printf("fault: %s\n", r.fault.c_str());
  if (!a.episode_out.empty()) write_episode(rollout_to_episode(r, scene), a.episode_out);
  return 0;
}

// ---- generalize ----

struct GeneralizeArgs {
  fs::path ckpt_delta;
  fs::path ckpt_pos;
  fs::path data;
  std::vector<double> azimuths{0.20, -0.20, 0.30, -0.30, 0.40, -0.40};
  int rollouts = 5;
  std::uint64_t seed = 1;
  std::size_t demos = 64;
  fs::path out;
};

int cmd_generalize(const GeneralizeArgs& a) {
  if (a.rollouts < 1) throw UsageError("--rollouts must be >= 1");
  ConfigEcho echo("generalize");
  echo.add("ckpt_delta", a.ckpt_delta.string());
  echo.add("ckpt_pos", a.ckpt_pos.string());
  echo.add("data", a.data.string());
  echo.add("azimuths", join(a.azimuths));
  echo.add("rollouts", a.rollouts);
  echo.add("seed", a.seed);
  echo.add("demos", a.demos);
  echo.add("out", a.out.string());
  fs::create_directories(a.out);
  echo.write(a.out / "config_generalize.txt");

  TrainedPolicy delta = load_policy(a.ckpt_delta);
  TrainedPolicy pos = load_policy(a.ckpt_pos);
  const auto pool = dataset_dir::read_pool(a.data);
  const SplitSpec splits = subsample_train(dataset_dir::read_splits(a.data), a.demos, a.seed);
  GeneralizationOptions opts;
  opts.azimuths = a.azimuths;
  opts.rollouts = a.rollouts;
  opts.seed = a.seed;
  const auto table =
      run_generalization(delta, pos, demonstrated_terminals(pool, splits.train_ids), opts);
  const std::string text = format_generalization(table);
  dataset_dir::write_text(a.out / "generalization.txt", text);
  std::printf("%s", text.c_str());
  return 0;
}

// ---- dump-frame ----

struct DumpArgs {
  std::string side = "left";
  double azimuth = 0.0;
  bool has_azimuth = false;
  std::uint64_t seed = 1;
  std::vector<double> joints;
  fs::path out;
  bool raw = false;
};

int cmd_dump_frame(const DumpArgs& a) {
  SceneSpec scene;
  if (a.has_azimuth) {
    try {
      scene = make_intermediate_scene(a.azimuth, a.seed);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else {
    Side s;
    try {
      s = side_from_string(a.side);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (s == Side::intermediate) throw UsageError("--side must be left or right");
    scene = make_training_scene(s, a.seed);
  }
  JointConfig q = home_config();
  if (!a.joints.empty()) {
    if (a.joints.size() != kNumJoints) throw UsageError("--joints needs 6 values");
    std::copy(a.joints.begin(), a.joints.end(), q.q.begin());
    try {
      validate(q);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  ConfigEcho echo("dump-frame");
  echo.add("side", to_string(scene.side_label));
  echo.add("azimuth", scene.plant_azimuth);
  echo.add("seed", a.seed);
  echo.add("scene_seed", scene.seed);
  std::vector<double> jq(q.q.begin(), q.q.end());
  echo.add("joints", join(jq));
  echo.add("format", a.raw ? "raw" : "ppm");
  echo.add("out", a.out.string());
  echo.write(echo_path_for_file(a.out));
  const Frame f = render(grow_plant(scene), forward_kinematics(ArmGeometry{}, q));
  std::vector<std::uint8_t> bytes;
  if (!a.raw) {
    const std::string header = "P6\n64 64\n255\n";
    bytes.assign(header.begin(), header.end());
  }
  bytes.insert(bytes.end(), f.pixels.begin(), f.pixels.end());
  activebc::detail::write_file_atomic(a.out, bytes);
  return 0;
}

// ---- teleop-serve ----

TeleopServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

int cmd_teleop_serve(unsigned short port, const fs::path& out) {
  ConfigEcho echo("teleop-serve");
  echo.add("port", port);
  echo.add("out", out.string());
  fs::create_directories(out);
  echo.write(out / "config_teleop_serve.txt");
  TeleopServer server(out, port, [](const std::string& m) {
    std::printf("%s\n", m.c_str());
    std::fflush(stdout);
  });
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("teleop server listening on ws://127.0.0.1:%u (health: /health)\n", server.port());
  std::fflush(stdout);
  server.run();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavior cloning for a wrist-camera arm in a deterministic simulator"};
  app.require_subcommand(1);

  GenDemosArgs gen;
  auto* c_gen = app.add_subcommand("gen-demos", "Generate expert demonstrations");
  c_gen->add_option("--n", gen.n, "Number of episodes (even)")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
  c_gen->add_option("--split-seed", gen.split_seed, "Seed for the train/val/test split")
      ->capture_default_str();
  c_gen->add_option("--out", gen.out, "Dataset directory")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train one policy");
  c_train->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--demos", tr.demos, "Training demonstrations")->capture_default_str();
  c_train->add_option("--repr", tr.repr, "delta or absolute")->capture_default_str();
  c_train->add_option("--H", tr.history, "History length")->capture_default_str();
  c_train->add_option("--seed", tr.seed, "Seed")->capture_default_str();
  c_train->add_option("--epochs", tr.epochs)->capture_default_str();
  c_train->add_option("--batch", tr.batch)->capture_default_str();
  c_train->add_option("--lr", tr.lr)->capture_default_str();
  c_train->add_option("--out", tr.out, "Checkpoint path")->required();

  GridArgs grid;
  auto* c_grid = app.add_subcommand("eval-grid", "Demo-count sweep for both representations");
  c_grid->add_option("--data", grid.data)->required()->check(CLI::ExistingDirectory);
  c_grid->add_option("--out", grid.out)->required();
  c_grid->add_option("--demo-counts", grid.demo_counts)->delimiter(',')->capture_default_str();
  c_grid->add_option("--seed", grid.seed)->capture_default_str();
  c_grid->add_option("--H", grid.history)->capture_default_str();
  c_grid->add_option("--epochs", grid.epochs)->capture_default_str();
  c_grid->add_option("--batch", grid.batch)->capture_default_str();
  c_grid->add_option("--lr", grid.lr)->capture_default_str();
  c_grid->add_option("--rollouts", grid.rollouts)->capture_default_str();
  c_grid->add_option("--jobs", grid.jobs, "Cells trained in parallel")->capture_default_str();

  RolloutArgs ro;
  auto* c_ro = app.add_subcommand("rollout", "Run one closed-loop rollout");
  c_ro->add_option("--ckpt", ro.ckpt)->required()->check(CLI::ExistingFile);
  auto* ro_side = c_ro->add_option("--side", ro.side, "left or right training placement");
  auto* ro_az = c_ro->add_option("--azimuth", ro.azimuth, "Intermediate placement azimuth (rad)");
  ro_az->excludes(ro_side);
  c_ro->add_option("--seed", ro.seed)->capture_default_str();
  c_ro->add_option("--steps", ro.steps)->capture_default_str();
  c_ro->add_option("--episode-out", ro.episode_out, "Also save the trace as an episode file");
  c_ro->add_option("--config-out", ro.config_out)->capture_default_str();

  GeneralizeArgs ge;
  auto* c_ge = app.add_subcommand("generalize", "Rollouts at intermediate placements");
  c_ge->add_option("--ckpt-delta", ge.ckpt_delta)->required()->check(CLI::ExistingFile);
  c_ge->add_option("--ckpt-pos", ge.ckpt_pos)->required()->check(CLI::ExistingFile);
  c_ge->add_option("--data", ge.data, "Dataset used for the demonstrated terminal configs")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_ge->add_option("--azimuths", ge.azimuths)->delimiter(',')->capture_default_str();
  c_ge->add_option("--rollouts", ge.rollouts)->capture_default_str();
  c_ge->add_option("--seed", ge.seed)->capture_default_str();
  c_ge->add_option("--demos", ge.demos, "Training subset the checkpoints used")->capture_default_str();
  c_ge->add_option("--out", ge.out)->required();

  DumpArgs du;
  auto* c_du = app.add_subcommand("dump-frame", "Render one frame to a PPM file");
  auto* du_side = c_du->add_option("--side", du.side)->capture_default_str();
  auto* du_az = c_du->add_option("--azimuth", du.azimuth);
  du_az->excludes(du_side);
  c_du->add_option("--seed", du.seed)->capture_default_str();
  c_du->add_option("--joints", du.joints, "q0,...,q5 (default: home)")->delimiter(',');
  c_du->add_flag("--raw", du.raw, "Write the 12288 raw bytes instead of PPM");
  c_du->add_option("--out", du.out)->required();

  unsigned short port = 8765;
  fs::path teleop_out = "teleop_episodes";
  auto* c_tel = app.add_subcommand("teleop-serve", "Serve the teleop websocket protocol");
  c_tel->add_option("--port", port)->capture_default_str();
  c_tel->add_option("--out", teleop_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_gen) return cmd_gen_demos(gen);
    if (*c_train) return cmd_train(tr);
    if (*c_grid) return cmd_eval_grid(grid);
    if (*c_ro) {
      ro.has_azimuth = ro_az->count() > 0;
      return cmd_rollout(ro);
    }
    if (*c_ge) return cmd_generalize(ge);
    if (*c_du) {
      du.has_azimuth = du_az->count() > 0;
      return cmd_dump_frame(du);
    }
    if (*c_tel) return cmd_teleop_serve(port, teleop_out);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
