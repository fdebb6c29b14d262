#pragma once

// Visuomotor policy: per-frame CNN encoder -> linear feature -> LSTM over the
// history -> linear head to 6 joint outputs (a delta or an absolute target).

#include "activebc/dataset.hpp"
#include "activebc/episode.hpp"
#include "activebc/nn/adam.hpp"
#include "activebc/nn/checkpoint.hpp"
#include "activebc/nn/conv2d.hpp"
#include "activebc/nn/linear.hpp"
#include "activebc/nn/lstm.hpp"
#include "activebc/nn/param_store.hpp"
#include "activebc/render.hpp"
#include "activebc/rng.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace activebc {

inline constexpr std::size_t kNumConvLayers = 4;

struct PolicyArch {
  int image_size = kImageSize;
  std::array<int, kNumConvLayers> channels{8, 16, 32, 64};
  int feature_dim = 128;
  int hidden_dim = 128;
  int outputs = static_cast<int>(kNumJoints);

  nn::Conv2dGeom conv(std::size_t layer) const {
    int size = image_size;
    int in_ch = 3;
    for (std::size_t l = 0; l < layer; ++l) {
      size = (size + 1) / 2;
      in_ch = channels[l];
    }
    return {in_ch, channels[layer], size, size, 2};
  }
  std::size_t flat_dim() const {
    const auto g = conv(kNumConvLayers - 1);
    return static_cast<std::size_t>(g.out_ch) * g.out_plane();
  }
  std::size_t pixels_per_frame() const {
    return static_cast<std::size_t>(3) * image_size * image_size;
  }
  friend bool operator==(const PolicyArch&, const PolicyArch&) = default;
};

struct PolicyConfig {
  Representation representation = Representation::delta;
  int history = 20;
  PolicyArch arch;
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 40;
  std::uint64_t seed = 1;

  void validate() const {
    if (history < 1) throw std::invalid_argument("history length must be >= 1");
    if (batch_size < 1 || epochs < 1) throw std::invalid_argument("batch and epochs must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive");
  }
  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

// A batch after deduplication: each distinct frame is encoded once and each
// distinct window is unrolled once, weighted by how often it occurs.
template <typename T>
struct PolicyBatch {
  std::size_t frame_count = 0;
  std::vector<T> pixels;                // [3][frame_count][S*S], values in [0, 1]
  std::size_t history = 0;
  std::vector<std::uint32_t> windows;   // [window][history], indices into frames
  std::vector<T> targets;               // [window][outputs]
  std::vector<T> weights;               // [window]
  std::vector<std::size_t> sample_slot; // window slot of every input sample

  std::size_t window_count() const { return history == 0 ? 0 : windows.size() / history; }
};

// Writes one RGB frame into channel-major batch storage.
template <typename T>
void load_frame(const Frame& frame, std::size_t slot, std::size_t frame_count, T* pixels) {
  constexpr std::size_t plane = kImageSize * kImageSize;
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < 3; ++c)
      pixels[(c * frame_count + slot) * plane + p] =
          static_cast<T>(frame.pixels[p * 3 + c]) / T{255};
}

template <typename T>
class PolicyNet {
 public:
  PolicyNet() = default;

  explicit PolicyNet(const PolicyArch& arch) : arch_(arch) {
    for (std::size_t l = 0; l < kNumConvLayers; ++l) {
      const auto g = arch.conv(l);
      store_.add(conv_name(l, "w"), {static_cast<std::size_t>(g.out_ch), g.patch()});
      store_.add(conv_name(l, "b"), {static_cast<std::size_t>(g.out_ch)});
    }
    const std::size_t f = arch.feature_dim, h = arch.hidden_dim, o = arch.outputs;
    store_.add("feat.w", {arch.flat_dim(), f});
    store_.add("feat.b", {f});
    store_.add("lstm.wx", {f, 4 * h});
    store_.add("lstm.wh", {h, 4 * h});
    store_.add("lstm.b", {4 * h});
    store_.add("head.w", {h, o});
    store_.add("head.b", {o});
    out_mean_.assign(o, T{0});
    out_scale_.assign(o, T{1});
  }

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1a17));
    auto fill_uniform = [&](nn::Tensor<T>& t, double bound) {
      for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    };
    for (std::size_t l = 0; l < kNumConvLayers; ++l) {
      const auto g = arch_.conv(l);
      fill_uniform(store_.at(conv_name(l, "w")).value,
                   std::sqrt(6.0 / static_cast<double>(g.patch())));
    }
    const double fan = static_cast<double>(arch_.flat_dim() + arch_.feature_dim);
    fill_uniform(store_.at("feat.w").value, std::sqrt(6.0 / fan));
    const double lb = 1.0 / std::sqrt(static_cast<double>(arch_.hidden_dim));
    fill_uniform(store_.at("lstm.wx").value, lb);
    fill_uniform(store_.at("lstm.wh").value, lb);
    auto& b = store_.at("lstm.b").value;
    fill_uniform(b, lb);
    for (int j = 0; j < arch_.hidden_dim; ++j) b[arch_.hidden_dim + j] += T{1};
    fill_uniform(store_.at("head.w").value, 0.01);
  }

  const PolicyArch& arch() const { return arch_; }
  nn::ParamStore<T>& store() { return store_; }
  const nn::ParamStore<T>& store() const { return store_; }
  std::vector<T>& out_mean() { return out_mean_; }
  std::vector<T>& out_scale() { return out_scale_; }
  const std::vector<T>& out_mean() const { return out_mean_; }
  const std::vector<T>& out_scale() const { return out_scale_; }

  // Encodes frames ([3][F][S*S] pixels) to features [F][feature_dim].
  std::vector<T> encode(std::size_t frames, const std::vector<T>& pixels) {
    run_encoder(frames, pixels);
    return tape_.features;
  }

  // Runs the recurrent part and head for windows whose step inputs are rows of
  // `features`. Returns predictions [W][outputs] in target units.
  std::vector<T> predict(const std::vector<T>& features, const std::vector<std::uint32_t>& windows,
                         std::size_t history) {
    tape_.features = features;
    run_recurrent(windows, history);
    return tape_.prediction;
  }

  std::vector<T> forward(const PolicyBatch<T>& batch) {
    run_encoder(batch.frame_count, batch.pixels);
    run_recurrent(batch.windows, batch.history);
    return tape_.prediction;
  }

  struct Loss {
    double objective = 0.0;  // mean squared error of standardized outputs
    double mse = 0.0;        // mean squared error in target units
  };

  // Both losses are weighted sums over windows. Gradients of the objective
  // are accumulated into the parameter store.
  Loss forward_backward(const PolicyBatch<T>& batch) {
    forward(batch);
    const std::size_t w = batch.window_count(), o = arch_.outputs;
    std::vector<T> dy(w * o);
    Loss loss;
    for (std::size_t r = 0; r < w; ++r)
      for (std::size_t j = 0; j < o; ++j) {
        const T d = tape_.prediction[r * o + j] - batch.targets[r * o + j];
        const T z = d / out_scale_[j];
        const double wr = static_cast<double>(batch.weights[r]) / static_cast<double>(o);
        loss.mse += wr * static_cast<double>(d) * static_cast<double>(d);
        loss.objective += wr * static_cast<double>(z) * static_cast<double>(z);
        dy[r * o + j] = batch.weights[r] * T{2} * z / static_cast<T>(o);
      }
    backward(dy, batch);
    return loss;
  }

 private:
  static std::string conv_name(std::size_t l, const char* what) {
    return "conv" + std::to_string(l + 1) + "." + what;
  }

  struct Tape {
    std::size_t frames = 0;
    std::array<std::vector<T>, kNumConvLayers> conv_out;  // post-ReLU, [C][F][plane]
    std::array<std::vector<T>, kNumConvLayers> cols;
    std::vector<T> flat;      // [F][flat_dim]
    std::vector<T> features;  // [F][feature_dim]
    std::vector<std::uint32_t> windows;
    std::size_t history = 0;
    std::vector<std::vector<T>> step_inputs;  // [H][W][feature_dim]
    std::vector<nn::LstmStepCache<T>> steps;
    std::vector<T> head_out;    // [W][outputs], normalized units
    std::vector<T> prediction;  // [W][outputs], target units
  };

  void run_encoder(std::size_t frames, const std::vector<T>& pixels) {
    if (pixels.size() != frames * arch_.pixels_per_frame())
      throw std::invalid_argument("policy input has the wrong number of pixels");
    tape_.frames = frames;
    const std::vector<T>* in = &pixels;
    for (std::size_t l = 0; l < kNumConvLayers; ++l) {
      const auto g = arch_.conv(l);
      auto& out = tape_.conv_out[l];
      out.resize(static_cast<std::size_t>(g.out_ch) * frames * g.out_plane());
      nn::conv2d_forward_batch(g, frames, in->data(), store_.at(conv_name(l, "w")).value.ptr(),
                               store_.at(conv_name(l, "b")).value.ptr(), out.data(),
                               tape_.cols[l]);
      nn::relu_inplace(out.data(), out.size());
      nn::check_finite(out, "policy.conv");
      in = &out;
    }
    // [C][F][P] -> [F][C*P]
    const auto g = arch_.conv(kNumConvLayers - 1);
    const std::size_t c_out = g.out_ch, plane = g.out_plane(), flat = arch_.flat_dim();
    tape_.flat.resize(frames * flat);
    const auto& last = tape_.conv_out.back();
    for (std::size_t c = 0; c < c_out; ++c)
      for (std::size_t f = 0; f < frames; ++f)
        std::copy_n(last.data() + (c * frames + f) * plane, plane,
                    tape_.flat.data() + f * flat + c * plane);
    tape_.features.resize(frames * arch_.feature_dim);
    nn::linear_forward(frames, flat, arch_.feature_dim, tape_.flat.data(),
                       store_.at("feat.w").value.ptr(), store_.at("feat.b").value.ptr(),
                       tape_.features.data());
    nn::check_finite(tape_.features, "policy.features");
  }

  void run_recurrent(const std::vector<std::uint32_t>& windows, std::size_t history) {
    if (history == 0 || windows.size() % history != 0)
      throw std::invalid_argument("window list is not a multiple of the history length");
    const std::size_t w = windows.size() / history, f = arch_.feature_dim,
                      h = arch_.hidden_dim, o = arch_.outputs;
    const std::size_t frames = tape_.features.size() / f;
    for (auto idx : windows)
      if (idx >= frames) throw std::invalid_argument("window references a missing frame");
    tape_.windows = windows;
    tape_.history = history;
    tape_.step_inputs.resize(history);
    tape_.steps.resize(history);
    const std::vector<T> zeros(w * h, T{0});
    const auto& wx = store_.at("lstm.wx").value;
    const auto& wh = store_.at("lstm.wh").value;
    const auto& b = store_.at("lstm.b").value;
    for (std::size_t k = 0; k < history; ++k) {
      auto& x = tape_.step_inputs[k];
      x.resize(w * f);
      for (std::size_t r = 0; r < w; ++r)
        std::copy_n(tape_.features.data() + windows[r * history + k] * f, f, x.data() + r * f);
      const T* hp = k == 0 ? zeros.data() : tape_.steps[k - 1].hidden.data();
      const T* cp = k == 0 ? zeros.data() : tape_.steps[k - 1].cell.data();
      nn::lstm_forward_step(w, f, h, x.data(), hp, cp, wx.ptr(), wh.ptr(), b.ptr(),
                            tape_.steps[k]);
    }
    nn::check_finite(tape_.steps.back().hidden, "policy.lstm");
    tape_.head_out.resize(w * o);
    nn::linear_forward(w, h, o, tape_.steps.back().hidden.data(), store_.at("head.w").value.ptr(),
                       store_.at("head.b").value.ptr(), tape_.head_out.data());
    tape_.prediction.resize(w * o);
    for (std::size_t r = 0; r < w; ++r)
      for (std::size_t j = 0; j < o; ++j)
        tape_.prediction[r * o + j] = out_mean_[j] + out_scale_[j] * tape_.head_out[r * o + j];
    nn::check_finite(tape_.prediction, "policy.head");
  }

  // dy: gradient w.r.t. the head's normalized output, [W][outputs].
  void backward(const std::vector<T>& dy, const PolicyBatch<T>& batch) {
    const std::size_t w = batch.window_count(), f = arch_.feature_dim, h = arch_.hidden_dim,
                      o = arch_.outputs, frames = tape_.frames, history = tape_.history;
    std::vector<T> dh(w * h, T{0}), dc(w * h, T{0}), dh_prev(w * h), dx(w * f);
    auto& head_w = store_.at("head.w");
    auto& head_b = store_.at("head.b");
    nn::linear_backward(w, h, o, tape_.steps.back().hidden.data(), head_w.value.ptr(), dy.data(),
                        head_w.grad.ptr(), head_b.grad.ptr(), dh.data());

    auto& wx = store_.at("lstm.wx");
    auto& wh = store_.at("lstm.wh");
    auto& b = store_.at("lstm.b");
    std::vector<T> dfeatures(frames * f, T{0});
    const std::vector<T> zeros(w * h, T{0});
    std::vector<T> dz;
    for (std::size_t k = history; k-- > 0;) {
      const T* hp = k == 0 ? zeros.data() : tape_.steps[k - 1].hidden.data();
      const T* cp = k == 0 ? zeros.data() : tape_.steps[k - 1].cell.data();
      nn::lstm_backward_step(w, f, h, tape_.step_inputs[k].data(), hp, cp, wx.value.ptr(),
                             wh.value.ptr(), tape_.steps[k], dh.data(), dc.data(),
                             wx.grad.ptr(), wh.grad.ptr(), b.grad.ptr(), dx.data(),
                             dh_prev.data(), dz);
      for (std::size_t r = 0; r < w; ++r)
        nn::kernels::axpy(T{1}, dx.data() + r * f,
                          dfeatures.data() + tape_.windows[r * history + k] * f, f);
      std::swap(dh, dh_prev);
    }

    const std::size_t flat = arch_.flat_dim();
    std::vector<T> dflat(frames * flat);
    auto& fw = store_.at("feat.w");
    auto& fb = store_.at("feat.b");
    nn::linear_backward(frames, flat, f, tape_.flat.data(), fw.value.ptr(), dfeatures.data(),
                        fw.grad.ptr(), fb.grad.ptr(), dflat.data());

    const auto g_last = arch_.conv(kNumConvLayers - 1);
    const std::size_t plane = g_last.out_plane();
    std::vector<T> dact(static_cast<std::size_t>(g_last.out_ch) * frames * plane);
    for (std::size_t c = 0; c < static_cast<std::size_t>(g_last.out_ch); ++c)
      for (std::size_t fr = 0; fr < frames; ++fr)
        std::copy_n(dflat.data() + fr * flat + c * plane, plane,
                    dact.data() + (c * frames + fr) * plane);

    std::vector<T> din, dcol;
    for (std::size_t l = kNumConvLayers; l-- > 0;) {
      const auto g = arch_.conv(l);
      nn::relu_backward_inplace(tape_.conv_out[l].data(), dact.data(), dact.size());
      auto& cw = store_.at(conv_name(l, "w"));
      auto& cb = store_.at(conv_name(l, "b"));
      if (l > 0) din.resize(static_cast<std::size_t>(g.in_ch) * frames * g.in_plane());
      nn::conv2d_backward_batch(g, frames, tape_.cols[l], cw.value.ptr(), dact.data(),
                                cw.grad.ptr(), cb.grad.ptr(), l > 0 ? din.data() : nullptr,
                                dcol);
      if (l > 0) std::swap(dact, din);
    }
    for (const auto& p : store_.params()) nn::check_finite(p.grad.data, "policy.backward");
  }

  PolicyArch arch_;
  nn::ParamStore<T> store_;
  std::vector<T> out_mean_;
  std::vector<T> out_scale_;
  Tape tape_;
};

// Floor on the per-output target scale, so joints that only carry expert
// noise do not dominate the standardized loss.
inline constexpr double kMinTargetScale = 0.01;

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double train_loss = 0.0;  // standardized objective
  double val_loss = 0.0;
};

struct TrainedPolicy {
  PolicyConfig config;
  PolicyNet<float> net;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

namespace detail {

inline std::array<double, kNumJoints> target_of(const WindowSample& s, Representation r) {
  return r == Representation::delta ? s.target_delta.dq : s.target_absolute.q;
}

// Identical consecutive frames of an episode share one id.
class FrameCanon {
 public:
  explicit FrameCanon(const std::vector<Episode>& pool) : pool_(&pool), canon_(pool.size()) {}

  std::uint32_t id(std::size_t episode, std::uint32_t t) {
    auto& c = canon_.at(episode);
    if (c.empty()) {
      const auto& frames = (*pool_)[episode].frames;
      c.resize(frames.size());
      for (std::size_t i = 0; i < frames.size(); ++i)
        c[i] = (i > 0 && frames[i] == frames[i - 1]) ? c[i - 1] : static_cast<std::uint32_t>(i);
    }
    return c.at(t);
  }

 private:
  const std::vector<Episode>* pool_;
  std::vector<std::vector<std::uint32_t>> canon_;
};

template <typename T>
PolicyBatch<T> make_batch(const std::vector<Episode>& pool, FrameCanon& canon,
                          std::span<const WindowSample* const> samples, Representation rep,
                          std::size_t history) {
  PolicyBatch<T> batch;
  batch.history = history;
  std::map<std::pair<std::size_t, std::uint32_t>, std::uint32_t> frame_slot;
  std::vector<std::pair<std::size_t, std::uint32_t>> frame_keys;
  struct Key {
    std::size_t episode;
    std::vector<std::uint32_t> frames;
    std::array<double, kNumJoints> target;
    bool operator<(const Key& o) const {
      return std::tie(episode, frames, target) < std::tie(o.episode, o.frames, o.target);
    }
  };
  std::map<Key, std::size_t> window_slot;
  const T unit = T{1} / static_cast<T>(samples.size());
  for (const WindowSample* s : samples) {
    if (s->history.size() != history)
      throw std::invalid_argument("sample history length differs from the policy's");
    Key key{s->episode, {}, target_of(*s, rep)};
    key.frames.reserve(history);
    for (auto t : s->history) {
      const std::pair<std::size_t, std::uint32_t> fk{s->episode, canon.id(s->episode, t)};
      auto [it, fresh] = frame_slot.emplace(fk, static_cast<std::uint32_t>(frame_keys.size()));
      if (fresh) frame_keys.push_back(fk);
      key.frames.push_back(it->second);
    }
    auto [it, fresh] = window_slot.emplace(key, batch.weights.size());
    batch.sample_slot.push_back(it->second);
    if (fresh) {
      batch.windows.insert(batch.windows.end(), key.frames.begin(), key.frames.end());
      for (double v : key.target) batch.targets.push_back(static_cast<T>(v));
      batch.weights.push_back(unit);
    } else {
      batch.weights[it->second] += unit;
    }
  }
  batch.frame_count = frame_keys.size();
  batch.pixels.resize(batch.frame_count * 3 * kImageSize * kImageSize);
  for (std::size_t i = 0; i < frame_keys.size(); ++i)
    load_frame(pool[frame_keys[i].first].frames[frame_keys[i].second], i, batch.frame_count,
               batch.pixels.data());
  return batch;
}

// Predictions in target units for every sample, evaluated in deduplicated
// chunks.
inline std::vector<std::array<double, kNumJoints>> predict_samples(
    PolicyNet<float>& net, const PolicyConfig& cfg, const std::vector<Episode>& pool,
    std::span<const WindowSample> samples, std::size_t chunk = 256) {
  FrameCanon canon(pool);
  std::vector<std::array<double, kNumJoints>> out;
  out.reserve(samples.size());
  for (std::size_t lo = 0; lo < samples.size(); lo += chunk) {
    const std::size_t hi = std::min(samples.size(), lo + chunk);
    std::vector<const WindowSample*> ptrs;
    for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&samples[i]);
    const auto batch = make_batch<float>(pool, canon, ptrs, cfg.representation,
                                         static_cast<std::size_t>(cfg.history));
    const auto pred = net.forward(batch);
    for (std::size_t slot : batch.sample_slot) {
      std::array<double, kNumJoints> p{};
      for (std::size_t j = 0; j < kNumJoints; ++j) p[j] = pred[slot * kNumJoints + j];
      out.push_back(p);
    }
  }
  return out;
}

inline void check_samples(const PolicyConfig& cfg, const std::vector<Episode>& pool,
                          std::span<const WindowSample> samples) {
  for (const auto& s : samples) {
    if (s.history.size() != static_cast<std::size_t>(cfg.history))
      throw std::invalid_argument("sample history length " + std::to_string(s.history.size()) +
                                  " does not match H = " + std::to_string(cfg.history));
    if (s.episode >= pool.size()) throw std::invalid_argument("sample references a missing episode");
  }
}

}  // namespace detail

struct SampleLoss {
  double mse = 0.0;        // position space, see report_mse
  double objective = 0.0;  // standardized, as minimized by train
};

inline SampleLoss evaluate_samples(TrainedPolicy& policy, const std::vector<Episode>& pool,
                                   std::span<const WindowSample> samples) {
  if (samples.empty()) throw std::invalid_argument("evaluation needs at least one sample");
  detail::check_samples(policy.config, pool, samples);
  const auto pred = detail::predict_samples(policy.net, policy.config, pool, samples);
  SampleLoss out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    double sq = 0.0, zq = 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double r = policy.config.representation == Representation::delta
                           ? pred[i][j] - s.target_delta.dq[j]
                           : pred[i][j] - s.target_absolute.q[j];
      const double z = r / static_cast<double>(policy.net.out_scale()[j]);
      sq += r * r;
      zq += z * z;
    }
    out.mse += sq / static_cast<double>(kNumJoints);
    out.objective += zq / static_cast<double>(kNumJoints);
  }
  out.mse /= static_cast<double>(samples.size());
  out.objective /= static_cast<double>(samples.size());
  return out;
}

// Mean over samples of |predicted next config - a_{t+1}|^2 / 6. In delta mode
// the predicted config is base + delta and the residual is formed as
// delta - (a_{t+1} - a_t), which is the same number.
inline double report_mse(TrainedPolicy& policy, const std::vector<Episode>& pool,
                         std::span<const WindowSample> samples) {
  return evaluate_samples(policy, pool, samples).mse;
}

// Table display convention: MSE scaled by 10^3.
inline double mse_display(double mse) { return mse * 1e3; }

inline std::string format_mse(double mse) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", mse_display(mse));
  return buf;
}

using TrainProgress = std::function<void(const EpochLog&)>;

inline TrainedPolicy train(const PolicyConfig& cfg, const std::vector<Episode>& pool,
                           std::span<const WindowSample> train_samples,
                           std::span<const WindowSample> val_samples,
                           const TrainProgress& progress = {}) {
  cfg.validate();
  if (train_samples.empty()) throw std::invalid_argument("training set is empty");
  detail::check_samples(cfg, pool, train_samples);
  detail::check_samples(cfg, pool, val_samples);

  TrainedPolicy out;
  out.config = cfg;
  out.net = PolicyNet<float>(cfg.arch);
  out.net.init(cfg.seed);

  // Per-output target statistics set the head's output scale.
  std::array<double, kNumJoints> mean{}, var{};
  for (const auto& s : train_samples) {
    const auto t = detail::target_of(s, cfg.representation);
    for (std::size_t j = 0; j < kNumJoints; ++j) mean[j] += t[j];
  }
  for (auto& m : mean) m /= static_cast<double>(train_samples.size());
  for (const auto& s : train_samples) {
    const auto t = detail::target_of(s, cfg.representation);
    for (std::size_t j = 0; j < kNumJoints; ++j) var[j] += (t[j] - mean[j]) * (t[j] - mean[j]);
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    out.net.out_mean()[j] = static_cast<float>(mean[j]);
    out.net.out_scale()[j] = static_cast<float>(
        std::max(kMinTargetScale, std::sqrt(var[j] / static_cast<double>(train_samples.size()))));
  }

  const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
  Rng rng(derive_seed(cfg.seed, 0x7a1e));
  detail::FrameCanon canon(pool);
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t h = static_cast<std::size_t>(cfg.history);

  double best = std::numeric_limits<double>::infinity();
  nn::ParamStore<float> best_store = out.net.store();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double mse_sum = 0.0, loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += bs, ++batch_index) {
      const std::size_t hi = std::min(order.size(), lo + bs);
      std::vector<const WindowSample*> ptrs;
      for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&train_samples[order[i]]);
      try {
        const auto batch = detail::make_batch<float>(pool, canon, ptrs, cfg.representation, h);
        out.net.store().zero_grad();
        const auto loss = out.net.forward_backward(batch);
        nn::adam_step(out.net.store(), adam);
        mse_sum += loss.mse * static_cast<double>(hi - lo);
        loss_sum += loss.objective * static_cast<double>(hi - lo);
      } catch (const NumericFault& e) {
        throw NumericFault(e.op() + " at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_mse = mse_sum / static_cast<double>(order.size());
    log.train_loss = loss_sum / static_cast<double>(order.size());
    if (!val_samples.empty()) {
      const auto v = evaluate_samples(out, pool, val_samples);
      log.val_mse = v.mse;
      log.val_loss = v.objective;
    } else {
      log.val_mse = log.train_mse;
      log.val_loss = log.train_loss;
    }
    out.log.push_back(log);
    if (progress) progress(log);
    if (log.val_loss < best) {
      best = log.val_loss;
      best_store = out.net.store();
      out.best_epoch = epoch;
    }
  }
  out.net.store() = std::move(best_store);
  return out;
}

inline std::string format_training_log(const TrainedPolicy& p) {
  std::ostringstream os;
  os << "epoch,train_mse,val_mse\n";
  for (const auto& e : p.log)
    os << e.epoch << ',' << detail::format_double(e.train_mse) << ','
       << detail::format_double(e.val_mse) << '\n';
  return os.str();
}

// Single-window inference. Frames are oldest first.
inline std::array<double, kNumJoints> forward_window(TrainedPolicy& policy,
                                                     std::span<const Frame> history) {
  if (history.size() != static_cast<std::size_t>(policy.config.history))
    throw std::invalid_argument("history has " + std::to_string(history.size()) +
                                " frames, policy expects " +
                                std::to_string(policy.config.history));
  if (policy.config.arch.image_size != kImageSize)
    throw std::invalid_argument("policy was built for a different image size");
  std::vector<float> pixels(history.size() * 3 * kImageSize * kImageSize);
  for (std::size_t i = 0; i < history.size(); ++i)
    load_frame(history[i], i, history.size(), pixels.data());
  const auto features = policy.net.encode(history.size(), pixels);
  std::vector<std::uint32_t> window(history.size());
  std::iota(window.begin(), window.end(), 0u);
  const auto pred = policy.net.predict(features, window, history.size());
  std::array<double, kNumJoints> out{};
  for (std::size_t j = 0; j < kNumJoints; ++j) out[j] = pred[j];
  return out;
}

// Incremental inference for closed-loop use: each frame is encoded once and
// the recurrent part is rerun over the last H features.
class PolicyRunner {
 public:
  explicit PolicyRunner(TrainedPolicy& policy) : policy_(&policy) {
    if (policy.config.arch.image_size != kImageSize)
      throw std::invalid_argument("policy was built for a different image size");
  }

  // Starts a history of H copies of `first`.
  void reset(const Frame& first) {
    const auto f = encode(first);
    history_.clear();
    for (int i = 0; i < policy_->config.history; ++i) history_.push_back(f);
  }

  void push(const Frame& frame) {
    if (history_.empty()) throw std::logic_error("PolicyRunner::push before reset");
    history_.erase(history_.begin());
    history_.push_back(encode(frame));
  }

  std::size_t history_size() const { return history_.size(); }

  std::array<double, kNumJoints> predict() {
    const std::size_t fd = static_cast<std::size_t>(policy_->config.arch.feature_dim);
    std::vector<float> features;
    features.reserve(history_.size() * fd);
    for (const auto& f : history_) features.insert(features.end(), f.begin(), f.end());
    std::vector<std::uint32_t> window(history_.size());
    std::iota(window.begin(), window.end(), 0u);
    const auto pred = policy_->net.predict(features, window, history_.size());
    std::array<double, kNumJoints> out{};
    for (std::size_t j = 0; j < kNumJoints; ++j) out[j] = pred[j];
    return out;
  }

  Representation representation() const { return policy_->config.representation; }

 private:
  std::vector<float> encode(const Frame& frame) {
    std::vector<float> pixels(3 * kImageSize * kImageSize);
    load_frame(frame, 0, 1, pixels.data());
    return policy_->net.encode(1, pixels);
  }

  TrainedPolicy* policy_;
  std::vector<std::vector<float>> history_;
};

namespace detail {

inline std::string policy_metadata(const TrainedPolicy& p) {
  const auto& c = p.config;
  std::ostringstream os;
  os << "kind=policy\n";
  os << "representation=" << to_string(c.representation) << '\n';
  os << "history=" << c.history << '\n';
  os << "image_size=" << c.arch.image_size << '\n';
  os << "channels=" << c.arch.channels[0] << ',' << c.arch.channels[1] << ','
     << c.arch.channels[2] << ',' << c.arch.channels[3] << '\n';
  os << "feature_dim=" << c.arch.feature_dim << '\n';
  os << "hidden_dim=" << c.arch.hidden_dim << '\n';
  os << "lr=" << format_double(c.lr) << '\n';
  os << "batch_size=" << c.batch_size << '\n';
  os << "epochs=" << c.epochs << '\n';
  os << "seed=" << c.seed << '\n';
  os << "best_epoch=" << p.best_epoch << '\n';
  auto series = [&](const char* key, double EpochLog::*field) {
    os << key << '=';
    for (std::size_t i = 0; i < p.log.size(); ++i)
      os << (i ? ";" : "") << format_double(p.log[i].*field);
    os << '\n';
  };
  series("train_mse", &EpochLog::train_mse);
  series("val_mse", &EpochLog::val_mse);
  series("train_loss", &EpochLog::train_loss);
  series("val_loss", &EpochLog::val_loss);
  return os.str();
}

}  // namespace detail

inline nn::Checkpoint to_checkpoint(const TrainedPolicy& p) {
  nn::Checkpoint ck;
  ck.params = p.net.store();
  ck.buffers.emplace_back("norm.target_mean",
                          nn::Tensor<float>({kNumJoints}, p.net.out_mean()));
  ck.buffers.emplace_back("norm.target_scale",
                          nn::Tensor<float>({kNumJoints}, p.net.out_scale()));
  ck.metadata = detail::policy_metadata(p);
  return ck;
}

inline TrainedPolicy from_checkpoint(const nn::Checkpoint& ck) {
  const auto kv = parse_key_values(ck.metadata);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("policy checkpoint lacks '" + key + "'");
    return it->second;
  };
  if (get("kind") != "policy") throw FormatError("checkpoint is not a policy");
  TrainedPolicy p;
  auto& c = p.config;
  try {
    c.representation = representation_from_string(get("representation"));
    c.history = std::stoi(get("history"));
    c.arch.image_size = std::stoi(get("image_size"));
    std::istringstream ch(get("channels"));
    std::string tok;
    for (auto& v : c.arch.channels) {
      if (!std::getline(ch, tok, ',')) throw FormatError("bad channels entry");
      v = std::stoi(tok);
    }
    c.arch.feature_dim = std::stoi(get("feature_dim"));
    c.arch.hidden_dim = std::stoi(get("hidden_dim"));
    c.lr = std::stod(get("lr"));
    c.batch_size = std::stoi(get("batch_size"));
    c.epochs = std::stoi(get("epochs"));
    c.seed = std::stoull(get("seed"));
    p.best_epoch = std::stoi(get("best_epoch"));
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("bad policy metadata: ") + e.what());
  }
  c.validate();
  p.net = PolicyNet<float>(c.arch);
  auto& store = p.net.store();
  if (ck.params.params().size() != store.params().size())
    throw FormatError("policy checkpoint has the wrong number of parameters");
  for (auto& param : store.params()) {
    const auto* src = ck.params.find(param.name);
    if (src == nullptr) throw FormatError("policy checkpoint lacks parameter " + param.name);
    if (src->value.shape != param.value.shape)
      throw FormatError("parameter " + param.name + " has shape " +
                        nn::shape_string(src->value.shape) + ", expected " +
                        nn::shape_string(param.value.shape));
    param = *src;
  }
  store.step = ck.params.step;
  auto buffer = [&](const std::string& name) -> const nn::Tensor<float>& {
    for (const auto& [n, t] : ck.buffers)
      if (n == name) return t;
    throw FormatError("policy checkpoint lacks buffer " + name);
  };
  const auto& mean = buffer("norm.target_mean");
  const auto& scale = buffer("norm.target_scale");
  if (mean.size() != kNumJoints || scale.size() != kNumJoints)
    throw FormatError("normalization buffers have the wrong size");
  p.net.out_mean() = mean.data;
  p.net.out_scale() = scale.data;
  auto series = [&](const std::string& key) {
    std::vector<double> out;
    std::istringstream in(get(key));
    std::string tok;
    while (std::getline(in, tok, ';')) out.push_back(detail::parse_number<double>(tok, key));
    return out;
  };
  const auto train = series("train_mse");
  const auto val = series("val_mse");
  const auto train_loss = series("train_loss");
  const auto val_loss = series("val_loss");
  if (train.size() != val.size() || train.size() != train_loss.size() ||
      train.size() != val_loss.size())
    throw FormatError("loss history lengths differ");
  for (std::size_t i = 0; i < train.size(); ++i)
    p.log.push_back({static_cast<int>(i + 1), train[i], val[i], train_loss[i], val_loss[i]});
  return p;
}

inline void save_policy(const TrainedPolicy& p, const std::filesystem::path& path) {
  nn::write_checkpoint(to_checkpoint(p), path);
}

inline TrainedPolicy load_policy(const std::filesystem::path& path) {
  return from_checkpoint(nn::read_checkpoint(path));
}

}  // namespace activebc
