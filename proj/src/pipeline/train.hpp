#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "losses/losses.hpp"
#include "nn/checkpoint.hpp"
#include "pipeline/dataset.hpp"

namespace s3d {

struct TrainConfig {
  std::string model_preset = "default";  // generator and discriminator widths
  int steps = 2000;
  double learning_rate = 1e-4;
  double lr_decay = 0.3;
  int decay_interval = 0;                // 0: 40% of steps
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double discriminator_lr = 0.0;         // 0: same as learning_rate
  int batch_size = 8;
  int n_views = 2;
  LossWeights weights;
  bool use_sd = true;
  bool use_sem = true;
  std::uint64_t seed = 0;
  double sigma = 1e-4;
  PoseRange pose_range;
  std::vector<std::string> categories;   // empty: whole train split
  bool verification = false;             // float64 arithmetic
  int log_interval = 1;
  int snapshot_interval = 0;             // 0: steps / 5

  void validate() const;
  int resolved_decay_interval() const;
  int resolved_snapshot_interval() const;
  double resolved_discriminator_lr() const { return discriminator_lr > 0 ? discriminator_lr : learning_rate; }
  /// The discriminator is built and called only when this holds.
  bool adversarial() const { return use_sd && weights.lambda_sd > 0; }
  GeneratorConfig generator_config() const;
  DiscriminatorConfig discriminator_config() const;
  double learning_rate_at(int step) const;

  /// "default" uses the full-size defaults; "toy" shrinks widths,
  /// scales ({32,64}) and batch (2) for single-core runs.
  static TrainConfig preset(const std::string& name);
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Thrown when a loss becomes non-finite; carries that step's report.
class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(LossReport report);
  const LossReport& report() const { return report_; }

 private:
  LossReport report_;
};

struct SnapshotInfo {
  int step = 0;
  std::string path;
  double l_sp = 0.0;
  double best_l_sp = 0.0;
};

struct TrainResult {
  std::string checkpoint_path;
  std::string checkpoint_id;
  std::string log_path;
  std::vector<LossReport> history;  // every step
  std::vector<SnapshotInfo> snapshots;
  std::uint64_t discriminator_calls = 0;
  double seconds = 0.0;
};

using TrainProgress = std::function<void(const LossReport&)>;

/// Writes out_dir/train_log.ndjson, out_dir/snapshots/step_NNNNNN.ckpt and
/// out_dir/model.ckpt.
TrainResult train(const TrainConfig& config, const DatasetManifest& data, const std::filesystem::path& out_dir,
                  const TrainProgress& progress = {});

/// Adam with bias correction over a parameter list.
template <typename T>
class Adam {
 public:
  Adam(ParamList<T>& params, double beta1, double beta2, double eps);
  void step(double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  ParamList<T>* params_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace s3d
