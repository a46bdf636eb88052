#include "pipeline/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <unordered_map>

#include "mesh/obj_io.hpp"
#include "pipeline/infer.hpp"
#include "tensor/ops.hpp"

namespace s3d {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (steps < 1) throw InvalidArgument("train: steps must be positive");
  if (!(learning_rate > 0)) throw InvalidArgument("train: learning_rate must be positive");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw InvalidArgument("train: lr_decay must lie in (0,1]");
  if (decay_interval < 0) throw InvalidArgument("train: decay_interval must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw InvalidArgument("train: betas must lie in [0,1)");
  if (!(adam_eps > 0)) throw InvalidArgument("train: adam_eps must be positive");
  if (discriminator_lr < 0) throw InvalidArgument("train: discriminator_lr must be non-negative");
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be positive");
  if (n_views < 1) throw InvalidArgument("train: n_views must be at least 1");
  if (!(sigma > 0)) throw InvalidArgument("train: sigma must be positive");
  if (log_interval < 1) throw InvalidArgument("train: log_interval must be positive");
  if (snapshot_interval < 0) throw InvalidArgument("train: snapshot_interval must be non-negative");
  weights.validate();
  for (int r : weights.scales) {
    RenderConfig rc;
    rc.resolution = r;
    rc.validate();
  }
  generator_config().validate();
  discriminator_config().validate();
}

int TrainConfig::resolved_decay_interval() const {
  return decay_interval > 0 ? decay_interval : std::max(1, static_cast<int>(std::lround(0.4 * steps)));
}

int TrainConfig::resolved_snapshot_interval() const {
  return snapshot_interval > 0 ? snapshot_interval : std::max(1, steps / 5);
}

GeneratorConfig TrainConfig::generator_config() const {
  GeneratorConfig g = GeneratorConfig::preset(model_preset);
  g.use_sem = use_sem;
  return g;
}

DiscriminatorConfig TrainConfig::discriminator_config() const {
  DiscriminatorConfig d = DiscriminatorConfig::preset(model_preset);
  d.views = n_views;
  return d;
}

double TrainConfig::learning_rate_at(int step) const {
  return learning_rate * std::pow(lr_decay, step / resolved_decay_interval());
}

TrainConfig TrainConfig::preset(const std::string& name) {
  TrainConfig c;
  if (name == "default") return c;
  if (name == "toy") {
    c.model_preset = "toy";
    c.batch_size = 2;
    c.weights.scales = {32, 64};
    c.weights.lambda_scales = {0.5, 0.5};
    return c;
  }
  throw InvalidArgument("unknown training preset '" + name + "' (expected default or toy)");
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"model_preset", c.model_preset},
       {"steps", c.steps},
       {"learning_rate", c.learning_rate},
       {"lr_decay", c.lr_decay},
       {"decay_interval", c.resolved_decay_interval()},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"discriminator_lr", c.resolved_discriminator_lr()},
       {"batch_size", c.batch_size},
       {"n_views", c.n_views},
       {"weights", c.weights},
       {"use_sd", c.use_sd},
       {"use_sem", c.use_sem},
       {"seed", c.seed},
       {"sigma", c.sigma},
       {"pose_range",
        {{"azimuth", {c.pose_range.azimuth_lo, c.pose_range.azimuth_hi}},
         {"elevation", {c.pose_range.elevation_lo, c.pose_range.elevation_hi}},
         {"distance", c.pose_range.distance}}},
       {"categories", c.categories},
       {"verification", c.verification},
       {"log_interval", c.log_interval},
       {"snapshot_interval", c.resolved_snapshot_interval()}};
}

void from_json(const json& j, TrainConfig& c) {
  c = TrainConfig::preset(j.value("preset", std::string("default")));
  if (j.contains("model_preset")) j.at("model_preset").get_to(c.model_preset);
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("steps", c.steps);
  opt("learning_rate", c.learning_rate);
  opt("lr_decay", c.lr_decay);
  opt("decay_interval", c.decay_interval);
  opt("beta1", c.beta1);
  opt("beta2", c.beta2);
  opt("adam_eps", c.adam_eps);
  opt("discriminator_lr", c.discriminator_lr);
  opt("batch_size", c.batch_size);
  opt("n_views", c.n_views);
  opt("weights", c.weights);
  opt("use_sd", c.use_sd);
  opt("use_sem", c.use_sem);
  opt("seed", c.seed);
  opt("sigma", c.sigma);
  opt("categories", c.categories);
  opt("verification", c.verification);
  opt("log_interval", c.log_interval);
  opt("snapshot_interval", c.snapshot_interval);
  if (j.contains("pose_range")) {
    const auto& p = j.at("pose_range");
    if (p.contains("azimuth")) {
      c.pose_range.azimuth_lo = p.at("azimuth").at(0).get<double>();
      c.pose_range.azimuth_hi = p.at("azimuth").at(1).get<double>();
    }
    if (p.contains("elevation")) {
      c.pose_range.elevation_lo = p.at("elevation").at(0).get<double>();
      c.pose_range.elevation_hi = p.at("elevation").at(1).get<double>();
    }
    if (p.contains("distance")) p.at("distance").get_to(c.pose_range.distance);
  }
}

namespace {
std::string report_message(const LossReport& r) {
  return "training diverged at step " + std::to_string(r.step) + ": " + r.to_ndjson();
}
}  // namespace

TrainingDiverged::TrainingDiverged(LossReport report)
    : std::runtime_error(report_message(report)), report_(std::move(report)) {}

template <typename T>
Adam<T>::Adam(ParamList<T>& params, double beta1, double beta2, double eps)
    : params_(&params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params.items()) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& items = params_->items();
  for (std::size_t k = 0; k < items.size(); ++k) {
    auto& p = items[k].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = beta1_ * m[i] + (1 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1 - beta2_) * gi * gi;
      w[i] = static_cast<T>(w[i] - lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

namespace {

struct CachedEntry {
  const DatasetEntry* entry;
  PreparedSketch sketch;
  Mesh mesh;
};

template <typename T>
Tensor<T> to_tensor(const Silhouette<double>& s) {
  std::vector<T> v(s.values.values().begin(), s.values.values().end());
  return Tensor<T>::from(s.values.shape(), std::move(v));
}

template <typename T>
class Trainer {
 public:
  Trainer(const TrainConfig& config, const DatasetManifest& data, const fs::path& out_dir)
      : cfg_(config),
        out_dir_(out_dir),
        generator_(config.generator_config(), mix_seed(config.seed, 1)),
        topology_(generator_.template_mesh().vertex_count(), generator_.template_mesh().faces),
        adam_g_(generator_.params(), config.beta1, config.beta2, config.adam_eps),
        rng_(mix_seed(config.seed, 3)) {
    const auto ids = data.select("train", config.categories);
    if (ids.empty()) throw InvalidArgument("train: the selected train split is empty");
    const int input = generator_.config().input_size;
    for (const auto& id : ids) {
      const auto& e = data.entry(id);
      CachedEntry c{&e, prepare_sketch(read_png(data.sketch_path(e).string()), input), load_obj(data.mesh_path(e))};
      c.mesh.validate();
      entries_.push_back(std::move(c));
    }
    for (const auto& c : entries_) {
      std::vector<Tensor<T>> t;
      for (int r : cfg_.weights.scales) t.push_back(to_tensor<T>(rasterize_hard(c.mesh, c.entry->pose, r)));
      targets_.push_back(std::move(t));
    }
    if (cfg_.adversarial()) {
      discriminator_ = std::make_unique<Discriminator<T>>(cfg_.discriminator_config(), mix_seed(config.seed, 2));
      adam_d_ = std::make_unique<Adam<T>>(discriminator_->params(), config.beta1, config.beta2, config.adam_eps);
    }
  }

  TrainResult run(const TrainProgress& progress) {
    fs::create_directories(out_dir_ / "snapshots");
    TrainResult result;
    result.log_path = (out_dir_ / "train_log.ndjson").string();
    std::ofstream log(result.log_path, std::ios::trunc);
    if (!log) throw IoError("cannot write '" + result.log_path + "'");

    const auto calls_before = Discriminator<T>::call_count();
    const auto t0 = std::chrono::steady_clock::now();
    double best = std::numeric_limits<double>::infinity();
    for (int step = 0; step < cfg_.steps; ++step) {
      LossReport r = step_once(step);
      r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      best = std::min(best, r.l_sp);
      if (step % cfg_.log_interval == 0 || step + 1 == cfg_.steps) log << r.to_ndjson() << '\n' << std::flush;
      if (progress) progress(r);
      result.history.push_back(r);
      if ((step + 1) % cfg_.resolved_snapshot_interval() == 0 || step + 1 == cfg_.steps) {
        char name[64];
        std::snprintf(name, sizeof name, "step_%06d.ckpt", step + 1);
        const std::string path = (out_dir_ / "snapshots" / name).string();
        save(path, {{"step", step + 1}, {"l_sp", r.l_sp}, {"best_l_sp", best}});
        result.snapshots.push_back({step + 1, path, r.l_sp, best});
      }
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.discriminator_calls = Discriminator<T>::call_count() - calls_before;
    result.checkpoint_path = (out_dir_ / "model.ckpt").string();
    json final_report = result.history.back();
    final_report.erase("wall_seconds");  // keeps the checkpoint id reproducible
    result.checkpoint_id = save(result.checkpoint_path, {{"step", cfg_.steps},
                                                         {"best_l_sp", best},
                                                         {"final", final_report},
                                                         {"discriminator_calls", result.discriminator_calls}});
    return result;
  }

 private:
  std::string save(const std::string& path, json meta) {
    meta["train_config"] = cfg_;
    json cats = json::array();
    for (const auto& c : entries_) {
      if (std::find(cats.begin(), cats.end(), c.entry->category) == cats.end()) cats.push_back(c.entry->category);
    }
    meta["categories"] = cats;
    return save_checkpoint<T>(path, generator_, discriminator_.get(), meta);
  }

  Silhouette<T> render_soft(const Tensor<T>& vertices, const std::vector<Face>& faces, const CameraPose& pose,
                            int resolution) const {
    RenderConfig rc;
    rc.resolution = resolution;
    rc.sigma = cfg_.sigma;
    return soft_rasterize(vertices, faces, pose, rc);
  }

  LossReport step_once(int step) {
    const double lr = cfg_.learning_rate_at(step);
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg_.batch_size), entries_.size());
    std::vector<std::size_t> picks;
    std::vector<const PreparedSketch*> sketches;
    for (std::size_t b = 0; b < batch; ++b) {
      picks.push_back(rng_.index(entries_.size()));
      sketches.push_back(&entries_[picks.back()].sketch);
    }

    const Tensor<T> vertices = generator_.forward(sketch_batch<T>(sketches));
    const auto& faces = generator_.template_mesh().faces;
    const T inv_b = T(1) / static_cast<T>(batch);

    LossReport report;
    report.step = static_cast<std::size_t>(step);
    report.learning_rate = lr;
    report.l_sp_scales.assign(cfg_.weights.scales.size(), 0.0);
    Tensor<T> l_sp, l_r, flat, lap;
    std::vector<Tensor<T>> per_sample_vertices;
    for (std::size_t b = 0; b < batch; ++b) {
      const Tensor<T> vb = select(vertices, b);
      per_sample_vertices.push_back(vb);
      const auto& c = entries_[picks[b]];
      RenderConfig rc;
      rc.sigma = cfg_.sigma;
      const auto sils = render_multiscale(vb, faces, c.entry->pose, rc, cfg_.weights.scales);
      const auto& targets = targets_[picks[b]];
      Tensor<T> sp;
      for (std::size_t s = 0; s < sils.size(); ++s) {
        const Tensor<T> li = iou_loss(sils[s].values, targets[s]);
        report.l_sp_scales[s] += static_cast<double>(li.item()) / static_cast<double>(batch);
        const Tensor<T> term = scale(li, static_cast<T>(cfg_.weights.lambda_scales[s]));
        sp = sp.defined() ? add(sp, term) : term;
      }
      const auto reg = regularizer_loss(vb, topology_, cfg_.weights);
      l_sp = l_sp.defined() ? add(l_sp, sp) : sp;
      l_r = l_r.defined() ? add(l_r, reg.total) : reg.total;
      flat = flat.defined() ? add(flat, reg.flatten) : reg.flatten;
      lap = lap.defined() ? add(lap, reg.laplacian) : reg.laplacian;
    }
    l_sp = scale(l_sp, inv_b);
    l_r = scale(l_r, inv_b);

    Tensor<T> l_sd = Tensor<T>::scalar(T(0));
    if (discriminator_) {
      const int res = discriminator_->config().input_resolution;
      std::vector<Tensor<T>> fake, real;
      for (std::size_t b = 0; b < batch; ++b) {
        const auto poses = sample_poses(static_cast<std::size_t>(cfg_.n_views), rng_.next(), cfg_.pose_range);
        const auto& other = entries_[rng_.index(entries_.size())];
        std::vector<Tensor<T>> fv, rv;
        for (const auto& pose : poses) {
          fv.push_back(render_soft(per_sample_vertices[b], faces, pose, res).values);
          NoGradGuard no_grad;
          rv.push_back(render_soft(vertices_tensor<T>(other.mesh), other.mesh.faces, pose, res).values);
        }
        fake.push_back(stack(fv));
        real.push_back(stack(rv));
      }
      const Tensor<T> fake_batch = stack(fake), real_batch = stack(real);

      discriminator_->params().zero_grad();
      const Tensor<T> d_real = (*discriminator_)(real_batch);
      const auto d_losses = gan_losses((*discriminator_)(fake_batch.detach()), d_real);
      d_losses.discriminator.backward();
      adam_d_->step(lr * cfg_.resolved_discriminator_lr() / cfg_.learning_rate);
      report.l_sd_discriminator = static_cast<double>(d_losses.discriminator.item());

      l_sd = gan_losses((*discriminator_)(fake_batch), d_real.detach()).generator;
    }

    const Tensor<T> total = total_loss(l_sp, l_r, l_sd, cfg_.weights);
    report.l_sp = static_cast<double>(l_sp.item());
    report.l_r = static_cast<double>(l_r.item());
    report.l_flatten = static_cast<double>(flat.item()) / static_cast<double>(batch);
    report.l_laplacian = static_cast<double>(lap.item()) / static_cast<double>(batch);
    report.l_sd_generator = static_cast<double>(l_sd.item());
    report.total = static_cast<double>(total.item());
    if (!std::isfinite(report.total) || !std::isfinite(report.l_sd_discriminator)) throw TrainingDiverged(report);

    generator_.params().zero_grad();
    total.backward();
    adam_g_.step(lr);
    return report;
  }

  TrainConfig cfg_;
  fs::path out_dir_;
  Generator<T> generator_;
  MeshTopology topology_;
  Adam<T> adam_g_;
  std::unique_ptr<Discriminator<T>> discriminator_;
  std::unique_ptr<Adam<T>> adam_d_;
  Rng rng_;
  std::vector<CachedEntry> entries_;
  std::vector<std::vector<Tensor<T>>> targets_;
};

}  // namespace

TrainResult train(const TrainConfig& config, const DatasetManifest& data, const fs::path& out_dir,
                  const TrainProgress& progress) {
  config.validate();
  if (config.verification) return Trainer<double>(config, data, out_dir).run(progress);
  return Trainer<float>(config, data, out_dir).run(progress);
}

}  // namespace s3d
