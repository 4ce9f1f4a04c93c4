#include "sdfp/trainer.hpp"

#include <cmath>
#include <sstream>

namespace sdfp {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum", "must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (seq_len == 0) throw ConfigError("seq_len", "must be positive");
  if (grad_clip < 0.0) throw ConfigError("grad_clip", "must be non-negative");
}

TrainResult train(const Model<float>& model, const Corpus& corpus,
                  const TrainConfig& config, const TrainProgress& progress) {
  config.validate();
  if (config.seq_len > model.config().max_context) {
    throw ConfigError("seq_len", "exceeds the model's max_context");
  }
  TrainResult result{model, {}};
  if (config.steps == 0) return result;

  const auto& layout = model.weights().layout();
  std::vector<Tensor<float>> params = model.weights().params();
  std::vector<std::vector<float>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.size(), 0.0f);

  Rng rng(config.seed);
  Model<float> current = model;
  const double tokens_per_step = double(config.batch_size * config.seq_len);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Batch batch = sample_batch(corpus, config.batch_size, config.seq_len, rng);
    LossAndGrad<float> lg;
    try {
      lg = loss_and_gradients(current, batch);
    } catch (const NumericError& e) {
      throw TrainingError(static_cast<long>(step), std::string("divergence: ") + e.what());
    }
    const double mean_loss = lg.loss / tokens_per_step;
    if (!std::isfinite(mean_loss)) {
      throw TrainingError(static_cast<long>(step), "loss is not finite");
    }
    result.loss_curve.push_back(mean_loss);
    if (progress) progress(step, mean_loss);

    double grad_scale = 1.0 / tokens_per_step;
    if (config.grad_clip > 0.0) {
      double sq = 0.0;
      for (const auto& [id, g] : lg.grads.entries())
        for (float v : g.data()) sq += double(v) * double(v);
      const double norm = std::sqrt(sq) * grad_scale;
      if (norm > config.grad_clip) grad_scale *= config.grad_clip / norm;
    }
    const double warm = config.warmup_steps == 0
                            ? 1.0
                            : std::min(1.0, double(step + 1) / double(config.warmup_steps));
    const float lr = static_cast<float>(config.lr * warm);
    const float mu = static_cast<float>(config.momentum);
    const float gs = static_cast<float>(grad_scale);
    for (ParamId id = 0; id < layout.count(); ++id) {
      const auto g = lg.grads.at(id).data();
      auto p = params[id].mutable_data();
      auto& v = velocity[id];
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = mu * v[i] + gs * g[i];
        p[i] -= lr * v[i];
      }
    }
    current = Model<float>(std::make_shared<const Weights<float>>(model.config(), params),
                           model.mask());
  }
  result.model = current;
  return result;
}

std::vector<double> smooth_curve(const std::vector<double>& curve, std::size_t window) {
  std::vector<double> out;
  out.reserve(curve.size());
  double running = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    running += curve[i];
    if (i >= window) running -= curve[i - window];
    out.push_back(running / double(std::min(i + 1, window)));
  }
  return out;
}

std::string loss_curve_csv(const std::vector<double>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << ',' << curve[i] << '\n';
  return out.str();
}

}  // namespace sdfp
