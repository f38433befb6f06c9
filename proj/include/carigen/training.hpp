#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "carigen/config.hpp"
#include "carigen/data.hpp"
#include "carigen/losses.hpp"
#include "carigen/rng.hpp"

namespace carigen {

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class Adam {
 public:
  Adam() = default;
  Adam(double beta1, double beta2, double eps = 1e-8);

  void register_params(const std::vector<std::pair<std::string, ad::Var>>& params);

  /// One update from externally supplied gradients.
  void step(const std::map<std::string, Tensor>& grads, double lr);
  /// One update straight from the parameters' gradient buffers.
  void step_from_grads(double lr);

  std::int64_t t() const { return t_; }
  const std::map<std::string, Tensor>& m() const { return m_; }
  const std::map<std::string, Tensor>& v() const { return v_; }
  void restore(std::int64_t t, std::map<std::string, Tensor> m, std::map<std::string, Tensor> v);

 private:
  double beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<std::pair<std::string, ad::Var>> params_;
  std::map<std::string, Tensor> m_, v_;
};

/// Owns the model, optimizers, RNG and step counters; runs the dual-way (or
/// degraded single-way) forward pass and the alternating D-then-G updates.
class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, Dataset dataset);

  /// Full forward pass for one photo/caricature pair. Samples the Gaussian
  /// codes from `rng` in a fixed order (style codes first, then the landmark
  /// latents, photo->caricature before the reverse).
  ForwardBundle forward_pass(const Tensor& x_p, const LandmarkSet& l_p, int y_p,
                             const Tensor& x_c, const LandmarkSet& l_c, int y_c, Rng& rng) const;

  /// One combined step: discriminator update on total_D, then encoder/
  /// generator update on total_G, both gradients taken at the step-start
  /// parameters. Returns the loss report; steps whose TPS solve fails are
  /// skipped (counted; more than 1% skipped aborts the run).
  LossReport train_step();

  using StepHook = std::function<void(std::int64_t step, const LossReport&)>;
  void train(const StepHook& hook = nullptr);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  const Model& model() const { return *model_; }
  Model& model() { return *model_; }
  const ExperimentConfig& config() const { return cfg_; }
  std::int64_t step() const { return step_; }
  std::int64_t skipped_steps() const { return skipped_; }
  Rng& rng() { return rng_; }
  const Dataset& dataset() const { return data_; }

  double learning_rate() const { return cfg_.learning_rate(step_); }

 private:
  ExperimentConfig cfg_;
  Dataset data_;
  Rng rng_;
  std::unique_ptr<Model> model_;
  Adam opt_g_, opt_d_;
  std::int64_t step_ = 0;
  std::int64_t skipped_ = 0;

  friend struct CheckpointCodec;
};

ad::Var sample_gaussian(Rng& rng, int dim);

}  // namespace carigen
