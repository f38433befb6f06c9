#include "carigen/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "carigen/tps.hpp"

namespace carigen {

using namespace carigen::ad;

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::register_params(const std::vector<std::pair<std::string, Var>>& params) {
  params_ = params;
  for (const auto& [name, v] : params_) {
    m_.emplace(name, Tensor(v.value().shape()));
    v_.emplace(name, Tensor(v.value().shape()));
  }
}

void Adam::step(const std::map<std::string, Tensor>& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, var] : params_) {
    const auto git = grads.find(name);
    if (git == grads.end()) throw NumericError("Adam: missing gradient for " + name);
    const Tensor& g = git->second;
    Tensor& m = m_.at(name);
    Tensor& v = v_.at(name);
    Tensor& p = var.mutable_value();
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

void Adam::step_from_grads(double lr) {
  std::map<std::string, Tensor> grads;
  for (auto& [name, var] : params_) grads.emplace(name, var.grad());
  step(grads, lr);
}

void Adam::restore(std::int64_t t, std::map<std::string, Tensor> m,
                   std::map<std::string, Tensor> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

Var sample_gaussian(Rng& rng, int dim) {
  Tensor t({dim});
  for (int i = 0; i < dim; ++i) t[i] = rng.normal();
  return Var::constant(std::move(t));
}

Trainer::Trainer(const ExperimentConfig& cfg, Dataset dataset)
    : cfg_(cfg), data_(std::move(dataset)), rng_(cfg.seed) {
  cfg_.validate();
  if (data_.empty()) throw DataError("trainer needs samples in both domains");
  for (const auto& s : data_.samples)
    if (s.identity < 0 || s.identity >= cfg_.n_identities)
      throw DataError("sample identity " + std::to_string(s.identity) +
                      " outside configured n_identities=" + std::to_string(cfg_.n_identities));
  model_ = std::make_unique<Model>(cfg_.net_config(), rng_);
  opt_g_ = Adam(cfg_.adam_beta1, cfg_.adam_beta2);
  opt_d_ = Adam(cfg_.adam_beta1, cfg_.adam_beta2);
  opt_g_.register_params(model_->generator_params());
  opt_d_.register_params(model_->discriminator_params());
}

ForwardBundle Trainer::forward_pass(const Tensor& x_p, const LandmarkSet& l_p, int y_p,
                                    const Tensor& x_c, const LandmarkSet& l_c, int y_c,
                                    Rng& rng) const {
  const Model& m = *model_;
  const bool dual = !cfg_.single_way();
  const int ip = dom_index(Domain::photo), ic = dom_index(Domain::caricature);
  const int p2c = dir_index(Direction::photo_to_cari), c2p = dir_index(Direction::cari_to_photo);

  ForwardBundle b;
  b.has_direction[p2c] = true;
  b.has_direction[c2p] = dual;
  b.x_in[ip] = Var::constant(x_p);
  b.x_in[ic] = Var::constant(x_c);
  b.l_in[ip] = Var::constant(l_p.to_tensor());
  b.l_in[ic] = Var::constant(l_c.to_tensor());
  b.y_in[ip] = y_p;
  b.y_in[ic] = y_c;

  // Gaussian codes, fixed draw order
  b.s_sampled[ic] = sample_gaussian(rng, cfg_.style_dim);
  if (dual) b.s_sampled[ip] = sample_gaussian(rng, cfg_.style_dim);
  b.zl_sampled[p2c] = sample_gaussian(rng, cfg_.landmark_latent_dim);
  if (dual) b.zl_sampled[c2p] = sample_gaussian(rng, cfg_.landmark_latent_dim);

  // content and style codes of the inputs
  b.c_enc[ip] = m.encode_content(b.x_in[ip], Domain::photo);
  b.s_enc[ip] = m.encode_style(b.x_in[ip], Domain::photo);
  if (dual) {
    b.c_enc[ic] = m.encode_content(b.x_in[ic], Domain::caricature);
    b.s_enc[ic] = m.encode_style(b.x_in[ic], Domain::caricature);
  }

  // within-domain reconstructions (single-way reconstructs the photo through
  // the only decoder)
  b.x_recon[ip] = m.decode(b.c_enc[ip], b.s_enc[ip],
                           dual ? Domain::photo : Domain::caricature);
  if (dual) b.x_recon[ic] = m.decode(b.c_enc[ic], b.s_enc[ic], Domain::caricature);

  // style transfers (pre-warp)
  b.x_stylized[p2c] = m.decode(b.c_enc[ip], b.s_sampled[ic], Domain::caricature);
  if (dual) b.x_stylized[c2p] = m.decode(b.c_enc[ic], b.s_sampled[ip], Domain::photo);

  // re-encodings of the stylized transfers
  b.s_reenc[p2c] = m.encode_style(b.x_stylized[p2c], dual ? Domain::caricature : Domain::photo);
  if (dual) {
    b.s_reenc[c2p] = m.encode_style(b.x_stylized[c2p], Domain::photo);
    b.c_reenc[p2c] = m.encode_content(b.x_stylized[p2c], Domain::caricature);
    b.c_reenc[c2p] = m.encode_content(b.x_stylized[c2p], Domain::photo);
    b.x_cycle[ip] = m.decode(b.c_reenc[p2c], b.s_enc[ip], Domain::photo);
    b.x_cycle[ic] = m.decode(b.c_reenc[c2p], b.s_enc[ic], Domain::caricature);
  }

  // geometric path: displacements, transformed landmarks, warped generations
  Var geo_content_p = cfg_.detach_content_for_geo ? stopgrad(b.c_enc[ip]) : b.c_enc[ip];
  b.delta_l[p2c] = m.generate_displacement(geo_content_p, b.zl_sampled[p2c],
                                           Direction::photo_to_cari);
  b.l_gen[p2c] = add(b.l_in[ip], b.delta_l[p2c]);
  b.x_warped[p2c] = warp_image(b.x_stylized[p2c], b.l_in[ip], b.l_gen[p2c], cfg_.tps_reg);
  if (dual) {
    Var geo_content_c = cfg_.detach_content_for_geo ? stopgrad(b.c_enc[ic]) : b.c_enc[ic];
    b.delta_l[c2p] = m.generate_displacement(geo_content_c, b.zl_sampled[c2p],
                                             Direction::cari_to_photo);
    b.l_gen[c2p] = add(b.l_in[ic], b.delta_l[c2p]);
    b.x_warped[c2p] = warp_image(b.x_stylized[c2p], b.l_in[ic], b.l_gen[c2p], cfg_.tps_reg);
    // landmark latent reconstructions (transformed landmarks first)
    b.zl_reenc[p2c] = m.encode_landmark_latent(b.l_gen[p2c], b.l_in[ip],
                                               Direction::photo_to_cari);
    b.zl_reenc[c2p] = m.encode_landmark_latent(b.l_gen[c2p], b.l_in[ic],
                                               Direction::cari_to_photo);
  }

  // identity classifier outputs on the attached graph
  b.idlog_x[0] = m.identity_log_prob_image(b.x_in[ip]);
  b.idlog_x[1] = m.identity_log_prob_image(b.x_in[ic]);
  b.idlog_x[2] = m.identity_log_prob_image(b.x_warped[p2c]);
  if (dual) b.idlog_x[3] = m.identity_log_prob_image(b.x_warped[c2p]);
  b.idlog_l[0] = m.identity_log_prob_landmarks(b.l_in[ip]);
  b.idlog_l[1] = m.identity_log_prob_landmarks(b.l_in[ic]);
  b.idlog_l[2] = m.identity_log_prob_landmarks(b.l_gen[p2c]);
  if (dual) b.idlog_l[3] = m.identity_log_prob_landmarks(b.l_gen[c2p]);
  return b;
}

namespace {

void dump_bundle_stats(const ForwardBundle& b, const std::string& path) {
  std::ofstream out(path);
  auto stat = [&](const char* name, const Var& v) {
    if (!v.defined()) {
      out << name << ": absent\n";
      return;
    }
    const Tensor& t = v.value();
    double lo = 1e300, hi = -1e300, acc = 0;
    bool finite = true;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      lo = std::min(lo, t[i]);
      hi = std::max(hi, t[i]);
      acc += t[i];
      if (!std::isfinite(t[i])) finite = false;
    }
    out << name << ": shape=" << t.shape_str() << " min=" << lo << " max=" << hi
        << " mean=" << acc / std::max<std::int64_t>(1, t.numel())
        << (finite ? "" : " NON-FINITE") << "\n";
  };
  for (int i = 0; i < 2; ++i) {
    stat("x_in", b.x_in[i]);
    stat("x_recon", b.x_recon[i]);
    stat("x_stylized", b.x_stylized[i]);
    stat("x_warped", b.x_warped[i]);
    stat("delta_l", b.delta_l[i]);
    stat("l_gen", b.l_gen[i]);
    stat("s_enc", b.s_enc[i]);
    stat("s_reenc", b.s_reenc[i]);
    stat("zl_reenc", b.zl_reenc[i]);
  }
}

}  // namespace

LossReport Trainer::train_step() {
  // batch selection consumes the RNG before the code sampling, fixed order
  const int pi = data_.photos[static_cast<size_t>(
      rng_.next_below(static_cast<std::uint64_t>(data_.photos.size())))];
  const int ci = data_.caricatures[static_cast<size_t>(
      rng_.next_below(static_cast<std::uint64_t>(data_.caricatures.size())))];
  const PreprocessedSample& sp = data_.samples[static_cast<size_t>(pi)];
  const PreprocessedSample& sc = data_.samples[static_cast<size_t>(ci)];

  ForwardBundle bundle;
  try {
    bundle = forward_pass(sp.image, sp.landmarks, sp.identity, sc.image, sc.landmarks,
                          sc.identity, rng_);
  } catch (const TpsError&) {
    ++skipped_;
    ++step_;
    if (skipped_ * 100 > step_ && step_ > 100)
      throw NumericError("more than 1% of steps skipped on TPS solver failures");
    LossReport r;
    r.absent.push_back("skipped");
    return r;
  }

  LossGraph losses = assemble_losses(bundle, *model_, cfg_.effective_weights());
  if (!losses.report.all_finite()) {
    dump_bundle_stats(bundle, "bundle_dump_step_" + std::to_string(step_) + ".txt");
    throw NumericError("non-finite loss at step " + std::to_string(step_) +
                       "; bundle statistics dumped");
  }

  const double lr = cfg_.learning_rate(step_);

  // Both gradients are taken at the step-start parameters; the D and G graphs
  // share only parameter leaves, so two sweeps with a zero in between give
  // clean per-optimizer gradients. D gradients are copied out so the D update
  // can be applied first.
  model_->params.zero_grads();
  backward(losses.total_D);
  std::map<std::string, Tensor> d_grads;
  for (const auto& [name, v] : model_->discriminator_params())
    d_grads.emplace(name, Var(v).grad());

  model_->params.zero_grads();
  backward(losses.total_G);

  opt_d_.step(d_grads, lr);
  opt_g_.step_from_grads(lr);

  ++step_;
  return losses.report;
}

void Trainer::train(const StepHook& hook) {
  while (step_ < cfg_.total_steps) {
    const std::int64_t this_step = step_;
    LossReport report = train_step();
    if (hook) hook(this_step, report);
  }
}

}  // namespace carigen
