#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "carigen/networks.hpp"

namespace carigen {

struct LossWeights {
  double lambda1 = 10.0;  // image reconstruction
  double lambda2 = 1.0;   // code reconstructions and cycles
  double lambda3 = 0.05;  // identity on images
  double lambda4 = 0.01;  // identity on landmarks
  double lambda5 = 1.0;   // adversarial terms
};

/// Everything one optimization step consumes, produced by the forward pass.
/// Direction-indexed entries use [0] = photo->caricature, [1] = the reverse;
/// domain-indexed entries use [0] = photo, [1] = caricature. The single-way
/// variant populates only the photo->caricature slots (has_direction[1] and
/// the caricature-side autoencoder products are absent).
struct ForwardBundle {
  // inputs
  ad::Var x_in[2];    // by domain
  ad::Var l_in[2];    // {17,2}
  int y_in[2] = {0, 0};
  // style network
  ad::Var x_recon[2];     // by domain (single-way: photo reconstruction only)
  ad::Var s_enc[2];       // style codes of the inputs, by domain
  ad::Var s_sampled[2];   // Gaussian style codes, by target domain
  ad::Var x_stylized[2];  // by direction, pre-warp transfers
  ad::Var s_reenc[2];     // by direction: style re-encoding of x_stylized
  ad::Var c_enc[2];       // content codes of the inputs, by domain
  ad::Var c_reenc[2];     // by direction: content codes of x_stylized
  ad::Var x_cycle[2];     // by domain: image cycle reconstructions
  // geometric network
  ad::Var zl_sampled[2];  // by direction
  ad::Var delta_l[2];     // {17,2}
  ad::Var l_gen[2];       // transformed landmarks, {17,2}
  ad::Var x_warped[2];    // by direction: final generated images
  ad::Var zl_reenc[2];    // by direction
  // identity classifier outputs (log-probabilities)
  ad::Var idlog_x[4];  // real photo, real caricature, generated p->c, generated c->p
  ad::Var idlog_l[4];

  bool has_direction[2] = {true, true};

  /// The documented bundle schema (18 names).
  static const std::vector<std::string>& schema();
  /// Names present in this bundle (single-way drops nothing at the name
  /// level; absence shows in the direction flags and unset slots).
  std::vector<std::string> keys() const;
};

/// One row of the training log. Absent terms (single-way) are zero-valued
/// and listed in `absent`.
struct LossReport {
  double rec_x = 0, rec_s = 0, rec_z_l = 0, cyc_c = 0, cyc_x = 0;
  double gan_x_G = 0, gan_x_D = 0, gan_l_G = 0, gan_l_D = 0, gan_z_G = 0, gan_z_D = 0;
  double id_x = 0, id_l = 0;
  double total_G = 0, total_D = 0;
  std::vector<std::string> absent;

  static const std::vector<std::string>& term_names();
  double term(const std::string& name) const;
  bool all_finite() const;
  std::string csv_header() const;
  std::string csv_row(std::int64_t step) const;
};

// ---- individual loss terms -------------------------------------------------

/// Mean absolute difference (means, not sums, so weights are
/// resolution-independent).
double l1_reconstruction(const Tensor& a, const Tensor& b);
ad::Var l1_reconstruction(const ad::Var& a, const ad::Var& b);

/// LSGAN generator side: sum of (1 - s)^2 over fake scores.
double lsgan_generator(const std::vector<double>& fake_scores);
ad::Var lsgan_generator(const std::vector<ad::Var>& fake_scores);

/// LSGAN discriminator side: sum (1 - s_real)^2 + sum s_fake^2.
double lsgan_discriminator(const std::vector<double>& real_scores,
                           const std::vector<double>& fake_scores);
ad::Var lsgan_discriminator(const std::vector<ad::Var>& real_scores,
                            const std::vector<ad::Var>& fake_scores);

/// Negative log-probability of the labelled class.
double identity_nll(const Tensor& log_probs, int label);
ad::Var identity_nll(const ad::Var& log_probs, int label);

// ---- assembly ---------------------------------------------------------------

/// Raw per-term scalars; absent terms are missing from the map.
struct TermSet {
  std::map<std::string, double> values;
};

/// Weighted totals from raw terms; pure arithmetic, shared by the assembly
/// and directly testable against a hand-summed oracle.
LossReport weight_totals(const TermSet& terms, const LossWeights& w);

/// Assembled objectives. The discriminator objective sees detached copies of
/// every generated quantity; the generator objective owns the attached graph.
/// The two graphs share no intermediate nodes, so one backward sweep each
/// yields clean per-optimizer gradients from a single evaluation point.
struct LossGraph {
  ad::Var total_G;
  ad::Var total_D;
  LossReport report;
};

LossGraph assemble_losses(const ForwardBundle& bundle, const Model& model, const LossWeights& w);

}  // namespace carigen
