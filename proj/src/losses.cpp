#include "carigen/losses.hpp"

#include <cmath>
#include <sstream>

namespace carigen {

using namespace carigen::ad;

const std::vector<std::string>& ForwardBundle::schema() {
  static const std::vector<std::string> names = {
      "x_in",      "l_in",    "y_in",     "x_recon",    "s_enc",   "s_sampled",
      "x_stylized", "s_reenc", "c_enc",    "c_reenc",    "x_cycle", "zl_sampled",
      "delta_l",   "l_gen",   "x_warped", "zl_reenc",   "idlog_x", "idlog_l"};
  return names;
}

std::vector<std::string> ForwardBundle::keys() const { return schema(); }

const std::vector<std::string>& LossReport::term_names() {
  static const std::vector<std::string> names = {
      "rec_x",   "rec_s",   "rec_z_l", "cyc_c",   "cyc_x",   "gan_x_G", "gan_x_D", "gan_l_G",
      "gan_l_D", "gan_z_G", "gan_z_D", "id_x",    "id_l",    "total_G", "total_D"};
  return names;
}

double LossReport::term(const std::string& name) const {
  if (name == "rec_x") return rec_x;
  if (name == "rec_s") return rec_s;
  if (name == "rec_z_l") return rec_z_l;
  if (name == "cyc_c") return cyc_c;
  if (name == "cyc_x") return cyc_x;
  if (name == "gan_x_G") return gan_x_G;
  if (name == "gan_x_D") return gan_x_D;
  if (name == "gan_l_G") return gan_l_G;
  if (name == "gan_l_D") return gan_l_D;
  if (name == "gan_z_G") return gan_z_G;
  if (name == "gan_z_D") return gan_z_D;
  if (name == "id_x") return id_x;
  if (name == "id_l") return id_l;
  if (name == "total_G") return total_G;
  if (name == "total_D") return total_D;
  throw std::runtime_error("unknown loss term: " + name);
}

bool LossReport::all_finite() const {
  for (const auto& n : term_names())
    if (!std::isfinite(term(n))) return false;
  return true;
}

std::string LossReport::csv_header() const {
  std::ostringstream os;
  os << "step";
  for (const auto& n : term_names()) os << "," << n;
  return os.str();
}

std::string LossReport::csv_row(std::int64_t step) const {
  std::ostringstream os;
  os.precision(17);
  os << step;
  for (const auto& n : term_names()) os << "," << term(n);
  return os.str();
}

// ---- individual terms -------------------------------------------------------

double l1_reconstruction(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError("l1_reconstruction shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double acc = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.numel());
}

Var l1_reconstruction(const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError("l1_reconstruction shape mismatch " + a.value().shape_str() + " vs " +
                     b.value().shape_str());
  return mean_all(abs_(sub(a, b)));
}

double lsgan_generator(const std::vector<double>& fake_scores) {
  double acc = 0;
  for (double s : fake_scores) acc += (1.0 - s) * (1.0 - s);
  return acc;
}

Var lsgan_generator(const std::vector<Var>& fake_scores) {
  Var acc = Var::constant_scalar(0.0);
  for (const auto& s : fake_scores) acc = add(acc, square(add_scalar(neg(s), 1.0)));
  return acc;
}

double lsgan_discriminator(const std::vector<double>& real_scores,
                           const std::vector<double>& fake_scores) {
  double acc = 0;
  for (double s : real_scores) acc += (1.0 - s) * (1.0 - s);
  for (double s : fake_scores) acc += s * s;
  return acc;
}

Var lsgan_discriminator(const std::vector<Var>& real_scores, const std::vector<Var>& fake_scores) {
  Var acc = Var::constant_scalar(0.0);
  for (const auto& s : real_scores) acc = add(acc, square(add_scalar(neg(s), 1.0)));
  for (const auto& s : fake_scores) acc = add(acc, square(s));
  return acc;
}

double identity_nll(const Tensor& log_probs, int label) {
  if (log_probs.ndim() != 1) throw ShapeError("identity_nll expects a log-probability vector");
  if (label < 0 || label >= log_probs.dim(0))
    throw std::out_of_range("identity label " + std::to_string(label) + " out of range");
  return -log_probs[label];
}

Var identity_nll(const Var& log_probs, int label) {
  if (label < 0 || label >= log_probs.shape().at(0))
    throw std::out_of_range("identity label " + std::to_string(label) + " out of range");
  return neg(pick(log_probs, label));
}

// ---- totals ------------------------------------------------------------------

LossReport weight_totals(const TermSet& terms, const LossWeights& w) {
  LossReport r;
  auto get = [&](const char* name) {
    auto it = terms.values.find(name);
    if (it == terms.values.end()) {
      r.absent.push_back(name);
      return 0.0;
    }
    return it->second;
  };
  r.rec_x = get("rec_x");
  r.rec_s = get("rec_s");
  r.rec_z_l = get("rec_z_l");
  r.cyc_c = get("cyc_c");
  r.cyc_x = get("cyc_x");
  r.gan_x_G = get("gan_x_G");
  r.gan_x_D = get("gan_x_D");
  r.gan_l_G = get("gan_l_G");
  r.gan_l_D = get("gan_l_D");
  r.gan_z_G = get("gan_z_G");
  r.gan_z_D = get("gan_z_D");
  r.id_x = get("id_x");
  r.id_l = get("id_l");
  r.total_G = w.lambda1 * r.rec_x + w.lambda2 * (r.rec_s + r.rec_z_l + r.cyc_c + r.cyc_x) +
              w.lambda3 * r.id_x + w.lambda4 * r.id_l +
              w.lambda5 * (r.gan_x_G + r.gan_l_G + r.gan_z_G);
  r.total_D = w.lambda3 * r.id_x + w.lambda4 * r.id_l +
              w.lambda5 * (r.gan_x_D + r.gan_l_D + r.gan_z_D);
  return r;
}

// ---- assembly -----------------------------------------------------------------

namespace {

struct MissingEntry : std::runtime_error {
  explicit MissingEntry(const std::string& name)
      : std::runtime_error("forward bundle is missing entry: " + name) {}
};

const Var& need(const Var& v, const char* name) {
  if (!v.defined()) throw MissingEntry(name);
  return v;
}

}  // namespace

LossGraph assemble_losses(const ForwardBundle& b, const Model& model, const LossWeights& w) {
  const bool dual = b.has_direction[1];
  const int ip = dom_index(Domain::photo), ic = dom_index(Domain::caricature);
  const int p2c = dir_index(Direction::photo_to_cari), c2p = dir_index(Direction::cari_to_photo);

  std::map<std::string, Var> g_terms;  // attached graph, generator objective
  std::map<std::string, Var> d_terms;  // detached inputs, discriminator objective

  // reconstruction and cycle terms (generator only)
  {
    Var rec = l1_reconstruction(need(b.x_recon[ip], "x_recon"), need(b.x_in[ip], "x_in"));
    if (dual) rec = add(rec, l1_reconstruction(need(b.x_recon[ic], "x_recon"), b.x_in[ic]));
    g_terms["rec_x"] = rec;

    Var rec_s = l1_reconstruction(need(b.s_sampled[ic], "s_sampled"),
                                  need(b.s_reenc[p2c], "s_reenc"));
    if (dual) rec_s = add(rec_s, l1_reconstruction(b.s_sampled[ip], b.s_reenc[c2p]));
    g_terms["rec_s"] = rec_s;

    if (dual) {
      g_terms["rec_z_l"] =
          add(l1_reconstruction(need(b.zl_sampled[c2p], "zl_sampled"),
                                need(b.zl_reenc[c2p], "zl_reenc")),
              l1_reconstruction(b.zl_sampled[p2c], b.zl_reenc[p2c]));
      g_terms["cyc_c"] = add(l1_reconstruction(need(b.c_enc[ip], "c_enc"),
                                               need(b.c_reenc[p2c], "c_reenc")),
                             l1_reconstruction(b.c_enc[ic], b.c_reenc[c2p]));
      g_terms["cyc_x"] = add(l1_reconstruction(b.x_in[ip], need(b.x_cycle[ip], "x_cycle")),
                             l1_reconstruction(b.x_in[ic], b.x_cycle[ic]));
    }
  }

  // image realism
  {
    std::vector<Var> g_scores{model.score_image(need(b.x_warped[p2c], "x_warped"),
                                                Domain::caricature)};
    std::vector<Var> d_real{model.score_image(b.x_in[ic], Domain::caricature)};
    std::vector<Var> d_fake{model.score_image(stopgrad(b.x_warped[p2c]), Domain::caricature)};
    if (dual) {
      g_scores.push_back(model.score_image(b.x_warped[c2p], Domain::photo));
      d_real.push_back(model.score_image(b.x_in[ip], Domain::photo));
      d_fake.push_back(model.score_image(stopgrad(b.x_warped[c2p]), Domain::photo));
    }
    g_terms["gan_x_G"] = lsgan_generator(g_scores);
    d_terms["gan_x_D"] = lsgan_discriminator(d_real, d_fake);
  }

  // landmark realism
  {
    std::vector<Var> g_scores{model.score_landmarks(need(b.l_gen[p2c], "l_gen"),
                                                    Domain::caricature)};
    std::vector<Var> d_real{model.score_landmarks(b.l_in[ic], Domain::caricature)};
    std::vector<Var> d_fake{model.score_landmarks(stopgrad(b.l_gen[p2c]), Domain::caricature)};
    if (dual) {
      g_scores.push_back(model.score_landmarks(b.l_gen[c2p], Domain::photo));
      d_real.push_back(model.score_landmarks(b.l_in[ip], Domain::photo));
      d_fake.push_back(model.score_landmarks(stopgrad(b.l_gen[c2p]), Domain::photo));
    }
    g_terms["gan_l_G"] = lsgan_generator(g_scores);
    d_terms["gan_l_D"] = lsgan_discriminator(d_real, d_fake);
  }

  // latent Gaussianity; every encoder output of style or landmark-latent type
  // is matched against the Gaussian samples of its space
  {
    std::vector<Var> g_scores, d_real, d_fake;
    auto add_space = [&](Domain space, const std::vector<Var>& encoded, const Var& sampled) {
      d_real.push_back(model.score_latent_style(sampled, space));
      for (const auto& z : encoded) {
        g_scores.push_back(model.score_latent_style(z, space));
        d_fake.push_back(model.score_latent_style(stopgrad(z), space));
      }
    };
    if (dual) {
      add_space(Domain::photo, {need(b.s_enc[ip], "s_enc"), b.s_reenc[c2p]}, b.s_sampled[ip]);
      add_space(Domain::caricature, {b.s_enc[ic], b.s_reenc[p2c]}, b.s_sampled[ic]);
      for (Direction dir : {Direction::photo_to_cari, Direction::cari_to_photo}) {
        const int di = dir_index(dir);
        d_real.push_back(model.score_latent_geo(b.zl_sampled[di], dir));
        g_scores.push_back(model.score_latent_geo(b.zl_reenc[di], dir));
        d_fake.push_back(model.score_latent_geo(stopgrad(b.zl_reenc[di]), dir));
      }
    } else {
      // one style space; the photo-side encoder output chases the sampled code
      add_space(Domain::photo, {need(b.s_enc[ip], "s_enc"), b.s_reenc[p2c]}, b.s_sampled[ic]);
    }
    g_terms["gan_z_G"] = lsgan_generator(g_scores);
    d_terms["gan_z_D"] = lsgan_discriminator(d_real, d_fake);
  }

  // identity preservation: generated samples carry the source identity label.
  // The generator side reads the attached classifier outputs from the bundle;
  // the discriminator side re-runs the classifiers on detached inputs so the
  // two objectives share no graph nodes.
  {
    Var g_id_x = add(identity_nll(need(b.idlog_x[0], "idlog_x"), b.y_in[ip]),
                     identity_nll(need(b.idlog_x[2], "idlog_x"), b.y_in[ip]));
    g_id_x = add(g_id_x, identity_nll(need(b.idlog_x[1], "idlog_x"), b.y_in[ic]));
    Var d_id_x =
        add(identity_nll(model.identity_log_prob_image(stopgrad(b.x_in[ip])), b.y_in[ip]),
            identity_nll(model.identity_log_prob_image(stopgrad(b.x_warped[p2c])), b.y_in[ip]));
    d_id_x = add(d_id_x,
                 identity_nll(model.identity_log_prob_image(stopgrad(b.x_in[ic])), b.y_in[ic]));

    Var g_id_l = add(identity_nll(need(b.idlog_l[0], "idlog_l"), b.y_in[ip]),
                     identity_nll(need(b.idlog_l[2], "idlog_l"), b.y_in[ip]));
    g_id_l = add(g_id_l, identity_nll(need(b.idlog_l[1], "idlog_l"), b.y_in[ic]));
    Var d_id_l =
        add(identity_nll(model.identity_log_prob_landmarks(stopgrad(b.l_in[ip])), b.y_in[ip]),
            identity_nll(model.identity_log_prob_landmarks(stopgrad(b.l_gen[p2c])), b.y_in[ip]));
    d_id_l = add(d_id_l,
                 identity_nll(model.identity_log_prob_landmarks(stopgrad(b.l_in[ic])), b.y_in[ic]));

    if (dual) {
      g_id_x = add(g_id_x, identity_nll(b.idlog_x[3], b.y_in[ic]));
      d_id_x = add(d_id_x, identity_nll(model.identity_log_prob_image(stopgrad(b.x_warped[c2p])),
                                        b.y_in[ic]));
      g_id_l = add(g_id_l, identity_nll(b.idlog_l[3], b.y_in[ic]));
      d_id_l = add(d_id_l,
                   identity_nll(model.identity_log_prob_landmarks(stopgrad(b.l_gen[c2p])),
                                b.y_in[ic]));
    }
    g_terms["id_x"] = g_id_x;
    d_terms["id_x"] = d_id_x;
    g_terms["id_l"] = g_id_l;
    d_terms["id_l"] = d_id_l;
  }

  // weighted totals; identity terms enter both objectives
  auto weighted = [&](std::map<std::string, Var>& terms,
                      const std::map<std::string, double>& coef) {
    Var total = Var::constant_scalar(0.0);
    for (const auto& [name, lambda] : coef) {
      auto it = terms.find(name);
      if (it != terms.end() && lambda != 0.0) total = add(total, scale(it->second, lambda));
    }
    return total;
  };

  LossGraph out;
  out.total_G = weighted(g_terms, {{"rec_x", w.lambda1},
                                   {"rec_s", w.lambda2},
                                   {"rec_z_l", w.lambda2},
                                   {"cyc_c", w.lambda2},
                                   {"cyc_x", w.lambda2},
                                   {"id_x", w.lambda3},
                                   {"id_l", w.lambda4},
                                   {"gan_x_G", w.lambda5},
                                   {"gan_l_G", w.lambda5},
                                   {"gan_z_G", w.lambda5}});
  out.total_D = weighted(d_terms, {{"id_x", w.lambda3},
                                   {"id_l", w.lambda4},
                                   {"gan_x_D", w.lambda5},
                                   {"gan_l_D", w.lambda5},
                                   {"gan_z_D", w.lambda5}});

  TermSet set;
  for (const auto& [name, v] : g_terms) set.values[name] = v.item();
  for (const auto& [name, v] : d_terms) set.values[name] = v.item();
  out.report = weight_totals(set, w);
  return out;
}

}  // namespace carigen
