#include "carigen/evaluation.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "carigen/tps.hpp"
#include "carigen/training.hpp"

namespace carigen {

using namespace carigen::ad;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Embedder Embedder::proxy(int image_size, int dim, std::uint64_t seed) {
  Embedder e;
  e.image_size_ = image_size;
  e.dim_ = dim;
  e.id_ = "proxy-conv-d" + std::to_string(dim) + "-seed" + std::to_string(seed);
  Rng rng(seed);
  const int chans[4] = {3, std::max(4, dim / 4), std::max(8, dim / 2), dim};
  for (int i = 0; i < 3; ++i) {
    Tensor w({chans[i + 1], chans[i], 3, 3});
    const double s = std::sqrt(2.0 / (chans[i] * 9));
    for (std::int64_t j = 0; j < w.numel(); ++j) w[j] = rng.normal(0.0, s);
    e.conv_weights_.push_back(std::move(w));
  }
  return e;
}

Embedder Embedder::pretrained(const std::string& weights_path, int image_size) {
  if (!std::filesystem::exists(weights_path))
    throw EvalError("pretrained embedder weights not found: " + weights_path);
  std::ifstream in(weights_path, std::ios::binary);
  std::string magic;
  std::getline(in, magic);
  if (magic != "CARIGEN_EMBED1") throw EvalError(weights_path + ": not an embedder weights file");
  std::string len_line;
  std::getline(in, len_line);
  std::string mtext(std::stoul(len_line), '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  const auto manifest = nlohmann::json::parse(mtext);
  Embedder e;
  e.image_size_ = image_size;
  e.id_ = "pretrained:" + weights_path;
  for (const auto& entry : manifest.at("layers")) {
    Tensor w(entry.at("shape").get<std::vector<int>>());
    in.read(reinterpret_cast<char*>(w.data()),
            w.numel() * static_cast<std::int64_t>(sizeof(double)));
    if (!in) throw EvalError(weights_path + ": truncated weights");
    e.conv_weights_.push_back(std::move(w));
  }
  if (e.conv_weights_.empty()) throw EvalError(weights_path + ": no layers");
  e.dim_ = e.conv_weights_.back().dim(0);
  return e;
}

Embedder Embedder::from_config(const ExperimentConfig& cfg) {
  if (cfg.embedder == "proxy")
    return proxy(cfg.image_size, cfg.embed_dim, cfg.embedder_seed);
  const std::string prefix = "pretrained:";
  if (cfg.embedder.rfind(prefix, 0) == 0)
    return pretrained(cfg.embedder.substr(prefix.size()), cfg.image_size);
  throw EvalError("unknown embedder '" + cfg.embedder + "'");
}

Tensor Embedder::embed(const Tensor& image) const {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw EvalError("embedder expects a {3,H,W} image, got " + image.shape_str());
  Var h = Var::constant(image);
  for (const auto& w : conv_weights_)
    h = leaky_relu(conv2d(h, Var::constant(w), 2, 1), 0.1);
  Var pooled = mean_axes(h, {1, 2}, false);
  return pooled.value().reshaped({dim_});
}

std::vector<Tensor> Embedder::embed(const std::vector<Tensor>& images) const {
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(embed(img));
  return out;
}

FeatureStats fit_stats(const std::vector<Tensor>& features) {
  if (features.size() < 2) throw EvalError("fit_stats needs at least 2 samples");
  const int d = static_cast<int>(features[0].numel());
  const int n = static_cast<int>(features.size());
  FeatureStats st;
  st.n = n;
  st.mean = Tensor({d});
  for (const auto& f : features) {
    if (f.numel() != d) throw EvalError("fit_stats: inconsistent feature dimensions");
    for (int i = 0; i < d; ++i) st.mean[i] += f[i];
  }
  for (int i = 0; i < d; ++i) st.mean[i] /= n;
  st.covariance = Tensor({d, d});
  for (const auto& f : features)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        st.covariance[static_cast<std::int64_t>(i) * d + j] +=
            (f[i] - st.mean[i]) * (f[j] - st.mean[j]);
  for (std::int64_t i = 0; i < st.covariance.numel(); ++i) st.covariance[i] /= (n - 1);
  return st;
}

namespace {

/// PSD square root by symmetric eigendecomposition. Eigenvalues below
/// -tol * scale are an error; small negatives are clipped to zero.
MatRM psd_sqrt(const MatRM& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<MatRM> eig(0.5 * (m + m.transpose()));
  Eigen::VectorXd vals = eig.eigenvalues();
  const double scale = std::max(1.0, std::abs(vals.maxCoeff()));
  const double tol = 1e-8 * scale;
  for (int i = 0; i < vals.size(); ++i) {
    if (vals[i] < -tol)
      throw EvalError(std::string(what) + ": matrix is not PSD beyond tolerance (eigenvalue " +
                      std::to_string(vals[i]) + ")");
    vals[i] = std::sqrt(std::max(0.0, vals[i]));
  }
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  const int d = static_cast<int>(a.mean.numel());
  if (b.mean.numel() != d) throw EvalError("frechet_distance: dimension mismatch");
  double mean_term = 0;
  for (int i = 0; i < d; ++i) {
    const double diff = a.mean[i] - b.mean[i];
    mean_term += diff * diff;
  }
  Eigen::Map<const MatRM> sa(a.covariance.data(), d, d), sb(b.covariance.data(), d, d);
  const MatRM ra = psd_sqrt(sa, "covariance A");
  const MatRM inner = ra * sb * ra;  // symmetric PSD form of (Sa Sb)^{1/2}
  const MatRM rs = psd_sqrt(inner, "product covariance");
  const double fid = mean_term + sa.trace() + sb.trace() - 2.0 * rs.trace();
  return fid;
}

DiversityReport diversity_probe(const Model& model, const std::vector<PreprocessedSample>& inputs,
                                int k_codes, double tps_reg, Rng& rng) {
  DiversityReport rep;
  rep.k = k_codes;
  rep.n_inputs = static_cast<int>(inputs.size());
  if (k_codes < 1) throw EvalError("diversity_probe needs k >= 1");
  if (inputs.empty()) return rep;

  auto mean_pairwise = [](const std::vector<Tensor>& xs) {
    if (xs.size() < 2) return 0.0;
    double acc = 0;
    int count = 0;
    for (size_t i = 0; i < xs.size(); ++i)
      for (size_t j = i + 1; j < xs.size(); ++j) {
        double l1 = 0;
        for (std::int64_t e = 0; e < xs[i].numel(); ++e) l1 += std::abs(xs[i][e] - xs[j][e]);
        acc += l1 / static_cast<double>(xs[i].numel());
        ++count;
      }
    return acc / count;
  };

  double dl_zl = 0, img_zs = 0, dl_zs = 0, img_zl = 0;
  for (const auto& sample : inputs) {
    Var x = Var::constant(sample.image);
    Var l = Var::constant(sample.landmarks.to_tensor());
    Var content = model.encode_content(x, Domain::photo);

    std::vector<Var> zl, zs;
    for (int i = 0; i < k_codes; ++i) zl.push_back(sample_gaussian(rng, model.cfg.landmark_latent_dim));
    for (int i = 0; i < k_codes; ++i) zs.push_back(sample_gaussian(rng, model.cfg.style_dim));

    // (i) displacements across landmark codes (style plays no role)
    std::vector<Tensor> dls;
    for (int i = 0; i < k_codes; ++i)
      dls.push_back(
          model.generate_displacement(content, zl[i], Direction::photo_to_cari).value());
    dl_zl += mean_pairwise(dls);

    // cross: displacements recomputed per style code, landmark code fixed
    std::vector<Tensor> dls_style;
    for (int i = 0; i < k_codes; ++i) {
      (void)model.decode(content, zs[i], Domain::caricature);  // style path exercised
      dls_style.push_back(
          model.generate_displacement(content, zl[0], Direction::photo_to_cari).value());
    }
    dl_zs += mean_pairwise(dls_style);

    // (ii) final images across style codes, landmark code fixed
    Var lgen0 = ad::add(l, Var::constant(dls[0]));
    std::vector<Tensor> imgs_style;
    for (int i = 0; i < k_codes; ++i) {
      Var stylized = model.decode(content, zs[i], Domain::caricature);
      imgs_style.push_back(warp_image(stylized, l, lgen0, tps_reg).value());
    }
    img_zs += mean_pairwise(imgs_style);

    // cross: final images across landmark codes, style fixed
    Var stylized0 = model.decode(content, zs[0], Domain::caricature);
    std::vector<Tensor> imgs_zl;
    for (int i = 0; i < k_codes; ++i) {
      Var lgen = ad::add(l, Var::constant(dls[static_cast<size_t>(i)]));
      imgs_zl.push_back(warp_image(stylized0, l, lgen, tps_reg).value());
    }
    img_zl += mean_pairwise(imgs_zl);
  }
  const double n = static_cast<double>(inputs.size());
  rep.dl_across_landmark_codes = dl_zl / n;
  rep.img_across_style_codes = img_zs / n;
  rep.dl_across_style_codes = dl_zs / n;
  rep.img_across_landmark_codes = img_zl / n;
  return rep;
}

std::string fid_report_json(const FidReport& fid, const DiversityReport* diversity) {
  nlohmann::ordered_json j;
  j["embedder"] = fid.embedder_id;
  j["n_real"] = fid.n_real;
  j["n_generated"] = fid.n_generated;
  j["fid"] = fid.fid;
  if (diversity) {
    nlohmann::ordered_json d;
    d["k"] = diversity->k;
    d["n_inputs"] = diversity->n_inputs;
    d["dl_across_landmark_codes"] = diversity->dl_across_landmark_codes;
    d["img_across_style_codes"] = diversity->img_across_style_codes;
    d["dl_across_style_codes"] = diversity->dl_across_style_codes;
    d["img_across_landmark_codes"] = diversity->img_across_landmark_codes;
    j["diversity"] = std::move(d);
  }
  return j.dump(2);
}

}  // namespace carigen
