#pragma once

#include <string>
#include <vector>

#include "carigen/config.hpp"
#include "carigen/networks.hpp"
#include "carigen/rng.hpp"

namespace carigen {

struct EvalError : std::runtime_error {
  explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

struct FeatureStats {
  Tensor mean;        // {d}
  Tensor covariance;  // {d,d}, unbiased
  int n = 0;
};

/// Image embedder for FID. "proxy" builds a fixed seeded random convolutional
/// feature extractor (desk-scale stand-in; absolute values are never
/// comparable across embedders). "pretrained:<path>" loads serialized conv
/// weights from a blob file and errors when the file is missing.
class Embedder {
 public:
  static Embedder proxy(int image_size, int dim, std::uint64_t seed);
  static Embedder pretrained(const std::string& weights_path, int image_size);
  static Embedder from_config(const ExperimentConfig& cfg);

  Tensor embed(const Tensor& image) const;
  std::vector<Tensor> embed(const std::vector<Tensor>& images) const;
  int dim() const { return dim_; }
  const std::string& id() const { return id_; }

 private:
  std::vector<Tensor> conv_weights_;  // {co,ci,k,k} per layer, stride 2
  int dim_ = 0;
  int image_size_ = 0;
  std::string id_;
};

FeatureStats fit_stats(const std::vector<Tensor>& features);

/// Frechet distance between Gaussian fits:
/// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), matrix square roots by
/// symmetric eigendecomposition, eigenvalues below -1e-8 (scaled) rejected,
/// small negatives clipped to zero.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

struct DiversityReport {
  int k = 0;
  int n_inputs = 0;
  double dl_across_landmark_codes = 0;   // (i) mean pairwise l1 of delta-l, style fixed
  double img_across_style_codes = 0;     // (ii) mean pairwise l1 of images, landmark code fixed
  double dl_across_style_codes = 0;      // cross term, structurally zero
  double img_across_landmark_codes = 0;  // cross term
};

/// Samples k style and k landmark codes per input and measures how each code
/// axis moves the displacement field and the final image.
DiversityReport diversity_probe(const Model& model, const std::vector<PreprocessedSample>& inputs,
                                int k_codes, double tps_reg, Rng& rng);

struct FidReport {
  std::string embedder_id;
  int n_real = 0, n_generated = 0;
  double fid = 0;
};

std::string fid_report_json(const FidReport& fid, const DiversityReport* diversity);

}  // namespace carigen
