#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "carigen/evaluation.hpp"
#include "carigen/toyface.hpp"
#include "carigen/training.hpp"
#include "testutil.hpp"

using namespace carigen;

namespace {

std::vector<Tensor> gaussian_features(Rng& rng, int n, const std::vector<double>& mean,
                                      const std::vector<double>& stddev) {
  std::vector<Tensor> out;
  const int d = static_cast<int>(mean.size());
  for (int i = 0; i < n; ++i) {
    Tensor f({d});
    for (int j = 0; j < d; ++j) f[j] = mean[static_cast<size_t>(j)] +
                                       stddev[static_cast<size_t>(j)] * rng.normal();
    out.push_back(std::move(f));
  }
  return out;
}

FeatureStats stats_from(const Tensor& mean, const Tensor& cov, int n = 100) {
  FeatureStats s;
  s.mean = mean;
  s.covariance = cov;
  s.n = n;
  return s;
}

}  // namespace

TEST_CASE("proxy embedder: dimension, determinism across instances") {
  const Embedder e1 = Embedder::proxy(32, 16, 99);
  const Embedder e2 = Embedder::proxy(32, 16, 99);
  Rng rng(1);
  Tensor img({3, 32, 32});
  for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform(-1, 1);
  const Tensor f1 = e1.embed(img);
  CHECK(f1.shape() == std::vector<int>{16});
  CHECK(carigen::testutil::max_abs_diff(f1, e1.embed(img)) == 0.0);
  CHECK(carigen::testutil::max_abs_diff(f1, e2.embed(img)) == 0.0);
  const Embedder other = Embedder::proxy(32, 16, 100);
  CHECK(carigen::testutil::max_abs_diff(f1, other.embed(img)) > 0.0);
}

TEST_CASE("pretrained embedder requires its weights file") {
  CHECK_THROWS_AS(Embedder::pretrained("/nonexistent/weights.bin", 32), EvalError);
  ExperimentConfig cfg;
  cfg.embedder = "pretrained:/nonexistent/weights.bin";
  CHECK_THROWS_AS(Embedder::from_config(cfg), EvalError);
  cfg.embedder = "banana";
  CHECK_THROWS_AS(Embedder::from_config(cfg), EvalError);
}

TEST_CASE("fit_stats: identical vectors, two-point case, sampling oracle") {
  Tensor v({3}, {1.0, -2.0, 0.5});
  const FeatureStats same = fit_stats({v, v});
  CHECK(carigen::testutil::max_abs_diff(same.mean, v) == 0.0);
  for (std::int64_t i = 0; i < same.covariance.numel(); ++i) CHECK(same.covariance[i] == 0.0);

  const FeatureStats two = fit_stats({Tensor({2}, {0.0, 0.0}), Tensor({2}, {2.0, 0.0})});
  CHECK(two.mean[0] == 1.0);
  CHECK(two.mean[1] == 0.0);
  CHECK(two.covariance.at({0, 0}) == 2.0);  // unbiased: ((1)^2 + (1)^2) / 1
  CHECK(two.covariance.at({0, 1}) == 0.0);
  CHECK(two.covariance.at({1, 1}) == 0.0);

  CHECK_THROWS_AS(fit_stats({v}), EvalError);

  Rng rng(7);
  const std::vector<double> mean{1.0, -3.0, 0.0}, stddev{0.5, 2.0, 1.0};
  const auto feats = gaussian_features(rng, 1000, mean, stddev);
  const FeatureStats st = fit_stats(feats);
  for (int j = 0; j < 3; ++j) {
    const double se_mean = stddev[static_cast<size_t>(j)] / std::sqrt(1000.0);
    CHECK(std::abs(st.mean[j] - mean[static_cast<size_t>(j)]) < 3 * se_mean);
    const double var = stddev[static_cast<size_t>(j)] * stddev[static_cast<size_t>(j)];
    const double se_var = var * std::sqrt(2.0 / 999.0);
    CHECK(std::abs(st.covariance.at({j, j}) - var) < 3 * se_var);
  }
}

TEST_CASE("frechet distance: self, mean shift, diagonal closed form, symmetry") {
  Rng rng(8);
  const auto feats = gaussian_features(rng, 200, {0, 0, 0, 0}, {1, 2, 0.5, 1.5});
  const FeatureStats a = fit_stats(feats);
  CHECK(std::abs(frechet_distance(a, a)) < 1e-6);

  // equal covariances, shifted mean
  FeatureStats b = a;
  Tensor shift({4}, {0.3, -0.7, 0.2, 0.0});
  for (int i = 0; i < 4; ++i) b.mean[i] += shift[i];
  double m2 = 0;
  for (int i = 0; i < 4; ++i) m2 += shift[i] * shift[i];
  CHECK(frechet_distance(a, b) == doctest::Approx(m2).epsilon(1e-9));

  // diagonal covariances: closed form per dimension
  Tensor mu_a({3}, {0.0, 1.0, -1.0}), mu_b({3}, {0.5, 0.0, -1.0});
  Tensor cov_a({3, 3}), cov_b({3, 3});
  const double da[3] = {0.5, 2.0, 1.0}, db[3] = {1.5, 0.25, 3.0};
  for (int i = 0; i < 3; ++i) {
    cov_a.at({i, i}) = da[i];
    cov_b.at({i, i}) = db[i];
  }
  double expect = 0;
  for (int i = 0; i < 3; ++i) {
    const double diff_m = mu_a[i] - mu_b[i];
    const double s = std::sqrt(da[i]) - std::sqrt(db[i]);
    expect += diff_m * diff_m + s * s;
  }
  const double got = frechet_distance(stats_from(mu_a, cov_a), stats_from(mu_b, cov_b));
  CHECK(std::abs(got - expect) < 1e-3);

  const double forward = frechet_distance(a, b);
  const double backward = frechet_distance(b, a);
  CHECK(std::abs(forward - backward) < 1e-6);
  CHECK(forward >= 0.0);

  Tensor bad_cov({2, 2}, {1.0, 0.0, 0.0, -1.0});
  CHECK_THROWS_AS(
      frechet_distance(stats_from(Tensor({2}), bad_cov), stats_from(Tensor({2}), bad_cov)),
      EvalError);
  CHECK_THROWS_AS(frechet_distance(stats_from(Tensor({2}), Tensor({2, 2})),
                                   stats_from(Tensor({3}), Tensor({3, 3}))),
                  EvalError);
}

TEST_CASE("diversity probe: zero-geo model, degenerate k, structural zeros") {
  ExperimentConfig cfg = ExperimentConfig::toy_defaults();
  cfg.content_channels = 8;
  cfg.style_dim = 4;
  cfg.landmark_latent_dim = 8;
  cfg.disc_blocks = 3;
  cfg.disc_base_channels = 4;
  cfg.n_identities = 2;
  cfg.seed = 21;
  Rng init(cfg.seed);
  const Model model(cfg.net_config(), init);

  const auto pairs = synth_toy_dataset(2, 2, 32, 5);
  std::vector<PreprocessedSample> photos;
  for (const auto& p : pairs) photos.push_back(p.photo);

  Rng rng(6);
  const DiversityReport rep = diversity_probe(model, photos, 3, 1e-4, rng);
  CHECK(rep.k == 3);
  CHECK(rep.n_inputs == 4);
  // untrained zero-initialized geometric head: no displacement diversity at all
  CHECK(rep.dl_across_landmark_codes == 0.0);
  // displacements never depend on the style code
  CHECK(rep.dl_across_style_codes == 0.0);
  // the style code does change the image
  CHECK(rep.img_across_style_codes > 0.0);

  Rng rng2(6);
  const DiversityReport degenerate = diversity_probe(model, photos, 1, 1e-4, rng2);
  CHECK(degenerate.dl_across_landmark_codes == 0.0);
  CHECK(degenerate.img_across_style_codes == 0.0);
  CHECK(degenerate.img_across_landmark_codes == 0.0);
}

TEST_CASE("report serialization carries the embedder id and counts") {
  FidReport fr;
  fr.embedder_id = "proxy-conv-d16-seed99";
  fr.n_real = 10;
  fr.n_generated = 20;
  fr.fid = 1.25;
  DiversityReport dr;
  dr.k = 3;
  const std::string j = fid_report_json(fr, &dr);
  CHECK(j.find("proxy-conv-d16-seed99") != std::string::npos);
  CHECK(j.find("\"n_real\": 10") != std::string::npos);
  CHECK(j.find("\"diversity\"") != std::string::npos);
}
