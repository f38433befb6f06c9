#pragma once

#include <optional>
#include <string>
#include <vector>

#include "carigen/data.hpp"
#include "carigen/nn.hpp"

namespace carigen {

struct ModelError : std::runtime_error {
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

enum class Direction { photo_to_cari = 0, cari_to_photo = 1 };

inline int dir_index(Direction d) { return static_cast<int>(d); }
inline int dom_index(Domain d) { return static_cast<int>(d); }
inline Domain target_domain(Direction d) {
  return d == Direction::photo_to_cari ? Domain::caricature : Domain::photo;
}
inline Domain source_domain(Direction d) {
  return d == Direction::photo_to_cari ? Domain::photo : Domain::caricature;
}

/// Network-shape slice of the experiment configuration.
struct NetConfig {
  int image_size = 32;
  int content_channels = 64;      // channels of the content code (spatial /4)
  int style_dim = 8;
  int landmark_latent_dim = 32;
  int n_identities = 8;
  int disc_blocks = 4;            // 6 at full scale
  int disc_base_channels = 16;
  double displacement_clamp = 0.35;  // <= 0 disables the scaled-tanh clamp
  bool single_way = false;
};

struct ContentEncoder {
  nn::Conv2d c1, c2, c3;
  nn::InstanceNorm2d n1, n2, n3;
  nn::ResBlockIN r1, r2, r3;
  ContentEncoder() = default;
  ContentEncoder(nn::ParamStore& ps, Rng& rng, const std::string& prefix, int cc);
  ad::Var operator()(const ad::Var& image) const;
};

struct StyleEncoder {
  nn::Conv2d c1, c2, c3;
  nn::Linear head;
  StyleEncoder() = default;
  StyleEncoder(nn::ParamStore& ps, Rng& rng, const std::string& prefix, int cc, int style_dim);
  ad::Var operator()(const ad::Var& image) const;
};

struct Decoder {
  nn::Mlp adain_mlp;  // style code -> per-layer (scale, shift) pairs
  nn::AdaResBlock b1, b2, b3;
  nn::Conv2d up1, up2, out_conv;
  int cc = 0;
  Decoder() = default;
  Decoder(nn::ParamStore& ps, Rng& rng, const std::string& prefix, int cc, int style_dim);
  ad::Var operator()(const ad::Var& content, const ad::Var& style) const;
};

/// Landmark displacement generator: pooled content branch and latent branch,
/// each projected to 32-d, concatenated and mapped linearly to 17x2. The
/// final layer starts at zero so training begins at the identity warp.
struct GeoGenerator {
  nn::Conv2d conv1, conv2, conv3;
  nn::Linear content_fc, latent_fc, out_fc;
  int flat_dim = 0;
  double clamp = 0.35;
  GeoGenerator() = default;
  GeoGenerator(nn::ParamStore& ps, Rng& rng, const std::string& prefix, int cc, int content_hw,
               int latent_dim, double clamp);
  ad::Var operator()(const ad::Var& content, const ad::Var& z) const;  // -> {17,2}
};

/// Landmark-pair encoder: (transformed, source) -> latent code.
struct GeoEncoder {
  nn::Mlp mlp;
  GeoEncoder() = default;
  GeoEncoder(nn::ParamStore& ps, Rng& rng, const std::string& prefix, int latent_dim);
  ad::Var operator()(const ad::Var& l_transformed, const ad::Var& l_source) const;
};

struct ImageDiscriminator {
  std::vector<nn::Conv2d> blocks;
  nn::Linear head;
  int flat_dim = 0;
  ImageDiscriminator() = default;
  ImageDiscriminator(nn::ParamStore& ps, Rng& rng, const std::string& prefix, int image_size,
                     int n_blocks, int base_channels, int out_dim);
  ad::Var features(const ad::Var& image) const;  // flattened conv features
  ad::Var operator()(const ad::Var& image) const;  // scalar (out_dim 1) or logits
};

struct MlpDiscriminator {
  nn::Mlp mlp;
  MlpDiscriminator() = default;
  MlpDiscriminator(nn::ParamStore& ps, Rng& rng, const std::string& prefix, int in_dim);
  ad::Var operator()(const ad::Var& v) const;  // -> scalar
};

/// Every network of the artifact. The single-way variant instantiates only
/// the photo-to-caricature path (no caricature-side autoencoder, no landmark
/// latent encoders), mirroring the degraded baseline.
struct Model {
  NetConfig cfg;
  nn::ParamStore params;

  std::optional<ContentEncoder> enc_content[2];  // by source domain
  std::optional<StyleEncoder> enc_style[2];
  std::optional<Decoder> dec[2];                 // by output domain
  std::optional<GeoGenerator> geo_gen[2];        // by direction
  std::optional<GeoEncoder> geo_enc[2];          // by direction (p->c encoder lives on the caricature side)
  std::optional<ImageDiscriminator> disc_image[2];     // by domain
  std::optional<MlpDiscriminator> disc_landmarks[2];   // by domain
  std::optional<MlpDiscriminator> disc_latent_style[2];  // by domain of the style space
  std::optional<MlpDiscriminator> disc_latent_geo[2];    // by direction
  std::optional<ImageDiscriminator> id_image;          // identity classifier (softmax head)
  std::optional<nn::Mlp> id_landmarks;

  Model(const NetConfig& cfg, Rng& init_rng);

  // style network
  ad::Var encode_content(const ad::Var& x, Domain d) const;
  ad::Var encode_style(const ad::Var& x, Domain d) const;
  ad::Var decode(const ad::Var& content, const ad::Var& style, Domain d) const;
  ad::Var translate(const ad::Var& x, Domain from, Domain to, const ad::Var& style) const;

  // geometric network
  ad::Var generate_displacement(const ad::Var& content, const ad::Var& z, Direction dir) const;
  ad::Var encode_landmark_latent(const ad::Var& l_transformed, const ad::Var& l_source,
                                 Direction dir) const;

  // adversaries
  ad::Var score_image(const ad::Var& x, Domain d) const;
  ad::Var score_landmarks(const ad::Var& l, Domain d) const;
  ad::Var score_latent_style(const ad::Var& z, Domain style_space) const;
  ad::Var score_latent_geo(const ad::Var& z, Direction dir) const;
  ad::Var identity_log_prob_image(const ad::Var& x) const;
  ad::Var identity_log_prob_landmarks(const ad::Var& l) const;

  /// Parameter partition for the two optimizers. Discriminator names start
  /// with "disc." or "id."; everything else belongs to encoders/generators.
  static bool is_discriminator_param(const std::string& name);
  std::vector<std::pair<std::string, ad::Var>> generator_params() const;
  std::vector<std::pair<std::string, ad::Var>> discriminator_params() const;

  void check_image_shape(const ad::Var& x) const;
};

}  // namespace carigen
