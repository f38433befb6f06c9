#include "carigen/networks.hpp"

#include <cmath>

namespace carigen {

using namespace carigen::ad;
using nn::ParamStore;

namespace {
constexpr double kGeoAlpha = 0.01;  // leaky slope in the geometric nets
constexpr double kDiscAlpha = 0.2;  // leaky slope in discriminators
}  // namespace

ContentEncoder::ContentEncoder(ParamStore& ps, Rng& rng, const std::string& p, int cc)
    : c1(ps, rng, p + ".conv1", 3, cc / 4, 7, 1, 3),
      c2(ps, rng, p + ".conv2", cc / 4, cc / 2, 4, 2, 1),
      c3(ps, rng, p + ".conv3", cc / 2, cc, 4, 2, 1),
      n1(ps, p + ".norm1", cc / 4),
      n2(ps, p + ".norm2", cc / 2),
      n3(ps, p + ".norm3", cc),
      r1(ps, rng, p + ".res1", cc),
      r2(ps, rng, p + ".res2", cc),
      r3(ps, rng, p + ".res3", cc) {}

Var ContentEncoder::operator()(const Var& image) const {
  Var h = relu(n1(c1(image)));
  h = relu(n2(c2(h)));
  h = relu(n3(c3(h)));
  return r3(r2(r1(h)));
}

StyleEncoder::StyleEncoder(ParamStore& ps, Rng& rng, const std::string& p, int cc, int style_dim)
    : c1(ps, rng, p + ".conv1", 3, cc / 4, 7, 1, 3),
      c2(ps, rng, p + ".conv2", cc / 4, cc / 2, 4, 2, 1),
      c3(ps, rng, p + ".conv3", cc / 2, cc, 4, 2, 1),
      head(ps, rng, p + ".head", cc, style_dim) {}

Var StyleEncoder::operator()(const Var& image) const {
  // no normalization here: the spatial statistics are the style signal
  Var h = relu(c1(image));
  h = relu(c2(h));
  h = relu(c3(h));
  const int cc = h.shape()[0];
  Var pooled = reshape(mean_axes(h, {1, 2}, false), {cc});
  return head(pooled);
}

Decoder::Decoder(ParamStore& ps, Rng& rng, const std::string& p, int cc_, int style_dim)
    : adain_mlp(ps, rng, p + ".adain_mlp", {style_dim, 128, 128, 12 * cc_}, 0.0),
      b1(ps, rng, p + ".ada1", cc_),
      b2(ps, rng, p + ".ada2", cc_),
      b3(ps, rng, p + ".ada3", cc_),
      up1(ps, rng, p + ".up1", cc_, cc_ / 2, 3, 1, 1),
      up2(ps, rng, p + ".up2", cc_ / 2, cc_ / 4, 3, 1, 1),
      out_conv(ps, rng, p + ".out", cc_ / 4, 3, 7, 1, 3),
      cc(cc_) {}

Var Decoder::operator()(const Var& content, const Var& style) const {
  // one (scale, shift) pair per adaptive normalization, 6 layers in 3 blocks
  Var ada = adain_mlp(style);
  auto piece = [&](int i) { return slice(ada, 0, i * cc, cc); };
  Var h = b1(content, piece(0), piece(1), piece(2), piece(3));
  h = b2(h, piece(4), piece(5), piece(6), piece(7));
  h = b3(h, piece(8), piece(9), piece(10), piece(11));
  h = relu(up1(upsample_nearest2(h)));
  h = relu(up2(upsample_nearest2(h)));
  return tanh_(out_conv(h));
}

GeoGenerator::GeoGenerator(ParamStore& ps, Rng& rng, const std::string& p, int cc, int content_hw,
                           int latent_dim, double clamp_)
    : conv1(ps, rng, p + ".conv1", cc, cc, 3, 1, 1),
      conv2(ps, rng, p + ".conv2", cc, cc, 3, 1, 1),
      conv3(ps, rng, p + ".conv3", cc, cc, 3, 1, 1),
      clamp(clamp_) {
  int hw = pool_out_size(content_hw, 3, 2);
  for (int i = 0; i < 3; ++i) hw = pool_out_size(hw, 3, 2);
  flat_dim = cc * hw * hw;
  content_fc = nn::Linear(ps, rng, p + ".content_fc", flat_dim, 32);
  latent_fc = nn::Linear(ps, rng, p + ".latent_fc", latent_dim, 32);
  out_fc = nn::Linear(ps, rng, p + ".out_fc", 64, 34, /*zero_init=*/true);
}

Var GeoGenerator::operator()(const Var& content, const Var& z) const {
  Var h = max_pool2d(content, 3, 2);
  h = max_pool2d(leaky_relu(conv1(h), kGeoAlpha), 3, 2);
  h = max_pool2d(leaky_relu(conv2(h), kGeoAlpha), 3, 2);
  h = max_pool2d(leaky_relu(conv3(h), kGeoAlpha), 3, 2);
  Var c = leaky_relu(content_fc(reshape(h, {flat_dim})), kGeoAlpha);
  Var l = leaky_relu(latent_fc(z), kGeoAlpha);
  Var raw = out_fc(concat({c, l}, 0));
  if (clamp > 0) raw = scale(tanh_(scale(raw, 1.0 / clamp)), clamp);
  return reshape(raw, {LandmarkSet::kCount, 2});
}

GeoEncoder::GeoEncoder(ParamStore& ps, Rng& rng, const std::string& p, int latent_dim)
    : mlp(ps, rng, p, {68, 128, 128, 64, latent_dim}, kGeoAlpha) {}

Var GeoEncoder::operator()(const Var& l_transformed, const Var& l_source) const {
  Var flat = concat({reshape(l_transformed, {34}), reshape(l_source, {34})}, 0);
  return mlp(flat);
}

ImageDiscriminator::ImageDiscriminator(ParamStore& ps, Rng& rng, const std::string& p,
                                       int image_size, int n_blocks, int base_channels,
                                       int out_dim) {
  int ch_in = 3, size = image_size;
  for (int i = 0; i < n_blocks; ++i) {
    const int ch_out = std::min(base_channels << i, 512);
    blocks.emplace_back(ps, rng, p + ".conv" + std::to_string(i), ch_in, ch_out, 4, 2, 1);
    ch_in = ch_out;
    size = conv_out_size(size, 4, 2, 1);
    if (size < 1) throw ModelError("image discriminator: too many blocks for image size");
  }
  flat_dim = ch_in * size * size;
  head = nn::Linear(ps, rng, p + ".head", flat_dim, out_dim);
}

Var ImageDiscriminator::features(const Var& image) const {
  Var h = image;
  for (const auto& b : blocks) h = leaky_relu(b(h), kDiscAlpha);
  return reshape(h, {flat_dim});
}

Var ImageDiscriminator::operator()(const Var& image) const { return head(features(image)); }

MlpDiscriminator::MlpDiscriminator(ParamStore& ps, Rng& rng, const std::string& p, int in_dim)
    : mlp(ps, rng, p, {in_dim, 128, 128, 64, 64, 32, 1}, kDiscAlpha) {}

Var MlpDiscriminator::operator()(const Var& v) const { return reshape(mlp(v), {}); }

Model::Model(const NetConfig& c, Rng& rng) : cfg(c) {
  if (cfg.image_size % 4 != 0) throw ModelError("image_size must be divisible by 4");
  if (cfg.content_channels % 4 != 0) throw ModelError("content_channels must be divisible by 4");
  const int cc = cfg.content_channels;
  const int content_hw = cfg.image_size / 4;

  enc_content[0].emplace(params, rng, "style.enc_content.photo", cc);
  enc_style[0].emplace(params, rng, "style.enc_style.photo", cc, cfg.style_dim);
  dec[1].emplace(params, rng, "style.dec.caricature", cc, cfg.style_dim);
  geo_gen[0].emplace(params, rng, "geo.gen.p2c", cc, content_hw, cfg.landmark_latent_dim,
                     cfg.displacement_clamp);
  disc_image[1].emplace(params, rng, "disc.image.caricature", cfg.image_size, cfg.disc_blocks,
                        cfg.disc_base_channels, 1);
  disc_landmarks[1].emplace(params, rng, "disc.landmarks.caricature", 34);
  disc_latent_style[0].emplace(params, rng, "disc.latent_style.photo", cfg.style_dim);
  if (!cfg.single_way) {
    enc_content[1].emplace(params, rng, "style.enc_content.caricature", cc);
    enc_style[1].emplace(params, rng, "style.enc_style.caricature", cc, cfg.style_dim);
    dec[0].emplace(params, rng, "style.dec.photo", cc, cfg.style_dim);
    geo_gen[1].emplace(params, rng, "geo.gen.c2p", cc, content_hw, cfg.landmark_latent_dim,
                       cfg.displacement_clamp);
    geo_enc[0].emplace(params, rng, "geo.enc.p2c", cfg.landmark_latent_dim);
    geo_enc[1].emplace(params, rng, "geo.enc.c2p", cfg.landmark_latent_dim);
    disc_image[0].emplace(params, rng, "disc.image.photo", cfg.image_size, cfg.disc_blocks,
                          cfg.disc_base_channels, 1);
    disc_landmarks[0].emplace(params, rng, "disc.landmarks.photo", 34);
    disc_latent_style[1].emplace(params, rng, "disc.latent_style.caricature", cfg.style_dim);
    disc_latent_geo[0].emplace(params, rng, "disc.latent_geo.p2c", cfg.landmark_latent_dim);
    disc_latent_geo[1].emplace(params, rng, "disc.latent_geo.c2p", cfg.landmark_latent_dim);
  }
  id_image.emplace(params, rng, "id.image", cfg.image_size, cfg.disc_blocks,
                   cfg.disc_base_channels, cfg.n_identities);
  id_landmarks.emplace(params, rng, "id.landmarks", std::vector<int>{34, 128, 128, 64,
                       cfg.n_identities}, kDiscAlpha);
}

void Model::check_image_shape(const Var& x) const {
  if (x.shape() != std::vector<int>{3, cfg.image_size, cfg.image_size})
    throw ModelError("expected a {3," + std::to_string(cfg.image_size) + "," +
                     std::to_string(cfg.image_size) + "} image, got " +
                     Tensor::shape_str(x.shape()));
}

namespace {
template <typename T>
const T& require(const std::optional<T>& net, const char* what) {
  if (!net) throw ModelError(std::string(what) + " is not part of this model variant");
  return *net;
}
}  // namespace

Var Model::encode_content(const Var& x, Domain d) const {
  check_image_shape(x);
  return require(enc_content[dom_index(d)], "content encoder")(x);
}

Var Model::encode_style(const Var& x, Domain d) const {
  check_image_shape(x);
  return require(enc_style[dom_index(d)], "style encoder")(x);
}

Var Model::decode(const Var& content, const Var& style, Domain d) const {
  const std::vector<int> want{cfg.content_channels, cfg.image_size / 4, cfg.image_size / 4};
  if (content.shape() != want)
    throw ModelError("decode: content code shape " + Tensor::shape_str(content.shape()) +
                     ", expected " + Tensor::shape_str(want));
  if (style.shape() != std::vector<int>{cfg.style_dim})
    throw ModelError("decode: style code must have dimension " + std::to_string(cfg.style_dim));
  return require(dec[dom_index(d)], "decoder")(content, style);
}

Var Model::translate(const Var& x, Domain from, Domain to, const Var& style) const {
  if (from == to) throw ModelError("translate requires two different domains");
  return decode(encode_content(x, from), style, to);
}

Var Model::generate_displacement(const Var& content, const Var& z, Direction dir) const {
  if (z.shape() != std::vector<int>{cfg.landmark_latent_dim})
    throw ModelError("landmark latent code must have dimension " +
                     std::to_string(cfg.landmark_latent_dim));
  return require(geo_gen[dir_index(dir)], "landmark generator")(content, z);
}

Var Model::encode_landmark_latent(const Var& l_transformed, const Var& l_source,
                                  Direction dir) const {
  if (l_transformed.shape() != std::vector<int>{17, 2} ||
      l_source.shape() != std::vector<int>{17, 2})
    throw ModelError("landmark latent encoder expects {17,2} landmark tensors");
  return require(geo_enc[dir_index(dir)], "landmark latent encoder")(l_transformed, l_source);
}

Var Model::score_image(const Var& x, Domain d) const {
  check_image_shape(x);
  return reshape(require(disc_image[dom_index(d)], "image discriminator")(x), {});
}

Var Model::score_landmarks(const Var& l, Domain d) const {
  if (l.shape() != std::vector<int>{17, 2} && l.shape() != std::vector<int>{34})
    throw ModelError("landmark discriminator expects 17x2 landmarks");
  return require(disc_landmarks[dom_index(d)], "landmark discriminator")(reshape(l, {34}));
}

Var Model::score_latent_style(const Var& z, Domain style_space) const {
  if (z.shape() != std::vector<int>{cfg.style_dim})
    throw ModelError("style latent discriminator expects dimension " +
                     std::to_string(cfg.style_dim));
  return require(disc_latent_style[dom_index(style_space)], "style latent discriminator")(z);
}

Var Model::score_latent_geo(const Var& z, Direction dir) const {
  if (z.shape() != std::vector<int>{cfg.landmark_latent_dim})
    throw ModelError("landmark latent discriminator expects dimension " +
                     std::to_string(cfg.landmark_latent_dim));
  return require(disc_latent_geo[dir_index(dir)], "landmark latent discriminator")(z);
}

Var Model::identity_log_prob_image(const Var& x) const {
  check_image_shape(x);
  return log_softmax(require(id_image, "identity image classifier")(x));
}

Var Model::identity_log_prob_landmarks(const Var& l) const {
  if (l.shape() != std::vector<int>{17, 2} && l.shape() != std::vector<int>{34})
    throw ModelError("identity landmark classifier expects 17x2 landmarks");
  return log_softmax(require(id_landmarks, "identity landmark classifier")(reshape(l, {34})));
}

bool Model::is_discriminator_param(const std::string& name) {
  return name.rfind("disc.", 0) == 0 || name.rfind("id.", 0) == 0;
}

std::vector<std::pair<std::string, Var>> Model::generator_params() const {
  std::vector<std::pair<std::string, Var>> out;
  for (const auto& [name, v] : params.params())
    if (!is_discriminator_param(name)) out.emplace_back(name, v);
  return out;
}

std::vector<std::pair<std::string, Var>> Model::discriminator_params() const {
  std::vector<std::pair<std::string, Var>> out;
  for (const auto& [name, v] : params.params())
    if (is_discriminator_param(name)) out.emplace_back(name, v);
  return out;
}

}  // namespace carigen
