#include "carigen/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace carigen {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::single_way: return "single_way";
    case Variant::no_id_l: return "no_id_l";
    case Variant::no_id_x: return "no_id_x";
    case Variant::no_id_both: return "no_id_both";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::full, Variant::single_way, Variant::no_id_l, Variant::no_id_x,
                    Variant::no_id_both})
    if (s == variant_name(v)) return v;
  throw ConfigError("unknown variant '" + s +
                    "' (expected full|single_way|no_id_l|no_id_x|no_id_both)");
}

LossWeights ExperimentConfig::effective_weights() const {
  LossWeights w = weights;
  if (variant == Variant::no_id_l || variant == Variant::no_id_both) w.lambda4 = 0.0;
  if (variant == Variant::no_id_x || variant == Variant::no_id_both) w.lambda3 = 0.0;
  return w;
}

NetConfig ExperimentConfig::net_config() const {
  NetConfig n;
  n.image_size = image_size;
  n.content_channels = content_channels;
  n.style_dim = style_dim;
  n.landmark_latent_dim = landmark_latent_dim;
  n.n_identities = n_identities;
  n.disc_blocks = disc_blocks;
  n.disc_base_channels = disc_base_channels;
  n.displacement_clamp = displacement_clamp;
  n.single_way = single_way();
  return n;
}

double ExperimentConfig::learning_rate(std::int64_t step) const {
  return lr0 * std::pow(0.5, static_cast<double>(step / lr_halving_period_steps));
}

void ExperimentConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(image_size, "image_size");
  positive(content_channels, "content_channels");
  positive(style_dim, "style_dim");
  positive(landmark_latent_dim, "landmark_latent_dim");
  positive(n_identities, "n_identities");
  positive(lr0, "lr0");
  positive(static_cast<double>(lr_halving_period_steps), "lr_halving_period_steps");
  positive(static_cast<double>(total_steps), "total_steps");
  if (batch_size != 1) throw ConfigError("batch_size must be 1");
  if (image_size % 4 != 0) throw ConfigError("image_size must be divisible by 4");
  if (weights.lambda1 < 0 || weights.lambda2 < 0 || weights.lambda3 < 0 ||
      weights.lambda4 < 0 || weights.lambda5 < 0)
    throw ConfigError("loss weights must be nonnegative");
}

std::string ExperimentConfig::canonical_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "adam_beta1 = " << adam_beta1 << "\n";
  os << "adam_beta2 = " << adam_beta2 << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "checkpoint_every = " << checkpoint_every << "\n";
  os << "content_channels = " << content_channels << "\n";
  os << "detach_content_for_geo = " << (detach_content_for_geo ? 1 : 0) << "\n";
  os << "disc_base_channels = " << disc_base_channels << "\n";
  os << "disc_blocks = " << disc_blocks << "\n";
  os << "displacement_clamp = " << displacement_clamp << "\n";
  os << "embed_dim = " << embed_dim << "\n";
  os << "embedder = " << embedder << "\n";
  os << "embedder_seed = " << embedder_seed << "\n";
  os << "image_size = " << image_size << "\n";
  os << "lambda1 = " << weights.lambda1 << "\n";
  os << "lambda2 = " << weights.lambda2 << "\n";
  os << "lambda3 = " << weights.lambda3 << "\n";
  os << "lambda4 = " << weights.lambda4 << "\n";
  os << "lambda5 = " << weights.lambda5 << "\n";
  os << "landmark_latent_dim = " << landmark_latent_dim << "\n";
  os << "log_every = " << log_every << "\n";
  os << "lr0 = " << lr0 << "\n";
  os << "lr_halving_period_steps = " << lr_halving_period_steps << "\n";
  os << "n_identities = " << n_identities << "\n";
  os << "seed = " << seed << "\n";
  os << "style_dim = " << style_dim << "\n";
  os << "total_steps = " << total_steps << "\n";
  os << "toy_identities = " << toy_identities << "\n";
  os << "toy_per_identity = " << toy_per_identity << "\n";
  os << "toy_train_identities = " << toy_train_identities << "\n";
  os << "tps_reg = " << tps_reg << "\n";
  os << "variant = " << variant_name(variant) << "\n";
  return os.str();
}

std::uint64_t ExperimentConfig::content_hash() const {
  const std::string t = canonical_text();
  return fnv1a_hash(t.data(), t.size());
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, const std::string& ctx) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(ctx + ": expected a number, got '" + v + "'");
  }
}

std::int64_t to_int(const std::string& v, const std::string& ctx) {
  const double d = to_double(v, ctx);
  if (d != std::floor(d)) throw ConfigError(ctx + ": expected an integer, got '" + v + "'");
  return static_cast<std::int64_t>(d);
}

bool to_bool(const std::string& v, const std::string& ctx) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError(ctx + ": expected a boolean (0/1/true/false), got '" + v + "'");
}

}  // namespace

void ExperimentConfig::set_key(const std::string& key, const std::string& value,
                               const std::string& ctx) {
  if (key == "image_size") image_size = static_cast<int>(to_int(value, ctx));
  else if (key == "content_channels") content_channels = static_cast<int>(to_int(value, ctx));
  else if (key == "style_dim") style_dim = static_cast<int>(to_int(value, ctx));
  else if (key == "landmark_latent_dim") landmark_latent_dim = static_cast<int>(to_int(value, ctx));
  else if (key == "disc_blocks") disc_blocks = static_cast<int>(to_int(value, ctx));
  else if (key == "disc_base_channels") disc_base_channels = static_cast<int>(to_int(value, ctx));
  else if (key == "n_identities") n_identities = static_cast<int>(to_int(value, ctx));
  else if (key == "lambda1") weights.lambda1 = to_double(value, ctx);
  else if (key == "lambda2") weights.lambda2 = to_double(value, ctx);
  else if (key == "lambda3") weights.lambda3 = to_double(value, ctx);
  else if (key == "lambda4") weights.lambda4 = to_double(value, ctx);
  else if (key == "lambda5") weights.lambda5 = to_double(value, ctx);
  else if (key == "lr0") lr0 = to_double(value, ctx);
  else if (key == "lr_halving_period_steps") lr_halving_period_steps = to_int(value, ctx);
  else if (key == "total_steps") total_steps = to_int(value, ctx);
  else if (key == "batch_size") batch_size = static_cast<int>(to_int(value, ctx));
  else if (key == "adam_beta1") adam_beta1 = to_double(value, ctx);
  else if (key == "adam_beta2") adam_beta2 = to_double(value, ctx);
  else if (key == "seed") seed = static_cast<std::uint64_t>(to_int(value, ctx));
  else if (key == "variant") variant = parse_variant(value);
  else if (key == "displacement_clamp") displacement_clamp = to_double(value, ctx);
  else if (key == "detach_content_for_geo") detach_content_for_geo = to_bool(value, ctx);
  else if (key == "tps_reg") tps_reg = to_double(value, ctx);
  else if (key == "checkpoint_every") checkpoint_every = to_int(value, ctx);
  else if (key == "log_every") log_every = to_int(value, ctx);
  else if (key == "embedder") embedder = value;
  else if (key == "embed_dim") embed_dim = static_cast<int>(to_int(value, ctx));
  else if (key == "embedder_seed") embedder_seed = static_cast<std::uint64_t>(to_int(value, ctx));
  else if (key == "toy_identities") toy_identities = static_cast<int>(to_int(value, ctx));
  else if (key == "toy_per_identity") toy_per_identity = static_cast<int>(to_int(value, ctx));
  else if (key == "toy_train_identities")
    toy_train_identities = static_cast<int>(to_int(value, ctx));
  else
    throw ConfigError(ctx + ": unknown key '" + key + "'");
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string ctx = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(ctx + ": expected 'key = value'");
    cfg.set_key(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), ctx);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), path);
}

ExperimentConfig ExperimentConfig::toy_defaults() {
  ExperimentConfig cfg;
  cfg.image_size = 32;
  cfg.content_channels = 64;
  cfg.total_steps = 2000;
  cfg.lr_halving_period_steps = 500;
  cfg.disc_blocks = 4;
  cfg.disc_base_channels = 16;
  return cfg;
}

std::uint64_t fnv1a_hash(const void* data, size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot hash missing file: " + path);
  char buf[65536];
  std::uint64_t h = 1469598103934665603ULL;
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a_hash(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace carigen
