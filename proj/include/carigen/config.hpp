#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "carigen/losses.hpp"

namespace carigen {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class Variant { full, single_way, no_id_l, no_id_x, no_id_both };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct ExperimentConfig {
  int image_size = 32;
  int content_channels = 64;
  int style_dim = 8;
  int landmark_latent_dim = 32;
  int disc_blocks = 4;
  int disc_base_channels = 16;
  int n_identities = 8;

  LossWeights weights;

  double lr0 = 1e-4;
  std::int64_t lr_halving_period_steps = 100000;
  std::int64_t total_steps = 500000;
  int batch_size = 1;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::uint64_t seed = 0;
  Variant variant = Variant::full;
  double displacement_clamp = 0.35;
  bool detach_content_for_geo = false;
  double tps_reg = 1e-4;

  std::int64_t checkpoint_every = 0;  // 0: only at the end
  std::int64_t log_every = 1;

  std::string embedder = "proxy";  // or "pretrained:<weights path>"
  int embed_dim = 32;
  std::uint64_t embedder_seed = 1234;

  // toy data knobs (used when training on the synthetic corpus)
  int toy_identities = 12;
  int toy_per_identity = 6;
  int toy_train_identities = 8;

  /// Weights after applying the variant's lambda zeroing.
  LossWeights effective_weights() const;
  bool single_way() const { return variant == Variant::single_way; }
  NetConfig net_config() const;

  double learning_rate(std::int64_t step) const;

  void validate() const;
  std::string canonical_text() const;
  std::uint64_t content_hash() const;  // FNV-1a of the canonical text

  /// Flat "key = value" file, one per line, '#' comments; unknown keys are
  /// errors.
  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_text(const std::string& text, const std::string& origin);
  void set_key(const std::string& key, const std::string& value, const std::string& context);

  /// Scaled-down defaults: 32x32, 2000 steps, halving every 500 steps.
  static ExperimentConfig toy_defaults();
};

std::uint64_t fnv1a_hash(const void* data, size_t n, std::uint64_t h = 1469598103934665603ULL);
std::uint64_t hash_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

}  // namespace carigen
