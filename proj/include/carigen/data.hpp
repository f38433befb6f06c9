#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "carigen/geometry.hpp"
#include "carigen/tensor.hpp"

namespace carigen {

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

enum class Domain { photo = 0, caricature = 1 };

const char* domain_name(Domain d);
Domain parse_domain(const std::string& s);

struct RawSample {
  std::string image_path;
  std::string landmark_path;
  int identity = 0;
  Domain domain = Domain::photo;
};

struct PreprocessedSample {
  Tensor image;  // {3,S,S}, values in [-1,1]
  LandmarkSet landmarks;
  int identity = 0;
  Domain domain = Domain::photo;
};

struct DatasetSplit {
  std::vector<int> train_identities;
  std::vector<int> test_identities;
  std::uint64_t seed = 0;
};

/// 17 lines of "x y" (ASCII decimals, single space). Returns raw file
/// coordinates; callers normalize by the image dimensions. A trailing blank
/// line is tolerated. Parse failures name the offending line.
LandmarkSet load_landmark_points(const std::string& path);
LandmarkSet load_landmark_file(const std::string& path, int image_w, int image_h);
void save_landmark_file(const std::string& path, const LandmarkSet& l);

/// Tab-separated manifest: image_path, landmark_path, identity, domain.
std::vector<RawSample> load_manifest(const std::string& path);

/// Deterministic identity split: Fisher-Yates shuffle driven by the seed,
/// first n_train identities train, the rest test.
DatasetSplit make_split(std::vector<int> identities, std::uint64_t seed, int n_train);

/// Rotation about the eye midpoint leveling the eye line; the image is
/// resampled under the same rigid transform applied to the landmarks.
std::pair<Tensor, LandmarkSet> rotate_to_horizontal_eyes(const Tensor& image,
                                                         const LandmarkSet& l);

/// Full per-sample chain: eye leveling, crop box through ears/head/chin
/// enlarged 1.5x, bilinear resize to out_size, landmarks remapped to match.
PreprocessedSample preprocess_sample(const Tensor& image, const LandmarkSet& landmarks,
                                     int identity, Domain domain, int out_size);

/// Processed cache: one directory per split; every sample is a PNG plus a
/// sidecar landmark file in normalized coordinates.
void write_cache(const std::string& dir, const std::vector<PreprocessedSample>& samples);
std::vector<PreprocessedSample> read_cache(const std::string& dir);

/// In-memory dataset with per-domain sample indices.
struct Dataset {
  std::vector<PreprocessedSample> samples;
  std::vector<int> photos;       // indices into samples
  std::vector<int> caricatures;  // indices into samples

  void add(PreprocessedSample s);
  int num_identities() const;
  bool empty() const { return photos.empty() || caricatures.empty(); }
};

struct SamplePair {
  PreprocessedSample photo;
  PreprocessedSample caricature;
};

/// Procedural two-domain face corpus with exactly known landmarks.
/// Per-identity geometry is fixed; the caricature domain exaggerates it by a
/// per-sample random factor and renders in a flat, outlined style.
std::vector<SamplePair> synth_toy_dataset(int n_identities, int per_identity, int size,
                                          std::uint64_t seed);

Dataset toy_dataset_for_identities(const std::vector<SamplePair>& pairs,
                                   const std::vector<int>& identities);

}  // namespace carigen
