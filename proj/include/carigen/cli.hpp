#pragma once

#include <string>
#include <vector>

#include "carigen/data.hpp"
#include "carigen/networks.hpp"
#include "carigen/rng.hpp"

namespace carigen {

struct ExperimentConfig;

/// One generated photo->caricature grid. Rows vary the style code with the
/// landmark code fixed; columns vary the landmark code with the style fixed.
/// The stylized intermediates and displacement fields are kept so callers
/// (and tests) can verify the factorization.
struct GenerationGrid {
  std::vector<Tensor> stylized;       // one per style row (pre-warp)
  std::vector<Tensor> displacements;  // one per exaggeration column, {17,2}
  std::vector<Tensor> cells;          // row-major [style][exaggeration]
  int n_styles = 0, n_exaggerations = 0;
};

GenerationGrid generate_grid(const Model& model, const PreprocessedSample& photo, int n_styles,
                             int n_exaggerations, double tps_reg, Rng& rng);

/// Contact sheet: cells tiled row-major with a 1-pixel separator.
Tensor assemble_contact_sheet(const std::vector<Tensor>& cells, int rows, int cols);

/// Style code from the guide image, landmark code from the guide/photo
/// landmark pair (transformed landmarks first), then the usual generation.
Tensor guided_generation(const Model& model, const PreprocessedSample& photo,
                         const PreprocessedSample& guide, double tps_reg);

/// Caricature -> photo path with sampled style and landmark codes.
Tensor invert_caricature(const Model& model, const PreprocessedSample& caricature,
                         double tps_reg, Rng& rng);

/// Model with parameters from a training checkpoint (parameters only; no
/// optimizer state). The config must hash to the checkpoint's config_hash.
Model load_model_from_checkpoint(const ExperimentConfig& cfg, const std::string& path);

int run_cli(int argc, const char* const* argv);

}  // namespace carigen
