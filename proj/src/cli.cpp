#include "carigen/cli.hpp"
#include <atomic>
#include <mutex>
#include <set>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "carigen/config.hpp"
#include "carigen/evaluation.hpp"
#include "carigen/image.hpp"
#include "carigen/png_io.hpp"
#include "carigen/toyface.hpp"
#include "carigen/tps.hpp"
#include "carigen/training.hpp"

namespace fs = std::filesystem;

namespace carigen {

using carigen::ad::Var;
namespace ops = carigen::ad;

// ---------------------------------------------------------------------------
// Library-level generation paths (exercised by both the CLI and the tests)
// ---------------------------------------------------------------------------

GenerationGrid generate_grid(const Model& model, const PreprocessedSample& photo, int n_styles,
                             int n_exaggerations, double tps_reg, Rng& rng) {
  if (n_styles < 1 || n_exaggerations < 1)
    throw ConfigError("grid needs at least one style and one exaggeration");
  GenerationGrid grid;
  grid.n_styles = n_styles;
  grid.n_exaggerations = n_exaggerations;

  Var x = Var::constant(photo.image);
  Var l = Var::constant(photo.landmarks.to_tensor());
  Var content = model.encode_content(x, Domain::photo);

  std::vector<Var> styles, latents;
  for (int i = 0; i < n_styles; ++i) styles.push_back(sample_gaussian(rng, model.cfg.style_dim));
  for (int j = 0; j < n_exaggerations; ++j)
    latents.push_back(sample_gaussian(rng, model.cfg.landmark_latent_dim));

  for (int j = 0; j < n_exaggerations; ++j)
    grid.displacements.push_back(
        model.generate_displacement(content, latents[static_cast<size_t>(j)],
                                    Direction::photo_to_cari)
            .value());

  for (int i = 0; i < n_styles; ++i) {
    // one stylization per row; the landmark code never touches it
    Var stylized = model.decode(content, styles[static_cast<size_t>(i)], Domain::caricature);
    grid.stylized.push_back(stylized.value());
    for (int j = 0; j < n_exaggerations; ++j) {
      Var lgen = ops::add(l, Var::constant(grid.displacements[static_cast<size_t>(j)]));
      grid.cells.push_back(warp_image(stylized, l, lgen, tps_reg).value());
    }
  }
  return grid;
}

Tensor assemble_contact_sheet(const std::vector<Tensor>& cells, int rows, int cols) {
  if (cells.empty() || rows * cols != static_cast<int>(cells.size()))
    throw ConfigError("contact sheet: cell count does not match rows x cols");
  const int s = cells[0].dim(1);
  const int h = rows * s + (rows - 1), w = cols * s + (cols - 1);
  Tensor sheet = Tensor::full({3, h, w}, 1.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Tensor& cell = cells[static_cast<size_t>(r * cols + c)];
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x)
            sheet.at({ch, r * (s + 1) + y, c * (s + 1) + x}) = cell.at({ch, y, x});
    }
  return sheet;
}

Tensor guided_generation(const Model& model, const PreprocessedSample& photo,
                         const PreprocessedSample& guide, double tps_reg) {
  Var x = Var::constant(photo.image);
  Var l = Var::constant(photo.landmarks.to_tensor());
  Var lg = Var::constant(guide.landmarks.to_tensor());
  Var content = model.encode_content(x, Domain::photo);
  Var style = model.encode_style(Var::constant(guide.image), Domain::caricature);
  Var zl = model.encode_landmark_latent(lg, l, Direction::photo_to_cari);
  Var dl = model.generate_displacement(content, zl, Direction::photo_to_cari);
  Var stylized = model.decode(content, style, Domain::caricature);
  return warp_image(stylized, l, ops::add(l, dl), tps_reg).value();
}

Tensor invert_caricature(const Model& model, const PreprocessedSample& caricature, double tps_reg,
                         Rng& rng) {
  Var x = Var::constant(caricature.image);
  Var l = Var::constant(caricature.landmarks.to_tensor());
  Var content = model.encode_content(x, Domain::caricature);
  Var style = sample_gaussian(rng, model.cfg.style_dim);
  Var zl = sample_gaussian(rng, model.cfg.landmark_latent_dim);
  Var stylized = model.decode(content, style, Domain::photo);
  Var dl = model.generate_displacement(content, zl, Direction::cari_to_photo);
  return warp_image(stylized, l, ops::add(l, dl), tps_reg).value();
}

// ---------------------------------------------------------------------------
// CLI plumbing
// ---------------------------------------------------------------------------

namespace {

std::uint64_t hash_tree(const std::string& path) {
  if (fs::is_directory(path)) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& f : files) {
      h = fnv1a_hash(f.data(), f.size(), h);
      const std::uint64_t fh = hash_file(f);
      h = fnv1a_hash(&fh, sizeof(fh), h);
    }
    return h;
  }
  return hash_file(path);
}

void write_run_manifest(const std::string& dir, const std::string& subcommand,
                        const std::vector<std::string>& args, const ExperimentConfig* cfg,
                        const std::vector<std::string>& inputs) {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["args"] = args;
  if (cfg) {
    j["config"] = cfg->canonical_text();
    j["config_hash"] = hash_hex(cfg->content_hash());
  }
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& p : inputs)
    if (fs::exists(p)) in[p] = hash_hex(hash_tree(p));
  j["inputs"] = std::move(in);
  std::ofstream out(fs::path(dir) / "run_manifest.json");
  out << j.dump(2) << "\n";
}

PreprocessedSample load_sample_with_sidecar(const std::string& image_path, Domain domain) {
  PreprocessedSample s;
  s.image = read_png(image_path);
  fs::path sidecar = fs::path(image_path);
  sidecar.replace_extension(".txt");
  if (!fs::exists(sidecar))
    throw DataError("missing landmarks for " + image_path + " (expected " + sidecar.string() +
                    ")");
  s.landmarks = load_landmark_points(sidecar.string());
  s.domain = domain;
  return s;
}

int densify_identities(Dataset& d) {
  std::map<int, int> remap;
  for (const auto& s : d.samples) remap.emplace(s.identity, 0);
  int next = 0;
  for (auto& [orig, dense] : remap) dense = next++;
  for (auto& s : d.samples) s.identity = remap.at(s.identity);
  return next;
}

Dataset build_toy_dataset(const ExperimentConfig& cfg) {
  const auto pairs =
      synth_toy_dataset(cfg.toy_identities, cfg.toy_per_identity, cfg.image_size, cfg.seed);
  std::vector<int> train_ids;
  for (int i = 0; i < cfg.toy_train_identities; ++i) train_ids.push_back(i);
  return toy_dataset_for_identities(pairs, train_ids);
}

struct CommonArgs {
  std::string config_path;
  std::string checkpoint;
  std::string out;
  std::int64_t seed = -1;  // -1: keep the config's seed
  std::string variant;
};

ExperimentConfig resolve_config(const CommonArgs& a, bool toy_fallback) {
  ExperimentConfig cfg;
  if (!a.config_path.empty())
    cfg = ExperimentConfig::from_file(a.config_path);
  else if (toy_fallback)
    cfg = ExperimentConfig::toy_defaults();
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (!a.variant.empty()) cfg.variant = parse_variant(a.variant);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, CommonArgs& a, bool with_checkpoint) {
  sub->add_option("--config", a.config_path, "experiment config file (key = value lines)");
  sub->add_option("--seed", a.seed, "seed override");
  sub->add_option("--variant", a.variant, "variant override")
      ->check(CLI::IsMember({"full", "single_way", "no_id_l", "no_id_x", "no_id_both"}));
  if (with_checkpoint)
    sub->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
}

std::vector<PreprocessedSample> domain_samples(const Dataset& d, Domain domain) {
  std::vector<PreprocessedSample> out;
  const auto& idx = domain == Domain::photo ? d.photos : d.caricatures;
  for (int i : idx) out.push_back(d.samples[static_cast<size_t>(i)]);
  return out;
}

// ---- subcommand bodies ------------------------------------------------------

void cmd_prep(const std::string& manifest_path, const std::string& out_dir, int size, int n_train,
              std::uint64_t seed, int workers, const std::vector<std::string>& argv_echo) {
  const auto rows = load_manifest(manifest_path);
  if (rows.empty()) throw DataError("manifest has no records: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    if (fs::exists(p)) return p;
    const fs::path rel = base / p;
    if (fs::exists(rel)) return rel.string();
    throw DataError("input file not found: " + p);
  };

  std::vector<int> identities;
  for (const auto& r : rows) identities.push_back(r.identity);
  const DatasetSplit split = make_split(identities, seed, n_train);

  std::vector<PreprocessedSample> processed(rows.size());
  std::atomic<size_t> cursor{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      const size_t i = cursor.fetch_add(1);
      if (i >= rows.size()) return;
      try {
        const Tensor img = read_png(resolve(rows[i].image_path));
        const LandmarkSet lm = load_landmark_file(resolve(rows[i].landmark_path),
                                                  image_width(img), image_height(img));
        processed[i] = preprocess_sample(img, lm, rows[i].identity, rows[i].domain, size);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::max(1, workers); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  const std::set<int> train_set(split.train_identities.begin(), split.train_identities.end());
  std::vector<PreprocessedSample> train, test;
  for (auto& s : processed) (train_set.count(s.identity) ? train : test).push_back(std::move(s));
  write_cache((fs::path(out_dir) / "train").string(), train);
  write_cache((fs::path(out_dir) / "test").string(), test);
  write_run_manifest(out_dir, "prep", argv_echo, nullptr, {manifest_path});
  std::printf("prep: %zu train / %zu test samples (%zu/%zu identities)\n", train.size(),
              test.size(), split.train_identities.size(), split.test_identities.size());
}

void cmd_train(const CommonArgs& common, bool toy, const std::string& data_dir,
               const std::string& out_dir, const std::string& resume,
               const std::vector<std::string>& argv_echo) {
  ExperimentConfig cfg = resolve_config(common, /*toy_fallback=*/true);
  Dataset data;
  if (toy) {
    cfg.n_identities = cfg.toy_train_identities;
    data = build_toy_dataset(cfg);
  } else {
    if (data_dir.empty()) throw ConfigError("train needs --toy or --data DIR");
    for (auto& s : read_cache(data_dir)) data.add(std::move(s));
    cfg.n_identities = densify_identities(data);
  }
  fs::create_directories(out_dir);
  Trainer trainer(cfg, std::move(data));
  if (!resume.empty()) trainer.load_checkpoint(resume);

  const fs::path csv_path = fs::path(out_dir) / "loss.csv";
  const bool append = !resume.empty() && fs::exists(csv_path);
  std::ofstream csv(csv_path, append ? std::ios::app : std::ios::out);
  if (!csv) throw DataError("cannot write " + csv_path.string());
  bool wrote_header = append;

  const fs::path ckpt_path = fs::path(out_dir) / "checkpoint.bin";
  trainer.train([&](std::int64_t step, const LossReport& report) {
    if (!wrote_header) {
      csv << report.csv_header() << "\n";
      wrote_header = true;
    }
    if (cfg.log_every > 0 && step % cfg.log_every == 0) csv << report.csv_row(step) << "\n";
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      trainer.save_checkpoint(ckpt_path.string());
  });
  trainer.save_checkpoint(ckpt_path.string());
  write_run_manifest(out_dir, "train", argv_echo, &cfg,
                     toy ? std::vector<std::string>{} : std::vector<std::string>{data_dir});
  std::printf("train: %lld steps (%lld skipped), checkpoint at %s\n",
              static_cast<long long>(trainer.step()),
              static_cast<long long>(trainer.skipped_steps()), ckpt_path.string().c_str());
}

void cmd_generate(const CommonArgs& common, const std::string& photos_dir,
                  const std::string& out_dir, int n_styles, int n_exag,
                  const std::vector<std::string>& argv_echo) {
  const ExperimentConfig cfg = resolve_config(common, true);
  const Model model = load_model_from_checkpoint(cfg, common.checkpoint);
  Dataset data;
  for (auto& s : read_cache(photos_dir)) data.add(std::move(s));
  const auto photos = domain_samples(data, Domain::photo);
  if (photos.empty()) throw DataError("no photo-domain samples under " + photos_dir);
  fs::create_directories(out_dir);
  Rng rng(cfg.seed);
  for (size_t i = 0; i < photos.size(); ++i) {
    const GenerationGrid grid =
        generate_grid(model, photos[i], n_styles, n_exag, cfg.tps_reg, rng);
    const Tensor sheet = assemble_contact_sheet(grid.cells, n_styles, n_exag);
    char name[64];
    std::snprintf(name, sizeof(name), "%05zu_grid.png", i);
    write_png((fs::path(out_dir) / name).string(), sheet);
  }
  write_run_manifest(out_dir, "generate", argv_echo, &cfg, {photos_dir, common.checkpoint});
  std::printf("generate: wrote %zu grids to %s\n", photos.size(), out_dir.c_str());
}

void cmd_guide(const CommonArgs& common, const std::string& photo_path,
               const std::string& guide_path, const std::string& out_file,
               const std::vector<std::string>& argv_echo) {
  const ExperimentConfig cfg = resolve_config(common, true);
  const Model model = load_model_from_checkpoint(cfg, common.checkpoint);
  const PreprocessedSample photo = load_sample_with_sidecar(photo_path, Domain::photo);
  const PreprocessedSample guide = load_sample_with_sidecar(guide_path, Domain::caricature);
  const Tensor out = guided_generation(model, photo, guide, cfg.tps_reg);
  write_png(out_file, out);
  write_run_manifest(fs::path(out_file).parent_path().string(), "guide", argv_echo, &cfg,
                     {photo_path, guide_path, common.checkpoint});
}

void cmd_invert(const CommonArgs& common, const std::string& caricature_path,
                const std::string& out_file, const std::vector<std::string>& argv_echo) {
  const ExperimentConfig cfg = resolve_config(common, true);
  const Model model = load_model_from_checkpoint(cfg, common.checkpoint);
  const PreprocessedSample cari = load_sample_with_sidecar(caricature_path, Domain::caricature);
  Rng rng(cfg.seed);
  const Tensor out = invert_caricature(model, cari, cfg.tps_reg, rng);
  write_png(out_file, out);
  write_run_manifest(fs::path(out_file).parent_path().string(), "invert", argv_echo, &cfg,
                     {caricature_path, common.checkpoint});
}

void cmd_eval_fid(const CommonArgs& common, const std::string& data_dir,
                  const std::string& out_file, int k_codes,
                  const std::vector<std::string>& argv_echo) {
  const ExperimentConfig cfg = resolve_config(common, true);
  const Model model = load_model_from_checkpoint(cfg, common.checkpoint);
  Dataset data;
  for (auto& s : read_cache(data_dir)) data.add(std::move(s));
  const auto photos = domain_samples(data, Domain::photo);
  const auto caricatures = domain_samples(data, Domain::caricature);
  if (photos.empty() || caricatures.empty())
    throw DataError("eval-fid needs photos and caricatures under " + data_dir);

  Rng rng(cfg.seed);
  std::vector<Tensor> generated;
  for (const auto& p : photos) {
    const GenerationGrid grid = generate_grid(model, p, 1, k_codes, cfg.tps_reg, rng);
    for (const auto& cell : grid.cells) generated.push_back(cell);
  }
  std::vector<Tensor> real;
  for (const auto& c : caricatures) real.push_back(c.image);

  const Embedder embedder = Embedder::from_config(cfg);
  FidReport report;
  report.embedder_id = embedder.id();
  report.n_real = static_cast<int>(real.size());
  report.n_generated = static_cast<int>(generated.size());
  report.fid = frechet_distance(fit_stats(embedder.embed(real)),
                                fit_stats(embedder.embed(generated)));
  std::ofstream out(out_file);
  out << fid_report_json(report, nullptr) << "\n";
  write_run_manifest(fs::path(out_file).parent_path().string(), "eval-fid", argv_echo, &cfg,
                     {data_dir, common.checkpoint});
  std::printf("eval-fid: %s = %.4f (%d real, %d generated)\n", report.embedder_id.c_str(),
              report.fid, report.n_real, report.n_generated);
}

void cmd_probe(const CommonArgs& common, const std::string& data_dir, const std::string& out_file,
               int k_codes, const std::vector<std::string>& argv_echo) {
  const ExperimentConfig cfg = resolve_config(common, true);
  const Model model = load_model_from_checkpoint(cfg, common.checkpoint);
  Dataset data;
  for (auto& s : read_cache(data_dir)) data.add(std::move(s));
  const auto photos = domain_samples(data, Domain::photo);
  if (photos.empty()) throw DataError("probe needs photo-domain samples under " + data_dir);
  Rng rng(cfg.seed);
  const DiversityReport rep = diversity_probe(model, photos, k_codes, cfg.tps_reg, rng);
  nlohmann::ordered_json j;
  j["k"] = rep.k;
  j["n_inputs"] = rep.n_inputs;
  j["dl_across_landmark_codes"] = rep.dl_across_landmark_codes;
  j["img_across_style_codes"] = rep.img_across_style_codes;
  j["dl_across_style_codes"] = rep.dl_across_style_codes;
  j["img_across_landmark_codes"] = rep.img_across_landmark_codes;
  std::ofstream out(out_file);
  out << j.dump(2) << "\n";
  write_run_manifest(fs::path(out_file).parent_path().string(), "probe", argv_echo, &cfg,
                     {data_dir, common.checkpoint});
}

void cmd_flow(const std::string& src_path, const std::string& dst_path, int height, int width,
              double reg, const std::string& out_file) {
  const LandmarkSet src = load_landmark_points(src_path);
  const LandmarkSet dst = load_landmark_points(dst_path);
  std::ofstream out(out_file, std::ios::binary);
  if (!out) throw DataError("cannot write " + out_file);
  write_flow_field(out, height, width, src, dst, reg);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> argv_echo(argv, argv + argc);

  CLI::App app{"photo/caricature translation with controllable texture style and exaggeration"};
  app.require_subcommand(1);

  // prep
  auto* prep = app.add_subcommand("prep", "preprocess a raw corpus into a cache");
  std::string prep_manifest, prep_out;
  int prep_size = 256, prep_ntrain = 202, prep_workers = 2;
  std::int64_t prep_seed = 0;
  prep->add_option("--manifest", prep_manifest, "tab-separated corpus manifest")->required();
  prep->add_option("--out", prep_out, "output cache directory")->required();
  prep->add_option("--size", prep_size, "processed image size");
  prep->add_option("--n-train", prep_ntrain, "number of training identities")->required();
  prep->add_option("--seed", prep_seed, "split seed");
  prep->add_option("--workers", prep_workers, "parallel preprocessing workers (1 = ordered)");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  CommonArgs train_common;
  add_common(train, train_common, false);
  bool train_toy = false;
  std::string train_data, train_out, train_resume;
  train->add_flag("--toy", train_toy, "train on the synthetic toy corpus");
  train->add_option("--data", train_data, "processed cache directory");
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  // generate
  auto* gen = app.add_subcommand("generate", "style x exaggeration grids for photos");
  CommonArgs gen_common;
  add_common(gen, gen_common, true);
  std::string gen_photos, gen_out;
  int gen_styles = 3, gen_exags = 3;
  gen->add_option("--photos", gen_photos, "cache directory with photo samples")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n-styles", gen_styles, "style rows");
  gen->add_option("--n-exaggerations", gen_exags, "exaggeration columns");

  // guide
  auto* guide = app.add_subcommand("guide", "caricature generation guided by a sample");
  CommonArgs guide_common;
  add_common(guide, guide_common, true);
  std::string guide_photo, guide_guide, guide_out;
  guide->add_option("--photo", guide_photo, "input photo (PNG + .txt landmarks)")->required();
  guide->add_option("--guide", guide_guide, "guide caricature (PNG + .txt landmarks)")->required();
  guide->add_option("--out", guide_out, "output image path")->required();

  // invert
  auto* invert = app.add_subcommand("invert", "translate a caricature back to a photo");
  CommonArgs invert_common;
  add_common(invert, invert_common, true);
  std::string invert_cari, invert_out;
  invert->add_option("--caricature", invert_cari, "input caricature (PNG + .txt landmarks)")
      ->required();
  invert->add_option("--out", invert_out, "output image path")->required();

  // eval-fid
  auto* evalf = app.add_subcommand("eval-fid", "Frechet distance of generated vs real samples");
  CommonArgs eval_common;
  add_common(evalf, eval_common, true);
  std::string eval_data, eval_out = "fid_report.json";
  int eval_k = 1;
  evalf->add_option("--data", eval_data, "cache directory (photos + caricatures)")->required();
  evalf->add_option("--out", eval_out, "report path");
  evalf->add_option("--k", eval_k, "generated samples per input photo");

  // probe
  auto* probe = app.add_subcommand("probe", "diversity probe at a trained checkpoint");
  CommonArgs probe_common;
  add_common(probe, probe_common, true);
  std::string probe_data, probe_out = "probe_report.json";
  int probe_k = 4;
  probe->add_option("--data", probe_data, "cache directory with photos")->required();
  probe->add_option("--out", probe_out, "report path");
  probe->add_option("--k", probe_k, "codes per axis");

  // flow (debug)
  auto* flow = app.add_subcommand("flow", "dump the dense backward warp flow");
  std::string flow_src, flow_dst, flow_out;
  int flow_h = 256, flow_w = 256;
  double flow_reg = 1e-4;
  flow->add_option("--src", flow_src, "source landmarks (normalized, 17 lines)")->required();
  flow->add_option("--dst", flow_dst, "target landmarks (normalized, 17 lines)")->required();
  flow->add_option("--height", flow_h, "grid height");
  flow->add_option("--width", flow_w, "grid width");
  flow->add_option("--reg", flow_reg, "TPS regularization");
  flow->add_option("--out", flow_out, "output file")->required();

  try {
    app.parse(argc, argv);
    if (prep->parsed())
      cmd_prep(prep_manifest, prep_out, prep_size, prep_ntrain,
               static_cast<std::uint64_t>(prep_seed), prep_workers, argv_echo);
    else if (train->parsed())
      cmd_train(train_common, train_toy, train_data, train_out, train_resume, argv_echo);
    else if (gen->parsed())
      cmd_generate(gen_common, gen_photos, gen_out, gen_styles, gen_exags, argv_echo);
    else if (guide->parsed())
      cmd_guide(guide_common, guide_photo, guide_guide, guide_out, argv_echo);
    else if (invert->parsed())
      cmd_invert(invert_common, invert_cari, invert_out, argv_echo);
    else if (evalf->parsed())
      cmd_eval_fid(eval_common, eval_data, eval_out, eval_k, argv_echo);
    else if (probe->parsed())
      cmd_probe(probe_common, probe_data, probe_out, probe_k, argv_echo);
    else if (flow->parsed())
      cmd_flow(flow_src, flow_dst, flow_h, flow_w, flow_reg, flow_out);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ModelError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const GeometryError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  }
}

}  // namespace carigen
