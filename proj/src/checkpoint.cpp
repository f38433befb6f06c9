#include <fstream>
#include <json.hpp>

#include "carigen/cli.hpp"
#include "carigen/training.hpp"

namespace carigen {

// Single-file container: magic line, manifest length line, JSON manifest,
// then raw little-endian f64 blobs. Construction order is deterministic, so
// save -> load -> save is byte-identical.
struct CheckpointCodec {
  static constexpr const char* kMagic = "CARIGEN_CKPT1";

  static void save(const Trainer& tr, const std::string& path) {
    nlohmann::ordered_json manifest;
    manifest["format"] = 1;
    manifest["config_hash"] = hash_hex(tr.cfg_.content_hash());
    manifest["step"] = tr.step_;
    manifest["skipped"] = tr.skipped_;
    manifest["rng_state"] = tr.rng_.state();
    manifest["adam_g_t"] = tr.opt_g_.t();
    manifest["adam_d_t"] = tr.opt_d_.t();

    std::vector<std::pair<std::string, const Tensor*>> blobs;
    for (const auto& [name, v] : tr.model_->params.params())
      blobs.emplace_back("param." + name, &v.value());
    for (const auto& [name, t] : tr.opt_g_.m()) blobs.emplace_back("adam_g.m." + name, &t);
    for (const auto& [name, t] : tr.opt_g_.v()) blobs.emplace_back("adam_g.v." + name, &t);
    for (const auto& [name, t] : tr.opt_d_.m()) blobs.emplace_back("adam_d.m." + name, &t);
    for (const auto& [name, t] : tr.opt_d_.v()) blobs.emplace_back("adam_d.v." + name, &t);

    nlohmann::ordered_json blob_list = nlohmann::ordered_json::array();
    std::int64_t offset = 0;
    for (const auto& [name, t] : blobs) {
      nlohmann::ordered_json entry;
      entry["name"] = name;
      entry["dtype"] = "f64";
      entry["shape"] = t->shape();
      entry["offset"] = offset;
      entry["bytes"] = t->numel() * static_cast<std::int64_t>(sizeof(double));
      blob_list.push_back(std::move(entry));
      offset += t->numel() * static_cast<std::int64_t>(sizeof(double));
    }
    manifest["blobs"] = std::move(blob_list);

    const std::string mtext = manifest.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NumericError("cannot write checkpoint: " + path);
    out << kMagic << "\n" << mtext.size() << "\n" << mtext;
    for (const auto& [name, t] : blobs)
      out.write(reinterpret_cast<const char*>(t->data()),
                t->numel() * static_cast<std::int64_t>(sizeof(double)));
    if (!out) throw NumericError("checkpoint write failed: " + path);
  }

  static void load(Trainer& tr, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NumericError("cannot open checkpoint: " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != kMagic) throw NumericError(path + ": not a checkpoint file");
    std::string len_line;
    std::getline(in, len_line);
    const size_t mlen = std::stoul(len_line);
    std::string mtext(mlen, '\0');
    in.read(mtext.data(), static_cast<std::streamsize>(mlen));
    const auto manifest = nlohmann::json::parse(mtext);

    if (manifest.at("config_hash").get<std::string>() != hash_hex(tr.cfg_.content_hash()))
      throw ConfigError(path + ": checkpoint was written under a different configuration");

    std::map<std::string, Tensor> loaded;
    for (const auto& entry : manifest.at("blobs")) {
      const std::string name = entry.at("name").get<std::string>();
      const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
      Tensor t(shape);
      in.read(reinterpret_cast<char*>(t.data()),
              t.numel() * static_cast<std::int64_t>(sizeof(double)));
      if (!in) throw NumericError(path + ": truncated checkpoint blob " + name);
      loaded.emplace(name, std::move(t));
    }

    auto take = [&](const std::string& name) -> Tensor {
      auto it = loaded.find(name);
      if (it == loaded.end()) throw NumericError(path + ": checkpoint misses blob " + name);
      return it->second;
    };

    for (auto& [name, v] : tr.model_->params.params()) {
      Tensor t = take("param." + name);
      if (t.shape() != v.value().shape())
        throw NumericError(path + ": blob shape mismatch for " + name);
      v.mutable_value() = std::move(t);
    }
    std::map<std::string, Tensor> gm, gv, dm, dv;
    for (const auto& [name, v] : tr.model_->params.params()) {
      if (Model::is_discriminator_param(name)) {
        dm.emplace(name, take("adam_d.m." + name));
        dv.emplace(name, take("adam_d.v." + name));
      } else {
        gm.emplace(name, take("adam_g.m." + name));
        gv.emplace(name, take("adam_g.v." + name));
      }
    }
    tr.opt_g_.restore(manifest.at("adam_g_t").get<std::int64_t>(), std::move(gm), std::move(gv));
    tr.opt_d_.restore(manifest.at("adam_d_t").get<std::int64_t>(), std::move(dm), std::move(dv));
    tr.step_ = manifest.at("step").get<std::int64_t>();
    tr.skipped_ = manifest.at("skipped").get<std::int64_t>();
    tr.rng_.set_state(manifest.at("rng_state").get<std::string>());
  }
};

void Trainer::save_checkpoint(const std::string& path) const { CheckpointCodec::save(*this, path); }
void Trainer::load_checkpoint(const std::string& path) { CheckpointCodec::load(*this, path); }

Model load_model_from_checkpoint(const ExperimentConfig& cfg, const std::string& path) {
  Rng init_rng(cfg.seed);
  Model model(cfg.net_config(), init_rng);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw NumericError("cannot open checkpoint: " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != CheckpointCodec::kMagic) throw NumericError(path + ": not a checkpoint file");
  std::string len_line;
  std::getline(in, len_line);
  std::string mtext(std::stoul(len_line), '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  const auto manifest = nlohmann::json::parse(mtext);
  if (manifest.at("config_hash").get<std::string>() != hash_hex(cfg.content_hash()))
    throw ConfigError(path + ": checkpoint was written under a different configuration");

  auto& params = model.params.params();
  for (const auto& entry : manifest.at("blobs")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            t.numel() * static_cast<std::int64_t>(sizeof(double)));
    if (!in) throw NumericError(path + ": truncated checkpoint blob " + name);
    if (name.rfind("param.", 0) != 0) continue;
    const std::string pname = name.substr(6);
    auto it = params.find(pname);
    if (it == params.end()) throw NumericError(path + ": unexpected parameter " + pname);
    if (it->second.value().shape() != shape)
      throw NumericError(path + ": blob shape mismatch for " + pname);
    it->second.mutable_value() = std::move(t);
  }
  return model;
}

}  // namespace carigen
