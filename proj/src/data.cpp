#include "carigen/data.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "carigen/image.hpp"
#include "carigen/png_io.hpp"
#include "carigen/rng.hpp"

namespace fs = std::filesystem;

namespace carigen {

const char* domain_name(Domain d) { return d == Domain::photo ? "photo" : "caricature"; }

Domain parse_domain(const std::string& s) {
  if (s == "photo") return Domain::photo;
  if (s == "caricature") return Domain::caricature;
  throw DataError("unknown domain '" + s + "' (expected photo|caricature)");
}

namespace {

double parse_double(const std::string& token, const std::string& context) {
  double v = 0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    throw DataError(context + ": non-numeric token '" + token + "'");
  return v;
}

}  // namespace

LandmarkSet load_landmark_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmark file: " + path);
  LandmarkSet l;
  std::string line;
  int count = 0, lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // tolerate trailing whitespace-only lines
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    if (count >= LandmarkSet::kCount)
      throw DataError(path + ": expected 17 landmark lines, found more (line " +
                      std::to_string(lineno) + ")");
    std::istringstream ls(line);
    std::string xs, ys, extra;
    ls >> xs >> ys;
    if (ls >> extra)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 'x y', got extra token");
    if (xs.empty() || ys.empty())
      throw DataError(path + ":" + std::to_string(lineno) + ": expected two numbers");
    l[count].x = parse_double(xs, path + ":" + std::to_string(lineno));
    l[count].y = parse_double(ys, path + ":" + std::to_string(lineno));
    ++count;
  }
  if (count != LandmarkSet::kCount)
    throw DataError(path + ": expected 17 landmark lines, found " + std::to_string(count));
  if (!l.all_finite()) throw DataError(path + ": non-finite landmark coordinate");
  return l;
}

LandmarkSet load_landmark_file(const std::string& path, int image_w, int image_h) {
  if (image_w <= 0 || image_h <= 0) throw DataError("landmark normalization needs image dims");
  LandmarkSet l = load_landmark_points(path);
  for (int i = 0; i < LandmarkSet::kCount; ++i) {
    l[i].x /= image_w;
    l[i].y /= image_h;
  }
  return l;
}

void save_landmark_file(const std::string& path, const LandmarkSet& l) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write landmark file: " + path);
  out.precision(17);
  for (int i = 0; i < LandmarkSet::kCount; ++i) out << l[i].x << " " << l[i].y << "\n";
  if (!out) throw DataError("write failed: " + path);
}

std::vector<RawSample> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  std::vector<RawSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      const size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    RawSample s;
    s.image_path = fields[0];
    s.landmark_path = fields[1];
    const double id = parse_double(fields[2], path + ":" + std::to_string(lineno));
    if (id < 0 || id != static_cast<int>(id))
      throw DataError(path + ":" + std::to_string(lineno) + ": identity must be an integer >= 0");
    s.identity = static_cast<int>(id);
    s.domain = parse_domain(fields[3]);
    out.push_back(std::move(s));
  }
  return out;
}

DatasetSplit make_split(std::vector<int> identities, std::uint64_t seed, int n_train) {
  std::sort(identities.begin(), identities.end());
  identities.erase(std::unique(identities.begin(), identities.end()), identities.end());
  if (n_train <= 0 || n_train >= static_cast<int>(identities.size()))
    throw DataError("n_train out of range: " + std::to_string(n_train) + " of " +
                    std::to_string(identities.size()) + " identities");
  Rng rng(seed);
  for (int i = static_cast<int>(identities.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(identities[static_cast<size_t>(i)], identities[static_cast<size_t>(j)]);
  }
  DatasetSplit split;
  split.seed = seed;
  split.train_identities.assign(identities.begin(), identities.begin() + n_train);
  split.test_identities.assign(identities.begin() + n_train, identities.end());
  std::sort(split.train_identities.begin(), split.train_identities.end());
  std::sort(split.test_identities.begin(), split.test_identities.end());
  return split;
}

std::pair<Tensor, LandmarkSet> rotate_to_horizontal_eyes(const Tensor& image,
                                                         const LandmarkSet& l) {
  check_image(image);
  using namespace landmark_index;
  for (int e : {kLeftEye, kRightEye})
    if (l[e].x < 0 || l[e].x > 1 || l[e].y < 0 || l[e].y > 1)
      throw GeometryError("eye landmark outside the image");
  const RigidRotation r = eye_leveling_rotation(l, image_width(image), image_height(image));
  LandmarkSet moved = transform_landmarks(l, r);
  // leveling is exact by construction; kill the rounding residue so the
  // equal-y invariant holds bit-for-bit
  const double ey = 0.5 * (moved[kLeftEye].y + moved[kRightEye].y);
  moved[kLeftEye].y = ey;
  moved[kRightEye].y = ey;
  if (std::abs(r.sin_t) < 1e-15 && r.cos_t > 0) return {image, moved};
  return {rotate_image(image, r), moved};
}

PreprocessedSample preprocess_sample(const Tensor& image, const LandmarkSet& landmarks,
                                     int identity, Domain domain, int out_size) {
  auto [rotated, moved] = rotate_to_horizontal_eyes(image, landmarks);
  const Box box = compute_crop_box(moved);
  PreprocessedSample s;
  s.image = crop_and_resize(rotated, box, out_size);
  s.landmarks = remap_landmarks_into_box(moved, box);
  s.identity = identity;
  s.domain = domain;
  return s;
}

namespace {

std::string sample_stem(int index, const PreprocessedSample& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%05d_id%04d_%s", index, s.identity, domain_name(s.domain));
  return buf;
}

}  // namespace

void write_cache(const std::string& dir, const std::vector<PreprocessedSample>& samples) {
  fs::create_directories(dir);
  for (size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = sample_stem(static_cast<int>(i), samples[i]);
    write_png((fs::path(dir) / (stem + ".png")).string(), samples[i].image);
    save_landmark_file((fs::path(dir) / (stem + ".txt")).string(), samples[i].landmarks);
  }
}

std::vector<PreprocessedSample> read_cache(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("cache directory not found: " + dir);
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".png") stems.push_back(entry.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  std::vector<PreprocessedSample> out;
  for (const auto& stem : stems) {
    // stem layout: NNNNN_idKKKK_domain
    const size_t p1 = stem.find("_id");
    const size_t p2 = stem.find('_', p1 + 3);
    if (p1 == std::string::npos || p2 == std::string::npos)
      throw DataError("unrecognized cache file name: " + stem);
    PreprocessedSample s;
    s.identity = std::stoi(stem.substr(p1 + 3, p2 - p1 - 3));
    s.domain = parse_domain(stem.substr(p2 + 1));
    s.image = read_png((fs::path(dir) / (stem + ".png")).string());
    LandmarkSet l = load_landmark_points((fs::path(dir) / (stem + ".txt")).string());
    s.landmarks = l;  // sidecar is already in normalized coordinates
    out.push_back(std::move(s));
  }
  return out;
}

void Dataset::add(PreprocessedSample s) {
  const int idx = static_cast<int>(samples.size());
  (s.domain == Domain::photo ? photos : caricatures).push_back(idx);
  samples.push_back(std::move(s));
}

int Dataset::num_identities() const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.identity);
  return static_cast<int>(ids.size());
}

Dataset toy_dataset_for_identities(const std::vector<SamplePair>& pairs,
                                   const std::vector<int>& identities) {
  const std::set<int> keep(identities.begin(), identities.end());
  Dataset d;
  for (const auto& p : pairs) {
    if (!keep.count(p.photo.identity)) continue;
    d.add(p.photo);
    d.add(p.caricature);
  }
  return d;
}

}  // namespace carigen
