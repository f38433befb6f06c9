#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "carigen/data.hpp"
#include "carigen/image.hpp"
#include "carigen/png_io.hpp"
#include "carigen/rng.hpp"
#include "carigen/toyface.hpp"
#include "testutil.hpp"

using namespace carigen;
namespace fs = std::filesystem;
namespace li = carigen::landmark_index;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("carigen_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

LandmarkSet spread_landmarks() {
  LandmarkSet l;
  Rng rng(7);
  for (int i = 0; i < LandmarkSet::kCount; ++i) l[i] = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
  l[li::kLeftEye] = {0.35, 0.4};
  l[li::kRightEye] = {0.65, 0.4};
  l[li::kTopOfHead] = {0.5, 0.15};
  l[li::kChin] = {0.5, 0.85};
  l[li::kLeftEar] = {0.2, 0.5};
  l[li::kRightEar] = {0.8, 0.5};
  return l;
}

}  // namespace

TEST_CASE("landmark file: parse, count violation, trailing blank line, bad token") {
  const fs::path dir = temp_dir("landmarks");
  {
    std::ofstream out(dir / "ok.txt");
    for (int i = 0; i < 17; ++i) out << i << " " << i << "\n";
  }
  const LandmarkSet l = load_landmark_file((dir / "ok.txt").string(), 256, 256);
  CHECK(l[3].x == doctest::Approx(3.0 / 256));
  CHECK(l[3].y == doctest::Approx(3.0 / 256));

  {
    std::ofstream out(dir / "short.txt");
    for (int i = 0; i < 16; ++i) out << i << " " << i << "\n";
  }
  CHECK_THROWS_AS(load_landmark_file((dir / "short.txt").string(), 256, 256), DataError);

  {
    std::ofstream out(dir / "trailing.txt");
    for (int i = 0; i < 17; ++i) out << i << " " << i << "\n";
    out << "\n";
  }
  const LandmarkSet lt = load_landmark_file((dir / "trailing.txt").string(), 256, 256);
  for (int i = 0; i < 17; ++i) {
    CHECK(lt[i].x == l[i].x);
    CHECK(lt[i].y == l[i].y);
  }

  {
    std::ofstream out(dir / "bad.txt");
    for (int i = 0; i < 16; ++i) out << i << " " << i << "\n";
    out << "12 oops\n";
  }
  try {
    load_landmark_file((dir / "bad.txt").string(), 256, 256);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":17") != std::string::npos);
  }
}

TEST_CASE("rotate_to_horizontal_eyes: already-horizontal eyes are a no-op") {
  Rng rng(50);
  Tensor img({3, 32, 32});
  for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform(-1, 1);
  LandmarkSet l = spread_landmarks();
  l[li::kLeftEye] = {0.3, 0.3};
  l[li::kRightEye] = {0.7, 0.3};
  auto [out, moved] = rotate_to_horizontal_eyes(img, l);
  CHECK(carigen::testutil::max_abs_diff(out, img) == 0.0);
  CHECK(moved[li::kLeftEye].y == moved[li::kRightEye].y);
}

TEST_CASE("rotate_to_horizontal_eyes: vertical eye line rotates 90 degrees") {
  Tensor img = Tensor::full({3, 32, 32}, 0.1);
  LandmarkSet l = spread_landmarks();
  l[li::kLeftEye] = {0.3, 0.3};
  l[li::kRightEye] = {0.3, 0.7};
  auto [out, moved] = rotate_to_horizontal_eyes(img, l);
  CHECK(std::abs(moved[li::kLeftEye].y - moved[li::kRightEye].y) < 1e-9);
  // distance between eyes preserved, now along x
  CHECK(std::abs(std::abs(moved[li::kRightEye].x - moved[li::kLeftEye].x) - 0.4) < 1e-9);
}

TEST_CASE("rotate_to_horizontal_eyes: all 17 points match an explicit rotation oracle") {
  Tensor img = Tensor::full({3, 64, 64}, 0.0);
  LandmarkSet l = spread_landmarks();
  l[li::kLeftEye] = {0.2, 0.2};
  l[li::kRightEye] = {0.6, 0.5};
  auto [out, moved] = rotate_to_horizontal_eyes(img, l);

  // independent oracle: rotation matrix about the eye midpoint by -theta
  const double dx = 0.6 - 0.2, dy = 0.5 - 0.2;
  const double theta = std::atan2(dy, dx);
  const double c = std::cos(-theta), s = std::sin(-theta);
  const double mx = 0.4, my = 0.35;
  double max_err = 0;
  for (int i = 0; i < LandmarkSet::kCount; ++i) {
    const double px = l[i].x - mx, py = l[i].y - my;
    const double ex = c * px - s * py + mx;
    const double ey = s * px + c * py + my;
    max_err = std::max({max_err, std::abs(moved[i].x - ex), std::abs(moved[i].y - ey)});
  }
  CHECK(max_err < 1e-6);
  CHECK(std::abs(moved[li::kLeftEye].y - moved[li::kRightEye].y) < 1e-6);
}

TEST_CASE("rotate_to_horizontal_eyes: coincident eyes raise a degenerate-geometry error") {
  Tensor img = Tensor::full({3, 16, 16}, 0.0);
  LandmarkSet l = spread_landmarks();
  l[li::kLeftEye] = l[li::kRightEye] = {0.5, 0.5};
  CHECK_THROWS_AS(rotate_to_horizontal_eyes(img, l), GeometryError);
}

TEST_CASE("compute_crop_box: forced arithmetic, degenerate case, random oracle") {
  LandmarkSet l = spread_landmarks();
  l[li::kLeftEar] = {0.2, 0.1};
  l[li::kRightEar] = {0.8, 0.9};
  l[li::kTopOfHead] = {0.5, 0.1};
  l[li::kChin] = {0.5, 0.9};
  const Box b = compute_crop_box(l);
  CHECK(b.x0 == doctest::Approx(0.05));
  CHECK(b.x1 == doctest::Approx(0.95));
  CHECK(b.width() == doctest::Approx(0.9));
  CHECK(b.y0 == doctest::Approx(0.0));
  CHECK(b.y1 == doctest::Approx(1.0));

  LandmarkSet degenerate = spread_landmarks();
  degenerate[li::kLeftEar] = degenerate[li::kRightEar] = degenerate[li::kTopOfHead] =
      degenerate[li::kChin] = {0.5, 0.5};
  CHECK_THROWS_AS(compute_crop_box(degenerate), GeometryError);

  // brute-force min/max + scale oracle
  Rng rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    LandmarkSet r = spread_landmarks();
    for (int idx : {li::kLeftEar, li::kRightEar, li::kTopOfHead, li::kChin})
      r[idx] = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    double x0 = 1, x1 = 0, y0 = 1, y1 = 0;
    for (int idx : {li::kLeftEar, li::kRightEar, li::kTopOfHead, li::kChin}) {
      x0 = std::min(x0, r[idx].x);
      x1 = std::max(x1, r[idx].x);
      y0 = std::min(y0, r[idx].y);
      y1 = std::max(y1, r[idx].y);
    }
    if (x1 - x0 < 1e-9 || y1 - y0 < 1e-9) continue;
    const double cx = (x0 + x1) / 2, cy = (y0 + y1) / 2;
    const Box got = compute_crop_box(r);
    CHECK(got.x0 == doctest::Approx(std::max(0.0, cx - 0.75 * (x1 - x0))));
    CHECK(got.x1 == doctest::Approx(std::min(1.0, cx + 0.75 * (x1 - x0))));
    CHECK(got.y0 == doctest::Approx(std::max(0.0, cy - 0.75 * (y1 - y0))));
    CHECK(got.y1 == doctest::Approx(std::min(1.0, cy + 0.75 * (y1 - y0))));
  }
}

TEST_CASE("crop_and_resize: identity crop, constant image, checkerboard vs oracle") {
  Rng rng(52);
  Tensor img({3, 16, 16});
  for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform(-1, 1);
  const Tensor same = crop_and_resize(img, Box{0, 0, 1, 1}, 16);
  CHECK(carigen::testutil::max_abs_diff(same, img) == 0.0);

  const Tensor konst = crop_and_resize(Tensor::full({3, 16, 16}, 0.25), Box{0.1, 0.2, 0.8, 0.9}, 10);
  for (std::int64_t i = 0; i < konst.numel(); ++i) CHECK(konst[i] == doctest::Approx(0.25));

  // checkerboard, half crop, compared against an independent bilinear resampler
  Tensor board({3, 16, 16});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) board.at({c, y, x}) = ((x + y) % 2 == 0) ? 1.0 : -1.0;
  const Box half{0.25, 0.25, 0.75, 0.75};
  const int out_size = 12;
  const Tensor got = crop_and_resize(board, half, out_size);
  auto oracle_sample = [&](int c, double nx, double ny) {
    const double u = nx * 16 - 0.5, v = ny * 16 - 0.5;
    const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
    const double wx = u - x0, wy = v - y0;
    auto cl = [](int a) { return std::clamp(a, 0, 15); };
    const double v00 = board.at({c, cl(y0), cl(x0)});
    const double v01 = board.at({c, cl(y0), cl(x0 + 1)});
    const double v10 = board.at({c, cl(y0 + 1), cl(x0)});
    const double v11 = board.at({c, cl(y0 + 1), cl(x0 + 1)});
    return (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
  };
  double max_err = 0;
  for (int y = 0; y < out_size; ++y)
    for (int x = 0; x < out_size; ++x)
      for (int c = 0; c < 3; ++c) {
        const double nx = half.x0 + (x + 0.5) / out_size * half.width();
        const double ny = half.y0 + (y + 0.5) / out_size * half.height();
        max_err = std::max(max_err, std::abs(got.at({c, y, x}) - oracle_sample(c, nx, ny)));
      }
  CHECK(max_err < 1e-5);
}

TEST_CASE("make_split: sizes, determinism, seed sensitivity, disjointness") {
  std::vector<int> ids(252);
  for (int i = 0; i < 252; ++i) ids[i] = i;
  const DatasetSplit a = make_split(ids, 1, 202);
  CHECK(a.train_identities.size() == 202);
  CHECK(a.test_identities.size() == 50);

  const DatasetSplit b = make_split(ids, 1, 202);
  CHECK(a.train_identities == b.train_identities);
  CHECK(a.test_identities == b.test_identities);

  const DatasetSplit c = make_split(ids, 2, 202);
  CHECK(a.train_identities != c.train_identities);

  std::vector<int> all = a.train_identities;
  all.insert(all.end(), a.test_identities.begin(), a.test_identities.end());
  std::sort(all.begin(), all.end());
  CHECK(all == ids);

  CHECK_THROWS_AS(make_split(ids, 1, 252), DataError);
  CHECK_THROWS_AS(make_split(ids, 1, 0), DataError);
}

TEST_CASE("manifest: tab-separated parse and errors") {
  const fs::path dir = temp_dir("manifest");
  {
    std::ofstream out(dir / "m.tsv");
    out << "# comment\n";
    out << "a.png\ta.txt\t3\tphoto\n";
    out << "b.png\tb.txt\t4\tcaricature\n";
  }
  const auto rows = load_manifest((dir / "m.tsv").string());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].identity == 3);
  CHECK(rows[1].domain == Domain::caricature);

  {
    std::ofstream out(dir / "bad.tsv");
    out << "a.png\ta.txt\t3\tdog\n";
  }
  CHECK_THROWS_AS(load_manifest((dir / "bad.tsv").string()), DataError);
}

TEST_CASE("png round trip preserves 8-bit content") {
  const fs::path dir = temp_dir("png");
  Rng rng(53);
  Tensor img({3, 9, 13});
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img[i] = std::round(rng.uniform(0, 255)) / 255.0 * 2.0 - 1.0;
  write_png((dir / "x.png").string(), img);
  const Tensor back = read_png((dir / "x.png").string());
  CHECK(back.shape() == img.shape());
  CHECK(carigen::testutil::max_abs_diff(back, img) < 1e-12);
  CHECK_THROWS_AS(read_png((dir / "missing.png").string()), IoError);
}

TEST_CASE("processed cache round trip") {
  const fs::path dir = temp_dir("cache");
  auto pairs = synth_toy_dataset(2, 2, 32, 9);
  std::vector<PreprocessedSample> samples;
  for (auto& p : pairs) {
    samples.push_back(p.photo);
    samples.push_back(p.caricature);
  }
  write_cache(dir.string(), samples);
  const auto back = read_cache(dir.string());
  REQUIRE(back.size() == samples.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].identity == samples[i].identity);
    CHECK(back[i].domain == samples[i].domain);
    CHECK(carigen::testutil::max_abs_diff(back[i].image, samples[i].image) < 1.0 / 255.0 + 1e-9);
    for (int k = 0; k < LandmarkSet::kCount; ++k) {
      CHECK(back[i].landmarks[k].x == doctest::Approx(samples[i].landmarks[k].x));
      CHECK(back[i].landmarks[k].y == doctest::Approx(samples[i].landmarks[k].y));
    }
  }
}

TEST_CASE("toy dataset: shape contract, determinism, analytic chin landmark") {
  const auto pairs = synth_toy_dataset(8, 4, 32, 7);
  REQUIRE(pairs.size() == 32);
  for (const auto& p : pairs) {
    CHECK(p.photo.image.shape() == std::vector<int>{3, 32, 32});
    CHECK(p.caricature.image.shape() == std::vector<int>{3, 32, 32});
    CHECK(p.photo.landmarks.all_finite());
    CHECK(p.photo.identity == p.caricature.identity);
    for (std::int64_t i = 0; i < p.photo.image.numel(); ++i) {
      CHECK(p.photo.image[i] >= -1.0);
      CHECK(p.photo.image[i] <= 1.0);
    }
    // preprocessed invariant: eye centers share a row
    CHECK(p.photo.landmarks[li::kLeftEye].y ==
          doctest::Approx(p.photo.landmarks[li::kRightEye].y).epsilon(1e-9));
  }

  const auto again = synth_toy_dataset(8, 4, 32, 7);
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(carigen::testutil::max_abs_diff(again[i].photo.image, pairs[i].photo.image) == 0.0);
    CHECK(carigen::testutil::max_abs_diff(again[i].caricature.image, pairs[i].caricature.image) ==
          0.0);
  }
  const auto other = synth_toy_dataset(8, 4, 32, 8);
  CHECK(carigen::testutil::max_abs_diff(other[0].photo.image, pairs[0].photo.image) > 0.0);

  ToyFaceGeometry g;
  g.cx = 0.48;
  g.cy = 0.52;
  g.head_ry = 0.31;
  const LandmarkSet lm = g.landmarks();
  CHECK(lm[li::kChin].x == g.cx);
  CHECK(lm[li::kChin].y == g.cy + g.head_ry);
  CHECK(lm[li::kTopOfHead].y == g.cy - g.head_ry);
}

TEST_CASE("preprocessing is deterministic and keeps landmarks on their pixels") {
  // render dots at landmark positions, run the full preprocessing chain, and
  // recover the dot centers from the transformed image
  LandmarkSet l = spread_landmarks();
  l[li::kLeftEye] = {0.32, 0.35};
  l[li::kRightEye] = {0.62, 0.42};  // tilted eye line forces a real rotation
  const int in_size = 96;
  Tensor img = Tensor::full({3, in_size, in_size}, -1.0);
  // draw one bright dot at a probe landmark
  const int probe = li::kNoseTip;
  for (int y = 0; y < in_size; ++y)
    for (int x = 0; x < in_size; ++x) {
      const double d = std::hypot((x + 0.5) / in_size - l[probe].x,
                                  (y + 0.5) / in_size - l[probe].y);
      if (d < 2.5 / in_size)
        for (int c = 0; c < 3; ++c) img.at({c, y, x}) = 1.0;
    }

  const PreprocessedSample s1 = preprocess_sample(img, l, 0, Domain::photo, 64);
  const PreprocessedSample s2 = preprocess_sample(img, l, 0, Domain::photo, 64);
  CHECK(carigen::testutil::max_abs_diff(s1.image, s2.image) == 0.0);

  // centroid of bright pixels ~ transformed landmark
  double sx = 0, sy = 0, mass = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double v = (s1.image.at({0, y, x}) + 1.0) * 0.5;
      if (v > 0.25) {
        sx += v * (x + 0.5);
        sy += v * (y + 0.5);
        mass += v;
      }
    }
  REQUIRE(mass > 0);
  const double px = s1.landmarks[probe].x * 64, py = s1.landmarks[probe].y * 64;
  CHECK(std::abs(sx / mass - px) < 1.0);
  CHECK(std::abs(sy / mass - py) < 1.0);
}
