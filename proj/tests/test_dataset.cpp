#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <doctest.h>

#include "patchpose/dataset.hpp"
#include "patchpose/histogram.hpp"
#include "support/synth.hpp"

using namespace patchpose;
namespace fs = std::filesystem;

namespace {

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.patch_shape != b.patch_shape) return false;
  if (a.records.size() != b.records.size()) return false;
  for (size_t i = 0; i < a.records.size(); ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (ra.id != rb.id || ra.image != rb.image || ra.kp_x != rb.kp_x ||
        ra.kp_y != rb.kp_y || ra.pose.delta_s != rb.pose.delta_s ||
        ra.pose.delta_o != rb.pose.delta_o || ra.off_a != rb.off_a ||
        ra.off_b != rb.off_b || ra.crc_a != rb.crc_a || ra.crc_b != rb.crc_b)
      return false;
  }
  if (a.pack.size() != b.pack.size()) return false;
  return std::memcmp(a.pack.data(), b.pack.data(), a.pack.size() * sizeof(float)) == 0;
}

std::string keypoint_of(const PatchPairRecord& r) {
  return r.image + "|" + std::to_string(r.kp_x) + "|" + std::to_string(r.kp_y);
}

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("keypoints: constant image yields none") {
  const SourceImage img = SourceImage::filled(200, 200, 0.4f, 0.4f, 0.4f);
  CHECK(sample_keypoints(img, 5, 40).empty());
}

TEST_CASE("keypoints: planted checkerboard corners are found") {
  const std::vector<std::pair<int, int>> corners = {{80, 80}, {130, 90}, {95, 140}};
  const SourceImage img = synth::corner_image(220, 220, corners);
  const std::vector<Keypoint> kps = sample_keypoints(img, 3, 40);
  REQUIRE(kps.size() == 3);
  for (const auto& [cx, cy] : corners) {
    bool matched = false;
    for (const Keypoint& kp : kps)
      if (std::hypot(kp.x - cx, kp.y - cy) <= 2.0) matched = true;
    CHECK(matched);
  }
}

TEST_CASE("keypoints honor the margin predicate and spacing") {
  const SourceImage img = synth::textured_image(400, 400, 77);
  const int margin = 120;
  HarrisParams hp;
  hp.min_distance = 32;
  const std::vector<Keypoint> kps = sample_keypoints(img, 10, margin, hp);
  CHECK(!kps.empty());
  for (const Keypoint& kp : kps) {
    CHECK(!(kp.x < margin || kp.y < margin || kp.x > img.width - margin ||
            kp.y > img.height - margin));
  }
  for (size_t i = 0; i < kps.size(); ++i)
    for (size_t j = i + 1; j < kps.size(); ++j)
      CHECK(std::hypot(kps[i].x - kps[j].x, kps[i].y - kps[j].y) >= 32.0);
}

TEST_CASE("keypoints: margins that exclude everything throw") {
  const SourceImage img = synth::textured_image(100, 100, 7);
  CHECK_THROWS_AS(sample_keypoints(img, 3, 60), std::invalid_argument);
}

TEST_CASE("grid generation: one keypoint yields 48 exact-grid pairs") {
  // one strong corner in the valid band of a 420x420 canvas
  SourceImage img = synth::textured_image(420, 420, 99, 20);
  const SourceImage corner = synth::corner_image(420, 420, {{210, 210}}, 16);
  for (int y = 190; y < 230; ++y)
    for (int x = 190; x < 230; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = corner.at(y, x, c);

  GenConfig cfg;
  cfg.keypoints_per_image = 1;
  cfg.seed = 5;
  GenStats stats;
  const Dataset ds = generate_grid({img}, {"img0"}, cfg, &stats);
  CHECK(stats.keypoints == 1);
  CHECK(stats.keypoints_skipped == 0);
  REQUIRE(ds.size() == 48);

  const BinSpec ss = BinSpec::scale();
  const BinSpec os = BinSpec::orientation();
  int identity_pairs = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    const RelativePose& pose = ds.records[i].pose;
    // exactly one axis varies, and its value sits exactly on a grid center
    if (pose.delta_o == 0.0) {
      bool on_grid = false;
      for (int b = 0; b < ss.count; ++b) on_grid |= pose.delta_s == ss.center(b);
      CHECK(on_grid);
    } else {
      CHECK(pose.delta_s == 0.0);
      bool on_grid = false;
      for (int b = 1; b < os.count; ++b) on_grid |= pose.delta_o == os.center(b);
      CHECK(on_grid);
    }
    if (pose.delta_s == 0.0 && pose.delta_o == 0.0) {
      ++identity_pairs;
      const Patch a = ds.patch_a(i);
      const Patch b = ds.patch_b(i);
      CHECK(std::memcmp(a.values.data(), b.values.data(),
                        a.values.size() * sizeof(float)) == 0);
    }
  }
  CHECK(identity_pairs == 1);

  // determinism
  const Dataset again = generate_grid({img}, {"img0"}, cfg, nullptr);
  CHECK(datasets_equal(ds, again));
}

TEST_CASE("continuous generation: ranges, determinism, mean of delta_s") {
  const SourceImage img = synth::textured_image(420, 420, 13);
  GenConfig cfg;
  cfg.mode = GenConfig::Mode::ContinuousB;
  cfg.keypoints_per_image = 1;
  cfg.pairs = 10000;
  cfg.seed = 123;
  const Dataset ds = generate_continuous({img}, {"img0"}, cfg);
  REQUIRE(ds.size() == 10000);

  double mean_ds = 0.0;
  for (const auto& r : ds.records) {
    CHECK(r.pose.delta_s >= -2.0);
    CHECK(r.pose.delta_s <= 2.0);
    CHECK(r.pose.delta_o >= 0.0);
    CHECK(r.pose.delta_o < kTwoPi);
    mean_ds += r.pose.delta_s;
  }
  mean_ds /= static_cast<double>(ds.size());
  CHECK(std::abs(mean_ds) < 0.05);

  const Dataset again = generate_continuous({img}, {"img0"}, cfg);
  CHECK(datasets_equal(ds, again));
}

TEST_CASE("discriminability: constant patches score zero") {
  CHECK(discriminability(synth::constant_patch(0.5f)) == 0.0);
  CHECK(discriminability(synth::constant_patch(0.0f)) == 0.0);
  const double edge_sigma = discriminability(synth::edge_patch());
  CHECK(edge_sigma > 0.0);
}

TEST_CASE("discriminability matches a sum-of-squares oracle") {
  const Patch patch = synth::random_patch(555);
  const DiscriminabilityConfig cfg;
  const double sigma = discriminability(patch, cfg);

  // independent route: accumulate sums and squared sums per dimension
  const BinSpec ss = BinSpec::scale(cfg.scale_bins);
  const BinSpec os = BinSpec::orientation(cfg.orientation_bins);
  std::vector<double> sum, sumsq;
  size_t count = 0;
  for (int i = 0; i < cfg.scale_bins; ++i)
    for (int j = 0; j < cfg.orientation_bins; ++j) {
      const std::vector<double> f =
          patch_descriptor(warp_patch(patch, std::exp2(ss.center(i)), os.center(j)), cfg);
      if (sum.empty()) {
        sum.assign(f.size(), 0.0);
        sumsq.assign(f.size(), 0.0);
      }
      for (size_t d = 0; d < f.size(); ++d) {
        sum[d] += f[d];
        sumsq[d] += f[d] * f[d];
      }
      ++count;
    }
  CHECK(count == 468);
  double total = 0.0;
  for (size_t d = 0; d < sum.size(); ++d)
    total += sumsq[d] - sum[d] * sum[d] / static_cast<double>(count);
  CHECK(std::abs(sigma - std::sqrt(std::max(0.0, total))) < 1e-9);
}

TEST_CASE("warp_patch keeps constant patches constant") {
  const Patch c = synth::constant_patch(0.7f, 16);
  const Patch w = warp_patch(c, 2.0, 1.1);
  for (float v : w.values) CHECK(v == doctest::Approx(0.7f).epsilon(1e-6));
}

TEST_CASE("prune removes exactly the lowest-sigma keypoints") {
  // 10 single-pair keypoints: mixed constant and textured patches
  std::mt19937_64 rng(31);
  const Dataset ds = synth::fake_dataset(
      10, 1, 16, [](int, int) { return RelativePose{0.0, 0.0}; },
      [&](int kp, int) {
        if (kp % 3 == 0) return synth::constant_patch(0.2f + 0.05f * kp, 16);
        return synth::random_patch(1000 + kp, 16);
      });

  DiscriminabilityConfig dcfg;
  std::vector<std::pair<double, std::int64_t>> ranked;  // (sigma, first id)
  std::map<std::string, bool> seen;
  for (size_t i = 0; i < ds.size(); ++i) {
    const std::string key = keypoint_of(ds.records[i]);
    if (seen[key]) continue;
    seen[key] = true;
    ranked.push_back({discriminability(ds.patch_a(i), dcfg), ds.records[i].id});
  }
  std::sort(ranked.begin(), ranked.end());

  const Dataset pruned = prune(ds, 0.2, dcfg);
  CHECK(pruned.size() == 8);
  std::set<std::int64_t> kept;
  for (const auto& r : pruned.records) kept.insert(r.id);
  // the two lowest-sigma keypoints are gone, everything else survives
  CHECK(kept.count(ranked[0].second) == 0);
  CHECK(kept.count(ranked[1].second) == 0);
  for (size_t i = 2; i < ranked.size(); ++i) CHECK(kept.count(ranked[i].second) == 1);

  // constant patches (sigma 0) rank below every textured one
  CHECK(ranked[0].first == 0.0);
  CHECK(ranked[1].first == 0.0);
  CHECK(ranked.back().first > 0.0);
}

TEST_CASE("prune fraction 0 is the identity") {
  const Dataset ds = synth::fake_dataset(
      4, 3, 8, [](int kp, int j) { return RelativePose{0.1 * kp, 0.2 * j}; },
      [](int kp, int j) { return synth::random_patch(kp * 100 + j, 8); });
  const Dataset same = prune(ds, 0.0);
  CHECK(datasets_equal(ds, same));
  CHECK_THROWS_AS(prune(ds, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(prune(ds, -0.1), std::invalid_argument);
}

TEST_CASE("split partitions keypoints 98:1:1") {
  const Dataset ds = synth::fake_dataset(
      100, 2, 8, [](int kp, int j) { return RelativePose{0.0, 0.1 * j + kp * 0.001}; },
      [](int kp, int j) { return synth::random_patch(kp * 50 + j + 7, 8); });
  const SplitResult sr = split(ds, {0.98, 0.01, 0.01}, 9);

  auto keypoints_of = [](const Dataset& d) {
    std::set<std::string> keys;
    for (const auto& r : d.records) keys.insert(keypoint_of(r));
    return keys;
  };
  const auto train_k = keypoints_of(sr.train);
  const auto val_k = keypoints_of(sr.val);
  const auto test_k = keypoints_of(sr.test);
  CHECK(train_k.size() == 98);
  CHECK(val_k.size() == 1);
  CHECK(test_k.size() == 1);

  // disjoint keypoints, union covers all records
  for (const auto& k : val_k) CHECK(train_k.count(k) == 0);
  for (const auto& k : test_k) CHECK(train_k.count(k) == 0);
  for (const auto& k : test_k) CHECK(val_k.count(k) == 0);
  CHECK(sr.train.size() + sr.val.size() + sr.test.size() == ds.size());

  std::set<std::int64_t> ids;
  for (const Dataset* d : {&sr.train, &sr.val, &sr.test})
    for (const auto& r : d->records) CHECK(ids.insert(r.id).second);
  CHECK(ids.size() == ds.size());

  // determinism
  const SplitResult again = split(ds, {0.98, 0.01, 0.01}, 9);
  CHECK(datasets_equal(sr.train, again.train));
  CHECK(datasets_equal(sr.val, again.val));
  CHECK(datasets_equal(sr.test, again.test));

  // a different seed moves keypoints around
  const SplitResult other = split(ds, {0.98, 0.01, 0.01}, 10);
  CHECK((keypoints_of(other.val) != val_k || keypoints_of(other.test) != test_k));
}

TEST_CASE("split errors") {
  const Dataset ds = synth::fake_dataset(
      2, 1, 8, [](int, int) { return RelativePose{}; },
      [](int kp, int j) { return synth::random_patch(kp * 5 + j, 8); });
  CHECK_THROWS_AS(split(ds, {0.98, 0.01, 0.01}, 1), std::runtime_error);
  CHECK_THROWS_AS(split(ds, {0.5, 0.2, 0.2}, 1), std::invalid_argument);
}

TEST_CASE("save/load round trip") {
  const fs::path dir = fs::temp_directory_path() / "patchpose_ds_test";
  fs::remove_all(dir);

  SUBCASE("empty dataset") {
    Dataset empty;
    empty.patch_shape = {3, 16, 16};
    save(empty, (dir / "empty").string());
    const Dataset back = load((dir / "empty").string());
    CHECK(back.empty());
    CHECK(back.patch_shape == std::array<int, 3>{3, 16, 16});
  }

  SUBCASE("single record") {
    const Dataset ds = synth::fake_dataset(
        1, 1, 8, [](int, int) { return RelativePose{-0.75, 2.5}; },
        [](int kp, int j) { return synth::random_patch(kp + j + 3, 8); });
    save(ds, (dir / "one").string());
    const Dataset back = load((dir / "one").string());
    CHECK(datasets_equal(ds, back));
  }

  SUBCASE("many records with shared reference patches") {
    const Dataset ds = synth::fake_dataset(
        5, 4, 8,
        [](int kp, int j) {
          return RelativePose{0.25 * kp - 0.5, std::fmod(0.7 * j + kp, kTwoPi)};
        },
        [](int kp, int j) { return synth::random_patch(kp * 97 + j, 8); });
    save(ds, (dir / "many").string());
    const Dataset back = load((dir / "many").string());
    CHECK(datasets_equal(ds, back));
  }

  fs::remove_all(dir);
}

TEST_CASE("load rejects corruption") {
  const fs::path dir = fs::temp_directory_path() / "patchpose_corrupt_test";
  fs::remove_all(dir);
  const Dataset ds = synth::fake_dataset(
      2, 2, 8, [](int, int j) { return RelativePose{0.0, 0.5 * j}; },
      [](int kp, int j) { return synth::random_patch(kp * 11 + j, 8); });
  save(ds, dir.string());

  SUBCASE("flipped pack byte fails the checksum") {
    const fs::path pack = dir / "patches.pack";
    std::fstream f(pack, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    char byte;
    f.seekg(100);
    f.read(&byte, 1);
    byte = static_cast<char>(byte ^ 0x40);
    f.seekp(100);
    f.write(&byte, 1);
    f.close();
    CHECK_THROWS_WITH_AS(load(dir.string()), doctest::Contains("checksum"),
                         std::runtime_error);
  }

  SUBCASE("truncated pack") {
    fs::resize_file(dir / "patches.pack", 64);
    CHECK_THROWS_WITH_AS(load(dir.string()), doctest::Contains("truncated"),
                         std::runtime_error);
  }

  SUBCASE("wrong version") {
    std::ifstream in(dir / "manifest.jsonl");
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const size_t pos = all.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    all.replace(pos, 11, "\"version\":9");
    std::ofstream out(dir / "manifest.jsonl", std::ios::trunc);
    out << all;
    out.close();
    CHECK_THROWS_WITH_AS(load(dir.string()), doctest::Contains("version"),
                         std::runtime_error);
  }

  SUBCASE("wrong format string") {
    std::ifstream in(dir / "manifest.jsonl");
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const size_t pos = all.find("patchpose-pack");
    REQUIRE(pos != std::string::npos);
    all.replace(pos, 14, "something-else");
    std::ofstream out(dir / "manifest.jsonl", std::ios::trunc);
    out << all;
    out.close();
    CHECK_THROWS_WITH_AS(load(dir.string()), doctest::Contains("format"),
                         std::runtime_error);
  }

  fs::remove_all(dir);
}

TEST_SUITE_END();
