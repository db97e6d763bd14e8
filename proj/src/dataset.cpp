#include "patchpose/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>

#include <zlib.h>

#include <json.hpp>

#include "patchpose/image_io.hpp"
#include "patchpose/parallel.hpp"

namespace patchpose {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::uint32_t patch_crc32(const float* data, size_t count) {
  static_assert(std::endian::native == std::endian::little,
                "pack format is little-endian; add byte swapping for this platform");
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data),
              static_cast<uInt>(count * sizeof(float)));
  return static_cast<std::uint32_t>(crc);
}

Patch Dataset::patch_at_offset(std::int64_t byte_offset) const {
  const size_t n = patch_floats();
  if (byte_offset < 0 || byte_offset % sizeof(float) != 0 ||
      static_cast<size_t>(byte_offset) / sizeof(float) + n > pack.size())
    throw std::out_of_range("Dataset: patch offset outside pack");
  Patch p;
  p.channels = patch_shape[0];
  p.height = patch_shape[1];
  p.width = patch_shape[2];
  const float* src = pack.data() + byte_offset / sizeof(float);
  p.values.assign(src, src + n);
  return p;
}

Patch Dataset::patch_a(size_t record_index) const {
  return patch_at_offset(records.at(record_index).off_a);
}

Patch Dataset::patch_b(size_t record_index) const {
  return patch_at_offset(records.at(record_index).off_b);
}

int GenConfig::margin() const {
  return static_cast<int>(std::ceil(crop_size * 4.0 * std::sqrt(2.0) / 2.0));
}

// ---------------------------------------------------------------------------
// Keypoint sampling
// ---------------------------------------------------------------------------

namespace {

std::vector<float> to_gray(const SourceImage& img) {
  std::vector<float> g(static_cast<size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      g[static_cast<size_t>(y) * img.width + x] = 0.299f * img.at(y, x, 0) +
                                                  0.587f * img.at(y, x, 1) +
                                                  0.114f * img.at(y, x, 2);
  return g;
}

// Separable binomial blur {1,4,6,4,1}/16, replicate edges.
void blur5(std::vector<double>& buf, int w, int h) {
  static constexpr double kw[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  std::vector<double> tmp(buf.size());
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -2; t <= 2; ++t) acc += kw[t + 2] * buf[static_cast<size_t>(y) * w + clampi(x + t, 0, w - 1)];
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -2; t <= 2; ++t) acc += kw[t + 2] * tmp[static_cast<size_t>(clampi(y + t, 0, h - 1)) * w + x];
      buf[static_cast<size_t>(y) * w + x] = acc;
    }
}

}  // namespace

std::vector<Keypoint> sample_keypoints(const SourceImage& img, int k, int margin,
                                       const HarrisParams& params) {
  const int w = img.width, h = img.height;
  if (margin < 0) throw std::invalid_argument("sample_keypoints: negative margin");
  if (w - margin < margin || h - margin < margin)
    throw std::invalid_argument("sample_keypoints: margins exclude the whole image (" +
                                std::to_string(w) + "x" + std::to_string(h) +
                                ", margin " + std::to_string(margin) + ")");
  if (k <= 0) return {};

  const std::vector<float> gray = to_gray(img);
  auto g = [&](int y, int x) {
    x = x < 0 ? 0 : (x >= w ? w - 1 : x);
    y = y < 0 ? 0 : (y >= h ? h - 1 : y);
    return static_cast<double>(gray[static_cast<size_t>(y) * w + x]);
  };

  std::vector<double> sxx(gray.size()), syy(gray.size()), sxy(gray.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double ix = 0.5 * (g(y, x + 1) - g(y, x - 1));
      const double iy = 0.5 * (g(y + 1, x) - g(y - 1, x));
      const size_t i = static_cast<size_t>(y) * w + x;
      sxx[i] = ix * ix;
      syy[i] = iy * iy;
      sxy[i] = ix * iy;
    }
  blur5(sxx, w, h);
  blur5(syy, w, h);
  blur5(sxy, w, h);

  std::vector<double> resp(gray.size());
  for (size_t i = 0; i < resp.size(); ++i) {
    const double det = sxx[i] * syy[i] - sxy[i] * sxy[i];
    const double tr = sxx[i] + syy[i];
    resp[i] = det - params.k * tr * tr;
  }

  // 3x3 local maxima inside the margin band, above the absolute floor.
  struct Candidate {
    double r;
    int x, y;
  };
  std::vector<Candidate> cands;
  const int x_lo = std::max(margin, 1), x_hi = std::min(w - margin, w - 2);
  const int y_lo = std::max(margin, 1), y_hi = std::min(h - margin, h - 2);
  for (int y = y_lo; y <= y_hi; ++y)
    for (int x = x_lo; x <= x_hi; ++x) {
      const double r = resp[static_cast<size_t>(y) * w + x];
      if (r <= params.response_floor) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (resp[static_cast<size_t>(y + dy) * w + (x + dx)] > r) {
            is_max = false;
            break;
          }
        }
      if (is_max) cands.push_back({r, x, y});
    }

  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.r != b.r) return a.r > b.r;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  std::vector<Keypoint> out;
  const double min_d2 = static_cast<double>(params.min_distance) * params.min_distance;
  for (const Candidate& c : cands) {
    if (static_cast<int>(out.size()) >= k) break;
    bool ok = true;
    for (const Keypoint& kp : out) {
      const double dx = kp.x - c.x, dy = kp.y - c.y;
      if (dx * dx + dy * dy < min_d2) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back({static_cast<double>(c.x), static_cast<double>(c.y)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pair generation
// ---------------------------------------------------------------------------

namespace {

struct PendingPair {
  RelativePose pose;
  Patch b;
};

struct PendingKeypoint {
  std::string image;
  Keypoint kp;
  Patch ref;
  std::vector<PendingPair> pairs;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Dataset assemble(std::vector<PendingKeypoint>&& kps, int output_size) {
  Dataset ds;
  ds.patch_shape = {3, output_size, output_size};
  const size_t n = ds.patch_floats();
  size_t total_patches = 0;
  size_t total_pairs = 0;
  for (const auto& pk : kps) {
    total_patches += 1 + pk.pairs.size();
    total_pairs += pk.pairs.size();
  }
  ds.pack.reserve(total_patches * n);
  ds.records.reserve(total_pairs);

  std::int64_t next_id = 0;
  for (const auto& pk : kps) {
    const std::int64_t off_a = static_cast<std::int64_t>(ds.pack.size() * sizeof(float));
    ds.pack.insert(ds.pack.end(), pk.ref.values.begin(), pk.ref.values.end());
    const std::uint32_t crc_a = patch_crc32(pk.ref.values.data(), n);
    for (const auto& pr : pk.pairs) {
      const std::int64_t off_b = static_cast<std::int64_t>(ds.pack.size() * sizeof(float));
      ds.pack.insert(ds.pack.end(), pr.b.values.begin(), pr.b.values.end());
      PatchPairRecord rec;
      rec.id = next_id++;
      rec.image = pk.image;
      rec.kp_x = pk.kp.x;
      rec.kp_y = pk.kp.y;
      rec.pose = pr.pose;
      rec.off_a = off_a;
      rec.off_b = off_b;
      rec.crc_a = crc_a;
      rec.crc_b = patch_crc32(pr.b.values.data(), n);
      ds.records.push_back(std::move(rec));
    }
  }
  return ds;
}

void check_names(const std::vector<SourceImage>& images,
                 const std::vector<std::string>& names) {
  if (images.size() != names.size())
    throw std::invalid_argument("generate: images and names differ in length");
}

// The one-axis-varies transform list: all scale grid values at zero rotation,
// plus all nonzero rotations at unit scale. Identity appears exactly once.
std::vector<RelativePose> grid_transforms(int scale_bins, int orientation_bins) {
  const BinSpec ss = BinSpec::scale(scale_bins);
  const BinSpec os = BinSpec::orientation(orientation_bins);
  std::vector<RelativePose> out;
  for (int i = 0; i < scale_bins; ++i) out.push_back({ss.center(i), 0.0});
  for (int j = 1; j < orientation_bins; ++j) out.push_back({0.0, os.center(j)});
  return out;
}

}  // namespace

Dataset generate_grid(const std::vector<SourceImage>& images,
                      const std::vector<std::string>& names, const GenConfig& cfg,
                      GenStats* stats) {
  check_names(images, names);
  const std::vector<RelativePose> transforms =
      grid_transforms(cfg.scale_bins, cfg.orientation_bins);

  std::vector<std::vector<PendingKeypoint>> per_image(images.size());
  std::vector<size_t> skipped(images.size(), 0);
  HarrisParams hp;
  hp.min_distance = cfg.min_keypoint_distance;

  parallel_for(images.size(), cfg.threads, [&](size_t i) {
    const std::vector<Keypoint> kps =
        sample_keypoints(images[i], cfg.keypoints_per_image, cfg.margin(), hp);
    for (const Keypoint& kp : kps) {
      try {
        PendingKeypoint pk;
        pk.image = names[i];
        pk.kp = kp;
        pk.ref = warp_extract(images[i], kp.x, kp.y, 1.0, 0.0, cfg.crop_size,
                              cfg.output_size);
        for (const RelativePose& t : transforms) {
          PendingPair pr;
          pr.pose = t;
          pr.b = warp_extract(images[i], kp.x, kp.y, std::exp2(t.delta_s), t.delta_o,
                              cfg.crop_size, cfg.output_size);
          pk.pairs.push_back(std::move(pr));
        }
        per_image[i].push_back(std::move(pk));
      } catch (const std::out_of_range&) {
        ++skipped[i];  // worst-case footprint left the image
      }
    }
  });

  std::vector<PendingKeypoint> all;
  size_t total_skipped = 0, total_kps = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    total_skipped += skipped[i];
    total_kps += per_image[i].size();
    for (auto& pk : per_image[i]) all.push_back(std::move(pk));
  }
  if (stats) *stats = {images.size(), total_kps, total_skipped};
  return assemble(std::move(all), cfg.output_size);
}

Dataset generate_continuous(const std::vector<SourceImage>& images,
                            const std::vector<std::string>& names, const GenConfig& cfg,
                            GenStats* stats) {
  check_names(images, names);
  HarrisParams hp;
  hp.min_distance = cfg.min_keypoint_distance;

  // Keypoints and reference patches first, in image order.
  struct KpRef {
    size_t image_index;
    Keypoint kp;
    Patch ref;
  };
  std::vector<std::vector<KpRef>> per_image(images.size());
  std::vector<size_t> skipped(images.size(), 0);
  parallel_for(images.size(), cfg.threads, [&](size_t i) {
    for (const Keypoint& kp :
         sample_keypoints(images[i], cfg.keypoints_per_image, cfg.margin(), hp)) {
      try {
        per_image[i].push_back(
            {i, kp, warp_extract(images[i], kp.x, kp.y, 1.0, 0.0, cfg.crop_size, cfg.output_size)});
      } catch (const std::out_of_range&) {
        ++skipped[i];
      }
    }
  });
  std::vector<KpRef> kps;
  size_t total_skipped = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    total_skipped += skipped[i];
    for (auto& kr : per_image[i]) kps.push_back(std::move(kr));
  }
  if (stats) *stats = {images.size(), kps.size(), total_skipped};
  if (kps.empty() || cfg.pairs <= 0) {
    Dataset empty;
    empty.patch_shape = {3, cfg.output_size, cfg.output_size};
    return empty;
  }

  // Pair j belongs to keypoint j % K and owns an independent RNG stream, so
  // generation is reproducible regardless of worker count.
  const size_t total = static_cast<size_t>(cfg.pairs);
  std::vector<PendingPair> pairs(total);
  std::vector<char> dropped(total, 0);
  parallel_for(total, cfg.threads, [&](size_t j) {
    const KpRef& kr = kps[j % kps.size()];
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(j + 1)));
    std::uniform_real_distribution<double> scale_dist(-2.0, 2.0);
    std::uniform_real_distribution<double> angle_dist(0.0, kTwoPi);
    const double ds = scale_dist(rng);
    const double ang = angle_dist(rng);
    try {
      pairs[j].pose = RelativePose{ds, ang};
      pairs[j].b = warp_extract(images[kr.image_index], kr.kp.x, kr.kp.y, std::exp2(ds),
                                ang, cfg.crop_size, cfg.output_size);
    } catch (const std::out_of_range&) {
      dropped[j] = 1;
    }
  });

  std::vector<PendingKeypoint> all(kps.size());
  for (size_t i = 0; i < kps.size(); ++i) {
    all[i].image = names[kps[i].image_index];
    all[i].kp = kps[i].kp;
    all[i].ref = std::move(kps[i].ref);
  }
  for (size_t j = 0; j < total; ++j)
    if (!dropped[j]) all[j % kps.size()].pairs.push_back(std::move(pairs[j]));
  return assemble(std::move(all), cfg.output_size);
}

namespace {

std::vector<SourceImage> load_all(const std::vector<std::string>& paths) {
  std::vector<SourceImage> images(paths.size());
  for (size_t i = 0; i < paths.size(); ++i) images[i] = load_image(paths[i]);
  return images;
}

}  // namespace

Dataset generate_grid(const std::vector<std::string>& image_paths, const GenConfig& cfg,
                      GenStats* stats) {
  return generate_grid(load_all(image_paths), image_paths, cfg, stats);
}

Dataset generate_continuous(const std::vector<std::string>& image_paths,
                            const GenConfig& cfg, GenStats* stats) {
  return generate_continuous(load_all(image_paths), image_paths, cfg, stats);
}

// ---------------------------------------------------------------------------
// Discriminability pruning
// ---------------------------------------------------------------------------

std::vector<double> patch_descriptor(const Patch& patch, const DiscriminabilityConfig& cfg) {
  const int grid = cfg.descriptor_grid;
  const int obins = cfg.descriptor_orientations;
  const int h = patch.height, w = patch.width;
  std::vector<double> gray(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      gray[static_cast<size_t>(y) * w + x] =
          (patch.at(0, y, x) + patch.at(1, y, x) + patch.at(2, y, x)) / 3.0;

  auto g = [&](int y, int x) {
    x = x < 0 ? 0 : (x >= w ? w - 1 : x);
    y = y < 0 ? 0 : (y >= h ? h - 1 : y);
    return gray[static_cast<size_t>(y) * w + x];
  };

  std::vector<double> desc(static_cast<size_t>(grid) * grid * obins, 0.0);
  const double bin_width = kTwoPi / obins;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (g(y, x + 1) - g(y, x - 1));
      const double gy = 0.5 * (g(y + 1, x) - g(y - 1, x));
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double ang = std::atan2(gy, gx);
      if (ang < 0.0) ang += kTwoPi;
      int bin = static_cast<int>(ang / bin_width);
      if (bin >= obins) bin = obins - 1;
      const int cy = std::min(y * grid / h, grid - 1);
      const int cx = std::min(x * grid / w, grid - 1);
      desc[static_cast<size_t>((cy * grid + cx) * obins + bin)] += mag;
    }
  }
  return desc;
}

Patch warp_patch(const Patch& patch, double scale_factor, double angle) {
  const int h = patch.height, w = patch.width;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double inv_s = 1.0 / scale_factor;
  const double c = std::cos(angle), s = std::sin(angle);
  Patch out = Patch::zeros(h, w, patch.channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sx = cx + inv_s * (c * (x - cx) + s * (y - cy));
      double sy = cy + inv_s * (-s * (x - cx) + c * (y - cy));
      sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
      sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
      const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
      const int x1 = x0 + 1 < w ? x0 + 1 : x0;
      const int y1 = y0 + 1 < h ? y0 + 1 : y0;
      const double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < patch.channels; ++ch) {
        const double v = (1 - fx) * (1 - fy) * patch.at(ch, y0, x0) +
                         fx * (1 - fy) * patch.at(ch, y0, x1) +
                         (1 - fx) * fy * patch.at(ch, y1, x0) + fx * fy * patch.at(ch, y1, x1);
        out.at(ch, y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

double discriminability(const Patch& patch, const DiscriminabilityConfig& cfg) {
  const BinSpec ss = BinSpec::scale(cfg.scale_bins);
  const BinSpec os = BinSpec::orientation(cfg.orientation_bins);

  std::vector<std::vector<double>> feats;
  feats.reserve(static_cast<size_t>(cfg.scale_bins) * cfg.orientation_bins);
  for (int i = 0; i < cfg.scale_bins; ++i)
    for (int j = 0; j < cfg.orientation_bins; ++j)
      feats.push_back(patch_descriptor(warp_patch(patch, std::exp2(ss.center(i)), os.center(j)), cfg));

  const size_t dims = feats.front().size();
  std::vector<double> mean(dims, 0.0);
  for (const auto& f : feats)
    for (size_t d = 0; d < dims; ++d) mean[d] += f[d];
  for (double& m : mean) m /= static_cast<double>(feats.size());

  double total = 0.0;
  for (const auto& f : feats)
    for (size_t d = 0; d < dims; ++d) {
      const double diff = f[d] - mean[d];
      total += diff * diff;
    }
  return std::sqrt(total);
}

// ---------------------------------------------------------------------------
// Prune / split / persistence
// ---------------------------------------------------------------------------

namespace {

struct KeypointGroup {
  std::string key;
  std::int64_t first_id;
  std::int64_t ref_offset;
  std::vector<size_t> record_indices;
};

std::string keypoint_key(const PatchPairRecord& r) {
  return r.image + "\x1f" + std::to_string(r.kp_x) + "," + std::to_string(r.kp_y);
}

// Groups records by source keypoint, first-appearance order.
std::vector<KeypointGroup> group_by_keypoint(const Dataset& ds) {
  std::vector<KeypointGroup> groups;
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < ds.records.size(); ++i) {
    const std::string key = keypoint_key(ds.records[i]);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, groups.size());
      groups.push_back({key, ds.records[i].id, ds.records[i].off_a, {i}});
    } else {
      groups[it->second].record_indices.push_back(i);
    }
  }
  return groups;
}

// New dataset holding the given records (original order); patches shared by
// several records are stored once.
Dataset subset(const Dataset& ds, const std::vector<size_t>& record_indices) {
  Dataset out;
  out.patch_shape = ds.patch_shape;
  const size_t n = ds.patch_floats();
  std::map<std::int64_t, std::int64_t> relocated;
  auto place = [&](std::int64_t old_off) {
    auto it = relocated.find(old_off);
    if (it != relocated.end()) return it->second;
    const std::int64_t new_off = static_cast<std::int64_t>(out.pack.size() * sizeof(float));
    const float* src = ds.pack.data() + old_off / static_cast<std::int64_t>(sizeof(float));
    out.pack.insert(out.pack.end(), src, src + n);
    relocated.emplace(old_off, new_off);
    return new_off;
  };
  for (size_t i : record_indices) {
    PatchPairRecord rec = ds.records[i];
    rec.off_a = place(rec.off_a);
    rec.off_b = place(rec.off_b);
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

Dataset prune(const Dataset& ds, double fraction, const DiscriminabilityConfig& cfg,
              int threads) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw std::invalid_argument("prune: fraction must be in [0, 1)");
  std::vector<KeypointGroup> groups = group_by_keypoint(ds);
  const size_t remove = static_cast<size_t>(std::floor(fraction * groups.size() + 1e-9));
  if (remove == 0) return subset(ds, [&] {
           std::vector<size_t> all(ds.records.size());
           for (size_t i = 0; i < all.size(); ++i) all[i] = i;
           return all;
         }());

  std::vector<double> sigma(groups.size());
  parallel_for(groups.size(), threads, [&](size_t i) {
    sigma[i] = discriminability(ds.patch_at_offset(groups[i].ref_offset), cfg);
  });

  std::vector<size_t> order(groups.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (sigma[a] != sigma[b]) return sigma[a] < sigma[b];
    return groups[a].first_id < groups[b].first_id;
  });

  std::vector<char> removed(groups.size(), 0);
  for (size_t i = 0; i < remove; ++i) removed[order[i]] = 1;

  std::vector<size_t> keep;
  for (size_t gi = 0; gi < groups.size(); ++gi)
    if (!removed[gi])
      keep.insert(keep.end(), groups[gi].record_indices.begin(),
                  groups[gi].record_indices.end());
  std::sort(keep.begin(), keep.end());
  return subset(ds, keep);
}

SplitResult split(const Dataset& ds, const std::array<double, 3>& ratios,
                  std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must sum to 1");
  std::vector<KeypointGroup> groups = group_by_keypoint(ds);
  const size_t k = groups.size();

  // Largest-remainder apportionment of keypoints to splits.
  std::array<size_t, 3> counts{};
  std::array<double, 3> frac{};
  size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double q = ratios[s] * static_cast<double>(k);
    counts[s] = static_cast<size_t>(std::floor(q + 1e-9));
    frac[s] = q - static_cast<double>(counts[s]);
    assigned += counts[s];
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return a < b;
  });
  for (size_t r = 0; assigned < k; ++r, ++assigned) counts[order[r % 3]] += 1;
  for (int s = 0; s < 3; ++s)
    if (counts[s] == 0)
      throw std::runtime_error("split: split " + std::to_string(s) +
                               " would receive zero keypoints (" + std::to_string(k) +
                               " available)");

  std::vector<size_t> perm(k);
  for (size_t i = 0; i < k; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::array<std::vector<size_t>, 3> members;
  size_t cursor = 0;
  for (int s = 0; s < 3; ++s)
    for (size_t i = 0; i < counts[s]; ++i) members[s].push_back(perm[cursor++]);

  SplitResult result;
  Dataset* outs[3] = {&result.train, &result.val, &result.test};
  for (int s = 0; s < 3; ++s) {
    std::vector<size_t> keep;
    for (size_t gi : members[s])
      keep.insert(keep.end(), groups[gi].record_indices.begin(),
                  groups[gi].record_indices.end());
    std::sort(keep.begin(), keep.end());
    *outs[s] = subset(ds, keep);
  }
  return result;
}

namespace {

constexpr const char* kManifestName = "manifest.jsonl";
constexpr const char* kPackName = "patches.pack";
constexpr int kFormatVersion = 1;

}  // namespace

void save(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / kManifestName, std::ios::binary);
  if (!manifest) throw std::runtime_error("save: cannot write manifest in " + dir);

  ordered_json header;
  header["format"] = "patchpose-pack";
  header["version"] = kFormatVersion;
  header["patch"] = ds.patch_shape;
  manifest << header.dump() << "\n";
  for (const PatchPairRecord& r : ds.records) {
    ordered_json j;
    j["id"] = r.id;
    j["img"] = r.image;
    j["kp"] = {r.kp_x, r.kp_y};
    j["ds"] = r.pose.delta_s;
    j["do"] = r.pose.delta_o;
    j["off_a"] = r.off_a;
    j["off_b"] = r.off_b;
    j["crc_a"] = r.crc_a;
    j["crc_b"] = r.crc_b;
    manifest << j.dump() << "\n";
  }
  manifest.close();
  if (!manifest) throw std::runtime_error("save: manifest write failed in " + dir);

  std::ofstream pack(fs::path(dir) / kPackName, std::ios::binary);
  if (!pack) throw std::runtime_error("save: cannot write pack in " + dir);
  static_assert(std::endian::native == std::endian::little);
  pack.write(reinterpret_cast<const char*>(ds.pack.data()),
             static_cast<std::streamsize>(ds.pack.size() * sizeof(float)));
  pack.close();
  if (!pack) throw std::runtime_error("save: pack write failed in " + dir);
}

Dataset load(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / kManifestName, std::ios::binary);
  if (!manifest) throw std::runtime_error("load: cannot open manifest in " + dir);

  std::string line;
  if (!std::getline(manifest, line))
    throw std::runtime_error("load: empty manifest in " + dir);
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "patchpose-pack")
    throw std::runtime_error("load: format mismatch in manifest header");
  if (header.value("version", -1) != kFormatVersion)
    throw std::runtime_error("load: unsupported format version " +
                             header.value("version", nlohmann::json(-1)).dump());

  Dataset ds;
  const auto shape = header.at("patch");
  ds.patch_shape = {shape.at(0).get<int>(), shape.at(1).get<int>(), shape.at(2).get<int>()};

  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    PatchPairRecord r;
    r.id = j.at("id").get<std::int64_t>();
    r.image = j.at("img").get<std::string>();
    r.kp_x = j.at("kp").at(0).get<double>();
    r.kp_y = j.at("kp").at(1).get<double>();
    r.pose.delta_s = j.at("ds").get<double>();
    r.pose.delta_o = j.at("do").get<double>();
    r.off_a = j.at("off_a").get<std::int64_t>();
    r.off_b = j.at("off_b").get<std::int64_t>();
    r.crc_a = j.at("crc_a").get<std::uint32_t>();
    r.crc_b = j.at("crc_b").get<std::uint32_t>();
    ds.records.push_back(std::move(r));
  }

  std::ifstream pack(fs::path(dir) / kPackName, std::ios::binary | std::ios::ate);
  if (!pack) throw std::runtime_error("load: cannot open pack in " + dir);
  const std::streamsize bytes = pack.tellg();
  if (bytes % sizeof(float) != 0)
    throw std::runtime_error("load: truncated pack (size not a multiple of 4)");
  pack.seekg(0);
  ds.pack.resize(static_cast<size_t>(bytes) / sizeof(float));
  static_assert(std::endian::native == std::endian::little);
  pack.read(reinterpret_cast<char*>(ds.pack.data()), bytes);
  if (!pack) throw std::runtime_error("load: pack read failed in " + dir);

  const size_t n = ds.patch_floats();
  const std::int64_t patch_bytes = static_cast<std::int64_t>(n * sizeof(float));
  std::map<std::int64_t, std::uint32_t> verified;
  auto check = [&](std::int64_t off, std::uint32_t expect, std::int64_t id) {
    if (off < 0 || off % 4 != 0 || off + patch_bytes > bytes)
      throw std::runtime_error("load: truncated pack (record " + std::to_string(id) +
                               " offset " + std::to_string(off) + " out of range)");
    auto it = verified.find(off);
    const std::uint32_t got = it != verified.end()
                                  ? it->second
                                  : patch_crc32(ds.pack.data() + off / 4, n);
    verified.emplace(off, got);
    if (got != expect)
      throw std::runtime_error("load: checksum failure for record " + std::to_string(id) +
                               " at offset " + std::to_string(off));
  };
  for (const PatchPairRecord& r : ds.records) {
    check(r.off_a, r.crc_a, r.id);
    check(r.off_b, r.crc_b, r.id);
  }
  return ds;
}

}  // namespace patchpose
