#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "patchpose/histogram.hpp"
#include "patchpose/transform.hpp"

namespace patchpose {

// One self-annotated pair: patch A is the reference crop at the keypoint,
// patch B the transformed crop, pose the exact synthesis parameters.
struct PatchPairRecord {
  std::int64_t id = 0;
  std::string image;
  double kp_x = 0.0;
  double kp_y = 0.0;
  RelativePose pose;
  std::int64_t off_a = 0;  // byte offsets into the pack
  std::int64_t off_b = 0;
  std::uint32_t crc_a = 0;
  std::uint32_t crc_b = 0;
};

// Immutable pair collection plus the packed patch tensors.
struct Dataset {
  std::array<int, 3> patch_shape{3, 32, 32};
  std::vector<PatchPairRecord> records;
  std::vector<float> pack;

  size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  size_t patch_floats() const {
    return static_cast<size_t>(patch_shape[0]) * patch_shape[1] * patch_shape[2];
  }
  Patch patch_at_offset(std::int64_t byte_offset) const;
  Patch patch_a(size_t record_index) const;
  Patch patch_b(size_t record_index) const;
};

struct GenConfig {
  enum class Mode { GridA, ContinuousB };
  Mode mode = Mode::GridA;
  int scale_bins = 13;        // grid matches BinSpec::scale centers
  int orientation_bins = 36;  // grid matches BinSpec::orientation centers
  int keypoints_per_image = 3;
  int crop_size = 64;
  int output_size = 32;
  double prune_fraction = 0.2;
  std::array<double, 3> split_ratios{0.98, 0.01, 0.01};
  std::uint64_t seed = 0;
  int pairs = 0;  // ContinuousB: total pairs to draw across all keypoints
  int min_keypoint_distance = 32;
  int threads = 1;

  // Worst-case crop footprint half-diagonal: crop * max_scale * sqrt(2) / 2,
  // rounded up. Keypoints closer than this to an edge are excluded.
  int margin() const;
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
};

struct HarrisParams {
  double k = 0.05;              // corner response trace weight
  double response_floor = 1e-7; // absolute threshold; flat images yield nothing
  int min_distance = 32;        // greedy suppression radius, px
};

// Up to k Harris-corner local maxima outside the margin band, strongest
// first, greedily enforcing the pairwise distance. Returns fewer than k when
// maxima are exhausted. Throws when the margins exclude the whole image.
std::vector<Keypoint> sample_keypoints(const SourceImage& img, int k, int margin,
                                       const HarrisParams& params = {});

struct GenStats {
  size_t images = 0;
  size_t keypoints = 0;
  size_t keypoints_skipped = 0;  // worst-case footprint left the image
};

// PatchPose-A: every keypoint's reference patch paired against each grid
// transform where exactly one axis varies (scale_bins + orientation_bins - 1
// transforms, identity included once).
Dataset generate_grid(const std::vector<SourceImage>& images,
                      const std::vector<std::string>& names, const GenConfig& cfg,
                      GenStats* stats = nullptr);

// PatchPose-B: cfg.pairs pairs with scale log-uniform on [1/4, 4] and angle
// uniform on [0, 2pi), spread round-robin over the keypoints.
Dataset generate_continuous(const std::vector<SourceImage>& images,
                            const std::vector<std::string>& names, const GenConfig& cfg,
                            GenStats* stats = nullptr);

// Convenience wrappers that load the images from disk.
Dataset generate_grid(const std::vector<std::string>& image_paths, const GenConfig& cfg,
                      GenStats* stats = nullptr);
Dataset generate_continuous(const std::vector<std::string>& image_paths,
                            const GenConfig& cfg, GenStats* stats = nullptr);

struct DiscriminabilityConfig {
  int scale_bins = 13;
  int orientation_bins = 36;  // transform set size = scale_bins * orientation_bins
  int descriptor_grid = 4;    // cells per side
  int descriptor_orientations = 8;
};

// Gradient-orientation histogram descriptor (grid x grid cells, one histogram
// per cell). Zero for constant patches.
std::vector<double> patch_descriptor(const Patch& patch, const DiscriminabilityConfig& cfg = {});

// Similarity warp of a patch about its own center, edge-replicate sampling.
Patch warp_patch(const Patch& patch, double scale_factor, double angle);

// Feature spread of the patch under the full scale x orientation transform
// grid: sqrt of the total squared deviation from the mean feature vector.
double discriminability(const Patch& patch, const DiscriminabilityConfig& cfg = {});

// Removes the lowest-sigma fraction of source patches (and every pair built
// on them); ties broken by lowest record id.
Dataset prune(const Dataset& ds, double fraction, const DiscriminabilityConfig& cfg = {},
              int threads = 1);

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Disjoint partition by source keypoint; all pairs of one keypoint land in
// one split. Throws when a split would receive zero keypoints.
SplitResult split(const Dataset& ds, const std::array<double, 3>& ratios,
                  std::uint64_t seed);

// Manifest (JSON lines) + raw little-endian f32 pack. load verifies the
// format header, pack length, and per-patch CRC32.
void save(const Dataset& ds, const std::string& dir);
Dataset load(const std::string& dir);

std::uint32_t patch_crc32(const float* data, size_t count);

}  // namespace patchpose
