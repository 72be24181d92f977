#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dtml/grid.hpp"
#include "dtml/rng.hpp"

namespace dtml::data {

struct Sample {
    Volume image;
    Mask mask;
};

// Randomly deformed ellipsoid-union blobs with smooth texture and additive
// noise. Foreground and background intensity distributions overlap but stay
// separable. Deterministic per (seed, index); foreground fraction is kept in
// [0.02, 0.4] by redrawing shapes from the same stream.
std::vector<Sample> generate_synthetic(int count, std::array<int, 3> shape_hwd, std::uint64_t seed,
                                       Spacing spacing = {});

struct DatasetSplit {
    std::vector<Sample> labeled;
    std::vector<Volume> unlabeled;
    std::vector<Sample> test;
    // Ground truth of the unlabeled partition, for diagnostics only; the
    // trainer never reads it.
    std::vector<Mask> unlabeled_masks_diagnostic;
};

// Deterministic shuffled partition of indices 0..n-1: `test_count` go to
// test, then round(labeled_fraction * remaining) to labeled, rest unlabeled.
struct SplitIndices {
    std::vector<int> test, labeled, unlabeled;
};

SplitIndices split_indices(int n, double labeled_fraction, std::uint64_t seed, int test_count = 0);

DatasetSplit split_dataset(const std::vector<Sample>& samples, double labeled_fraction,
                           std::uint64_t seed, int test_count = 0);

// Axis-aligned crop at a uniformly random valid offset; the mask (when
// present) is cropped with the same offset. Offsets are drawn z, y, x.
std::pair<Volume, std::optional<Mask>> random_crop(const Volume& v, const Mask* m,
                                                   std::array<int, 3> crop_hwd, Rng& rng);

// Independent axis flips plus one of {0, 90, 180, 270} degrees rotation in
// the axial (H,W) plane; identical transform applied to the mask. Draw
// order: rotation, flip_x, flip_y, flip_z.
std::pair<Volume, std::optional<Mask>> augment(const Volume& v, const Mask* m, Rng& rng);

template <typename T>
Grid3<T> apply_orientation(const Grid3<T>& g, int rot_quarter_turns, bool flip_x, bool flip_y,
                           bool flip_z);

// Shift to zero mean and scale to unit variance (no-op on constant volumes).
void standardize(Volume& v);

// --- on-disk formats ---
// Volumes are raw voxel buffers in x-fastest order plus a JSON sidecar
// {"shape": [H,W,D], "spacing": [sx,sy,sz], "dtype": "f32"|"u8",
//  "role": "image"|"mask"}. The sidecar path is the data path with its
// extension replaced by ".json".

void write_volume(const std::string& path, const Volume& v, const std::string& role = "image");
void write_mask(const std::string& path, const Mask& m);
Volume read_volume(const std::string& path);
Mask read_mask(const std::string& path);

std::string sidecar_path(const std::string& data_path);

// Dataset manifest: JSON with "labeled"/"unlabeled"/"test" lists of
// {"image": path, "mask": path} entries (paths relative to the manifest).
struct ManifestEntry {
    std::string image;
    std::string mask;  // may be empty for externally supplied unlabeled data
};

struct Manifest {
    std::vector<ManifestEntry> labeled;
    std::vector<ManifestEntry> unlabeled;
    std::vector<ManifestEntry> test;
};

void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

// Loads the split described by a manifest. Unlabeled masks are read only
// when expose_unlabeled_masks is set.
DatasetSplit load_split(const std::string& manifest_path, bool expose_unlabeled_masks = false);

}  // namespace dtml::data
