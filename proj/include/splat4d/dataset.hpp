#pragma once

#include <string>
#include <vector>

#include "splat4d/camera.hpp"
#include "splat4d/image.hpp"
#include "splat4d/metrics.hpp"

namespace splat4d {

struct FrameRecord {
  double time = 0.0;
  std::string rgb_path;    // relative to the dataset root
  std::string depth_path;  // may be empty (rgb-only frame lists)
};

struct ExposureRecord {
  double time = 0.0;
  double log_gain = 0.0;
  double offset = 0.0;
};

// One sequence directory: rgb/ + depth/ + list files, optional ground truth
// and sidecars (flow/<stamp>.bin with forward flow to the next frame,
// objects/<stamp>.bin with per-pixel object ids, tracks.txt with lifted 3d
// tracks, exposure.txt, groundtruth_end.txt for shutter-close poses).
struct Dataset {
  std::string root;
  PinholeCamera camera;
  std::vector<FrameRecord> frames;  // time-sorted, rgb+depth associated
  Trajectory groundtruth;           // empty when absent
  Trajectory groundtruth_end;
  std::vector<ExposureRecord> exposure;
};

// Reads camera.txt, rgb.txt (+ depth.txt when present) and whatever optional
// ground truth exists. Throws IoError for a broken layout and
// MissingAssociation when no rgb/depth pair matches in time.
Dataset open_dataset(const std::string& root);

Image dataset_rgb(const Dataset& ds, size_t frame);
Image dataset_depth(const Dataset& ds, size_t frame);  // empty Image if none
// Full-precision depth sidecar (depth32/<stamp>.bin). Empty Image when absent.
Image dataset_depth_exact(const Dataset& ds, size_t frame);
// Forward flow (2 channels, pixels) from this frame to the next.
Image dataset_flow(const Dataset& ds, size_t frame);
// Object-id map (1 channel; 0 = background). Empty Image when absent.
Image dataset_objects(const Dataset& ds, size_t frame);

// Lifted 3d point tracks used for scaffold building: per track, one position
// and visibility flag per dataset frame. Read from tracks.txt lines of
// "track_id time x y z visible".
struct PointTracks {
  std::vector<double> timestamps;
  std::vector<std::vector<Vec3>> positions;      // [track][frame]
  std::vector<std::vector<uint8_t>> visible;     // [track][frame]
};
PointTracks load_tracks(const std::string& path,
                        const std::vector<double>& timestamps);

// Trajectory text: "time tx ty tz qx qy qz qw" per line, '#' comments.
Trajectory load_trajectory(const std::string& path);
void save_trajectory(const std::string& path, const Trajectory& trajectory);

// Fixed-width stamp used for image and sidecar file names.
std::string frame_stamp(double time);

}  // namespace splat4d
