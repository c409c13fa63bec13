#pragma once

#include <stdexcept>
#include <string>

namespace splat4d {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// se3: log() of a rotation too close to the pi singularity.
struct NearAngularSingularity : Error {
  using Error::Error;
};

// se3: dual-quaternion blend with all-zero weights.
struct EmptyBlend : Error {
  using Error::Error;
};

// scaffold: binding requested against a graph with no nodes.
struct EmptyScaffold : Error {
  using Error::Error;
};

// scaffold: no tracks fall inside the dynamic masks.
struct NoTracks : Error {
  using Error::Error;
};

// images/masks with incompatible dimensions.
struct ShapeMismatch : Error {
  using Error::Error;
};

// mask ops: overlap ratio of an empty candidate is undefined.
struct EmptyCandidate : Error {
  using Error::Error;
};

// mask ops: prompt sampling from an empty mask.
struct EmptyMask : Error {
  using Error::Error;
};

// rasterizer: backward called without a forward cache.
struct MissingForwardCache : Error {
  using Error::Error;
};

// tracker: warped point lands behind the camera.
struct BehindCamera : Error {
  using Error::Error;
};

// tracker: normal equations rank-deficient after damping.
struct SingularSystem : Error {
  using Error::Error;
};

// dataset: TUM directory without usable rgb/depth associations.
struct MissingAssociation : Error {
  using Error::Error;
};

// dataset: unparseable trajectory file.
struct MalformedTrajectory : Error {
  using Error::Error;
};

// synthetic generator: bad scene description.
struct InvalidSpec : Error {
  using Error::Error;
};

// metrics: trajectory alignment needs at least 3 associated poses.
struct InsufficientPoses : Error {
  using Error::Error;
};

// config: unknown key, bad value, or missing file.
struct ConfigError : Error {
  using Error::Error;
};

// io: file not readable/writable or malformed.
struct IoError : Error {
  using Error::Error;
};

}  // namespace splat4d
