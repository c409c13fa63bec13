#pragma once

#include <string>

#include "splat4d/mapper.hpp"
#include "splat4d/tracker.hpp"

namespace splat4d {

// Pipeline-level knobs that sit above the mapper and tracker.
struct SessionParams {
  std::string dataset;          // path to the sequence this session reads
  int keyframe_stride = 2;      // every Nth dataset frame becomes a keyframe
  int seed_stride = 4;          // pixel lattice for splat seeding
  double seed_opacity = 0.3;    // initial opacity of seeded splats
  int static_iterations = 300;  // phase one mapping budget
  int dynamic_iterations = 400; // phase two mapping budget
  int mask_updates = 2;         // mask refreshes during the dynamic phase
  int scaffold_nodes = 64;
  int radius_neighbor = 3;
  double radius_scale = 1.0;
  int tracking_stride = 4;      // flow grid stride fed to the tracker
  double shutter_init = 0.3;    // first guess for exposure / frame interval
};

// Everything a run reads from one config file.
struct SessionConfig {
  MappingConfig mapping;
  DbaOptions tracking;
  SessionParams session;
};

// INI-style text: [section] headers, key = value lines, '#' comments. Every
// key must belong to the schema; anything unknown is an error, as are
// unparseable values. Absent keys keep their defaults.
SessionConfig parse_config(const std::string& text);

// parse_config over a file's contents. Throws ConfigError if unreadable.
SessionConfig load_config(const std::string& path);

// The full schema with current values, parseable by parse_config.
std::string config_to_text(const SessionConfig& config);

}  // namespace splat4d
