#pragma once

#include <string>

#include "splat4d/config.hpp"
#include "splat4d/dataset.hpp"
#include "splat4d/mapper.hpp"

namespace splat4d {

// One reconstruction run rooted in its own directory. Everything a run learns
// lives in plain files under the root:
//   config.ini          full schema snapshot; session.dataset names the data
//   state.txt           which stages have completed
//   trajectory.txt      tracked shutter-open pose for every dataset frame
//   trajectory_end.txt  learned shutter-close pose per keyframe
//   exposure.txt        learned per-keyframe response (time log_gain offset)
//   model.ply           splat set in its canonical reference-time state
//   uncertainty.bin     trained variance predictor (with its Adam state)
//   scaffold.txt        motion scaffold, only when a dynamic phase ran
//   bindings.txt        node attachments of the dynamic splats
//   metrics.txt         evaluation output, one "key = value" line each
struct Session {
  std::string root;
  SessionConfig config;
};

// Stage markers. Mapping checkpoints sit at phase boundaries, where the
// per-parameter Adam moments are empty by construction; the optimizer always
// restarts a phase from its checkpoint files, so an interrupted run resumes
// bit-identically to an uninterrupted one.
struct SessionState {
  bool tracked = false;
  bool phase_a = false;  // static splats + exposure + uncertainty head
  bool phase_b = false;  // scaffold-bound dynamic splats
};

// Makes the directory and snapshots the config with session.dataset filled
// in. Reusing an existing root starts the run over (state is cleared).
Session create_session(const std::string& root, const std::string& dataset,
                       const SessionConfig& config);

// Reads back config.ini. Throws ConfigError when the root has none.
Session open_session(const std::string& root);

SessionState session_state(const Session& s);

// Estimates a shutter-open pose for every dataset frame: dense bundle
// adjustment over the forward-flow sidecars on a coarse grid, with sensor
// depth priors; frame 0 anchors the gauge. When the session already has a
// mapped model, its uncertainty head supplies per-pixel variances (run
// track -> map -> track for weighted re-tracking; this clears the mapping
// phases since their poses went stale). Writes trajectory.txt.
Trajectory track_session(Session& s);

struct SessionTelemetry {
  MappingTelemetry phase_a;
  MappingTelemetry phase_b;
  size_t statics_cut = 0;     // static splats retired under the refined masks
  size_t dynamics_seeded = 0;
  bool dynamic_ran = false;   // false when the dataset has no tracks
};

// Runs the mapping phases that are still missing (at most max_phases of
// them) and checkpoints after each. Phase A seeds splats from the first
// keyframe and optimizes the static model, response, and uncertainty head.
// Phase B freezes the predictor, retires static splats that the refined
// masks and sensor depth agree are dynamic surface, seeds scaffold-bound
// splats inside the masks, and optimizes everything else; it needs
// tracks.txt next to the dataset.
SessionTelemetry map_session(Session& s, int max_phases = 2);

// Rebuilds the optimizer scene from the checkpoint files; keyframes get
// their learned poses and response, masks start empty.
MapperScene load_session_scene(const Session& s, const Dataset& ds);

// Renders the model from the trajectory pose at `pose_index`, with the
// scaffold evaluated at `time`. A blurred render uses the learned exposure
// interval and response for keyframes and extrapolates between them;
// otherwise the raw radiance is returned.
Image render_session_view(const Session& s, size_t pose_index, double time,
                          bool blur);

// Renders every frame of the session timeline, compares against a reference
// sequence with the same timestamps, and writes metrics.txt. Keyframes are
// the training views; everything in between is held out. Returns the file
// text.
std::string evaluate_session(const Session& s, const std::string& reference_root);

}  // namespace splat4d
