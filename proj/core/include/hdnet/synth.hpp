#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hdnet/point_cloud.hpp"

namespace hdnet {

/// Walking parameters of one synthetic subject.
struct SubjectProfile {
  double stride_frequency = 1.0;  ///< Hz
  double torso_speed = 1.0;       ///< m/s
  double arm_amplitude = 0.2;     ///< m, fore-aft swing
  double leg_amplitude = 0.3;     ///< m, fore-aft swing
  double arm_phase = 0.0;         ///< rad
  double leg_phase = 0.0;         ///< rad
  double height = 1.75;           ///< m
  double doppler_noise = 0.05;    ///< m/s, per point
  double position_noise = 0.05;   ///< m, scatter around each body center

  bool operator==(const SubjectProfile&) const = default;
};

/// Deterministic profile. Stride frequency, torso speed and both swing
/// amplitudes sit on a geometric grid (ratio 1.25) chosen from the class id
/// so that any two classes below 125 differ in at least two of them by at
/// least 25%. The seed only moves phases and height.
SubjectProfile generate_subject(std::size_t class_id, std::uint64_t seed);

/// Five scatter centers (torso, two arms, two legs) walking away from a
/// radar at the origin. Every frame holds 16 to 40 points; each point's
/// Doppler is its center's velocity projected on the torso line of sight,
/// plus noise.
PointStream generate_stream(const SubjectProfile& profile, std::size_t frames, double fps,
                            std::uint64_t seed);

/// Replaces floor(fraction * T) seeded frames with uniform clutter in a box
/// covering the walking area. Frame count and indices are preserved.
PointStream inject_noise_frames(const PointStream& stream, double fraction, std::uint64_t seed);

struct SynthConfig {
  std::size_t classes = 5;
  std::size_t per_class = 20;
  std::size_t frames = 20;  ///< frames per recording
  double fps = 10.0;
  double noise_fraction = 0.0;
  std::uint64_t seed = 0;
};

struct SynthRecording {
  std::string file_name;
  std::string subject;
  PointStream stream;
};

/// `per_class` recordings for each class, ordered by class then index.
std::vector<SynthRecording> synthesize_recordings(const SynthConfig& config);

/// Writes `<dir>/<file_name>` point files (track id 0) and `<dir>/manifest.csv`.
void write_recordings(const std::vector<SynthRecording>& recordings, const std::filesystem::path& dir);

}  // namespace hdnet
