#include "hdnet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"
#include "hdnet/stream_io.hpp"

namespace hdnet {

namespace {

constexpr const char* kModule = "synth";
constexpr std::size_t kLevels = 5;
constexpr double kLevelRatio = 1.25;
constexpr std::size_t kMinPoints = 16;
constexpr std::size_t kMaxPoints = 40;

double level(double base, std::size_t digit) { return base * std::pow(kLevelRatio, static_cast<double>(digit)); }

using Vec3 = std::array<double, 3>;

Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 scaled(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

}  // namespace

SubjectProfile generate_subject(std::size_t class_id, std::uint64_t seed) {
  const std::size_t d0 = class_id % kLevels;
  const std::size_t d1 = (class_id / kLevels) % kLevels;
  const std::size_t d2 = (class_id / (kLevels * kLevels)) % kLevels;
  const std::size_t d3 = (d0 + d1 + d2) % kLevels;

  SubjectProfile p;
  p.stride_frequency = level(0.8, d0);
  p.torso_speed = level(0.6, d1);
  p.arm_amplitude = level(0.15, d2);
  p.leg_amplitude = level(0.2, d3);

  Rng rng(mix_seed(seed, class_id));
  p.arm_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  p.leg_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  p.height = rng.uniform(1.6, 1.9);
  return p;
}

PointStream generate_stream(const SubjectProfile& profile, std::size_t frames, double fps,
                            std::uint64_t seed) {
  if (frames == 0) throw DataError(kModule, "frames must be >= 1");
  if (!(fps > 0.0)) throw DataError(kModule, "fps must be > 0");

  Rng rng(seed);
  const double heading = rng.uniform(-0.15, 0.15);
  const Vec3 forward{std::sin(heading), std::cos(heading), 0.0};
  const Vec3 lateral{std::cos(heading), -std::sin(heading), 0.0};
  const Vec3 start{rng.uniform(-1.0, 1.0), rng.uniform(2.0, 4.0), 0.0};
  const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double omega = 2.0 * std::numbers::pi * profile.stride_frequency;
  const double h = profile.height;

  // Torso, left arm, right arm, left leg, right leg.
  constexpr std::array<double, 5> kWeights{0.4, 0.15, 0.15, 0.15, 0.15};
  const std::array<double, 5> side{0.0, -0.22, 0.22, -0.1, 0.1};
  const std::array<double, 5> elevation{0.55 * h, 0.7 * h, 0.7 * h, 0.25 * h, 0.25 * h};

  PointStream stream;
  stream.frames.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / fps;
    const Vec3 torso_base = add(start, scaled(forward, profile.torso_speed * t));
    const Vec3 velocity_torso = scaled(forward, profile.torso_speed);

    std::array<Vec3, 5> centers;
    std::array<Vec3, 5> velocities;
    for (std::size_t c = 0; c < 5; ++c) {
      double swing = 0.0, swing_rate = 0.0;
      if (c > 0) {
        const bool arm = c <= 2;
        const double amplitude = arm ? profile.arm_amplitude : profile.leg_amplitude;
        // Opposite limbs of a pair move in anti-phase.
        const double phase = phase0 + (arm ? profile.arm_phase : profile.leg_phase) +
                             ((c % 2 == 0) ? std::numbers::pi : 0.0);
        swing = amplitude * std::sin(omega * t + phase);
        swing_rate = amplitude * omega * std::cos(omega * t + phase);
      }
      centers[c] = add(add(torso_base, scaled(lateral, side[c])), scaled(forward, swing));
      centers[c][2] = elevation[c];
      velocities[c] = add(velocity_torso, scaled(forward, swing_rate));
    }

    Vec3 sight = centers[0];
    const double norm = std::sqrt(dot(sight, sight));
    sight = scaled(sight, 1.0 / norm);

    RadarFrame frame;
    frame.index = f;
    const std::size_t count = kMinPoints + rng.below(kMaxPoints - kMinPoints + 1);
    frame.points.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      double pick = rng.uniform();
      std::size_t c = 0;
      while (c + 1 < kWeights.size() && pick >= kWeights[c]) pick -= kWeights[c++];
      RadarPoint p;
      p.x = centers[c][0] + profile.position_noise * rng.normal();
      p.y = centers[c][1] + profile.position_noise * rng.normal();
      p.z = centers[c][2] + profile.position_noise * rng.normal();
      p.v = dot(velocities[c], sight) + profile.doppler_noise * rng.normal();
      frame.points.push_back(p);
    }
    stream.frames.push_back(std::move(frame));
  }
  return stream;
}

PointStream inject_noise_frames(const PointStream& stream, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw DataError(kModule, "noise fraction must be in [0, 1)");
  const std::size_t total = stream.frames.size();
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total) + 1e-9));
  PointStream out = stream;
  if (count == 0) return out;

  Rng rng(seed);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  for (std::size_t k = 0; k < count; ++k) {
    RadarFrame& frame = out.frames[order[k]];
    const std::size_t points = kMinPoints + rng.below(kMaxPoints - kMinPoints + 1);
    frame.points.clear();
    for (std::size_t i = 0; i < points; ++i) {
      frame.points.push_back({rng.uniform(-2.5, 2.5), rng.uniform(1.0, 7.0), rng.uniform(0.0, 2.0),
                              rng.uniform(-2.5, 2.5)});
    }
  }
  return out;
}

std::vector<SynthRecording> synthesize_recordings(const SynthConfig& config) {
  if (config.classes == 0 || config.per_class == 0) throw DataError(kModule, "classes and per_class must be >= 1");
  std::vector<SynthRecording> out;
  out.reserve(config.classes * config.per_class);
  for (std::size_t c = 0; c < config.classes; ++c) {
    const SubjectProfile profile = generate_subject(c, config.seed);
    char subject[32];
    std::snprintf(subject, sizeof subject, "S%03zu", c);
    for (std::size_t s = 0; s < config.per_class; ++s) {
      const std::uint64_t stream_seed = mix_seed(mix_seed(config.seed, 0x7374726d + c), s);
      PointStream stream = generate_stream(profile, config.frames, config.fps, stream_seed);
      stream = inject_noise_frames(stream, config.noise_fraction, mix_seed(stream_seed, 0x6e6f6973));
      stream.subject = subject;
      char name[64];
      std::snprintf(name, sizeof name, "%s_r%04zu.csv", subject, s);
      out.push_back({name, subject, std::move(stream)});
    }
  }
  return out;
}

void write_recordings(const std::vector<SynthRecording>& recordings, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw DataError(kModule, "cannot write " + (dir / "manifest.csv").string());
  manifest << "file_name,subject_id,environment\n";
  for (const auto& r : recordings) {
    write_stream_file(dir / r.file_name, r.stream, 0);
    manifest << r.file_name << ',' << r.subject << ",synthetic\n";
  }
}

}  // namespace hdnet
