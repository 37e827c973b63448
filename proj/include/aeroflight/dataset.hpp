#pragma once

// Link-force datasets: synthetic oracle, mirroring, splitting and CSV I/O.
//
// A sample is a robot configuration s and a relative air velocity direction
// d (base frame, given as pitch/yaw in degrees) mapped to the base-frame
// force-area triples y of every aero link (link-major, m^2).

#include "aeroflight/axisym.hpp"
#include "aeroflight/model.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace aeroflight {

/// d = (sin p cos y, sin p sin y, cos p) for pitch p and yaw y (degrees).
Vec3 direction_from_angles(double pitch_deg, double yaw_deg);

/// Wraps an angle in degrees to (-180, 180].
double wrap_degrees(double deg);

struct AeroSample {
  VecX s;
  double pitch_deg = 0.0;
  double yaw_deg = 0.0;
  VecX y;

  Vec3 direction() const { return direction_from_angles(pitch_deg, yaw_deg); }
};

struct AeroDataset {
  int n_joints = 0;
  int n_links = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  bool augmented = false;
  std::vector<AeroSample> samples;

  std::size_t size() const { return samples.size(); }
  int input_dim() const { return 3 + n_joints; }
  int output_dim() const { return 3 * n_links; }
};

bool operator==(const AeroSample& a, const AeroSample& b);
bool operator==(const AeroDataset& a, const AeroDataset& b);

struct OracleConfig {
  AxisymCoeffs coeffs;
  double eps_int = 0.0;
  std::uint64_t seed = 1;
  int n_configs = 24;
  int n_pitch = 19;
  int n_yaw = 18;

  void validate() const;
  /// FNV-1a hash of the canonical text form.
  std::uint64_t hash() const;
};

/// key=value file: coeffs=<path>, eps_int=, seed=, n_configs=, n_pitch=, n_yaw=.
/// Relative coefficient paths resolve against the config file directory.
OracleConfig load_oracle_config(const std::string& path);

/// Grid of pitch (0..180, inclusive) and yaw (-180 + 360/n .. 180) angles.
std::vector<double> pitch_grid(int n_pitch);
std::vector<double> yaw_grid(int n_yaw);

/// Joint configurations visited by the oracle. The first min(3, n) are
/// left/right symmetric when the model declares a symmetry.
std::vector<VecX> oracle_configurations(const RobotModel& model, const OracleConfig& cfg);

/// Smooth pseudo-random interference field (unit amplitude per channel),
/// evaluated for one configuration and direction. Mirror-equivariant when the
/// model declares a symmetry.
VecX interference(const RobotModel& model, const OracleConfig& cfg, const VecX& s,
                  const Vec3& d);

/// Per-link reference force area: mean C_D A over a 1 degree grid.
VecX reference_areas(const RobotModel& model, const AxisymCoeffs& coeffs);

/// Oracle output for one configuration and direction.
VecX oracle_sample(const RobotModel& model, const OracleConfig& cfg, const VecX& s,
                   const Vec3& d);

AeroDataset oracle_generate(const RobotModel& model, const OracleConfig& cfg);

AeroSample mirror_sample(const AeroSample& x, const RobotModel& model);
AeroDataset mirror_augment(const AeroDataset& ds, const RobotModel& model);

std::pair<AeroDataset, AeroDataset> split(const AeroDataset& ds, double ratio,
                                          std::uint64_t seed);

/// Network input rows (d, s) and output rows y.
MatX dataset_inputs(const AeroDataset& ds);
MatX dataset_outputs(const AeroDataset& ds);

/// sqrt(sum |pred - target|^2 / sum |target|^2) over all rows.
double relative_error(const MatX& pred, const MatX& target);

std::string format_dataset(const AeroDataset& ds);
AeroDataset parse_dataset(std::string_view text);
void write_dataset(const std::string& path, const AeroDataset& ds);
AeroDataset read_dataset(const std::string& path);

}  // namespace aeroflight
