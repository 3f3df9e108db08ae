#pragma once

#include "ekr/matrix.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ekr {

// Forward gain model with fixed dipole orientations. Sensor rows follow
// sensor_names order; region_labels may be empty (unlabeled dipoles).
struct LeadField {
  Matrix gain;
  std::vector<std::string> sensor_names;
  std::vector<std::array<double, 3>> sensor_positions;
  std::vector<std::array<double, 3>> dipole_positions;
  std::vector<std::string> region_labels;

  std::size_t sensors() const { return gain.rows(); }
  std::size_t dipoles() const { return gain.cols(); }
};

// Standardized current-density power, dipoles x samples, nonnegative.
struct SourceMap {
  Matrix power;
};

struct ActivationTimeline {
  std::vector<std::string> regions;
  std::vector<std::optional<std::size_t>> first_crossing;
};

// 1e-4 times the mean diagonal of the average-referenced gain product; a
// scale-free default for the Tikhonov term.
double default_alpha(const LeadField& lf);

// Minimum-norm inverse with Tikhonov term alpha against the average-
// reference operator, standardized per dipole by the resolution-matrix
// diagonal, then squared. The data is average-referenced on entry so an
// already-referenced input passes through unchanged.
SourceMap sloreta_inverse(const LeadField& lf, const Matrix& data, double alpha);

// Mean power over the half-open sample window [begin, end) per dipole,
// attributed to the nearest sensor by Euclidean distance; sensors ranked by
// accumulated power, ties broken by montage order. Returns the top k names.
std::vector<std::string> rank_channels(const SourceMap& map, const LeadField& lf,
                                       std::pair<std::size_t, std::size_t> window,
                                       std::size_t k);

// Per region, the first sample where the region-mean power exceeds
// threshold_frac times that region's whole-trial maximum.
ActivationTimeline detect_latency(const SourceMap& map,
                                  const std::vector<std::string>& labels,
                                  double threshold_frac);

// Gain CSV: `# sensors=<n> dipoles=<m>`, sensor-name line, n rows of m
// gains. Companion positions CSV: `kind,id,x,y,z,region` header, one
// `sensor` row per sensor and one `dipole` row per dipole (region optional).
LeadField load_lead_field(const std::string& gain_path, const std::string& positions_path);
void write_lead_field(const LeadField& lf, const std::string& gain_path,
                      const std::string& positions_path);

} // namespace ekr
