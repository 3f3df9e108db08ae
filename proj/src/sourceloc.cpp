#include "ekr/sourceloc.hpp"

#include "ekr/errors.hpp"
#include "ekr/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace ekr {

namespace {

// Subtracts the across-sensor mean from every column (the average-reference
// projection H = I - 11^T/N applied from the left).
Matrix center_rows(const Matrix& a) {
  Matrix out = a;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) mean += a(r, c);
    mean /= static_cast<double>(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) out(r, c) = a(r, c) - mean;
  }
  return out;
}

void check_lead_field(const LeadField& lf) {
  if (lf.sensors() < 2) throw data_error("lead field needs at least 2 sensors");
  if (lf.sensor_names.size() != lf.sensors()) {
    throw data_error("lead field sensor-name count disagrees with gain rows");
  }
  if (lf.sensor_positions.size() != lf.sensors()) {
    throw data_error("lead field sensor-position count disagrees with gain rows");
  }
  if (lf.dipole_positions.size() != lf.dipoles()) {
    throw data_error("lead field dipole-position count disagrees with gain columns");
  }
  if (!lf.region_labels.empty() && lf.region_labels.size() != lf.dipoles()) {
    throw data_error("lead field region-label count disagrees with gain columns");
  }
}

} // namespace

double default_alpha(const LeadField& lf) {
  check_lead_field(lf);
  const Matrix kc = center_rows(lf.gain);
  double trace = 0.0;
  for (std::size_t r = 0; r < kc.rows(); ++r) {
    for (std::size_t c = 0; c < kc.cols(); ++c) trace += kc(r, c) * kc(r, c);
  }
  return 1e-4 * trace / static_cast<double>(kc.rows());
}

SourceMap sloreta_inverse(const LeadField& lf, const Matrix& data, double alpha) {
  check_lead_field(lf);
  if (alpha < 0.0) throw data_error("sloreta_inverse: alpha must be nonnegative");
  if (data.rows() != lf.sensors()) {
    throw data_error("sloreta_inverse: data has " + std::to_string(data.rows()) +
                     " sensors, lead field has " + std::to_string(lf.sensors()));
  }
  const std::size_t n = lf.sensors();
  const std::size_t m = lf.dipoles();

  const Matrix kc = center_rows(lf.gain);
  Matrix grammian = kc * transpose(kc);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (r == c ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
      grammian(r, c) += alpha * h;
    }
  }
  const Matrix pinv = pseudo_inverse_spd(grammian);

  // Row j of the inverse operator is pinv * k_j; the resolution diagonal is
  // k_j^T pinv k_j.
  const Matrix pk = pinv * kc;
  std::vector<double> resolution(m);
  double max_res = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) acc += kc(r, j) * pk(r, j);
    resolution[j] = acc;
    max_res = std::max(max_res, std::fabs(acc));
  }
  if (max_res == 0.0) throw data_error("sloreta_inverse: lead field is identically zero");
  for (std::size_t j = 0; j < m; ++j) {
    if (resolution[j] <= 1e-12 * max_res) {
      throw data_error("sloreta_inverse: dipole " + std::to_string(j) +
                       " is invisible to the array (singular standardization entry)");
    }
  }

  const Matrix phi = center_rows(data);
  SourceMap map;
  map.power = Matrix(m, phi.cols());
  for (std::size_t j = 0; j < m; ++j) {
    const double inv_res = 1.0 / resolution[j];
    for (std::size_t t = 0; t < phi.cols(); ++t) {
      double amp = 0.0;
      for (std::size_t r = 0; r < n; ++r) amp += pk(r, j) * phi(r, t);
      map.power(j, t) = amp * amp * inv_res;
    }
  }
  return map;
}

std::vector<std::string> rank_channels(const SourceMap& map, const LeadField& lf,
                                       std::pair<std::size_t, std::size_t> window,
                                       std::size_t k) {
  check_lead_field(lf);
  if (map.power.rows() != lf.dipoles()) {
    throw data_error("rank_channels: source map dipole count disagrees with lead field");
  }
  if (window.first >= window.second || window.second > map.power.cols()) {
    throw data_error("rank_channels: empty or out-of-span window");
  }
  if (k > lf.sensors()) throw data_error("rank_channels: k exceeds sensor count");

  std::vector<double> sensor_power(lf.sensors(), 0.0);
  const double span = static_cast<double>(window.second - window.first);
  for (std::size_t j = 0; j < lf.dipoles(); ++j) {
    double mean = 0.0;
    for (std::size_t t = window.first; t < window.second; ++t) mean += map.power(j, t);
    mean /= span;

    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < lf.sensors(); ++s) {
      double d2 = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double d = lf.dipole_positions[j][a] - lf.sensor_positions[s][a];
        d2 += d * d;
      }
      if (d2 < best) {
        best = d2;
        nearest = s;
      }
    }
    sensor_power[nearest] += mean;
  }

  std::vector<std::size_t> order(lf.sensors());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sensor_power[a] != sensor_power[b]) return sensor_power[a] > sensor_power[b];
    return a < b;
  });
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(lf.sensor_names[order[i]]);
  return out;
}

ActivationTimeline detect_latency(const SourceMap& map,
                                  const std::vector<std::string>& labels,
                                  double threshold_frac) {
  if (labels.size() != map.power.rows()) {
    throw data_error("detect_latency: label count disagrees with dipole count");
  }
  if (!(threshold_frac > 0.0 && threshold_frac < 1.0)) {
    throw data_error("detect_latency: threshold_frac must lie in (0, 1)");
  }

  ActivationTimeline timeline;
  for (const auto& label : labels) {
    if (std::find(timeline.regions.begin(), timeline.regions.end(), label) ==
        timeline.regions.end()) {
      timeline.regions.push_back(label);
    }
  }
  for (const auto& region : timeline.regions) {
    std::vector<std::size_t> members;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] == region) members.push_back(j);
    }
    std::vector<double> series(map.power.cols(), 0.0);
    for (std::size_t t = 0; t < series.size(); ++t) {
      for (std::size_t j : members) series[t] += map.power(j, t);
      series[t] /= static_cast<double>(members.size());
    }
    const double peak = *std::max_element(series.begin(), series.end());
    std::optional<std::size_t> crossing;
    for (std::size_t t = 0; t < series.size(); ++t) {
      if (series[t] > threshold_frac * peak) {
        crossing = t;
        break;
      }
    }
    timeline.first_crossing.push_back(crossing);
  }
  return timeline;
}

LeadField load_lead_field(const std::string& gain_path, const std::string& positions_path) {
  std::ifstream in(gain_path);
  if (!in) throw data_error("cannot open lead field " + gain_path);
  std::string line;
  if (!std::getline(in, line)) throw data_error(gain_path + ":1: missing header");
  line = trim(line);
  if (line.rfind("# sensors=", 0) != 0) throw data_error(gain_path + ":1: malformed header");
  std::vector<std::string> parts = split(line.substr(2), ' ');
  if (parts.size() != 2 || parts[1].rfind("dipoles=", 0) != 0) {
    throw data_error(gain_path + ":1: malformed header");
  }
  const std::size_t n = static_cast<std::size_t>(parse_int(parts[0].substr(8), gain_path));
  const std::size_t m = static_cast<std::size_t>(parse_int(parts[1].substr(8), gain_path));

  LeadField lf;
  if (!std::getline(in, line)) throw data_error(gain_path + ":2: missing sensor-name line");
  lf.sensor_names = split(trim(line), ',');
  if (lf.sensor_names.size() != n) {
    throw data_error(gain_path + ":2: expected " + std::to_string(n) + " sensor names");
  }
  lf.gain = Matrix(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    if (!std::getline(in, line)) throw data_error(gain_path + ": truncated gain rows");
    const std::string ctx = gain_path + ":" + std::to_string(r + 3);
    parts = split(trim(line), ',');
    if (parts.size() != m) throw data_error(ctx + ": expected " + std::to_string(m) + " gains");
    for (std::size_t c = 0; c < m; ++c) lf.gain(r, c) = parse_double(parts[c], ctx);
  }

  std::ifstream pin(positions_path);
  if (!pin) throw data_error("cannot open positions file " + positions_path);
  if (!std::getline(pin, line) || trim(line) != "kind,id,x,y,z,region") {
    throw data_error(positions_path + ":1: expected header kind,id,x,y,z,region");
  }
  lf.sensor_positions.assign(n, {0.0, 0.0, 0.0});
  std::vector<bool> have_sensor(n, false);
  std::size_t lineno = 1;
  bool any_region = false;
  std::vector<std::array<double, 3>> dipoles;
  std::vector<std::string> regions;
  while (std::getline(pin, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string ctx = positions_path + ":" + std::to_string(lineno);
    parts = split(t, ',');
    if (parts.size() != 6) throw data_error(ctx + ": expected 6 fields");
    const std::array<double, 3> pos = {parse_double(parts[2], ctx), parse_double(parts[3], ctx),
                                       parse_double(parts[4], ctx)};
    if (parts[0] == "sensor") {
      auto it = std::find(lf.sensor_names.begin(), lf.sensor_names.end(), parts[1]);
      if (it == lf.sensor_names.end()) throw data_error(ctx + ": unknown sensor '" + parts[1] + "'");
      const std::size_t idx = static_cast<std::size_t>(it - lf.sensor_names.begin());
      lf.sensor_positions[idx] = pos;
      have_sensor[idx] = true;
    } else if (parts[0] == "dipole") {
      const long long idx = parse_int(parts[1], ctx);
      if (idx < 0 || static_cast<std::size_t>(idx) != dipoles.size()) {
        throw data_error(ctx + ": dipole rows must appear in index order");
      }
      dipoles.push_back(pos);
      regions.push_back(parts[5]);
      if (!parts[5].empty()) any_region = true;
    } else {
      throw data_error(ctx + ": kind must be sensor or dipole");
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (!have_sensor[s]) {
      throw data_error(positions_path + ": missing position for sensor '" + lf.sensor_names[s] +
                       "'");
    }
  }
  if (dipoles.size() != m) {
    throw data_error(positions_path + ": expected " + std::to_string(m) + " dipole rows, got " +
                     std::to_string(dipoles.size()));
  }
  lf.dipole_positions = std::move(dipoles);
  if (any_region) lf.region_labels = std::move(regions);
  check_lead_field(lf);
  return lf;
}

void write_lead_field(const LeadField& lf, const std::string& gain_path,
                      const std::string& positions_path) {
  check_lead_field(lf);
  std::ofstream out(gain_path, std::ios::trunc);
  if (!out) throw data_error("cannot write lead field " + gain_path);
  out << "# sensors=" << lf.sensors() << " dipoles=" << lf.dipoles() << "\n";
  out << join(lf.sensor_names, ",") << "\n";
  for (std::size_t r = 0; r < lf.sensors(); ++r) {
    for (std::size_t c = 0; c < lf.dipoles(); ++c) {
      if (c) out << ',';
      out << format_double(lf.gain(r, c));
    }
    out << '\n';
  }

  std::ofstream pout(positions_path, std::ios::trunc);
  if (!pout) throw data_error("cannot write positions file " + positions_path);
  pout << "kind,id,x,y,z,region\n";
  for (std::size_t s = 0; s < lf.sensors(); ++s) {
    pout << "sensor," << lf.sensor_names[s] << ',' << format_double(lf.sensor_positions[s][0])
         << ',' << format_double(lf.sensor_positions[s][1]) << ','
         << format_double(lf.sensor_positions[s][2]) << ",\n";
  }
  for (std::size_t j = 0; j < lf.dipoles(); ++j) {
    pout << "dipole," << j << ',' << format_double(lf.dipole_positions[j][0]) << ','
         << format_double(lf.dipole_positions[j][1]) << ','
         << format_double(lf.dipole_positions[j][2]) << ','
         << (lf.region_labels.empty() ? std::string() : lf.region_labels[j]) << "\n";
  }
}

} // namespace ekr
