#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ekr/errors.hpp"
#include "ekr/sourceloc.hpp"
#include "ekr/util.hpp"

#include <cmath>
#include <filesystem>

using namespace ekr;

namespace {

LeadField random_lead_field(Rng& rng, std::size_t sensors, std::size_t dipoles) {
  LeadField lf;
  lf.gain = Matrix(sensors, dipoles);
  for (std::size_t r = 0; r < sensors; ++r) {
    for (std::size_t c = 0; c < dipoles; ++c) lf.gain(r, c) = rng.normal();
  }
  for (std::size_t r = 0; r < sensors; ++r) {
    lf.sensor_names.push_back("S" + std::to_string(r + 1));
    lf.sensor_positions.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }
  for (std::size_t c = 0; c < dipoles; ++c) {
    lf.dipole_positions.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }
  return lf;
}

} // namespace

TEST_CASE("a single active dipole is localized exactly") {
  Rng rng(1);
  const LeadField lf = random_lead_field(rng, 8, 20);
  for (std::size_t target = 0; target < 20; target += 3) {
    Matrix data(8, 5);
    for (std::size_t t = 0; t < 5; ++t) {
      const double s = 1.0 + 0.5 * static_cast<double>(t); // nonzero source course
      for (std::size_t r = 0; r < 8; ++r) data(r, t) = s * lf.gain(r, target);
    }
    const SourceMap map = sloreta_inverse(lf, data, default_alpha(lf));
    for (std::size_t t = 0; t < 5; ++t) {
      std::size_t argmax = 0;
      for (std::size_t j = 1; j < 20; ++j) {
        if (map.power(j, t) > map.power(argmax, t)) argmax = j;
      }
      CHECK(argmax == target);
    }
  }
}

TEST_CASE("localization stays exact without regularization") {
  Rng rng(2);
  const LeadField lf = random_lead_field(rng, 10, 15);
  const std::size_t target = 7;
  Matrix data(10, 3);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t r = 0; r < 10; ++r) data(r, t) = 2.0 * lf.gain(r, target);
  }
  const SourceMap map = sloreta_inverse(lf, data, 0.0);
  for (std::size_t t = 0; t < 3; ++t) {
    std::size_t argmax = 0;
    for (std::size_t j = 1; j < 15; ++j) {
      if (map.power(j, t) > map.power(argmax, t)) argmax = j;
    }
    CHECK(argmax == target);
  }
}

TEST_CASE("power is nonnegative and scales quadratically with the data") {
  Rng rng(3);
  const LeadField lf = random_lead_field(rng, 6, 12);
  Matrix data(6, 4);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t t = 0; t < 4; ++t) data(r, t) = rng.normal();
  }
  const double alpha = default_alpha(lf);
  const SourceMap base = sloreta_inverse(lf, data, alpha);
  const SourceMap scaled = sloreta_inverse(lf, scale(data, 3.0), alpha);
  for (std::size_t j = 0; j < 12; ++j) {
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(base.power(j, t) >= 0.0);
      CHECK(scaled.power(j, t) == doctest::Approx(9.0 * base.power(j, t)).epsilon(1e-9));
    }
  }
}

TEST_CASE("the inverse ignores a common-mode offset in the data") {
  Rng rng(4);
  const LeadField lf = random_lead_field(rng, 6, 10);
  Matrix data(6, 3);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t t = 0; t < 3; ++t) data(r, t) = rng.normal();
  }
  Matrix shifted = data;
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t t = 0; t < 3; ++t) shifted(r, t) += 42.0;
  }
  const double alpha = default_alpha(lf);
  const SourceMap a = sloreta_inverse(lf, data, alpha);
  const SourceMap b = sloreta_inverse(lf, shifted, alpha);
  for (std::size_t j = 0; j < 10; ++j) {
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(a.power(j, t) == doctest::Approx(b.power(j, t)).epsilon(1e-9));
    }
  }
}

TEST_CASE("a dipole invisible after referencing is a hard error") {
  Rng rng(5);
  LeadField lf = random_lead_field(rng, 6, 8);
  for (std::size_t r = 0; r < 6; ++r) lf.gain(r, 3) = 1.0; // pure common mode
  Matrix data(6, 2);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t t = 0; t < 2; ++t) data(r, t) = rng.normal();
  }
  CHECK_THROWS_AS(sloreta_inverse(lf, data, default_alpha(lf)), data_error);
}

TEST_CASE("default alpha follows the centered gain trace") {
  Rng rng(6);
  const LeadField lf = random_lead_field(rng, 7, 9);
  Matrix kc = lf.gain;
  for (std::size_t c = 0; c < 9; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 7; ++r) mean += kc(r, c);
    mean /= 7.0;
    for (std::size_t r = 0; r < 7; ++r) kc(r, c) -= mean;
  }
  double trace = 0.0;
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 9; ++c) trace += kc(r, c) * kc(r, c);
  }
  CHECK(default_alpha(lf) == doctest::Approx(1e-4 * trace / 7.0).epsilon(1e-12));
}

TEST_CASE("channels rank by accumulated nearest-sensor power") {
  LeadField lf;
  lf.gain = Matrix(2, 3, 1.0); // shapes only; power is injected directly
  lf.sensor_names = {"A", "B"};
  lf.sensor_positions = {{0, 0, 0}, {10, 0, 0}};
  lf.dipole_positions = {{1, 0, 0}, {9, 0, 0}, {8, 0, 0}};
  SourceMap map;
  map.power = Matrix(3, 4);
  // Dipole 0 (near A): total 2 over the window. Dipoles 1+2 (near B): 6.
  map.power(0, 0) = 1.0;
  map.power(0, 1) = 1.0;
  map.power(1, 2) = 4.0;
  map.power(2, 1) = 2.0;
  const auto ranked = rank_channels(map, lf, {0, 4}, 2);
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0] == "B");
  CHECK(ranked[1] == "A");
  // Restricting the window flips the order: only samples [0, 2) count.
  const auto early = rank_channels(map, lf, {0, 2}, 2);
  CHECK(early[0] == "A");
  CHECK(early[1] == "B");
}

TEST_CASE("rank ties fall back to montage order") {
  LeadField lf;
  lf.gain = Matrix(3, 3, 1.0);
  lf.sensor_names = {"C3", "Cz", "C4"};
  lf.sensor_positions = {{0, 0, 0}, {5, 0, 0}, {10, 0, 0}};
  lf.dipole_positions = {{0, 1, 0}, {5, 1, 0}, {10, 1, 0}};
  SourceMap map;
  map.power = Matrix(3, 2); // all zero: every sensor ties at zero power
  const auto ranked = rank_channels(map, lf, {0, 2}, 3);
  CHECK(ranked == std::vector<std::string>{"C3", "Cz", "C4"});
}

TEST_CASE("latency detection uses a strict threshold crossing") {
  SourceMap map;
  map.power = Matrix(4, 4);
  // Region "motor": rows 0-1, mean ramps 0, 0.2, 0.6, 1.0.
  map.power(0, 0) = 0.0; map.power(0, 1) = 0.2; map.power(0, 2) = 0.6; map.power(0, 3) = 1.0;
  map.power(1, 0) = 0.0; map.power(1, 1) = 0.2; map.power(1, 2) = 0.6; map.power(1, 3) = 1.0;
  // Region "occipital": rows 2-3, identically zero.
  const std::vector<std::string> labels = {"motor", "motor", "occipital", "occipital"};
  const ActivationTimeline timeline = detect_latency(map, labels, 0.5);
  REQUIRE(timeline.regions == std::vector<std::string>{"motor", "occipital"});
  REQUIRE(timeline.first_crossing.size() == 2);
  REQUIRE(timeline.first_crossing[0].has_value());
  CHECK(*timeline.first_crossing[0] == 2);
  CHECK_FALSE(timeline.first_crossing[1].has_value());
}

TEST_CASE("latency regions keep first-appearance order") {
  SourceMap map;
  map.power = Matrix(3, 2, 1.0);
  const ActivationTimeline timeline =
      detect_latency(map, {"beta", "alpha", "beta"}, 0.5);
  CHECK(timeline.regions == std::vector<std::string>{"beta", "alpha"});
}

TEST_CASE("lead fields round-trip through their two files") {
  Rng rng(7);
  LeadField lf = random_lead_field(rng, 5, 9);
  lf.region_labels.assign(9, "none");
  lf.region_labels[2] = "motor";
  const auto dir = std::filesystem::temp_directory_path();
  const std::string gain_path = (dir / "ekr_lf_gain.csv").string();
  const std::string pos_path = (dir / "ekr_lf_pos.csv").string();
  write_lead_field(lf, gain_path, pos_path);
  const LeadField back = load_lead_field(gain_path, pos_path);
  CHECK(back.sensor_names == lf.sensor_names);
  CHECK(back.region_labels == lf.region_labels);
  REQUIRE(back.gain.rows() == 5);
  REQUIRE(back.gain.cols() == 9);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 9; ++c) CHECK(back.gain(r, c) == lf.gain(r, c));
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(back.sensor_positions[r][k] == lf.sensor_positions[r][k]);
    }
  }
  for (std::size_t c = 0; c < 9; ++c) {
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(back.dipole_positions[c][k] == lf.dipole_positions[c][k]);
    }
  }
}

TEST_CASE("the inverse validates shape agreement") {
  Rng rng(8);
  const LeadField lf = random_lead_field(rng, 6, 10);
  Matrix bad(5, 4);
  CHECK_THROWS_AS(sloreta_inverse(lf, bad, 1e-6), data_error);
}
