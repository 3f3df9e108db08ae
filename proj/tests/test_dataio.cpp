#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ekr/dataio.hpp"
#include "ekr/errors.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;
using namespace ekr;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("ekr_dataio_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Direct evaluation of the generative map, reading lags before the trial
// start as zero. Independent of the library's internal response helper.
double linear_response(const Matrix& eeg, const std::vector<double>& w, std::size_t lag,
                       std::size_t t) {
  double acc = 0.0;
  for (std::size_t n = 0; n < eeg.rows(); ++n) {
    for (std::size_t l = 0; l <= lag; ++l) {
      if (t < l) continue;
      acc += w[n * (lag + 1) + l] * eeg(n, t - l);
    }
  }
  return acc;
}

} // namespace

TEST_CASE("synthetic linear kinematics follow the recorded generative map") {
  SynthSpec spec;
  spec.channels = 5;
  spec.trials = 3;
  spec.samples_per_trial = 120;
  spec.lag_order = 4;
  spec.seed = 9;
  auto [ds, gt] = generate_synthetic(spec);
  REQUIRE(ds.trials.size() == 3);
  REQUIRE(gt.channels == 5);
  for (const auto& trial : ds.trials) {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      for (std::size_t t = 0; t < trial.samples(); ++t) {
        const double expected =
            gt.effective_intercept[axis] +
            linear_response(trial.eeg, gt.effective_weights[axis], gt.lag_order, t);
        CHECK(trial.kinematics(axis, t) == doctest::Approx(expected).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("synthetic kinematics stay inside the unit cube") {
  for (const auto nl : {Nonlinearity::none, Nonlinearity::tanh_mix}) {
    SynthSpec spec;
    spec.channels = 4;
    spec.trials = 4;
    spec.samples_per_trial = 200;
    spec.lag_order = 3;
    spec.nonlinearity = nl;
    spec.noise_std = nl == Nonlinearity::none ? 0.0 : 0.05;
    spec.seed = 21;
    auto [ds, gt] = generate_synthetic(spec);
    for (const auto& trial : ds.trials) {
      for (std::size_t axis = 0; axis < 3; ++axis) {
        for (std::size_t t = 0; t < trial.samples(); ++t) {
          CHECK(trial.kinematics(axis, t) >= 0.0);
          CHECK(trial.kinematics(axis, t) <= 1.0);
        }
      }
    }
  }
}

TEST_CASE("synthetic subjects get contiguous near-equal trial blocks") {
  SynthSpec spec;
  spec.channels = 3;
  spec.trials = 11;
  spec.samples_per_trial = 50;
  spec.lag_order = 2;
  spec.subjects = 3;
  spec.seed = 2;
  auto [ds, gt] = generate_synthetic(spec);
  // 11 over 3 subjects: 4, 4, 3 in subject order.
  std::map<int, int> counts;
  for (const auto& trial : ds.trials) counts[trial.subject_id]++;
  REQUIRE(counts.size() == 3);
  CHECK(counts[1] == 4);
  CHECK(counts[2] == 4);
  CHECK(counts[3] == 3);
  for (const auto& trial : ds.trials) {
    CHECK(trial.cue_index == 0);
    CHECK(trial.onset_index == 0);
    CHECK(trial.trial_id >= 1);
  }
}

TEST_CASE("synthetic montage uses the standard names only at 32 channels") {
  SynthSpec spec;
  spec.trials = 1;
  spec.samples_per_trial = 40;
  spec.lag_order = 1;
  spec.channels = 32;
  auto [ds32, gt32] = generate_synthetic(spec);
  CHECK(ds32.montage == standard_montage_32());
  spec.channels = 6;
  auto [ds6, gt6] = generate_synthetic(spec);
  REQUIRE(ds6.montage.size() == 6);
  CHECK(ds6.montage.front() == "S01");
}

TEST_CASE("standard montage has 32 distinct labels") {
  const auto& names = standard_montage_32();
  REQUIRE(names.size() == 32);
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == 32);
}

TEST_CASE("dataset round-trips through csv exactly") {
  SynthSpec spec;
  spec.channels = 4;
  spec.trials = 5;
  spec.samples_per_trial = 64;
  spec.lag_order = 2;
  spec.subjects = 2;
  spec.seed = 123;
  auto [ds, gt] = generate_synthetic(spec);
  const fs::path dir = temp_dir("roundtrip");
  write_dataset(ds, dir.string());
  const Dataset back = load_dataset(dir.string());
  REQUIRE(back.trials.size() == ds.trials.size());
  CHECK(back.montage == ds.montage);
  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    const auto& a = ds.trials[i];
    const auto& b = back.trials[i];
    CHECK(a.subject_id == b.subject_id);
    CHECK(a.trial_id == b.trial_id);
    CHECK(a.sample_rate == b.sample_rate);
    CHECK(a.cue_index == b.cue_index);
    CHECK(a.onset_index == b.onset_index);
    CHECK(a.load_label == b.load_label);
    CHECK(a.friction_label == b.friction_label);
    REQUIRE(a.samples() == b.samples());
    for (std::size_t c = 0; c < a.channels(); ++c) {
      for (std::size_t t = 0; t < a.samples(); ++t) {
        CHECK(a.eeg(c, t) == b.eeg(c, t)); // bit-exact via shortest round-trip form
      }
    }
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t t = 0; t < a.samples(); ++t) {
        CHECK(a.kinematics(k, t) == b.kinematics(k, t));
      }
    }
  }
}

TEST_CASE("loading rejects kinematics outside the unit interval") {
  const fs::path dir = temp_dir("badkin");
  std::ofstream out(dir / "s001_t0001.csv");
  out << "# subject=1 trial=1 rate=100 cue=0 onset=0 load=light friction=low\n";
  out << "A,B,px,py,pz\n";
  out << "0.1,0.2,0.5,0.5,0.5\n";
  out << "0.1,0.2,1.5,0.5,0.5\n";
  out.close();
  CHECK_THROWS_AS(load_dataset(dir.string()), data_error);
}

TEST_CASE("loading rejects non-finite samples") {
  const fs::path dir = temp_dir("nonfinite");
  std::ofstream out(dir / "s001_t0001.csv");
  out << "# subject=1 trial=1 rate=100 cue=0 onset=0 load=light friction=low\n";
  out << "A,B,px,py,pz\n";
  out << "0.1,nan,0.5,0.5,0.5\n";
  out.close();
  CHECK_THROWS_AS(load_dataset(dir.string()), data_error);
}

TEST_CASE("loading rejects an onset before the cue") {
  const fs::path dir = temp_dir("badonset");
  std::ofstream out(dir / "s001_t0001.csv");
  out << "# subject=1 trial=1 rate=100 cue=2 onset=1 load=light friction=low\n";
  out << "A,px,py,pz\n";
  out << "0.1,0.5,0.5,0.5\n";
  out << "0.1,0.5,0.5,0.5\n";
  out << "0.1,0.5,0.5,0.5\n";
  out.close();
  CHECK_THROWS_AS(load_dataset(dir.string()), data_error);
}

TEST_CASE("loading rejects montage disagreement between trials") {
  const fs::path dir = temp_dir("mixmontage");
  {
    std::ofstream out(dir / "s001_t0001.csv");
    out << "# subject=1 trial=1 rate=100 cue=0 onset=0 load=light friction=low\n";
    out << "A,B,px,py,pz\n";
    out << "0.1,0.2,0.5,0.5,0.5\n";
  }
  {
    std::ofstream out(dir / "s001_t0002.csv");
    out << "# subject=1 trial=2 rate=100 cue=0 onset=0 load=light friction=low\n";
    out << "A,C,px,py,pz\n";
    out << "0.1,0.2,0.5,0.5,0.5\n";
  }
  CHECK_THROWS_AS(load_dataset(dir.string()), data_error);
}

TEST_CASE("loading rejects duplicate subject and trial identity") {
  const fs::path dir = temp_dir("dup");
  for (const char* name : {"a.csv", "b.csv"}) {
    std::ofstream out(dir / name);
    out << "# subject=1 trial=1 rate=100 cue=0 onset=0 load=light friction=low\n";
    out << "A,px,py,pz\n";
    out << "0.1,0.5,0.5,0.5\n";
  }
  CHECK_THROWS_AS(load_dataset(dir.string()), data_error);
}

TEST_CASE("trials come back sorted by subject then trial") {
  const fs::path dir = temp_dir("order");
  auto write_one = [&](const char* file, int subject, int trial) {
    std::ofstream out(dir / file);
    out << "# subject=" << subject << " trial=" << trial
        << " rate=100 cue=0 onset=0 load=light friction=low\n";
    out << "A,px,py,pz\n";
    out << "0.1,0.5,0.5,0.5\n";
  };
  write_one("z.csv", 2, 1);
  write_one("y.csv", 1, 2);
  write_one("x.csv", 1, 1);
  const Dataset ds = load_dataset(dir.string());
  REQUIRE(ds.trials.size() == 3);
  CHECK(ds.trials[0].subject_id == 1);
  CHECK(ds.trials[0].trial_id == 1);
  CHECK(ds.trials[1].subject_id == 1);
  CHECK(ds.trials[1].trial_id == 2);
  CHECK(ds.trials[2].subject_id == 2);
  CHECK(ds.trials[2].trial_id == 1);
}

TEST_CASE("split sizes follow floor rounding with the remainder in train") {
  SynthSpec spec;
  spec.channels = 2;
  spec.samples_per_trial = 20;
  spec.lag_order = 1;

  spec.trials = 120;
  auto [ds120, gt120] = generate_synthetic(spec);
  const auto parts120 = split_dataset(ds120, {0.70, 0.15, 0.15});
  CHECK(parts120[0].trials.size() == 84);
  CHECK(parts120[1].trials.size() == 18);
  CHECK(parts120[2].trials.size() == 18);

  spec.trials = 10;
  auto [ds10, gt10] = generate_synthetic(spec);
  const auto parts10 = split_dataset(ds10, {0.70, 0.15, 0.15});
  CHECK(parts10[0].trials.size() == 8);
  CHECK(parts10[1].trials.size() == 1);
  CHECK(parts10[2].trials.size() == 1);
}

TEST_CASE("split blocks are contiguous and ordered train, val, test") {
  SynthSpec spec;
  spec.channels = 2;
  spec.trials = 10;
  spec.samples_per_trial = 20;
  spec.lag_order = 1;
  auto [ds, gt] = generate_synthetic(spec);
  const auto parts = split_dataset(ds, {0.70, 0.15, 0.15});
  std::vector<int> ids;
  for (const auto& p : parts) {
    for (const auto& trial : p.trials) ids.push_back(trial.trial_id);
  }
  std::vector<int> expected;
  for (const auto& trial : ds.trials) expected.push_back(trial.trial_id);
  CHECK(ids == expected);
}

TEST_CASE("split accepts a zero ratio but rejects too few trials") {
  SynthSpec spec;
  spec.channels = 2;
  spec.trials = 3;
  spec.samples_per_trial = 20;
  spec.lag_order = 1;
  auto [ds, gt] = generate_synthetic(spec);
  const auto parts = split_dataset(ds, {1.0, 0.0, 0.0});
  CHECK(parts[0].trials.size() == 3);
  CHECK(parts[1].trials.empty());
  CHECK(parts[2].trials.empty());

  SynthSpec two = spec;
  two.trials = 2;
  auto [ds2, gt2] = generate_synthetic(two);
  CHECK_THROWS_AS(split_dataset(ds2, {0.70, 0.15, 0.15}), data_error);
}

TEST_CASE("split rejects ratios that do not sum to one") {
  SynthSpec spec;
  spec.channels = 2;
  spec.trials = 5;
  spec.samples_per_trial = 20;
  spec.lag_order = 1;
  auto [ds, gt] = generate_synthetic(spec);
  CHECK_THROWS_AS(split_dataset(ds, {0.5, 0.2, 0.2}), data_error);
  CHECK_THROWS_AS(split_dataset(ds, {1.2, -0.1, -0.1}), data_error);
}
