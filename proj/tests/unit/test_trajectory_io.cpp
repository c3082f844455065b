#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "symrep/trajectory_io.hpp"

namespace symrep::env {
namespace {

namespace fs = std::filesystem;

class TrajectoryIo : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("symrep_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

TEST_F(TrajectoryIo, DiscreteTrajectoryRoundTrips) {
  const Environment env({EnvironmentKind::Factor, 5, StartPolicy::Random, true, 9});
  const Trajectory t = sample_trajectory(env, std::nullopt, 6, 4);
  write_trajectory_csv(t, dir_ / "t.csv");
  const Trajectory back = read_trajectory_csv(dir_ / "t.csv");
  EXPECT_EQ(back.actions, t.actions);
  EXPECT_EQ(back.observations, t.observations);
}

TEST_F(TrajectoryIo, ContinuousTrajectoryRoundTripsBitExactly) {
  const Environment env({EnvironmentKind::Sphere});
  const Trajectory t = sample_trajectory(env, std::nullopt, 3, 8);
  write_trajectory_csv(t, dir_ / "s.csv");
  const Trajectory back = read_trajectory_csv(dir_ / "s.csv");
  EXPECT_EQ(back.actions, t.actions);
  EXPECT_EQ(back.observations, t.observations);
}

TEST_F(TrajectoryIo, HeaderNamesActionAndObservationColumns) {
  const Environment env({EnvironmentKind::Torus, 5});
  write_trajectory_csv(sample_trajectory(env, std::nullopt, 2, 1), dir_ / "t.csv");
  std::ifstream in(dir_ / "t.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("step,action_id,axis,angle,obs_0,obs_1,", 0), 0u) << header;
  EXPECT_NE(header.find("obs_24"), std::string::npos);
}

TEST_F(TrajectoryIo, DatasetRoundTripPreservesStartsSoReplayHolds) {
  for (const EnvironmentSpec& spec :
       {EnvironmentSpec{EnvironmentKind::Torus, 10}, EnvironmentSpec{EnvironmentKind::Sphere}}) {
    const Dataset d = generate_dataset(spec, 77, 4, 5);
    ASSERT_EQ(d.trajectories.size(), 5u);
    const fs::path out = dir_ / to_string(spec.kind);
    export_dataset(d, out);
    const Dataset back = import_dataset(out);
    EXPECT_EQ(back.environment, spec);
    EXPECT_EQ(back.seed, 77u);
    EXPECT_EQ(back.rollout_length, 4);
    ASSERT_EQ(back.trajectories.size(), 5u);
    const Environment env(spec);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_EQ(back.trajectories[k].observations, d.trajectories[k].observations);
      EXPECT_EQ(replay(env, back.trajectories[k]), back.trajectories[k].observations);
    }
  }
}

TEST_F(TrajectoryIo, GeneratedDatasetUsesDerivedSeeds) {
  const EnvironmentSpec spec{EnvironmentKind::Torus, 5};
  const Dataset d = generate_dataset(spec, 3, 5, 2);
  const Environment env(spec);
  EXPECT_EQ(d.trajectories[1].actions,
            sample_trajectory(env, std::nullopt, 5, derive_seed(3, 1)).actions);
}

TEST_F(TrajectoryIo, EmptyDatasetStillHasMetadata) {
  export_dataset(generate_dataset({EnvironmentKind::Torus, 5}, 1, 5, 0), dir_ / "empty");
  EXPECT_TRUE(fs::exists(dir_ / "empty" / kMetadataFile));
  EXPECT_TRUE(import_dataset(dir_ / "empty").trajectories.empty());
}

TEST_F(TrajectoryIo, MalformedInputsAreRejected) {
  EXPECT_THROW(read_trajectory_csv(dir_ / "missing.csv"), DatasetError);
  EXPECT_THROW(import_dataset(dir_ / "nowhere"), DatasetError);

  std::ofstream(dir_ / "bad_header.csv") << "a,b,c\n1,2,3\n";
  EXPECT_THROW(read_trajectory_csv(dir_ / "bad_header.csv"), DatasetError);

  std::ofstream(dir_ / "ragged.csv") << "step,action_id,axis,angle,obs_0,obs_1\n0,1,,,1,0\n1,,,,0\n";
  EXPECT_THROW(read_trajectory_csv(dir_ / "ragged.csv"), DatasetError);

  std::ofstream(dir_ / "number.csv") << "step,action_id,axis,angle,obs_0\n0,,,,abc\n";
  EXPECT_THROW(read_trajectory_csv(dir_ / "number.csv"), DatasetError);

  std::ofstream(dir_ / "unterminated.csv") << "step,action_id,axis,angle,obs_0\n0,1,,,1\n";
  EXPECT_THROW(read_trajectory_csv(dir_ / "unterminated.csv"), DatasetError);

  fs::create_directories(dir_ / "meta");
  std::ofstream(dir_ / "meta" / kMetadataFile) << "{not json";
  EXPECT_THROW(import_dataset(dir_ / "meta"), DatasetError);
}

}  // namespace
}  // namespace symrep::env
