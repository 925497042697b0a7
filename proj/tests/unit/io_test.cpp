#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "desk.hpp"
#include "dryobs/io.hpp"
#include "dryobs/pipeline/validate.hpp"

namespace dryobs {
namespace {

namespace fs = std::filesystem;

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dryobs_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(IoTest, SnapshotsRoundTripBitExactly) {
  const testing::DeskProblem desk;
  io::write_snapshots(dir_ / "a.snap", desk.grid, "calibration-wood-v1", desk.trajectory);
  const io::SnapshotFile f = io::read_snapshots(dir_ / "a.snap");
  EXPECT_TRUE(f.grid.same_geometry(desk.grid));
  EXPECT_EQ(f.material_id, "calibration-wood-v1");
  ASSERT_EQ(f.times.size(), desk.trajectory.times.size());
  for (std::size_t j = 0; j < f.times.size(); ++j) {
    EXPECT_EQ(f.times[j], desk.trajectory.times[j]);
    EXPECT_EQ(f.states.col(static_cast<Eigen::Index>(j)), desk.trajectory.states[j]);
  }
  EXPECT_EQ(f.field(FieldId::Temperature).matrix, desk.field(FieldId::Temperature).matrix);
}

TEST_F(IoTest, BasisRoundTripsAndKeepsCutoffs) {
  const testing::DeskProblem desk;
  PodBasis px = desk.pod_x, pT = desk.pod_T;
  px.cutoff = 3;
  pT.cutoff = 2;
  io::write_basis(dir_ / "b.bin", px, pT, desk.grid.fingerprint());
  const io::BasisFile b = io::read_basis(dir_ / "b.bin");
  EXPECT_EQ(b.grid_fingerprint, desk.grid.fingerprint());
  EXPECT_EQ(b.moisture.cutoff, 3);
  EXPECT_EQ(b.temperature.cutoff, 2);
  EXPECT_EQ(b.moisture.all_modes, px.all_modes);
  EXPECT_EQ(b.temperature.mean, pT.mean);
  EXPECT_EQ(b.moisture.raw_spectrum, px.raw_spectrum);
  EXPECT_DOUBLE_EQ(b.moisture.cell_volume, px.cell_volume);
  EXPECT_TRUE(pipeline::check_orthonormality(b).pass);
}

TEST_F(IoTest, CorruptedBasisFailsOrthonormalityCheck) {
  const testing::DeskProblem desk;
  PodBasis px = desk.pod_x;
  px.all_modes(2, 1) += 0.1 * px.all_modes.col(1).cwiseAbs().maxCoeff();
  io::write_basis(dir_ / "bad.bin", px, desk.pod_T, desk.grid.fingerprint());
  const pipeline::Check c = pipeline::check_orthonormality(io::read_basis(dir_ / "bad.bin"));
  EXPECT_FALSE(c.pass);
  EXPECT_GT(c.value, 1e-3);
}

TEST_F(IoTest, TruncatedOrForeignFilesAreRejected) {
  const testing::DeskProblem desk;
  io::write_snapshots(dir_ / "a.snap", desk.grid, "m", desk.trajectory);
  EXPECT_THROW(io::read_basis(dir_ / "a.snap"), InvalidArgument);
  const auto size = fs::file_size(dir_ / "a.snap");
  fs::resize_file(dir_ / "a.snap", size - 8);
  EXPECT_THROW(io::read_snapshots(dir_ / "a.snap"), InvalidArgument);
  std::ofstream(dir_ / "junk.snap") << "format: dryobs-snapshots-1\nno end marker\n";
  EXPECT_THROW(io::read_snapshots(dir_ / "junk.snap"), InvalidArgument);
  EXPECT_THROW(io::read_snapshots(dir_ / "missing.snap"), ConfigurationError);
}

TEST_F(IoTest, CsvRoundTripsNumbersExactly) {
  const std::vector<double> v{0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23};
  {
    io::CsvWriter w(dir_ / "t.csv");
    w.header({"a", "b"});
    for (double x : v) w.row(std::vector<double>{x, -x});
  }
  const io::CsvTable t = io::read_csv(dir_ / "t.csv");
  ASSERT_EQ(t.columns, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(t.numbers("a"), v);
  EXPECT_EQ(t.numbers("b")[1], -1.0 / 3.0);
  EXPECT_THROW(t.column("c"), InvalidArgument);
}

}  // namespace
}  // namespace dryobs
