#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "koopkit/ioformats.hpp"
#include "koopkit/systems.hpp"

using namespace koopkit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("koopkit_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(Csv, MatrixRoundTrip) {
  const auto dir = temp_dir("matrix");
  RealMatrix m(3, 2);
  m << 0.1, -2.5e-300, 1.0 / 3.0, 6.02214076e23, -0.0, 42.0;
  io::write_csv(dir / "m.csv", {"a", "b"}, m);
  const auto t = io::read_csv(dir / "m.csv");
  ASSERT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  const RealMatrix back = t.as_matrix();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_TRUE(bitwise_equal(m(i, j), back(i, j)));
}

TEST(Csv, RandomDoublesRoundTripExactly) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int i = 0; i < 20000; ++i) {
    double v;
    std::uint64_t b = bits(rng);
    std::memcpy(&v, &b, sizeof v);
    if (!std::isfinite(v)) continue;
    EXPECT_TRUE(bitwise_equal(io::parse_double(io::format_double(v), 1), v)) << io::format_double(v);
  }
}

TEST(Csv, SeventeenSignificantDigits) {
  EXPECT_EQ(io::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(io::format_double(1.0), "1");
}

TEST(Csv, RaggedRowNamesLine) {
  const auto dir = temp_dir("ragged");
  std::ofstream(dir / "r.csv") << "a,b\n1,2\n3,4\n5\n";
  try {
    io::read_csv(dir / "r.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST(Csv, MalformedNumeral) {
  const auto dir = temp_dir("malformed");
  std::ofstream(dir / "r.csv") << "a,b\n1,2x\n";
  EXPECT_THROW(io::read_csv(dir / "r.csv"), ParseError);
  std::ofstream(dir / "e.csv") << "a\n\n1,\n";
  EXPECT_THROW(io::read_csv(dir / "e.csv"), ParseError);
}

TEST(Csv, WriterRejectsRaggedRows) {
  const auto dir = temp_dir("writer");
  EXPECT_THROW(io::write_csv(dir / "x.csv", {"a", "b"}, std::vector<std::vector<double>>{{1.0, 2.0}, {3.0}}),
               InvalidInput);
}

TEST(Csv, MissingFileIsIoError) { EXPECT_THROW(io::read_csv("/nonexistent/koopkit.csv"), IoError); }

TEST(Csv, SnapshotPairsRoundTripBitwise) {
  const auto dir = temp_dir("pairs");
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  systems::SnapshotPairSet pairs;
  pairs.x.resize(2500, 100);
  pairs.y.resize(2500, 100);
  for (Eigen::Index i = 0; i < pairs.x.size(); ++i) {
    pairs.x.data()[i] = n(rng);
    pairs.y.data()[i] = n(rng) * 1e-7;
  }
  pairs.step_size = 1e-4;
  pairs.system = "gradient-descent/mueller-brown-embedded";
  systems::write_pairs_csv(dir / "pairs.csv", pairs);
  const auto back = systems::read_pairs_csv(dir / "pairs.csv");
  EXPECT_EQ(back.system, pairs.system);
  EXPECT_TRUE(bitwise_equal(back.step_size, pairs.step_size));
  ASSERT_EQ(back.x.rows(), 2500);
  ASSERT_EQ(back.x.cols(), 100);
  EXPECT_EQ(std::memcmp(back.x.data(), pairs.x.data(), sizeof(double) * pairs.x.size()), 0);
  EXPECT_EQ(std::memcmp(back.y.data(), pairs.y.data(), sizeof(double) * pairs.y.size()), 0);
  // Re-writing the parsed pairs reproduces the file byte for byte.
  systems::write_pairs_csv(dir / "pairs2.csv", back);
  EXPECT_EQ(io::sha256_file(dir / "pairs.csv"), io::sha256_file(dir / "pairs2.csv"));
}

TEST(Csv, PairsHeaderLayout) {
  const auto dir = temp_dir("layout");
  systems::SnapshotPairSet pairs;
  pairs.x = RealMatrix::Constant(1, 2, 1.0);
  pairs.y = RealMatrix::Constant(1, 2, 0.5);
  pairs.step_size = 0.5;
  pairs.system = "toy";
  systems::write_pairs_csv(dir / "p.csv", pairs);
  std::ifstream in(dir / "p.csv");
  std::string l1, l2, l3, l4;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  std::getline(in, l4);
  EXPECT_EQ(l1, "dim,step_size,system");
  EXPECT_EQ(l2, "2,0.5,toy");
  EXPECT_EQ(l3, "x_1,x_2,y_1,y_2");
  EXPECT_EQ(l4, "1,1,0.5,0.5");
}

TEST(Sha256, KnownDigest) {
  const auto dir = temp_dir("sha");
  std::ofstream(dir / "abc.txt", std::ios::binary) << "abc";
  EXPECT_EQ(io::sha256_file(dir / "abc.txt"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Manifest, ListsFilesWithChecksumsAndDetectsTampering) {
  const auto dir = temp_dir("manifest");
  io::write_csv(dir / "a.csv", {"x"}, RealMatrix::Ones(2, 1));
  io::Manifest m("demo");
  m.add_file(dir, "a.csv");
  m.seeds()["master"] = 7;
  m.timings()["wall_seconds"] = 0.5;
  const auto j = m.to_json();
  EXPECT_EQ(j.at("experiment"), "demo");
  EXPECT_EQ(j.at("files").size(), 1u);
  EXPECT_EQ(j.at("library_version"), kVersion);
  EXPECT_TRUE(io::Manifest::verify(dir, j).empty());
  std::ofstream(dir / "a.csv", std::ios::app) << "3\n";
  EXPECT_EQ(io::Manifest::verify(dir, j), std::vector<std::string>{"a.csv"});
  EXPECT_THROW(m.add_file(dir, "missing.csv"), IoError);
}
