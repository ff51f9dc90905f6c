// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "ddpmw2/json_io.hpp"
#include "ddpmw2/sample_io.hpp"

using namespace ddpmw2;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ddpmw2_test_io";
  fs::create_directories(dir);
  return dir / name;
}

// Awkward doubles: subnormal-adjacent, long mantissas, negative zero.
double awkward(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> e(-30, 30);
  return std::ldexp(u(gen), e(gen)) + 1e-17 * u(gen);
}

bool same_bits(const Vector& a, const Vector& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}
bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

TargetSpec round_trip(const TargetSpec& t) { return target_from_json(Json::parse(target_to_json(t).dump())); }
}  // namespace

TEST(TargetJson, LosslessRoundTrip) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 50; ++trial) {
    Vector mean(3), var(3), hw(2);
    for (int j = 0; j < 3; ++j) {
      mean[j] = awkward(gen);
      var[j] = std::abs(awkward(gen)) + 1e-3;
    }
    for (int j = 0; j < 2; ++j) hw[j] = std::abs(awkward(gen)) + 1e-3;
    const auto g = round_trip(TargetSpec::gaussian(mean, var));
    EXPECT_TRUE(same_bits(g.gaussian_params().mean, mean));
    EXPECT_TRUE(same_bits(g.gaussian_params().var, var));

    Matrix means(2, 3);
    for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = awkward(gen);
    const Vector w = (Vector(2) << 0.3, 0.7).finished();
    const auto m = round_trip(TargetSpec::mixture(w, means, 0.123456789012345678));
    EXPECT_TRUE(same_bits(m.mixture_params().means, means));
    EXPECT_EQ(m.mixture_params().var, 0.123456789012345678);

    const double tau = std::abs(awkward(gen)) + 1e-3;
    const auto c = round_trip(TargetSpec::convolution(TargetSpec::uniform_box(hw), tau));
    EXPECT_EQ(c.convolution_params().tau, tau);
    EXPECT_TRUE(same_bits(c.convolution_params().inner->box_params().half_width, hw));
  }
}

TEST(TargetJson, SubspaceRoundTrip) {
  const double s = 1.0 / std::sqrt(2.0);
  Matrix U(3, 1);
  U << s, s, 0.0;
  const Vector off = (Vector(3) << 0.1, -0.2, 0.3).finished();
  const auto t = TargetSpec::subspace(TargetSpec::uniform_box(Vector::Ones(1)), U, off);
  const Json j = target_to_json(t);
  EXPECT_EQ(j.at("kind"), "subspace_embedded");
  EXPECT_EQ(j.at("dim"), 3);
  const auto back = round_trip(t);
  EXPECT_TRUE(same_bits(back.subspace_params().basis, U));
  EXPECT_TRUE(same_bits(back.subspace_params().offset, off));
}

TEST(TargetJson, Rejections) {
  EXPECT_THROW(target_from_json(Json::parse(R"({"kind":"gaussian","dim":2,"params":{"mean":[0],"var":[1]}})")),
               ValidationError);
  EXPECT_THROW(target_from_json(Json::parse(R"({"kind":"banana","params":{}})")), ValidationError);
  EXPECT_THROW(target_from_json(Json::parse(R"({"kind":"gaussian","params":{"mean":[0]}})")), ValidationError);
  EXPECT_THROW(target_from_json(Json::parse(R"({"kind":"uniform_box","params":{"half_width":["x"]}})")),
               ValidationError);
  EXPECT_NO_THROW(target_from_json(Json::parse(R"({"kind":"uniform_box","params":{"half_width":[1,2]}})")));
}

TEST(ScheduleJson, Forms) {
  const Schedule a = schedule_from_json(Json::parse(R"({"T1":1,"a":1,"K0":2})"));
  EXPECT_NEAR(a.times[3], 1.649664241976043, 1e-13);
  const Schedule b = schedule_from_json(Json::parse("[0, 0.5, 2]"));
  EXPECT_EQ(b.K(), 1);
  const Schedule c = schedule_from_json(schedule_to_json(a));
  EXPECT_EQ(c.times, a.times);
  EXPECT_THROW(schedule_from_json(Json::parse(R"({"T1":1,"K0":2.5})")), ValidationError);
  EXPECT_THROW(schedule_from_json(Json::parse("[0, 2, 1]")), ValidationError);
  const Json out = schedule_to_json(a);
  EXPECT_EQ(out.at("K"), 4);
  EXPECT_TRUE(out.contains("geometric_c"));
}

TEST(JsonArg, InlineAndFile) {
  EXPECT_EQ(json_arg(R"({"x": 1})").at("x"), 1);
  const auto p = scratch("arg.json");
  std::ofstream(p) << R"([1, 2])";
  EXPECT_EQ(json_arg(p.string()).size(), 2u);
  EXPECT_THROW(json_arg("{broken"), ValidationError);
  EXPECT_THROW(json_arg((fs::temp_directory_path() / "ddpmw2_missing.json").string()), ValidationError);
}

TEST(SampleFile, RoundTripBitwise) {
  std::mt19937_64 gen(2);
  Samples xs(17, 3);
  for (Eigen::Index i = 0; i < xs.size(); ++i) xs.data()[i] = awkward(gen);
  xs(0, 0) = -0.0;
  const auto p = scratch("s.bin");
  write_samples(p.string(), xs);
  EXPECT_EQ(fs::file_size(p), 16u + 17u * 3u * 8u);
  const Samples back = read_samples(p.string());
  EXPECT_TRUE(same_bits(Matrix(back), Matrix(xs)));
  EXPECT_TRUE(std::signbit(back(0, 0)));
}

TEST(SampleFile, HeaderLayout) {
  Samples xs(2, 1);
  xs << 1.0, 2.0;
  const auto p = scratch("h.bin");
  write_samples(p.string(), xs);
  std::ifstream in(p, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(bytes.size(), 32u);
  EXPECT_EQ(std::memcmp(bytes.data(), "DDPMW2\0\0", 8), 0);
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[12], 1);
  // 1.0 little-endian: 00 .. 00 f0 3f
  EXPECT_EQ(bytes[16 + 7], 0x3f);
  EXPECT_EQ(bytes[16 + 6], 0xf0);
}

TEST(SampleFile, Corruption) {
  Samples xs = Samples::Ones(4, 2);
  const auto p = scratch("c.bin");
  write_samples(p.string(), xs);
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  EXPECT_THROW(read_samples(p.string()), ValidationError);
  write_samples(p.string(), xs);
  fs::resize_file(p, fs::file_size(p) - 3);
  EXPECT_THROW(read_samples(p.string()), ValidationError);
  write_samples(p.string(), xs);
  std::ofstream(p, std::ios::app | std::ios::binary) << 'z';
  EXPECT_THROW(read_samples(p.string()), ValidationError);
  EXPECT_THROW(read_samples(scratch("nope.bin").string()), ValidationError);
}
