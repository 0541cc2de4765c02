#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "quadrl/env.hpp"
#include "quadrl/export.hpp"
#include "support/compiled_policy.hpp"

using namespace quadrl;

namespace {

Mlp actor(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Mlp::random({146, 64, 64, 4}, rng);
}

std::string body_of(const std::string& text) {
  return text.substr(text.find(kGeneratedBodyMarker));
}

}  // namespace

TEST_SUITE("export") {

TEST_CASE("weights round trip bitwise") {
  const Mlp net = actor(1);
  const auto bytes = encode_weights(net);
  const Mlp back = decode_weights(bytes);
  CHECK(back.sizes() == net.sizes());
  const Eigen::VectorXd a = net.flatten(), b = back.flatten();
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
  CHECK(encode_weights(back) == bytes);
  CHECK(back.layers()[0].activation == Activation::Tanh);
  CHECK(back.layers()[2].activation == Activation::Linear);
}

TEST_CASE("file save and load") {
  const auto path = std::filesystem::temp_directory_path() / "quadrl_export_test.qrlw";
  const Mlp net = actor(2);
  save_weights(net, path);
  CHECK(load_weights(path).flatten() == net.flatten());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_weights(path), std::runtime_error);
}

TEST_CASE("corruption is detected") {
  const auto bytes = encode_weights(actor(3));
  auto flipped = bytes;
  flipped[100] ^= 0x01;
  CHECK_THROWS_AS(decode_weights(flipped), WeightsChecksumError);
  auto short_file = bytes;
  short_file.resize(bytes.size() - 10);
  CHECK_THROWS_AS(decode_weights(short_file), WeightsTruncatedError);
  auto version = bytes;
  version[8] = 2;
  CHECK_THROWS_AS(decode_weights(version), WeightsVersionError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_weights(magic), WeightsFormatError);
  auto longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(decode_weights(longer), WeightsFormatError);
}

TEST_CASE("generated source header and determinism") {
  const Mlp net = actor(4);
  const GeneratedSource a = generate_inference_source(net, Precision::F64, "2026-01-01T00:00:00Z");
  const GeneratedSource b = generate_inference_source(net, Precision::F64, "2030-12-31T23:59:59Z");
  CHECK(body_of(a.text) == body_of(b.text));
  CHECK(a.text != b.text);
  CHECK(a.multiply_adds == 13828);
  char crc[16];
  std::snprintf(crc, sizeof crc, "0x%08x", weights_checksum(net));
  CHECK(a.text.find(crc) != std::string::npos);
  CHECK(a.text.find("146 64 64 4") != std::string::npos);
  CHECK(a.text.find("#include <math.h>") != std::string::npos);
  // the body includes nothing but math.h
  CHECK(body_of(a.text).find("#include") == body_of(a.text).rfind("#include"));

  std::mt19937_64 rng(5);
  CHECK_THROWS_AS(generate_inference_source(Mlp::random({3, 2}, rng), Precision::F64), std::invalid_argument);
}

TEST_CASE("compiled f64 and f32 sources match the reference forward pass") {
  const Mlp net = actor(6);
  const auto f64 = generate_inference_source(net, Precision::F64);
  const auto f32 = generate_inference_source(net, Precision::F32);
  testing::CompiledPolicy lib64(f64.text, "unit64"), lib32(f32.text, "unit32");
  using F64 = void (*)(const double*, double*);
  using F32 = void (*)(const float*, float*);
  auto fwd64 = lib64.symbol<F64>("policy_forward");
  auto fwd32 = lib32.symbol<F32>("policy_forward");

  QuadEnv env(EnvConfig{}, {}, {}, 7);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst64 = 0.0, worst32 = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd obs = env.reset();
    for (int k = 18; k < 146; ++k) obs[k] = u(rng);
    const Eigen::VectorXd ref = net.predict(obs);
    double out64[4];
    fwd64(obs.data(), out64);
    float in32[146], out32[4];
    for (int k = 0; k < 146; ++k) in32[k] = static_cast<float>(obs[k]);
    fwd32(in32, out32);
    for (int j = 0; j < 4; ++j) {
      worst64 = std::max(worst64, std::abs(out64[j] - ref[j]));
      worst32 = std::max(worst32, std::abs(double(out32[j]) - ref[j]));
    }
  }
  MESSAGE("f64 " << worst64 << " f32 " << worst32);
  CHECK(worst64 < 1e-12);
  CHECK(worst32 < 1e-5);
}

TEST_CASE("operation counter matches the multiply-add budget") {
  const Mlp net = actor(9);
  const auto src = generate_inference_source(net, Precision::F32);
  testing::CompiledPolicy lib(src.text, "ops", "-DPOLICY_COUNT_OPS");
  using F32 = void (*)(const float*, float*);
  float in[146] = {}, out[4];
  lib.symbol<F32>("policy_forward")(in, out);
  CHECK(*lib.symbol<unsigned long*>("policy_op_count") == src.multiply_adds);
}

}
