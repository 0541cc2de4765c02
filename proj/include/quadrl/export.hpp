#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadrl/mlp.hpp"

namespace quadrl {

// Weights file layout, all integers little-endian:
//
//   offset  size        field
//   0       8           magic "QRLMLP\0\0"
//   8       4           u32 format version (kWeightsFormatVersion)
//   12      4           u32 layer count L
//   16      4 * (L+1)   u32 layer sizes, input first
//   ..      L           u8 activation per layer (0 linear, 1 tanh)
//   ..      8 * P       f64 parameters: per layer W row-major, then b
//   ..      4           u32 CRC-32 (zlib polynomial) of every preceding byte

inline constexpr std::uint32_t kWeightsFormatVersion = 1;

class WeightsFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class WeightsChecksumError : public WeightsFormatError {
 public:
  using WeightsFormatError::WeightsFormatError;
};
class WeightsTruncatedError : public WeightsFormatError {
 public:
  using WeightsFormatError::WeightsFormatError;
};
class WeightsVersionError : public WeightsFormatError {
 public:
  using WeightsFormatError::WeightsFormatError;
};

std::vector<std::uint8_t> encode_weights(const Mlp& net);
Mlp decode_weights(const std::vector<std::uint8_t>& bytes);
/// CRC stored in the trailer of an encoded weights blob.
std::uint32_t weights_checksum(const Mlp& net);

void save_weights(const Mlp& net, const std::filesystem::path& path);
Mlp load_weights(const std::filesystem::path& path);

enum class Precision { F32, F64 };

struct GeneratedSource {
  std::string text;
  std::uint32_t checksum = 0;  // weights checksum recorded in the header
  std::size_t multiply_adds = 0;
};

/// Emits a self-contained C99 translation unit defining
/// `void policy_forward(const T input[N], T output[4])` with T float or double.
/// The only header is <math.h> for tanh. `timestamp` goes into the header
/// comment, which sits outside the deterministic body.
GeneratedSource generate_inference_source(const Mlp& net, Precision precision,
                                          const std::string& timestamp = "");

/// Line that separates the metadata header from the deterministic body.
inline constexpr const char* kGeneratedBodyMarker = "/* ---- generated body ---- */";

}  // namespace quadrl
