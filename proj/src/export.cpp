#include "quadrl/export.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace quadrl {

namespace {

constexpr char kMagic[8] = {'Q', 'R', 'L', 'M', 'L', 'P', '\0', '\0'};
constexpr std::size_t kHeaderFixed = 16;

static_assert(std::endian::native == std::endian::little,
              "weights encoding assumes a little-endian host");

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, data, static_cast<uInt>(n)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

double get_f64(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string format_value(double v, Precision precision) {
  char buf[64];
  if (precision == Precision::F64) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.9gf", static_cast<double>(static_cast<float>(v)));
  }
  std::string s(buf);
  // Bare integers such as "0" or "1f" need a decimal point to stay floating literals.
  const bool has_point = s.find_first_of(".eEn") != std::string::npos;
  if (!has_point) {
    if (precision == Precision::F32) s.insert(s.size() - 1, ".0");
    else s += ".0";
  }
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const Mlp& net) {
  const auto sizes = net.sizes();
  if (sizes.empty()) throw std::invalid_argument("encode_weights: empty network");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kWeightsFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
  for (int s : sizes) put_u32(out, static_cast<std::uint32_t>(s));
  for (const auto& l : net.layers()) out.push_back(static_cast<std::uint8_t>(l.activation));
  const Eigen::VectorXd flat = net.flatten();
  out.reserve(out.size() + 8 * static_cast<std::size_t>(flat.size()) + 4);
  for (Eigen::Index i = 0; i < flat.size(); ++i) put_f64(out, flat[i]);
  put_u32(out, crc32_of(out.data(), out.size()));
  return out;
}

Mlp decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderFixed) throw WeightsTruncatedError("weights: file shorter than header");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw WeightsFormatError("weights: bad magic, not a weights file");
  }
  const std::uint32_t version = get_u32(bytes.data() + 8);
  if (version != kWeightsFormatVersion) {
    throw WeightsVersionError("weights: format version " + std::to_string(version) +
                              " is not supported (expected " +
                              std::to_string(kWeightsFormatVersion) + ")");
  }
  const std::uint32_t layer_count = get_u32(bytes.data() + 12);
  if (layer_count == 0 || layer_count > 64) {
    throw WeightsFormatError("weights: implausible layer count " + std::to_string(layer_count));
  }
  const std::size_t sizes_end = kHeaderFixed + 4 * (layer_count + 1);
  const std::size_t header_end = sizes_end + layer_count;
  if (bytes.size() < header_end) throw WeightsTruncatedError("weights: truncated layer table");

  std::vector<int> sizes;
  std::size_t params = 0;
  for (std::uint32_t i = 0; i <= layer_count; ++i) {
    const std::uint32_t s = get_u32(bytes.data() + kHeaderFixed + 4 * i);
    if (s == 0 || s > (1u << 20)) throw WeightsFormatError("weights: implausible layer size");
    sizes.push_back(static_cast<int>(s));
    if (i > 0) params += static_cast<std::size_t>(sizes[i - 1] + 1) * s;
  }
  const std::size_t expected = header_end + 8 * params + 4;
  if (bytes.size() < expected) {
    throw WeightsTruncatedError("weights: payload has " + std::to_string(bytes.size()) +
                                " bytes, header declares " + std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw WeightsFormatError("weights: " + std::to_string(bytes.size() - expected) +
                             " trailing bytes after checksum");
  }
  const std::uint32_t stored = get_u32(bytes.data() + expected - 4);
  if (stored != crc32_of(bytes.data(), expected - 4)) {
    throw WeightsChecksumError("weights: checksum mismatch");
  }

  std::vector<DenseLayer> layers(layer_count);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const std::uint8_t tag = bytes[sizes_end + i];
    if (tag > 1) throw WeightsFormatError("weights: unknown activation tag");
    layers[i].activation = static_cast<Activation>(tag);
    layers[i].weight.resize(sizes[i + 1], sizes[i]);
    layers[i].bias.resize(sizes[i + 1]);
  }
  const std::uint8_t* p = bytes.data() + header_end;
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c, p += 8) l.weight(r, c) = get_f64(p);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r, p += 8) l.bias[r] = get_f64(p);
  }
  return Mlp::from_layers(std::move(layers));
}

std::uint32_t weights_checksum(const Mlp& net) {
  const auto bytes = encode_weights(net);
  return get_u32(bytes.data() + bytes.size() - 4);
}

void save_weights(const Mlp& net, const std::filesystem::path& path) {
  const auto bytes = encode_weights(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_weights: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("save_weights: write failed for " + path.string());
}

Mlp load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_weights: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

GeneratedSource generate_inference_source(const Mlp& net, Precision precision,
                                          const std::string& timestamp) {
  if (net.layers().empty() || net.output_size() != 4) {
    throw std::invalid_argument("generate_inference_source: expected an actor with 4 outputs");
  }
  const bool f32 = precision == Precision::F32;
  const char* type = f32 ? "float" : "double";
  const char* tanh_fn = f32 ? "tanhf" : "tanh";
  const auto sizes = net.sizes();

  GeneratedSource gen;
  gen.checksum = weights_checksum(net);

  std::ostringstream head;
  head << "/*\n * Generated policy inference routine.\n";
  head << " * weights format version: " << kWeightsFormatVersion << "\n";
  head << " * layer sizes:";
  for (int s : sizes) head << ' ' << s;
  head << "\n * precision: " << (f32 ? "f32" : "f64") << "\n";
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", gen.checksum);
  head << " * weights checksum: 0x" << crc << "\n";
  head << " * exported: " << (timestamp.empty() ? "unspecified" : timestamp) << "\n */\n";

  std::ostringstream body;
  body << kGeneratedBodyMarker << "\n";
  body << "#include <math.h>\n\n";
  body << "#ifdef POLICY_COUNT_OPS\nunsigned long policy_op_count = 0;\n"
          "#define POLICY_OP() (++policy_op_count)\n#else\n#define POLICY_OP() ((void)0)\n#endif\n\n";
  body << "#define POLICY_INPUT_SIZE " << sizes.front() << "\n";
  body << "#define POLICY_OUTPUT_SIZE " << sizes.back() << "\n\n";

  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    body << "static const " << type << " policy_w" << i << '[' << l.weight.rows() << "]["
         << l.weight.cols() << "] = {\n";
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      body << "  {";
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
        body << (c ? ", " : "") << format_value(l.weight(r, c), precision);
      }
      body << "},\n";
    }
    body << "};\n";
    body << "static const " << type << " policy_b" << i << '[' << l.bias.size() << "] = {";
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) {
      body << (r ? ", " : "") << format_value(l.bias[r], precision);
    }
    body << "};\n\n";
    gen.multiply_adds += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  }

  body << "void policy_forward(const " << type << " input[" << sizes.front() << "], " << type
       << " output[" << sizes.back() << "]) {\n";
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    body << "  " << type << " h" << i << '[' << sizes[i + 1] << "];\n";
  }
  body << "  int i, j;\n";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string in = i == 0 ? "input" : "h" + std::to_string(i - 1);
    const std::string out = i + 1 == layers.size() ? "output" : "h" + std::to_string(i);
    body << "  for (i = 0; i < " << l.weight.rows() << "; ++i) {\n";
    body << "    " << type << " acc = policy_b" << i << "[i];\n";
    body << "    POLICY_OP();\n";
    body << "    for (j = 0; j < " << l.weight.cols() << "; ++j) {\n";
    body << "      acc += policy_w" << i << "[i][j] * " << in << "[j];\n";
    body << "      POLICY_OP();\n";
    body << "    }\n";
    if (l.activation == Activation::Tanh) {
      body << "    " << out << "[i] = " << tanh_fn << "(acc);\n";
    } else {
      body << "    " << out << "[i] = acc;\n";
    }
    body << "  }\n";
  }
  body << "}\n";

  gen.text = head.str() + body.str();
  return gen;
}

}  // namespace quadrl
