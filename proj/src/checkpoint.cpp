#include "attnforge/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace attnforge {

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'T', 'N', 'F'};

template <typename U>
void write_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U read_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw InputError(std::string("checkpoint truncated while reading ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const char* what) {
  const auto len = read_le<std::uint32_t>(in, what);
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len)) throw InputError(std::string("checkpoint truncated in ") + what);
  return s;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams<double>& params) {
  out.write(kMagic.data(), kMagic.size());
  write_le<std::uint32_t>(out, kCheckpointVersion);
  const nlohmann::json header{{"config", params.config}, {"trained_steps", params.trained_steps}};
  write_string(out, header.dump());
  params.for_each_param([&](const std::string& name, const Tensor<double>& t) {
    write_string(out, name);
    write_le<std::uint64_t>(out, t.size());
    for (double v : t.data()) write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  });
  if (!out) throw InputError("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<double>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  save_checkpoint(out, params);
}

ModelParams<double> load_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw InputError("not an ATNF checkpoint");
  const auto version = read_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(read_string(in, "header"));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (!header.contains("config")) throw InputError("checkpoint header lacks a config");
  const auto config = header.at("config").get<ModelConfig>();

  // Shapes come from the config; the stream must match them name by name.
  Rng unused(0);
  auto params = init_model<double>(config, unused);
  params.trained_steps = header.value("trained_steps", std::uint64_t{0});
  params.for_each_param([&](const std::string& name, Tensor<double>& t) {
    const auto stored = read_string(in, "parameter name");
    if (stored != name) throw InputError("checkpoint parameter '" + stored + "' where '" + name + "' was expected");
    const auto count = read_le<std::uint64_t>(in, "element count");
    if (count != t.size()) {
      throw InputError("parameter '" + name + "' holds " + std::to_string(count) + " values, expected " +
                       std::to_string(t.size()));
    }
    auto data = t.mutable_data();
    for (auto& v : data) v = std::bit_cast<double>(read_le<std::uint64_t>(in, "parameter values"));
  });
  if (in.peek() != std::char_traits<char>::eof()) throw InputError("trailing bytes after the last parameter");
  return params;
}

ModelParams<double> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace attnforge
