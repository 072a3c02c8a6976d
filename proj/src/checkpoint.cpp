#include "maldet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "maldet/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace maldet {
namespace {

constexpr char kMagic[8] = {'M', 'D', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("truncated checkpoint");
  return value;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw FormatError("truncated checkpoint");
  return s;
}

template <typename Tensor>
void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  write_string(out, name);
  write_pod<std::uint32_t>(out, 2);
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.cols()));
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      write_pod<float>(out, static_cast<float>(t(r, c)));
    }
  }
}

template <typename Tensor>
void read_tensor_into(std::istream& in, const std::string& expected_name,
                      Tensor& t) {
  std::string name = read_string(in);
  if (name != expected_name) {
    throw FormatError("checkpoint tensor order mismatch: expected " +
                      expected_name + ", found " + name);
  }
  auto rank = read_pod<std::uint32_t>(in);
  if (rank != 2) throw FormatError("unsupported tensor rank in checkpoint");
  auto rows = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in));
  auto cols = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in));
  t.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      t(r, c) = static_cast<double>(read_pod<float>(in));
    }
  }
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));

  const auto& c = params.config;
  write_pod<std::int32_t>(out, c.vocab_size);
  write_pod<std::int32_t>(out, c.d_model);
  write_pod<std::int32_t>(out, c.n_heads);
  write_pod<std::int32_t>(out, c.n_layers);
  write_pod<std::int32_t>(out, c.d_ff);
  write_pod<std::int32_t>(out, c.context_len);
  write_pod<double>(out, c.dropout_rate);
  write_pod<std::uint8_t>(out, c.use_positional ? 1 : 0);

  std::uint32_t tensor_count = 0;
  for_each_tensor(const_cast<ModelParams&>(params),
                  [&](const std::string&, auto&) { ++tensor_count; });
  write_pod<std::uint32_t>(out, tensor_count);
  for_each_tensor(const_cast<ModelParams&>(params),
                  [&](const std::string& name, auto& tensor) {
                    write_tensor(out, name, tensor);
                  });
  if (!out) throw FormatError("failed writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a maldet checkpoint: " + path.string());
  }

  ModelConfig config;
  config.vocab_size = read_pod<std::int32_t>(in);
  config.d_model = read_pod<std::int32_t>(in);
  config.n_heads = read_pod<std::int32_t>(in);
  config.n_layers = read_pod<std::int32_t>(in);
  config.d_ff = read_pod<std::int32_t>(in);
  config.context_len = read_pod<std::int32_t>(in);
  config.dropout_rate = read_pod<double>(in);
  config.use_positional = read_pod<std::uint8_t>(in) != 0;
  config.validate();

  ModelParams params = init_params(config, 0);
  auto expected = read_pod<std::uint32_t>(in);
  std::uint32_t seen = 0;
  for_each_tensor(params, [&](const std::string& name, auto& tensor) {
    read_tensor_into(in, name, tensor);
    ++seen;
  });
  if (seen != expected) {
    throw FormatError("checkpoint tensor count mismatch");
  }
  return params;
}

}  // namespace maldet
