#pragma once

// Checkpoint file: a text manifest terminated by a line "end", followed by
// raw little-endian IEEE-754 arrays in manifest order.
//
//   povmap-checkpoint
//   version 1
//   precision float32|float64
//   mode fixed_input|fully_convolutional
//   input <h> <w> <c>
//   seed <u64>
//   layers <count>
//   layer <kind> <kernel_h> <kernel_w> <stride> <pad> <out> <rate> <replaced_fc>
//   ...
//   tensors <count>
//   tensor <layer> weights|bias <rank> <dims...>
//   ...
//   end

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "povmap/network.hpp"

namespace povmap {

inline constexpr int kCheckpointVersion = 1;

namespace detail_ckpt {

template <typename T>
constexpr const char* precision_name() {
  return std::is_same_v<T, float> ? "float32" : "float64";
}

inline LayerKind parse_kind(const std::string& s) {
  for (auto k : {LayerKind::conv, LayerKind::maxpool, LayerKind::relu, LayerKind::dropout,
                 LayerKind::fully_connected, LayerKind::conv_from_fc, LayerKind::softmax})
    if (to_string(k) == s) return k;
  fail(ErrorKind::corrupt_checkpoint, "unknown layer kind '" + s + "'");
}

template <typename U>
void write_array(std::ostream& os, std::span<const U> values) {
  for (U v : values) {
    using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
    Bits bits = std::bit_cast<Bits>(v);
    unsigned char bytes[sizeof(U)];
    for (std::size_t b = 0; b < sizeof(U); ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
  }
}

template <typename U>
std::vector<U> read_array(std::istream& is, std::size_t n) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  std::vector<unsigned char> raw(n * sizeof(U));
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(static_cast<std::size_t>(is.gcount()) == raw.size(), ErrorKind::corrupt_checkpoint,
          "checkpoint truncated: expected " + std::to_string(raw.size()) + " bytes of tensor data");
  std::vector<U> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Bits bits = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b)
      bits |= static_cast<Bits>(raw[i * sizeof(U) + b]) << (8 * b);
    out[i] = std::bit_cast<U>(bits);
  }
  return out;
}

}  // namespace detail_ckpt

template <typename T>
void save_checkpoint(const Network<T>& net, std::ostream& os) {
  std::ostringstream m;
  m << "povmap-checkpoint\n";
  m << "version " << kCheckpointVersion << "\n";
  m << "precision " << detail_ckpt::precision_name<T>() << "\n";
  m << "mode " << to_string(net.mode()) << "\n";
  const auto& in = net.input_extent();
  m << "input " << in.h << ' ' << in.w << ' ' << in.c << "\n";
  m << "seed " << net.seed() << "\n";
  m << "layers " << net.layers().size() << "\n";
  m << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& l : net.layers())
    m << "layer " << to_string(l.kind) << ' ' << l.kernel_h << ' ' << l.kernel_w << ' '
      << l.stride << ' ' << l.pad << ' ' << l.out_channels << ' ' << l.rate << ' '
      << l.replaced_fc << "\n";
  std::size_t count = 0;
  for (const auto& p : net.params()) count += p ? 2 : 0;
  m << "tensors " << count << "\n";
  auto describe = [&](std::size_t layer, const char* role, const Tensor<T>& t) {
    m << "tensor " << layer << ' ' << role << ' ' << t.shape().rank();
    for (auto d : t.shape().dims()) m << ' ' << d;
    m << "\n";
  };
  for (std::size_t i = 0; i < net.params().size(); ++i)
    if (const auto& p = net.params()[i]) {
      describe(i, "weights", p->weights);
      describe(i, "bias", p->bias);
    }
  m << "end\n";
  const std::string header = m.str();
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : net.params())
    if (p) {
      detail_ckpt::write_array<T>(os, p->weights.data());
      detail_ckpt::write_array<T>(os, p->bias.data());
    }
  require(static_cast<bool>(os), ErrorKind::io, "failed writing checkpoint");
}

template <typename T>
void save_checkpoint(const Network<T>& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::io, "cannot open checkpoint for writing: " + path);
  save_checkpoint(net, os);
}

/// Loads a checkpoint into precision T. Arrays stored at the other precision
/// are converted; same-precision round trips are bit-exact.
template <typename T>
Network<T> load_checkpoint(std::istream& is) {
  auto next_line = [&](const char* expect) {
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), ErrorKind::corrupt_checkpoint,
            std::string("checkpoint manifest truncated before '") + expect + "'");
    return line;
  };
  auto keyed = [&](const char* key) {
    std::istringstream ls(next_line(key));
    std::string k;
    ls >> k;
    require(k == key, ErrorKind::corrupt_checkpoint,
            std::string("checkpoint manifest: expected '") + key + "', found '" + k + "'");
    return ls;
  };

  require(next_line("povmap-checkpoint") == "povmap-checkpoint", ErrorKind::corrupt_checkpoint,
          "not a povmap checkpoint");
  int version = 0;
  keyed("version") >> version;
  require(version == kCheckpointVersion, ErrorKind::version_mismatch,
          "checkpoint version " + std::to_string(version) + ", expected " +
              std::to_string(kCheckpointVersion));
  std::string precision, mode_name;
  keyed("precision") >> precision;
  require(precision == "float32" || precision == "float64", ErrorKind::corrupt_checkpoint,
          "unknown precision '" + precision + "'");
  keyed("mode") >> mode_name;
  NetMode mode;
  if (mode_name == "fixed_input") mode = NetMode::fixed_input;
  else if (mode_name == "fully_convolutional") mode = NetMode::fully_convolutional;
  else fail(ErrorKind::corrupt_checkpoint, "unknown mode '" + mode_name + "'");
  Extent in;
  {
    auto ls = keyed("input");
    ls >> in.h >> in.w >> in.c;
    require(!ls.fail(), ErrorKind::corrupt_checkpoint, "malformed input extent");
  }
  std::uint64_t seed = 0;
  keyed("seed") >> seed;
  std::size_t nlayers = 0;
  keyed("layers") >> nlayers;
  require(nlayers < 10000, ErrorKind::corrupt_checkpoint, "implausible layer count");
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < nlayers; ++i) {
    auto ls = keyed("layer");
    std::string kind;
    LayerSpec l;
    ls >> kind >> l.kernel_h >> l.kernel_w >> l.stride >> l.pad >> l.out_channels >> l.rate >>
        l.replaced_fc;
    require(!ls.fail(), ErrorKind::corrupt_checkpoint, "malformed layer line " + std::to_string(i));
    l.kind = detail_ckpt::parse_kind(kind);
    layers.push_back(l);
  }
  std::size_t ntensors = 0;
  keyed("tensors") >> ntensors;
  struct Entry {
    std::size_t layer;
    std::string role;
    std::vector<std::size_t> dims;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < ntensors; ++i) {
    auto ls = keyed("tensor");
    Entry e;
    std::size_t rank = 0;
    ls >> e.layer >> e.role >> rank;
    require(!ls.fail() && rank >= 1 && rank <= 4, ErrorKind::corrupt_checkpoint,
            "malformed tensor line " + std::to_string(i));
    e.dims.resize(rank);
    for (auto& d : e.dims) ls >> d;
    require(!ls.fail(), ErrorKind::corrupt_checkpoint, "malformed tensor dims");
    entries.push_back(std::move(e));
  }
  require(next_line("end") == "end", ErrorKind::corrupt_checkpoint, "manifest missing 'end'");

  std::vector<std::optional<LayerParams<T>>> params(layers.size());
  for (const auto& e : entries) {
    require(e.layer < layers.size(), ErrorKind::corrupt_checkpoint, "tensor for unknown layer");
    const Shape shape = Shape::from(e.dims);
    std::vector<T> values;
    if (precision == "float32") {
      auto raw = detail_ckpt::read_array<float>(is, shape.numel());
      values.assign(raw.begin(), raw.end());
    } else {
      auto raw = detail_ckpt::read_array<double>(is, shape.numel());
      values.assign(raw.begin(), raw.end());
    }
    auto& slot = params[e.layer];
    if (!slot) slot = LayerParams<T>{};
    if (e.role == "weights") slot->weights = Tensor<T>(shape, std::move(values));
    else if (e.role == "bias") slot->bias = Tensor<T>(shape, std::move(values));
    else fail(ErrorKind::corrupt_checkpoint, "unknown tensor role '" + e.role + "'");
  }
  require(is.peek() == std::char_traits<char>::eof(), ErrorKind::corrupt_checkpoint,
          "trailing bytes after tensor data");
  return Network<T>::assemble(std::move(layers), in, mode, seed, std::move(params));
}

template <typename T>
Network<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::missing_input, "cannot open checkpoint: " + path);
  return load_checkpoint<T>(is);
}

}  // namespace povmap
