#include "lercause/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <vector>

#include "json.hpp"

namespace lercause::classifier {

using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'E', 'R', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw CheckpointError("truncated checkpoint");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }

template <class Fn>
void for_each_stored(const Network& net, Fn&& fn) {
  net.params().for_each(fn);
  fn("bn.running_mean", net.running().mean);
  fn("bn.running_var", net.running().variance);
}

template <class Fn>
void for_each_stored(Network& net, Fn&& fn) {
  net.params().for_each(fn);
  fn("bn.running_mean", net.running().mean);
  fn("bn.running_var", net.running().variance);
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelCheckpoint& checkpoint) {
  const Network& net = checkpoint.network;
  net.validate_shapes();
  if (net.vocab_size() != checkpoint.vocab.size()) throw CheckpointError("vocabulary size disagrees with network");

  json tensors = json::array();
  std::uint64_t offset = 0;
  for_each_stored(net, [&](std::string_view name, const MatrixXd& m) {
    tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
  });
  const json header = {{"format_version", ModelCheckpoint::kFormatVersion},
                       {"config", to_json(checkpoint.config())},
                       {"vocab", checkpoint.vocab.tokens()},
                       {"tensors", tensors},
                       {"data_bytes", offset}};
  const std::string header_text = header.dump();

  out.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(out, ModelCheckpoint::kFormatVersion);
  write_le<std::uint64_t>(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for_each_stored(net, [&](std::string_view, const MatrixXd& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) write_f64(out, m(i, j));
    }
  });
  if (!out) throw CheckpointError("failed writing checkpoint");
}

void save_checkpoint_file(const std::string& path, const ModelCheckpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path);
  save_checkpoint(out, checkpoint);
}

ModelCheckpoint load_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != ModelCheckpoint::kFormatVersion) {
    throw CheckpointError("unsupported checkpoint format_version " + std::to_string(version));
  }
  const auto header_len = read_le<std::uint64_t>(in);
  if (header_len > (std::uint64_t{1} << 32)) throw CheckpointError("implausible header length");
  std::string header_text(header_len, '\0');
  if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
    throw CheckpointError("truncated checkpoint header");
  }

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  ModelCheckpoint checkpoint;
  std::map<std::string, std::pair<std::vector<Index>, std::uint64_t>> index;
  try {
    if (header.at("format_version").get<std::uint32_t>() != version) {
      throw CheckpointError("header format_version disagrees with container");
    }
    const ModelConfig config = config_from_json(header.at("config"));
    checkpoint.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
    checkpoint.network = Network(config, checkpoint.vocab.size());
    for (const auto& t : header.at("tensors")) {
      index[t.at("name").get<std::string>()] = {t.at("shape").get<std::vector<Index>>(),
                                                t.at("offset").get<std::uint64_t>()};
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  }

  std::vector<char> data;
  {
    std::uint64_t data_bytes = 0;
    try {
      data_bytes = header.at("data_bytes").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }
    data.resize(data_bytes);
    if (!in.read(data.data(), static_cast<std::streamsize>(data_bytes))) {
      throw CheckpointError("truncated checkpoint data");
    }
  }

  std::size_t seen = 0;
  for_each_stored(checkpoint.network, [&](std::string_view name_view, MatrixXd& m) {
    const std::string name(name_view);
    const auto it = index.find(name);
    if (it == index.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    const auto& [shape, offset] = it->second;
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
      std::string found;
      for (const auto d : shape) found += (found.empty() ? "" : ", ") + std::to_string(d);
      throw CheckpointError("shape mismatch for tensor '" + name + "': expected [" + std::to_string(m.rows()) +
                            ", " + std::to_string(m.cols()) + "], found [" + found + "]");
    }
    const std::uint64_t bytes = static_cast<std::uint64_t>(m.size()) * sizeof(double);
    if (offset + bytes > data.size()) throw CheckpointError("tensor '" + name + "' extends past the data block");
    const char* p = data.data() + offset;
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        std::uint64_t bits = 0;
        for (std::size_t b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
        m(i, j) = std::bit_cast<double>(bits);
        p += 8;
      }
    }
    ++seen;
  });
  if (seen != index.size()) throw CheckpointError("checkpoint holds unexpected extra tensors");
  return checkpoint;
}

ModelCheckpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  return load_checkpoint(in);
}

}  // namespace lercause::classifier
