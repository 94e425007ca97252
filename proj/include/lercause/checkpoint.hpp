#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "lercause/model.hpp"
#include "lercause/vocab.hpp"

namespace lercause::classifier {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to reproduce predictions: config, vocabulary, parameters
/// and batch-norm running statistics.
struct ModelCheckpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  Vocabulary vocab;
  Network network;

  const ModelConfig& config() const noexcept { return network.config(); }
};

/// Container layout: 8-byte magic "LERCKPT\0", u32 format version, u64 header
/// length, JSON header (config, vocab, tensor index with shapes and byte
/// offsets), then row-major little-endian float64 tensor data.
void save_checkpoint(std::ostream& out, const ModelCheckpoint& checkpoint);
void save_checkpoint_file(const std::string& path, const ModelCheckpoint& checkpoint);

/// Refuses to load on a bad magic, an unsupported version, a missing or extra
/// tensor, or any shape that disagrees with the stored config and vocabulary.
ModelCheckpoint load_checkpoint(std::istream& in);
ModelCheckpoint load_checkpoint_file(const std::string& path);

}  // namespace lercause::classifier
