#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmr/autodiff.hpp"
#include "cmr/random.hpp"
#include "cmr/text.hpp"

namespace cmr::text {

inline constexpr std::size_t kWordEmbeddingDim = 300;
inline constexpr std::size_t kContextualDim = 600;

/// Word vectors, one row per vocabulary id. Frozen rows are skipped by the
/// optimizer (pretrained vectors kept fixed).
struct EmbeddingTable {
  ad::Parameter matrix;  // [vocab x dim]
  std::vector<bool> frozen;

  static EmbeddingTable init(std::size_t vocab_size, std::size_t dim, Rng& rng);
  std::size_t rows() const { return matrix.value.shape()[0]; }
  std::size_t dim() const { return matrix.value.shape()[1]; }

  /// Reads "token v_1 ... v_dim" lines; rows of tokens found in the
  /// vocabulary are overwritten. Returns the number of rows loaded.
  std::size_t load(const std::filesystem::path& path, const Vocabulary& vocab, bool freeze = false);
};

enum class Stream { History, Document };

/// Pretrained contextual vectors (CoVe role). Disabled providers contribute
/// zero-width vectors. File lines are "<instance-id>/<h|d>/<position>"
/// followed by `dim` decimals.
class ContextualVectorProvider {
 public:
  static ContextualVectorProvider disabled() { return ContextualVectorProvider(); }
  static ContextualVectorProvider from_file(const std::filesystem::path& path, std::size_t dim = kContextualDim);

  bool enabled() const { return enabled_; }
  std::size_t dimension() const { return enabled_ ? dim_ : 0; }

  /// [length x dimension()]; throws DomainError if a position is missing.
  Tensor vectors(const std::string& instance_id, Stream stream, std::size_t length) const;

  static std::string key(const std::string& instance_id, Stream stream, std::size_t position);

 private:
  bool enabled_ = false;
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

}  // namespace cmr::text
