#include "cmr/embeddings.hpp"

#include <fstream>
#include <sstream>

#include "cmr/errors.hpp"
#include "cmr/nn.hpp"

namespace cmr::text {

namespace {

// Parses "key v_1 ... v_dim". Returns false for blank lines.
bool parse_vector_line(const std::string& line, std::size_t line_number, std::size_t dim, std::string& key,
                       std::vector<double>& values) {
  std::istringstream in(line);
  if (!(in >> key)) return false;
  values.clear();
  double v;
  while (in >> v) values.push_back(v);
  if (!in.eof()) throw ParseError(line_number, "non-numeric value in vector for '" + key + "'");
  if (values.size() != dim)
    throw ParseError(line_number, "vector for '" + key + "' has " + std::to_string(values.size()) +
                                      " values, expected " + std::to_string(dim));
  return true;
}

}  // namespace

EmbeddingTable EmbeddingTable::init(std::size_t vocab_size, std::size_t dim, Rng& rng) {
  EmbeddingTable table;
  table.matrix = ad::Parameter(nn::glorot_uniform({vocab_size, dim}, vocab_size, dim, rng));
  table.frozen.assign(vocab_size, false);
  return table;
}

std::size_t EmbeddingTable::load(const std::filesystem::path& path, const Vocabulary& vocab, bool freeze) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embedding file " + path.string());
  std::string line, key;
  std::vector<double> values;
  std::size_t line_number = 0, loaded = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!parse_vector_line(line, line_number, dim(), key, values)) continue;
    auto id = vocab.find(key);
    if (!id) continue;
    auto row = matrix.value.row(static_cast<std::size_t>(*id));
    std::copy(values.begin(), values.end(), row.begin());
    if (freeze) frozen[static_cast<std::size_t>(*id)] = true;
    ++loaded;
  }
  return loaded;
}

ContextualVectorProvider ContextualVectorProvider::from_file(const std::filesystem::path& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read contextual vector file " + path.string());
  ContextualVectorProvider provider;
  provider.enabled_ = true;
  provider.dim_ = dim;
  std::string line, key;
  std::vector<double> values;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!parse_vector_line(line, line_number, dim, key, values)) continue;
    provider.table_[key] = values;
  }
  return provider;
}

std::string ContextualVectorProvider::key(const std::string& instance_id, Stream stream, std::size_t position) {
  return instance_id + (stream == Stream::History ? "/h/" : "/d/") + std::to_string(position);
}

Tensor ContextualVectorProvider::vectors(const std::string& instance_id, Stream stream, std::size_t length) const {
  Tensor out({length, dimension()});
  if (!enabled_) return out;
  for (std::size_t pos = 0; pos < length; ++pos) {
    auto it = table_.find(key(instance_id, stream, pos));
    if (it == table_.end())
      throw DomainError("no contextual vector for " + key(instance_id, stream, pos) + " (sequence length " +
                        std::to_string(length) + ")");
    std::copy(it->second.begin(), it->second.end(), out.row(pos).begin());
  }
  return out;
}

}  // namespace cmr::text
