#pragma once

// Dense passage retrieval: embedders, an exact inner-product index and its
// on-disk format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "genki/corpus.hpp"
#include "genki/error.hpp"
#include "genki/tokenize.hpp"

namespace genki {

struct Embedding {
  std::vector<float> values;
  bool degenerate = false;  // input had no tokens; values are all zero
};

/// Question and passage encoders sharing one output dimension.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual Embedding embed_question(std::string_view text) const = 0;
  virtual Embedding embed_passage(std::string_view text) const = 0;
};

/// Inner product accumulated in double precision.
inline double similarity(std::span<const float> q, std::span<const float> p) {
  if (q.size() != p.size())
    throw InvalidArgument("similarity: dimension mismatch (" + std::to_string(q.size()) + " vs " +
                          std::to_string(p.size()) + ")");
  double acc[4] = {0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 4 <= q.size(); i += 4) {
    acc[0] += double(q[i]) * p[i];
    acc[1] += double(q[i + 1]) * p[i + 1];
    acc[2] += double(q[i + 2]) * p[i + 2];
    acc[3] += double(q[i + 3]) * p[i + 3];
  }
  for (; i < q.size(); ++i) acc[0] += double(q[i]) * p[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

/// Deterministic bag-of-words embedder: each token hashes into one bucket,
/// the count vector is L2-normalized. Stands in for a trained dual encoder.
class HashEmbedder final : public Embedder {
 public:
  HashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim == 0) throw InvalidArgument("hash embedder dim must be >= 1");
  }

  std::size_t dim() const override { return dim_; }
  std::uint64_t seed() const { return seed_; }

  Embedding embed_question(std::string_view text) const override { return embed(text); }
  Embedding embed_passage(std::string_view text) const override { return embed(text); }

  Embedding embed(std::string_view text) const {
    Embedding e;
    e.values.assign(dim_, 0.0f);
    const auto toks = word_tokens(text);
    if (toks.empty()) {
      e.degenerate = true;
      return e;
    }
    std::vector<double> counts(dim_, 0.0);
    for (const auto& t : toks) counts[bucket(t)] += 1.0;
    double norm = 0;
    for (double c : counts) norm += c * c;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < dim_; ++i) e.values[i] = static_cast<float>(counts[i] / norm);
    return e;
  }

 private:
  std::size_t bucket(std::string_view tok) const {
    // FNV-1a over the token, then a splitmix64 finalizer keyed by the seed
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : tok) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= seed_ + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    h ^= h >> 30;
    h *= 0xBF58476D1CE4E5B9ull;
    h ^= h >> 27;
    h *= 0x94D049BB133111EBull;
    h ^= h >> 31;
    return static_cast<std::size_t>(h % dim_);
  }

  std::size_t dim_;
  std::uint64_t seed_;
};

struct RetrievalResult {
  std::string passage_id;
  double score = 0;
  std::size_t rank = 0;  // 1-based

  bool operator==(const RetrievalResult&) const = default;
};

/// Row-major passage embedding matrix with aligned ids. Immutable once built.
class DenseIndex {
 public:
  DenseIndex() = default;

  DenseIndex(std::size_t dim, std::vector<float> matrix, std::vector<std::string> ids)
      : dim_(dim), matrix_(std::move(matrix)), ids_(std::move(ids)) {
    if (dim_ == 0) throw InvalidArgument("index dim must be >= 1");
    if (matrix_.size() != dim_ * ids_.size())
      throw InvalidArgument("index matrix has " + std::to_string(matrix_.size()) +
                            " values, expected " + std::to_string(dim_ * ids_.size()));
    for (float v : matrix_)
      if (!std::isfinite(v)) throw InvalidArgument("index contains a non-finite value");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<float>& matrix() const { return matrix_; }

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(matrix_).subspan(i * dim_, dim_);
  }

  bool operator==(const DenseIndex&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> matrix_;
  std::vector<std::string> ids_;
};

inline DenseIndex build_index(const std::vector<Passage>& passages, const Embedder& embedder) {
  std::vector<float> matrix;
  std::vector<std::string> ids;
  matrix.reserve(passages.size() * embedder.dim());
  for (const auto& p : passages) {
    auto e = embedder.embed_passage(p.text);
    if (e.values.size() != embedder.dim()) throw ModelError("embedder returned wrong dimension");
    matrix.insert(matrix.end(), e.values.begin(), e.values.end());
    ids.push_back(p.id);
  }
  return DenseIndex(embedder.dim(), std::move(matrix), std::move(ids));
}

/// The min(k, size) passages with the largest inner product, score
/// descending, ties broken by ascending passage id.
inline std::vector<RetrievalResult> top_k(const DenseIndex& index, std::span<const float> query,
                                          std::size_t k) {
  if (k == 0) throw InvalidArgument("top_k: k must be >= 1");
  if (index.empty()) throw InvalidArgument("top_k: index is empty");
  if (query.size() != index.dim())
    throw InvalidArgument("top_k: query dim " + std::to_string(query.size()) +
                          " does not match index dim " + std::to_string(index.dim()));
  const std::size_t n = index.size();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = similarity(query, index.row(i));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& ids = index.ids();
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  const std::size_t take = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    better);

  std::vector<RetrievalResult> out;
  out.reserve(take);
  for (std::size_t r = 0; r < take; ++r)
    out.push_back({ids[order[r]], scores[order[r]], r + 1});
  return out;
}

// Index file layout, all integers little-endian:
//   "GKIX1" | u32 dim | u64 count | count*dim f32 | count * (u32 len | bytes)
inline constexpr std::array<char, 5> kIndexMagic = {'G', 'K', 'I', 'X', '1'};

namespace detail {

template <typename UInt>
void put_le(std::string& buf, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  template <typename UInt>
  UInt get_le() {
    need(sizeof(UInt));
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
      v |= static_cast<UInt>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(UInt);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(path_ + ": truncated index file");
  }

  const std::string& data_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_index(const DenseIndex& index) {
  if (index.empty()) throw InvalidArgument("refusing to save an empty index");
  if (index.dim() > UINT32_MAX) throw InvalidArgument("index dim does not fit in u32");
  std::string buf(kIndexMagic.begin(), kIndexMagic.end());
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(index.dim()));
  detail::put_le<std::uint64_t>(buf, index.size());
  for (float v : index.matrix()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    detail::put_le(buf, bits);
  }
  for (const auto& id : index.ids()) {
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(id.size()));
    buf += id;
  }
  return buf;
}

inline DenseIndex deserialize_index(const std::string& data, const std::string& path = "<memory>") {
  if (data.size() < kIndexMagic.size() ||
      !std::equal(kIndexMagic.begin(), kIndexMagic.end(), data.begin()))
    throw FormatError(path + ": bad index magic");
  detail::ByteReader in(data, path);
  in.bytes(kIndexMagic.size());
  const auto dim = in.get_le<std::uint32_t>();
  const auto count = in.get_le<std::uint64_t>();
  if (dim == 0 || count == 0) throw FormatError(path + ": index header declares no data");
  if (count > in.remaining() / (std::uint64_t{dim} * 4))
    throw FormatError(path + ": truncated index file");
  std::vector<float> matrix(count * dim);
  for (auto& v : matrix) {
    const auto bits = in.get_le<std::uint32_t>();
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) throw FormatError(path + ": non-finite value in index");
  }
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) ids.push_back(in.bytes(in.get_le<std::uint32_t>()));
  if (in.remaining() != 0) throw FormatError(path + ": trailing bytes after index");
  return DenseIndex(dim, std::move(matrix), std::move(ids));
}

inline void save_index(const DenseIndex& index, const std::string& path) {
  const auto buf = serialize_index(index);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("failed writing " + path);
}

inline DenseIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_index(data, path);
}

/// Embeds `question` and returns its top-k passages.
inline std::vector<RetrievalResult> retrieve(const DenseIndex& index, const Embedder& embedder,
                                             std::string_view question, std::size_t k) {
  const auto q = embedder.embed_question(question);
  return top_k(index, q.values, k);
}

}  // namespace genki
