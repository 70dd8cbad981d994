#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "memrec/http_transport.hpp"
#include "memrec/retry.hpp"
#include "memrec/similarity.hpp"

namespace memrec {

// Content-hash keyed vector cache, optionally persisted as a binary file of
// little-endian entries:
//   u64 key | u32 dimension | dimension x f64 (IEEE-754)
// New entries are appended as they are inserted. A truncated trailing entry
// is ignored on load.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path file);

  std::optional<EmbeddingVector> lookup(std::uint64_t key) const;
  void insert(std::uint64_t key, const EmbeddingVector& vector);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> file_;
  mutable std::mutex mutex_;
  std::unordered_map<std::uint64_t, EmbeddingVector> entries_;
};

struct RemoteEmbeddingConfig {
  std::string url;  // full endpoint, e.g. https://api.openai.com/v1/embeddings
  std::string model;
  std::string api_key;
  std::size_t dimension = 0;
  std::chrono::milliseconds timeout{30'000};
};

// Batch endpoint client speaking the common embeddings wire format:
//   request  {"model": m, "input": [texts...]}
//   response {"data": [{"index": i, "embedding": [..]}, ...]}
// Results are cached by hash of (model, text), so repeated texts are
// answered locally and stay bit-identical.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(RemoteEmbeddingConfig config, std::shared_ptr<HttpTransport> transport,
                          std::shared_ptr<EmbeddingCache> cache, RetryPolicy retry);

  EmbeddingVector embed(std::string_view text) override;
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts);
  std::size_t dimension() const override { return config_.dimension; }
  std::string name() const override { return "remote:" + config_.model; }

  std::uint64_t cache_key(std::string_view text) const;
  std::size_t requests_sent() const;

 private:
  std::vector<EmbeddingVector> fetch(const std::vector<std::string>& texts);

  RemoteEmbeddingConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  std::shared_ptr<EmbeddingCache> cache_;
  RetryPolicy retry_;
  mutable std::mutex stats_mutex_;
  std::size_t requests_sent_ = 0;
};

}  // namespace memrec
