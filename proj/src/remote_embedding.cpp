#include "memrec/remote_embedding.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec {

namespace {

static_assert(sizeof(double) == 8);

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(p[i]) << (8 * i);
  return value;
}

std::string encode_entry(std::uint64_t key, const EmbeddingVector& v) {
  std::string out;
  out.reserve(12 + 8 * v.values.size());
  put_le<std::uint64_t>(out, key);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v.values.size()));
  for (double x : v.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  return out;
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_, std::ios::binary);
  if (!in) return;
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  std::size_t pos = 0;
  while (pos + 12 <= data.size()) {
    const auto key = get_le<std::uint64_t>(p + pos);
    const auto dim = get_le<std::uint32_t>(p + pos + 8);
    if (pos + 12 + 8ULL * dim > data.size()) break;
    EmbeddingVector v;
    v.values.reserve(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
      v.values.push_back(std::bit_cast<double>(get_le<std::uint64_t>(p + pos + 12 + 8ULL * i)));
    }
    entries_.insert_or_assign(key, std::move(v));
    pos += 12 + 8ULL * dim;
  }
}

std::optional<EmbeddingVector> EmbeddingCache::lookup(std::uint64_t key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::insert(std::uint64_t key, const EmbeddingVector& vector) {
  std::lock_guard lock(mutex_);
  if (!entries_.emplace(key, vector).second) return;
  if (file_) {
    std::ofstream out(*file_, std::ios::binary | std::ios::app);
    const auto bytes = encode_entry(key, vector);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(RemoteEmbeddingConfig config,
                                                 std::shared_ptr<HttpTransport> transport,
                                                 std::shared_ptr<EmbeddingCache> cache,
                                                 RetryPolicy retry)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      cache_(cache ? std::move(cache) : std::make_shared<EmbeddingCache>()),
      retry_(std::move(retry)) {
  if (config_.dimension == 0) throw Error(ErrorCode::config_error, "embedding dimension must be set");
  if (!transport_) throw Error(ErrorCode::config_error, "remote embedding provider needs a transport");
}

std::uint64_t RemoteEmbeddingProvider::cache_key(std::string_view text) const {
  std::string material = config_.model;
  material.push_back('\n');
  material.append(text);
  return fnv1a64(material);
}

std::size_t RemoteEmbeddingProvider::requests_sent() const {
  std::lock_guard lock(stats_mutex_);
  return requests_sent_;
}

EmbeddingVector RemoteEmbeddingProvider::embed(std::string_view text) {
  return embed_batch({std::string(text)}).front();
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::embed_batch(
    const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_index;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (trim(texts[i]).empty()) throw Error(ErrorCode::empty_text, "cannot embed empty text");
    if (auto hit = cache_->lookup(cache_key(texts[i]))) {
      out[i] = std::move(*hit);
    } else {
      missing.push_back(texts[i]);
      missing_index.push_back(i);
    }
  }
  if (missing.empty()) return out;
  auto fetched = fetch(missing);
  for (std::size_t j = 0; j < missing.size(); ++j) {
    cache_->insert(cache_key(missing[j]), fetched[j]);
    out[missing_index[j]] = std::move(fetched[j]);
  }
  return out;
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::fetch(const std::vector<std::string>& texts) {
  HttpRequest request;
  request.url = config_.url;
  request.timeout = config_.timeout;
  if (!config_.api_key.empty()) {
    request.headers.emplace_back("Authorization", "Bearer " + config_.api_key);
  }
  request.body = nlohmann::json{{"model", config_.model}, {"input", texts}}.dump();

  return with_retries(retry_, "embedding request", [&] {
    {
      std::lock_guard lock(stats_mutex_);
      ++requests_sent_;
    }
    const auto response = transport_->post(request);
    if (is_retryable_status(response.status)) {
      throw Error(ErrorCode::provider_unavailable,
                  "embedding endpoint returned HTTP " + std::to_string(response.status));
    }
    if (response.status != 200) {
      throw Error(ErrorCode::validation, "embedding endpoint returned HTTP " +
                                             std::to_string(response.status) + ": " + response.body);
    }
    std::vector<EmbeddingVector> vectors(texts.size());
    try {
      const auto doc = nlohmann::json::parse(response.body);
      const auto& data = doc.at("data");
      if (data.size() != texts.size()) {
        throw Error(ErrorCode::provider_unavailable, "embedding endpoint returned " +
                                                         std::to_string(data.size()) + " vectors for " +
                                                         std::to_string(texts.size()) + " inputs");
      }
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto index = data[i].value("index", i);
        if (index >= vectors.size()) {
          throw Error(ErrorCode::provider_unavailable, "embedding index out of range");
        }
        vectors[index].values = data[i].at("embedding").get<std::vector<double>>();
        if (vectors[index].dimension() != config_.dimension) {
          throw Error(ErrorCode::dimension_mismatch,
                      "expected dimension " + std::to_string(config_.dimension) + ", got " +
                          std::to_string(vectors[index].dimension()));
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::provider_unavailable,
                  std::string("unreadable embedding response: ") + e.what());
    }
    return vectors;
  });
}

}  // namespace memrec
