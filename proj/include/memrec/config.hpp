#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "memrec/gateway.hpp"
#include "memrec/prompting.hpp"
#include "memrec/retrieval.hpp"
#include "memrec/session.hpp"

namespace memrec {

struct EmbeddingSettings {
  std::string provider = "hashed_trigram";  // or "remote"
  std::size_t dimension = 256;
  std::string url = "https://api.openai.com/v1/embeddings";
  std::string model = "text-embedding-3-small";
  std::string api_key_env = "OPENAI_API_KEY";
  EmbeddingTextFields fields;
};

struct GatewaySettings {
  std::string provider = "stub";  // or "remote"
  std::string stub = "echo-mean";
  std::string url = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_in_flight = 4;
  int timeout_ms = 60'000;
  int max_attempts = 3;
  PriceTable prices;
};

struct RetrievalSettings {
  std::size_t k = 5;
  std::string strategy = "genre_overlap";  // or "embedding_cosine"
  std::optional<double> min_score;
  EmbeddingSettings embedding;
};

struct StoreSettings {
  std::optional<std::filesystem::path> profiles;  // unset keeps profiles in memory
  std::filesystem::path reports = "var/reports";
  std::filesystem::path prepared = "var/prepared";
  std::optional<std::filesystem::path> embedding_cache;
};

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> static_dir;
};

struct SessionSettings {
  bool llm_classification = true;
  ExtractionMode extraction = ExtractionMode::patterns;
};

struct AppConfig {
  StoreSettings store;
  GatewaySettings gateway;
  RetrievalSettings retrieval;
  std::optional<std::filesystem::path> templates;
  SessionSettings session;
  ServiceSettings service;
};

// Throws Error(config_error) with "<source>:<line>: <problem>" for syntax
// errors, unknown keys, wrong types and out-of-range values. Relative paths
// resolve against `base_dir`.
AppConfig parse_config(const std::string& text, const std::string& source_name,
                       const std::filesystem::path& base_dir = {});
AppConfig load_config(const std::filesystem::path& path);

// Assembled from an AppConfig.
std::shared_ptr<ChatBackend> make_chat_backend(const GatewaySettings& settings);
SimilarityStrategy make_similarity(const RetrievalSettings& settings,
                                   const StoreSettings& store);
RetrievalConfig make_retrieval(const AppConfig& config);
TemplateSet make_templates(const AppConfig& config);

}  // namespace memrec
