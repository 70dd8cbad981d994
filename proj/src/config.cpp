#include "memrec/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "memrec/error.hpp"
#include "memrec/remote_embedding.hpp"

namespace memrec {

namespace fs = std::filesystem;

namespace {

class Reader {
 public:
  Reader(std::string source, fs::path base) : source_(std::move(source)), base_(std::move(base)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& what) const {
    const auto line = node.Mark().line >= 0 ? node.Mark().line + 1 : 0;
    throw Error(ErrorCode::config_error, source_ + ":" + std::to_string(line) + ": " + what);
  }

  void expect_map(const YAML::Node& node, const std::string& path,
                  const std::set<std::string>& keys) const {
    if (!node.IsMap()) fail(node, path + " must be a mapping");
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (keys.count(key) == 0) fail(kv.first, "unknown key " + path + "." + key);
    }
  }

  template <typename T>
  void read(const YAML::Node& parent, const char* key, const std::string& path, T& out) const {
    const auto node = parent[key];
    if (!node || node.IsNull()) return;
    if (!node.IsScalar()) fail(node, path + "." + key + " must be a scalar");
    try {
      out = node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, path + "." + key + " has the wrong type: \"" + node.Scalar() + "\"");
    }
  }

  void read_path(const YAML::Node& parent, const char* key, const std::string& path,
                 std::optional<fs::path>& out) const {
    std::string raw;
    read(parent, key, path, raw);
    if (!raw.empty()) out = resolve(raw);
  }

  fs::path resolve(const std::string& raw) const {
    fs::path p(raw);
    return p.is_relative() && !base_.empty() ? base_ / p : p;
  }

  template <typename T>
  void in_range(const YAML::Node& parent, const char* key, const std::string& path, T value,
                T lo, T hi) const {
    if (value < lo || value > hi) {
      std::ostringstream msg;
      msg << path << "." << key << " must be between " << lo << " and " << hi;
      fail(parent[key] ? parent[key] : parent, msg.str());
    }
  }

  void one_of(const YAML::Node& parent, const char* key, const std::string& path,
              const std::string& value, const std::set<std::string>& allowed) const {
    if (allowed.count(value) > 0) return;
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    fail(parent[key] ? parent[key] : parent, path + "." + key + " must be one of: " + list);
  }

 private:
  std::string source_;
  fs::path base_;
};

std::string env_or_empty(const std::string& name) {
  const char* v = name.empty() ? nullptr : std::getenv(name.c_str());
  return v ? std::string(v) : std::string{};
}

}  // namespace

AppConfig parse_config(const std::string& text, const std::string& source_name,
                       const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw Error(ErrorCode::config_error,
                source_name + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  AppConfig config;
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  const Reader r(source_name, base_dir);
  r.expect_map(root, "config", {"store", "gateway", "retrieval", "templates", "session", "service"});

  if (const auto n = root["store"]; n && !n.IsNull()) {
    r.expect_map(n, "store", {"profiles", "reports", "prepared", "embedding_cache"});
    r.read_path(n, "profiles", "store", config.store.profiles);
    std::optional<fs::path> reports, prepared;
    r.read_path(n, "reports", "store", reports);
    r.read_path(n, "prepared", "store", prepared);
    config.store.reports = reports.value_or(r.resolve(config.store.reports.string()));
    config.store.prepared = prepared.value_or(r.resolve(config.store.prepared.string()));
    r.read_path(n, "embedding_cache", "store", config.store.embedding_cache);
  } else {
    config.store.reports = r.resolve(config.store.reports.string());
    config.store.prepared = r.resolve(config.store.prepared.string());
  }

  if (const auto n = root["gateway"]; n && !n.IsNull()) {
    auto& g = config.gateway;
    r.expect_map(n, "gateway", {"provider", "stub", "url", "model", "api_key_env",
                                "max_in_flight", "timeout_ms", "max_attempts", "prices"});
    r.read(n, "provider", "gateway", g.provider);
    r.one_of(n, "provider", "gateway", g.provider, {"stub", "remote"});
    r.read(n, "stub", "gateway", g.stub);
    try {
      StubPolicy::parse(g.stub);
    } catch (const Error& e) {
      if (g.provider == "stub") r.fail(n["stub"] ? n["stub"] : n, e.what());
    }
    r.read(n, "url", "gateway", g.url);
    r.read(n, "model", "gateway", g.model);
    r.read(n, "api_key_env", "gateway", g.api_key_env);
    r.read(n, "max_in_flight", "gateway", g.max_in_flight);
    r.in_range(n, "max_in_flight", "gateway", g.max_in_flight, 1,
               static_cast<int>(Gateway::kMaxInFlightLimit));
    r.read(n, "timeout_ms", "gateway", g.timeout_ms);
    r.in_range(n, "timeout_ms", "gateway", g.timeout_ms, 1, 3'600'000);
    r.read(n, "max_attempts", "gateway", g.max_attempts);
    r.in_range(n, "max_attempts", "gateway", g.max_attempts, 1, 20);
    if (const auto p = n["prices"]; p && !p.IsNull()) {
      r.expect_map(p, "gateway.prices", {"prompt_per_million", "reply_per_million"});
      r.read(p, "prompt_per_million", "gateway.prices", g.prices.prompt_per_million);
      r.read(p, "reply_per_million", "gateway.prices", g.prices.reply_per_million);
      r.in_range(p, "prompt_per_million", "gateway.prices", g.prices.prompt_per_million, 0.0, 1e6);
      r.in_range(p, "reply_per_million", "gateway.prices", g.prices.reply_per_million, 0.0, 1e6);
    }
  }

  if (const auto n = root["retrieval"]; n && !n.IsNull()) {
    auto& rt = config.retrieval;
    r.expect_map(n, "retrieval", {"k", "strategy", "min_score", "embedding"});
    int k = static_cast<int>(rt.k);
    r.read(n, "k", "retrieval", k);
    r.in_range(n, "k", "retrieval", k, 0, 1000);
    rt.k = static_cast<std::size_t>(k);
    r.read(n, "strategy", "retrieval", rt.strategy);
    r.one_of(n, "strategy", "retrieval", rt.strategy, {"genre_overlap", "embedding_cosine"});
    if (n["min_score"] && !n["min_score"].IsNull()) {
      double v = 0;
      r.read(n, "min_score", "retrieval", v);
      rt.min_score = v;
    }
    if (const auto e = n["embedding"]; e && !e.IsNull()) {
      auto& em = rt.embedding;
      r.expect_map(e, "retrieval.embedding",
                   {"provider", "dimension", "url", "model", "api_key_env", "fields"});
      r.read(e, "provider", "retrieval.embedding", em.provider);
      r.one_of(e, "provider", "retrieval.embedding", em.provider, {"hashed_trigram", "remote"});
      int dim = static_cast<int>(em.dimension);
      r.read(e, "dimension", "retrieval.embedding", dim);
      r.in_range(e, "dimension", "retrieval.embedding", dim, 1, 65536);
      em.dimension = static_cast<std::size_t>(dim);
      r.read(e, "url", "retrieval.embedding", em.url);
      r.read(e, "model", "retrieval.embedding", em.model);
      r.read(e, "api_key_env", "retrieval.embedding", em.api_key_env);
      if (const auto f = e["fields"]; f && !f.IsNull()) {
        if (!f.IsSequence()) r.fail(f, "retrieval.embedding.fields must be a list");
        em.fields = {false, false, false};
        for (const auto& item : f) {
          const auto name = item.as<std::string>();
          if (name == "title") em.fields.title = true;
          else if (name == "genres") em.fields.genres = true;
          else if (name == "description") em.fields.description = true;
          else r.fail(item, "unknown embedding field \"" + name + "\"");
        }
      }
    }
  }

  r.read_path(root, "templates", "config", config.templates);

  if (const auto n = root["session"]; n && !n.IsNull()) {
    r.expect_map(n, "session", {"llm_classification", "extraction"});
    r.read(n, "llm_classification", "session", config.session.llm_classification);
    std::string extraction = "patterns";
    r.read(n, "extraction", "session", extraction);
    r.one_of(n, "extraction", "session", extraction, {"patterns", "llm"});
    config.session.extraction =
        extraction == "llm" ? ExtractionMode::llm : ExtractionMode::patterns;
  }

  if (const auto n = root["service"]; n && !n.IsNull()) {
    r.expect_map(n, "service", {"host", "port", "static_dir"});
    r.read(n, "host", "service", config.service.host);
    r.read(n, "port", "service", config.service.port);
    r.in_range(n, "port", "service", config.service.port, 0, 65535);
    r.read_path(n, "static_dir", "service", config.service.static_dir);
  }

  if (config.templates) {
    try {
      TemplateSet::from_directory(*config.templates);
    } catch (const Error& e) {
      r.fail(root["templates"], e.what());
    }
  }
  return config;
}

AppConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config_error, path.string() + ": cannot open");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string(), path.parent_path());
}

std::shared_ptr<ChatBackend> make_chat_backend(const GatewaySettings& settings) {
  if (settings.provider == "stub") {
    return std::make_shared<StubBackend>(StubPolicy::parse(settings.stub));
  }
  RemoteChatConfig remote;
  remote.url = settings.url;
  remote.model = settings.model;
  remote.api_key = env_or_empty(settings.api_key_env);
  remote.timeout = std::chrono::milliseconds(settings.timeout_ms);
  auto retry = default_retry_policy();
  retry.max_attempts = settings.max_attempts;
  return std::make_shared<RemoteChatBackend>(remote, std::make_shared<HttplibTransport>(), retry);
}

SimilarityStrategy make_similarity(const RetrievalSettings& settings, const StoreSettings& store) {
  if (settings.strategy == "genre_overlap") return SimilarityStrategy::genre_overlap();
  const auto& em = settings.embedding;
  if (em.provider == "hashed_trigram") {
    return SimilarityStrategy::embedding_cosine(
        std::make_shared<HashedTrigramProvider>(em.dimension), em.fields);
  }
  RemoteEmbeddingConfig remote;
  remote.url = em.url;
  remote.model = em.model;
  remote.api_key = env_or_empty(em.api_key_env);
  remote.dimension = em.dimension;
  auto cache = store.embedding_cache ? std::make_shared<EmbeddingCache>(*store.embedding_cache)
                                     : std::make_shared<EmbeddingCache>();
  return SimilarityStrategy::embedding_cosine(
      std::make_shared<RemoteEmbeddingProvider>(remote, std::make_shared<HttplibTransport>(),
                                                cache, default_retry_policy()),
      em.fields);
}

RetrievalConfig make_retrieval(const AppConfig& config) {
  RetrievalConfig rc;
  rc.k = config.retrieval.k;
  rc.strategy = make_similarity(config.retrieval, config.store);
  rc.min_score = config.retrieval.min_score;
  return rc;
}

TemplateSet make_templates(const AppConfig& config) {
  return config.templates ? TemplateSet::from_directory(*config.templates) : TemplateSet::builtin();
}

}  // namespace memrec
