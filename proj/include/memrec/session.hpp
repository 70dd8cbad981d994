#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "memrec/gateway.hpp"
#include "memrec/profile_store.hpp"
#include "memrec/prompting.hpp"
#include "memrec/retrieval.hpp"

namespace memrec {

// A: recommendation request. B: new preference to store. C: unrelated.
enum class QueryType { A, B, C };

char query_type_letter(QueryType type);

// Deterministic fallback: recommendation verbs -> A, first-person rating
// patterns -> B, anything else -> C.
QueryType classify_by_rules(std::string_view query);

// Accepts a lone letter ("A", " b.") or "Type C" anywhere in the reply.
std::optional<QueryType> parse_query_type(std::string_view reply);

struct Classification {
  QueryType type = QueryType::C;
  bool used_fallback = false;
};

Classification classify_query(std::string_view query, Gateway& gateway,
                              const PromptBuilder& prompts);

// Genre labels named in free text, in canonical spelling ("sci-fi" -> "Sci-Fi").
GenreList detect_genres(std::string_view text);

struct ExtractedRating {
  std::string title;
  GenreList genres;
  Domain domain;
  double rating = 0.0;
};

// Pattern pass over statements like "I rate Inception 5/5", "I watched Up
// and I'd give it 4 stars", "\"Dune\" (Sci-Fi) 4 out of 5".
std::optional<ExtractedRating> extract_rating_statement(std::string_view text);

// Title (quoted, or after "like"/"similar to") and genres named in a
// recommendation request. Empty when neither is present.
std::optional<TargetItem> extract_request_target(std::string_view text);

// Parses the JSON object the extract prompt asks for.
std::optional<ExtractedRating> parse_extraction_reply(std::string_view reply);

std::string item_id_for_title(std::string_view title);

enum class ExtractionMode { patterns, llm };

struct SessionConfig {
  RetrievalConfig retrieval;
  bool llm_classification = true;
  ExtractionMode extraction = ExtractionMode::patterns;
  int max_reply_tokens = 256;
  // Seconds since epoch, used for record timestamps. Defaults to the system clock.
  std::function<std::int64_t()> clock;
};

struct SessionEvent {
  std::string event_id;
  std::string user_id;
  std::string query_text;
  QueryType classified_type = QueryType::C;
  bool classification_fallback = false;
  std::string response_text;
  std::vector<ScoredMemory> memory_used;
  std::optional<TargetItem> target;
  std::optional<InteractionRecord> stored_record;
  std::uint64_t profile_revision_before = 0;
  std::uint64_t profile_revision_after = 0;
  std::int64_t received_at_ms = 0;
  std::int64_t completed_at_ms = 0;
  bool ack_fallback = false;
  std::optional<std::string> error_code;
  std::optional<std::string> error_message;
};

nlohmann::ordered_json to_json(const SessionEvent& event);

// The live loop: classify, then retrieve-and-recommend (A), store the new
// preference (B) or pass the query through (C). Calls for one user are
// serialized; different users run in parallel.
class SessionEngine {
 public:
  SessionEngine(ProfileStore& store, Gateway& gateway, PromptBuilder prompts, SessionConfig config);

  // Extraction failures and duplicate ratings are reported in the event
  // (error_code set, nothing written). Gateway failures on A/C propagate.
  SessionEvent handle_query(const std::string& user_id, const std::string& query_text);

  const RetrievalConfig& retrieval() const { return config_.retrieval; }

 private:
  std::shared_ptr<std::mutex> user_mutex(const std::string& user_id);
  void handle_recommendation(SessionEvent& event);
  void handle_update(SessionEvent& event);
  void handle_passthrough(SessionEvent& event);
  std::optional<ExtractedRating> extract(std::string_view text);

  ProfileStore& store_;
  Gateway& gateway_;
  PromptBuilder prompts_;
  SessionConfig config_;
  std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> user_mutexes_;
  std::uint64_t next_event_ = 1;
};

}  // namespace memrec
