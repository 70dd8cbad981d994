#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "memrec/record.hpp"
#include "memrec/similarity.hpp"

namespace memrec {

struct ScoredMemory {
  InteractionRecord record;
  double score = 0.0;

  friend bool operator==(const ScoredMemory&, const ScoredMemory&) = default;
};

// {"record": {...}, "score": s}
nlohmann::ordered_json to_json(const ScoredMemory& memory);

struct RetrievalConfig {
  std::size_t k = 5;
  SimilarityStrategy strategy = SimilarityStrategy::genre_overlap();
  std::optional<Domain> domain_filter;
  // Records scoring below this are not eligible. Off by default.
  std::optional<double> min_score;
};

// Memory order: score descending, then timestamp descending (most recent
// first), then record_id ascending.
bool memory_before(const ScoredMemory& a, const ScoredMemory& b);

// Scores every eligible record against the target and keeps the best k.
std::vector<ScoredMemory> retrieve_memory(const std::vector<InteractionRecord>& records,
                                          const TargetItem& target, const RetrievalConfig& config);

// retrieve_memory with k = |records| and no filtering.
std::vector<ScoredMemory> rank_all(const std::vector<InteractionRecord>& records,
                                   const TargetItem& target, const SimilarityStrategy& strategy);

}  // namespace memrec
