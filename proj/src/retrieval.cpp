#include "memrec/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec {

bool memory_before(const ScoredMemory& a, const ScoredMemory& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.record.timestamp != b.record.timestamp) return a.record.timestamp > b.record.timestamp;
  return id_less(a.record.record_id, b.record.record_id);
}

std::vector<ScoredMemory> retrieve_memory(const std::vector<InteractionRecord>& records,
                                          const TargetItem& target, const RetrievalConfig& config) {
  if (records.empty() || config.k == 0) return {};
  const TargetScorer scorer(config.strategy, target);
  std::vector<ScoredMemory> scored;
  scored.reserve(records.size());
  for (const auto& r : records) {
    if (config.domain_filter && r.domain != *config.domain_filter) continue;
    const double s = scorer(r);
    if (!std::isfinite(s)) {
      throw Error(ErrorCode::validation, "non-finite similarity for record " + r.record_id);
    }
    if (config.min_score && s < *config.min_score) continue;
    scored.push_back(ScoredMemory{r, s});
  }
  const auto keep = std::min(config.k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                    scored.end(), memory_before);
  scored.resize(keep);
  return scored;
}

std::vector<ScoredMemory> rank_all(const std::vector<InteractionRecord>& records,
                                   const TargetItem& target, const SimilarityStrategy& strategy) {
  RetrievalConfig config;
  config.k = records.size();
  config.strategy = strategy;
  return retrieve_memory(records, target, config);
}

nlohmann::ordered_json to_json(const ScoredMemory& memory) {
  nlohmann::ordered_json doc;
  doc["record"] = to_json(memory.record);
  doc["score"] = memory.score;
  return doc;
}

}  // namespace memrec
