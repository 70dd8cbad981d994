#include "memrec/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec {

std::size_t genre_overlap_score(const GenreList& a, const GenreList& b) {
  std::set<std::string> left;
  for (const auto& g : a) {
    auto key = normalize_genre(g);
    if (!key.empty()) left.insert(std::move(key));
  }
  std::set<std::string> shared;
  for (const auto& g : b) {
    auto key = normalize_genre(g);
    if (left.count(key) > 0) shared.insert(std::move(key));
  }
  return shared.size();
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dimension() != v.dimension()) {
    throw Error(ErrorCode::dimension_mismatch, "cosine of vectors with dimensions " +
                                                   std::to_string(u.dimension()) + " and " +
                                                   std::to_string(v.dimension()));
  }
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    dot += u.values[i] * v.values[i];
    nu += u.values[i] * u.values[i];
    nv += v.values[i] * v.values[i];
  }
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::zero_vector, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

EmbeddingVector embed_text(EmbeddingProvider& provider, std::string_view text) {
  if (trim(text).empty()) throw Error(ErrorCode::empty_text, "cannot embed empty text");
  auto vec = provider.embed(text);
  if (vec.dimension() != provider.dimension()) {
    throw Error(ErrorCode::dimension_mismatch,
                provider.name() + " returned dimension " + std::to_string(vec.dimension()));
  }
  for (double x : vec.values) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::provider_unavailable, provider.name() + " returned a non-finite value");
    }
  }
  return vec;
}

HashedTrigramProvider::HashedTrigramProvider(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw Error(ErrorCode::validation, "embedding dimension must be positive");
}

EmbeddingVector HashedTrigramProvider::embed(std::string_view text) {
  const auto padded = " " + to_lower_ascii(collapse_whitespace(text)) + " ";
  EmbeddingVector out{std::vector<double>(dimension_, 0.0)};
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    out.values[fnv1a32(std::string_view(padded).substr(i, 3)) % dimension_] += 1.0;
  }
  double norm = 0.0;
  for (double x : out.values) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : out.values) x /= norm;
  }
  return out;
}

std::string embedding_text(const EmbeddingTextFields& fields, const std::string& title,
                           const GenreList& genres, const std::string& description) {
  std::vector<std::string> parts;
  if (fields.title && !trim(title).empty()) parts.push_back(trim(title));
  const bool use_genres = fields.genres && !genres.empty();
  if (use_genres) parts.push_back(join(genres, ", "));
  if ((fields.description || !use_genres) && !trim(description).empty()) {
    parts.push_back(trim(description));
  }
  return join(parts, ". ");
}

SimilarityStrategy SimilarityStrategy::genre_overlap() { return SimilarityStrategy(); }

SimilarityStrategy SimilarityStrategy::embedding_cosine(std::shared_ptr<EmbeddingProvider> provider,
                                                        EmbeddingTextFields fields) {
  if (!provider) {
    throw Error(ErrorCode::validation, "embedding_cosine similarity needs an embedding provider");
  }
  SimilarityStrategy s;
  s.kind_ = SimilarityKind::embedding_cosine;
  s.provider_ = std::move(provider);
  s.fields_ = fields;
  return s;
}

std::string SimilarityStrategy::describe() const {
  if (kind_ == SimilarityKind::genre_overlap) return "genre_overlap";
  std::string out = "embedding_cosine:" + provider_->name() + ":";
  out += fields_.title ? "t" : "-";
  out += fields_.genres ? "g" : "-";
  out += fields_.description ? "d" : "-";
  return out;
}

TargetScorer::TargetScorer(const SimilarityStrategy& strategy, const TargetItem& target)
    : strategy_(strategy), target_(target) {
  if (strategy_.kind() == SimilarityKind::embedding_cosine) {
    target_vector_ = embed_text(
        *strategy_.provider(),
        embedding_text(strategy_.fields(), target.title, target.genres, target.description));
  }
}

double TargetScorer::operator()(const InteractionRecord& item) const {
  if (strategy_.kind() == SimilarityKind::genre_overlap) {
    return static_cast<double>(genre_overlap_score(item.genres, target_.genres));
  }
  const auto item_vector =
      embed_text(*strategy_.provider(),
                 embedding_text(strategy_.fields(), item.title, item.genres, item.description));
  return cosine_similarity(item_vector, target_vector_);
}

double score(const SimilarityStrategy& strategy, const InteractionRecord& item,
             const TargetItem& target) {
  return TargetScorer(strategy, target)(item);
}

}  // namespace memrec
