#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "memrec/record.hpp"

namespace memrec {

// Number of labels the two sets share, comparing normalized labels.
std::size_t genre_overlap_score(const GenreList& a, const GenreList& b);

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

// dot(u, v) / (|u| |v|), clamped to [-1, 1]. Throws dimension_mismatch or
// zero_vector.
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;
};

// Checks the text precondition and the provider's output contract.
EmbeddingVector embed_text(EmbeddingProvider& provider, std::string_view text);

// Offline provider: ASCII-lowercased, whitespace-collapsed text padded with
// one space on each side; every byte trigram is hashed with FNV-1a (32 bit)
// into `dimension` buckets, and the count vector is L2-normalized.
class HashedTrigramProvider final : public EmbeddingProvider {
 public:
  explicit HashedTrigramProvider(std::size_t dimension = 256);

  EmbeddingVector embed(std::string_view text) override;
  std::size_t dimension() const override { return dimension_; }
  std::string name() const override { return "hashed-trigram-" + std::to_string(dimension_); }

 private:
  std::size_t dimension_;
};

enum class SimilarityKind { genre_overlap, embedding_cosine };

// Which item fields are fed to the encoder. Genres are joined with ", ";
// when an item has no genres its description is used instead.
struct EmbeddingTextFields {
  bool title = false;
  bool genres = true;
  bool description = false;
};

std::string embedding_text(const EmbeddingTextFields& fields, const std::string& title,
                           const GenreList& genres, const std::string& description);

class SimilarityStrategy {
 public:
  static SimilarityStrategy genre_overlap();
  // Throws validation when provider is null.
  static SimilarityStrategy embedding_cosine(std::shared_ptr<EmbeddingProvider> provider,
                                             EmbeddingTextFields fields = {});

  SimilarityKind kind() const { return kind_; }
  const std::shared_ptr<EmbeddingProvider>& provider() const { return provider_; }
  const EmbeddingTextFields& fields() const { return fields_; }
  std::string describe() const;

 private:
  SimilarityStrategy() = default;

  SimilarityKind kind_ = SimilarityKind::genre_overlap;
  std::shared_ptr<EmbeddingProvider> provider_;
  EmbeddingTextFields fields_;
};

// Scores many records against one target, embedding the target once.
class TargetScorer {
 public:
  TargetScorer(const SimilarityStrategy& strategy, const TargetItem& target);

  double operator()(const InteractionRecord& item) const;

 private:
  const SimilarityStrategy& strategy_;
  const TargetItem& target_;
  EmbeddingVector target_vector_;
};

double score(const SimilarityStrategy& strategy, const InteractionRecord& item,
             const TargetItem& target);

}  // namespace memrec
