// Runs the acceptance criteria end to end and prints one line per criterion.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include "memrec/datasets.hpp"
#include "memrec/error.hpp"
#include "memrec/eval.hpp"
#include "memrec/retrieval.hpp"
#include "memrec/session.hpp"
#include "memrec/synthetic.hpp"
#include "memrec/text.hpp"

namespace fs = std::filesystem;
using namespace memrec;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict = Verdict::pass;
  std::string detail;
};

// Collects failed checks; the first few messages are kept for the report line.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    ++failed_;
    if (messages_.size() < 3) messages_.push_back(what);
  }
  bool ok() const { return failed_ == 0; }
  Outcome outcome(std::string detail) const {
    if (ok()) return {Verdict::pass, std::move(detail)};
    std::string msg = std::to_string(failed_) + "/" + std::to_string(total_) + " checks failed: ";
    for (std::size_t i = 0; i < messages_.size(); ++i) msg += (i ? "; " : "") + messages_[i];
    return {Verdict::fail, msg};
  }

 private:
  std::size_t total_ = 0;
  std::size_t failed_ = 0;
  std::vector<std::string> messages_;
};

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

struct TempDir {
  TempDir() {
    path = fs::temp_directory_path() / ("memrec-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path path;
};

EvalReport run_eval(StubPolicy policy, ProtocolConfig config, const std::vector<PreparedUser>& users) {
  Gateway gateway(std::make_shared<StubBackend>(std::move(policy)), config.prices, 4);
  return EvalHarness(gateway, PromptBuilder()).run(config, users);
}

Outcome check_cross_structure(const std::vector<PreparedUser>& users, const std::string& label,
                              Checks& c) {
  const auto s = summarize(users);
  c.expect(s.users > 0, label + ": no users");
  c.expect(s.history_ratings == 18 * s.users, label + ": movie ratings != 18 x users");
  c.expect(s.cross_targets == s.users, label + ": book targets != users");
  for (const auto& u : users) {
    c.expect(u.cross_target && u.cross_target->domain == Domain::book(), label + ": missing book target");
    for (const auto& h : u.history) c.expect(h.domain == Domain::movie(), label + ": non-movie history");
  }
  return {Verdict::pass, label + " " + std::to_string(s.users) + " users, " +
                             std::to_string(s.history_ratings) + " movie ratings, " +
                             std::to_string(s.cross_targets) + " book targets"};
}

// 1. Single-domain preparation of the real MovieLens 100k files.
Outcome criterion1() {
  const char* dir = std::getenv("MEMREC_ML100K_DIR");
  if (!dir || !fs::exists(fs::path(dir) / "u.data")) {
    return {Verdict::skip, "MEMREC_ML100K_DIR does not point at MovieLens 100k"};
  }
  const auto loaded = load_movielens(dir);
  const auto users = prepare_single_domain(loaded.interactions, loaded.catalog);
  const auto s = summarize(users);
  Checks c;
  c.expect(s.users > 0, "no users");
  c.expect(s.history_ratings == 19 * s.users, "total ratings != 19 x users");
  for (const auto& u : users) {
    for (std::size_t i = 1; i < u.history.size(); ++i) {
      c.expect(u.history[i - 1].timestamp <= u.history[i].timestamp, "history out of order");
    }
  }
  return c.outcome(std::to_string(s.users) + " users, " + std::to_string(s.history_ratings) +
                   " ratings = 19 x " + std::to_string(s.users) + " (reference preparation: 839)");
}

// 2. Cross-domain preparation: synthetic fixture, plus real Amazon data when given.
Outcome criterion2() {
  TempDir tmp;
  Checks c;
  const auto paths = synthetic::write_amazon(tmp.path, {});
  const auto movies = load_amazon(paths.movie_ratings, paths.movie_metadata, Domain::movie());
  const auto books = load_amazon(paths.book_ratings, paths.book_metadata, Domain::book());
  auto detail = check_cross_structure(prepare_cross_domain(movies, books), "synthetic", c).detail;
  if (const char* dir = std::getenv("MEMREC_AMAZON_DIR")) {
    const fs::path d(dir);
    const auto rm = load_amazon(d / "movies_ratings.csv", d / "movies_meta.jsonl", Domain::movie());
    const auto rb = load_amazon(d / "books_ratings.csv", d / "books_meta.jsonl", Domain::book());
    detail += "; " + check_cross_structure(prepare_cross_domain(rm, rb), "real", c).detail;
  } else {
    detail += "; real data not configured (MEMREC_AMAZON_DIR)";
  }
  return c.outcome(detail);
}

InteractionRecord random_record(std::mt19937_64& rng, int index) {
  static const GenreList pool = {"Action", "Comedy", "Drama", "Horror", "Romance", "Sci-Fi",
                                 "Thriller", "War", "Crime", "Animation"};
  static const std::vector<std::string> words = {"Night", "River", "Star", "Last", "Red", "City",
                                                 "Dream", "Iron", "Blue", "Storm"};
  InteractionRecord r;
  r.record_id = "r" + std::to_string(index);
  r.item_id = "i" + std::to_string(rng() % 50);
  r.title = words[rng() % words.size()] + " " + words[rng() % words.size()];
  const auto n = rng() % 4;
  for (std::size_t g = 0; g < n; ++g) {
    auto label = pool[rng() % pool.size()];
    if (rng() % 3 == 0) label = to_lower_ascii(label);
    r.genres.push_back(label);
  }
  r.genres = canonical_genres(r.genres);
  r.rating = 1 + static_cast<double>(rng() % 5);
  r.timestamp = static_cast<std::int64_t>(rng() % 20);
  return r;
}

// Brute force: score everything, sort by (score desc, timestamp desc, id asc), truncate.
std::vector<std::string> oracle_ranking(const std::vector<InteractionRecord>& records,
                                        std::size_t k,
                                        const std::function<double(const InteractionRecord&)>& scorer) {
  std::vector<std::pair<double, const InteractionRecord*>> scored;
  for (const auto& r : records) scored.emplace_back(scorer(r), &r);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    if (a.second->timestamp != b.second->timestamp) return a.second->timestamp > b.second->timestamp;
    return a.second->record_id < b.second->record_id;
  });
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) ids.push_back(scored[i].second->record_id);
  return ids;
}

std::size_t oracle_overlap(const GenreList& a, const GenreList& b) {
  std::set<std::string> sa, sb;
  for (const auto& g : a) sa.insert(to_lower_ascii(trim(g)));
  for (const auto& g : b) sb.insert(to_lower_ascii(trim(g)));
  std::size_t n = 0;
  for (const auto& g : sa) n += sb.count(g);
  return n;
}

double oracle_cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

// 3. retrieve_memory against the brute-force oracle, both strategies.
Outcome criterion3() {
  std::mt19937_64 rng(20240611);
  auto provider = std::make_shared<HashedTrigramProvider>(256);
  const EmbeddingTextFields fields{true, true, false};
  const auto cosine = SimilarityStrategy::embedding_cosine(provider, fields);
  Checks c;
  for (int instance = 0; instance < 1000; ++instance) {
    std::vector<InteractionRecord> records;
    const auto n = rng() % 25;
    for (std::size_t i = 0; i < n; ++i) records.push_back(random_record(rng, static_cast<int>(i)));
    const auto probe = random_record(rng, 999);
    TargetItem target{"t", probe.title, Domain::movie(), probe.genres, {}};
    if (target.genres.empty()) target.genres = {"Drama"};
    const std::size_t k = rng() % 8;

    RetrievalConfig overlap;
    overlap.k = k;
    std::vector<std::string> got;
    for (const auto& m : retrieve_memory(records, target, overlap)) got.push_back(m.record.record_id);
    c.expect(got == oracle_ranking(records, k, [&](const InteractionRecord& r) {
               return static_cast<double>(oracle_overlap(r.genres, target.genres));
             }),
             "genre overlap instance " + std::to_string(instance));

    RetrievalConfig emb;
    emb.k = k;
    emb.strategy = cosine;
    const auto tv = provider->embed(embedding_text(fields, target.title, target.genres, {})).values;
    got.clear();
    for (const auto& m : retrieve_memory(records, target, emb)) got.push_back(m.record.record_id);
    c.expect(got == oracle_ranking(records, k, [&](const InteractionRecord& r) {
               return oracle_cosine(provider->embed(embedding_text(fields, r.title, r.genres, {})).values,
                                    tv);
             }),
             "cosine instance " + std::to_string(instance));
  }
  return c.outcome("1000 instances x 2 strategies match the oracle");
}

// 4. Overlap symmetry/identity/disjointness and cosine self-similarity/scale invariance.
Outcome criterion4() {
  std::mt19937_64 rng(4);
  static const GenreList pool = {"Action", "Comedy", "Drama", "Horror", "Romance", "Sci-Fi",
                                 "Thriller", "War", "Crime", "Animation", "Musical", "Western"};
  Checks c;
  for (int i = 0; i < 10000; ++i) {
    GenreList a, b;
    for (const auto& g : pool) {
      if (rng() % 3 == 0) a.push_back(g);
      if (rng() % 3 == 0) b.push_back(g);
    }
    c.expect(genre_overlap_score(a, b) == genre_overlap_score(b, a), "overlap not symmetric");
    c.expect(genre_overlap_score(a, a) == a.size(), "overlap identity");
    GenreList disjoint;
    for (const auto& g : pool) {
      if (std::find(a.begin(), a.end(), g) == a.end()) disjoint.push_back(g);
    }
    c.expect(genre_overlap_score(a, disjoint) == 0, "overlap of disjoint sets");
  }
  std::uniform_real_distribution<double> value(-10.0, 10.0);
  std::uniform_real_distribution<double> scale(0.001, 1000.0);
  double worst_self = 0.0, worst_scale = 0.0;
  for (int i = 0; i < 10000; ++i) {
    EmbeddingVector u, v;
    const auto dim = 1 + rng() % 64;
    for (std::size_t d = 0; d < dim; ++d) {
      u.values.push_back(value(rng));
      v.values.push_back(value(rng));
    }
    const double s = scale(rng);
    EmbeddingVector scaled = u;
    for (auto& x : scaled.values) x *= s;
    const double self = std::abs(cosine_similarity(u, u) - 1.0);
    const double inv = std::abs(cosine_similarity(scaled, v) - cosine_similarity(u, v));
    worst_self = std::max(worst_self, self);
    worst_scale = std::max(worst_scale, inv);
    c.expect(self <= 1e-9, "cosine self-similarity");
    c.expect(inv <= 1e-9, "cosine scale invariance");
  }
  std::ostringstream d;
  d << "10000 set pairs, 10000 vectors; max |cos(u,u)-1| = " << worst_self
    << ", max scale drift = " << worst_scale;
  return c.outcome(d.str());
}

// 5. Trace counts and exact MAE under a constant stub.
Outcome criterion5() {
  Checks c;
  const auto single_users = synthetic::constant_rating_population({.users = 20, .rating = 3.0});
  ProtocolConfig single;
  const auto s = run_eval(StubPolicy::constant(3), single, single_users);
  c.expect(s.traces.size() == 20 * 18, "single-domain trace count " + std::to_string(s.traces.size()));
  for (const auto& st : s.by_size) c.expect(st.mae == 0.0 && st.traces == 20, "single-domain MAE");

  const auto cross_users =
      synthetic::constant_rating_population({.users = 20, .rating = 3.0, .book_target = true});
  ProtocolConfig cross;
  cross.protocol = Protocol::cross_domain;
  cross.shuffle_seeds = {1};
  const auto x = run_eval(StubPolicy::constant(3), cross, cross_users);
  c.expect(x.traces.size() == 20 * 18 * 2, "cross-domain trace count " + std::to_string(x.traces.size()));
  for (const auto& st : x.by_size) c.expect(st.mae == 0.0, "cross-domain MAE");
  return c.outcome("single " + std::to_string(s.traces.size()) + " traces MAE 0; cross " +
                   std::to_string(x.traces.size()) + " traces");
}

// 6. MAP beats the flat-history baseline on genre-consistent users.
Outcome criterion6() {
  const auto pop = synthetic::genre_consistent_population({.users = 60});
  ProtocolConfig map;
  map.retrieval.k = 3;
  ProtocolConfig baseline = map;
  baseline.recommender = Recommender::baseline;
  const auto m = run_eval(StubPolicy::echo_mean_of_memory(), map, pop.users);
  const auto b = run_eval(StubPolicy::echo_mean_of_memory(), baseline, pop.users);
  Checks c;
  for (int r = 4; r <= 18; ++r) {
    c.expect(*m.mae_at(r) < *b.mae_at(r), "MAP not below baseline at r=" + std::to_string(r));
  }
  const double gap4 = *b.mae_at(4) - *m.mae_at(4);
  const double gap16 = *b.mae_at(16) - *m.mae_at(16);
  c.expect(gap16 > gap4, "gap at 16 not above gap at 4");
  return c.outcome("60 users, k=3; gap r=4 " + fixed(gap4, 4) + ", gap r=16 " + fixed(gap16, 4) +
                   " (MAP " + fixed(*m.mae_at(16), 4) + " vs baseline " + fixed(*b.mae_at(16), 4) + ")");
}

// 7. Prompt tokens and ledger dollars: MAP below the baseline.
Outcome criterion7() {
  const auto users = synthetic::genre_consistent_population({.users = 20}).users;
  const auto cross_users =
      synthetic::constant_rating_population({.users = 20, .rating = 4.0, .book_target = true});
  const PromptBuilder builder;
  RetrievalConfig retrieval;
  Checks c;
  std::size_t comparisons = 0;
  const auto check_tokens = [&](const PreparedUser& u, const TargetItem& target, std::size_t n,
                                BaselineMode mode) {
    const std::vector<InteractionRecord> h(u.history.begin(), u.history.begin() + static_cast<long>(n));
    const auto map_tokens =
        builder.build_recommendation_prompt(target, retrieve_memory(h, target, retrieval)).token_estimate;
    const auto base_tokens = builder.build_baseline_messages(h, target, mode).token_estimate;
    c.expect(map_tokens < base_tokens, u.user_id + " n=" + std::to_string(n));
    ++comparisons;
  };
  for (std::size_t n = retrieval.k + 1; n <= 18; ++n) {
    for (const auto& u : users) check_tokens(u, target_from(u.history[n]), n, BaselineMode::single_domain);
    for (const auto& u : cross_users) {
      check_tokens(u, target_from(*u.cross_target), n, BaselineMode::cross_domain);
    }
  }

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> price(0.01, 100.0);
  for (int trial = 0; trial < 5; ++trial) {
    ProtocolConfig config;
    config.prices = {price(rng), price(rng)};
    ProtocolConfig base = config;
    base.recommender = Recommender::baseline;
    const auto m = run_eval(StubPolicy::constant(3), config, users);
    const auto b = run_eval(StubPolicy::constant(3), base, users);
    c.expect(m.ledger.dollars < b.ledger.dollars, "single-domain ledger trial " + std::to_string(trial));
    config.protocol = base.protocol = Protocol::cross_domain;
    const auto mx = run_eval(StubPolicy::constant(4), config, cross_users);
    const auto bx = run_eval(StubPolicy::constant(4), base, cross_users);
    c.expect(mx.ledger.dollars < bx.ledger.dollars, "cross-domain ledger trial " + std::to_string(trial));
  }
  return c.outcome(std::to_string(comparisons) + " prompt comparisons; 5 price tables x 2 protocols");
}

// 8. MAE arithmetic and the published improvement percentages.
Outcome criterion8() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> rating(1.0, 5.0);
  Checks c;
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto n = 1 + rng() % 100;
    std::vector<double> p(n), t(n);
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = rating(rng);
      t[j] = rating(rng);
    }
    long double sum = 0.0L;
    for (std::size_t j = n; j-- > 0;) sum += std::fabs(static_cast<long double>(p[j]) - t[j]);
    const double diff = std::abs(mae(p, t) - static_cast<double>(sum / n));
    worst = std::max(worst, diff);
    c.expect(diff <= 1e-12, "mae mismatch on vector " + std::to_string(i));
  }
  const auto pct = [](double base, double cand) {
    EvalReport a, b;
    a.recommender = Recommender::baseline;
    a.by_size = {{17, base, std::nullopt, 1, 0}};
    b.by_size = {{17, cand, std::nullopt, 1, 0}};
    return compare_reports(a, b).rows[0].improvement_pct;
  };
  const double single = pct(0.8989, 0.7886);
  const double cross = pct(0.8162, 0.7037);
  c.expect(std::abs(single - 12.27) <= 0.01, "single-domain improvement " + fixed(single, 4));
  c.expect(std::abs(cross - 13.78) <= 0.01, "cross-domain improvement " + fixed(cross, 4));
  std::ostringstream d;
  d << "10000 vectors, max deviation " << worst << "; improvements " << fixed(single, 2) << "% and "
    << fixed(cross, 2) << "%";
  return c.outcome(d.str());
}

// 9. A scripted session: exact revision sequence and memory provenance.
Outcome criterion9() {
  struct Step {
    std::string text;
    QueryType type;
    std::uint64_t revision;
  };
  const std::vector<Step> script = {
      {"I rate \"Heat\" (Crime, Thriller) 5/5", QueryType::B, 1},
      {"I rate \"Up\" (Animation, Comedy) 3/5", QueryType::B, 2},
      {"Recommend me a thriller", QueryType::A, 2},
      {"What is the capital of France?", QueryType::C, 2},
      {"I watched \"Alien\" (Horror, Sci-Fi) and I'd give it 4 stars", QueryType::B, 3},
      {"I rate it pretty highly", QueryType::B, 3},
      {"Can you suggest a sci-fi movie like \"Alien\"?", QueryType::A, 3},
      {"Tell me a joke about cats", QueryType::C, 3},
      {"I rate \"Amelie\" (Comedy, Romance) 4/5", QueryType::B, 4},
      {"Recommend a comedy", QueryType::A, 4},
      {"How tall is Mount Everest?", QueryType::C, 4},
      {"I rate \"Se7en\" (Crime, Thriller) 2/5", QueryType::B, 5},
  };
  ProfileStore store;
  Gateway gateway(std::make_shared<StubBackend>(StubPolicy::constant(3)));
  SessionConfig config;
  config.clock = [t = std::int64_t{1'700'000'000}]() mutable { return t++; };
  SessionEngine engine(store, gateway, PromptBuilder(), config);
  Checks c;
  std::string revisions;
  for (std::size_t i = 0; i < script.size(); ++i) {
    const auto& step = script[i];
    const auto before = store.read_profile("s1");
    const auto e = engine.handle_query("s1", step.text);
    const auto label = "message " + std::to_string(i + 1);
    revisions += (i ? "," : "") + std::to_string(e.profile_revision_after);
    c.expect(e.classification_fallback, label + " did not use the rule fallback");
    c.expect(e.classified_type == step.type, label + " classified " +
                                                 std::string(1, query_type_letter(e.classified_type)));
    c.expect(e.profile_revision_after == step.revision, label + " revision " +
                                                            std::to_string(e.profile_revision_after));
    if (e.classified_type == QueryType::A) {
      c.expect(!e.memory_used.empty(), label + " used no memory");
      for (const auto& m : e.memory_used) {
        c.expect(std::find(before.begin(), before.end(), m.record) != before.end(),
                 label + " memory record not in profile");
      }
    } else {
      c.expect(e.memory_used.empty(), label + " carried memory");
    }
  }
  return c.outcome("12 messages, revisions " + revisions);
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "single-domain dataset consistency", 10, criterion1},
      {2, "cross-domain dataset consistency", 60, criterion2},
      {3, "retrieval oracle equivalence", 5, criterion3},
      {4, "similarity properties", 5, criterion4},
      {5, "protocol shape", 10, criterion5},
      {6, "MAP beats baseline under the mean oracle", 30, criterion6},
      {7, "token-cost direction", 5, criterion7},
      {8, "MAE arithmetic and improvement percentages", 5, criterion8},
      {9, "session state machine", 5, criterion9},
  };
  int failures = 0;
  for (const auto& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criterion.run();
    } catch (const std::exception& e) {
      outcome = {Verdict::fail, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.verdict == Verdict::pass && seconds > criterion.limit_seconds) {
      outcome = {Verdict::fail, "took " + fixed(seconds, 2) + " s, limit " +
                                    fixed(criterion.limit_seconds, 0) + " s; " + outcome.detail};
    }
    const char* tag = outcome.verdict == Verdict::pass ? "PASS" : outcome.verdict == Verdict::fail ? "FAIL" : "SKIP";
    failures += outcome.verdict == Verdict::fail;
    std::cout << "criterion " << criterion.number << " [" << tag << "] " << criterion.name << " ("
              << fixed(seconds, 2) << " s): " << outcome.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
