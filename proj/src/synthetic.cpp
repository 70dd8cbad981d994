#include "memrec/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "memrec/datasets.hpp"
#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec::synthetic {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kEpoch = 874'724'710;  // first timestamp in the 100k release

const std::vector<std::string> kTitleWords = {
    "Silent", "River", "Night", "Empire", "Garden", "Shadow", "Winter", "Signal", "Harbor",
    "Glass",  "Storm", "Orbit", "Letters", "Crown", "Echo",   "Canyon", "Paper",  "Lantern"};

const std::vector<std::string> kBookCategories = {
    "literature & fiction", "mystery, thriller & suspense", "science fiction & fantasy",
    "romance", "biographies & memoirs", "history", "children's books", "horror"};

const std::vector<std::string> kMovieCategories = {
    "drama", "comedy", "action & adventure", "science fiction", "horror", "documentary",
    "kids & family", "romance"};

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::storage_unavailable, "cannot write " + path.string());
  return out;
}

std::string make_title(std::mt19937_64& rng, std::size_t serial) {
  std::uniform_int_distribution<std::size_t> word(0, kTitleWords.size() - 1);
  return kTitleWords[word(rng)] + " " + kTitleWords[word(rng)] + " " + std::to_string(serial);
}

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Distinct items for one user, in random order.
std::vector<std::size_t> sample_items(std::mt19937_64& rng, std::size_t pool, std::size_t count) {
  std::vector<std::size_t> ids(pool);
  for (std::size_t i = 0; i < pool; ++i) ids[i] = i + 1;
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(std::min(count, pool));
  return ids;
}

}  // namespace

void write_movielens(const fs::path& dir, const MovieLensOptions& options) {
  std::mt19937_64 rng(options.seed);
  const auto& genres = movielens_genres();

  auto items = open_output(dir / "u.item");
  for (std::size_t item = 1; item <= options.items; ++item) {
    items << item << '|' << make_title(rng, item) << " (199" << item % 10 << ")|01-Jan-199"
          << item % 10 << "||";
    std::set<std::size_t> flags;
    const auto n = draw(rng, 1, 3);
    while (flags.size() < n) flags.insert(draw(rng, 1, genres.size() - 1));
    for (std::size_t g = 0; g < genres.size(); ++g) items << '|' << (flags.count(g) ? 1 : 0);
    items << '\n';
  }

  auto data = open_output(dir / "u.data");
  for (std::size_t user = 1; user <= options.users; ++user) {
    const auto count = draw(rng, options.min_ratings, options.max_ratings);
    auto ts = kEpoch + static_cast<std::int64_t>(draw(rng, 0, 1'000'000));
    for (const auto item : sample_items(rng, options.items, count)) {
      ts += static_cast<std::int64_t>(draw(rng, 0, 3));  // repeated timestamps happen
      data << user << '\t' << item << '\t' << draw(rng, 1, 5) << '\t' << ts << '\n';
    }
  }
}

AmazonPaths write_amazon(const fs::path& dir, const AmazonOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::bernoulli_distribution uncategorized(options.uncategorized_share);
  std::bernoulli_distribution reader(options.book_reader_share);
  AmazonPaths paths{dir / "movies_ratings.csv", dir / "movies_meta.jsonl",
                    dir / "books_ratings.csv", dir / "books_meta.jsonl"};

  const auto write_meta = [&](const fs::path& path, const std::string& prefix, std::size_t count,
                              const std::vector<std::string>& categories, const char* root) {
    auto out = open_output(path);
    for (std::size_t i = 1; i <= count; ++i) {
      nlohmann::ordered_json doc;
      doc["asin"] = prefix + std::to_string(1000000 + i);
      doc["title"] = make_title(rng, i);
      if (uncategorized(rng)) {
        doc["category"] = nlohmann::json::array();
      } else {
        doc["category"] = {root, categories[draw(rng, 0, categories.size() - 1)]};
      }
      out << doc.dump() << '\n';
    }
  };
  write_meta(paths.movie_metadata, "M", options.movie_items, kMovieCategories, "Movies & TV");
  write_meta(paths.book_metadata, "B", options.book_items, kBookCategories, "Books");

  auto movies = open_output(paths.movie_ratings);
  auto books = open_output(paths.book_ratings);
  movies << "item,user,rating,timestamp\n";
  books << "item,user,rating,timestamp\n";
  for (std::size_t u = 1; u <= options.users; ++u) {
    const auto user = "A" + std::to_string(7000 + u);
    auto ts = std::int64_t{1'300'000'000} + static_cast<std::int64_t>(draw(rng, 0, 5'000'000));
    for (const auto item : sample_items(rng, options.movie_items,
                                        draw(rng, options.min_movies, options.max_movies))) {
      ts += static_cast<std::int64_t>(draw(rng, 1, 86'400));
      movies << 'M' << 1000000 + item << ',' << user << ',' << draw(rng, 1, 5) << ".0," << ts << '\n';
    }
    if (!reader(rng)) continue;
    for (const auto item : sample_items(rng, options.book_items, draw(rng, 1, options.max_books))) {
      ts += static_cast<std::int64_t>(draw(rng, 1, 86'400));
      books << 'B' << 1000000 + item << ',' << user << ',' << draw(rng, 1, 5) << ".0," << ts << '\n';
    }
  }
  return paths;
}

GenrePopulation genre_consistent_population(const GenrePopulationOptions& options) {
  if (options.genres.empty()) throw Error(ErrorCode::validation, "at least one genre required");
  std::mt19937_64 rng(options.seed);
  GenrePopulation pop;
  for (std::size_t u = 1; u <= options.users; ++u) {
    PreparedUser user;
    user.user_id = "g" + std::to_string(u);
    auto& prefs = pop.preferences[user.user_id];
    for (const auto& g : options.genres) prefs[normalize_genre(g)] = static_cast<double>(draw(rng, 1, 5));
    for (std::size_t i = 0; i < options.history; ++i) {
      const auto& genre = options.genres[draw(rng, 0, options.genres.size() - 1)];
      InteractionRecord rec;
      rec.item_id = user.user_id + "-" + std::to_string(i + 1);
      rec.record_id = rec.item_id + "@" + std::to_string(kEpoch + static_cast<std::int64_t>(i));
      rec.title = make_title(rng, i + 1);
      rec.domain = Domain::movie();
      rec.genres = {genre};
      rec.rating = prefs.at(normalize_genre(genre));
      rec.timestamp = kEpoch + static_cast<std::int64_t>(i);
      user.history.push_back(std::move(rec));
    }
    pop.users.push_back(std::move(user));
  }
  return pop;
}

std::vector<PreparedUser> constant_rating_population(const ConstantPopulationOptions& options) {
  std::mt19937_64 rng(options.seed);
  const auto& genres = movielens_genres();
  std::vector<PreparedUser> users;
  const auto history = options.book_target ? std::size_t{18} : options.history;
  for (std::size_t u = 1; u <= options.users; ++u) {
    PreparedUser user;
    user.user_id = "c" + std::to_string(u);
    for (std::size_t i = 0; i < history; ++i) {
      InteractionRecord rec;
      rec.item_id = std::to_string(draw(rng, 1, 1682));
      rec.timestamp = kEpoch + static_cast<std::int64_t>(i * 60);
      rec.record_id = rec.item_id + "@" + std::to_string(rec.timestamp);
      rec.title = make_title(rng, i + 1);
      rec.domain = Domain::movie();
      rec.genres = canonical_genres({genres[draw(rng, 1, genres.size() - 1)],
                                     genres[draw(rng, 1, genres.size() - 1)]});
      rec.rating = options.rating;
      user.history.push_back(std::move(rec));
    }
    if (options.book_target) {
      InteractionRecord book;
      book.item_id = "B" + std::to_string(2000000 + u);
      book.timestamp = kEpoch + 100'000;
      book.record_id = book.item_id + "@" + std::to_string(book.timestamp);
      book.title = make_title(rng, u);
      book.domain = Domain::book();
      book.genres = {"books", kBookCategories[draw(rng, 0, kBookCategories.size() - 1)]};
      book.rating = options.rating;
      user.cross_target = std::move(book);
    }
    users.push_back(std::move(user));
  }
  return users;
}

}  // namespace memrec::synthetic
