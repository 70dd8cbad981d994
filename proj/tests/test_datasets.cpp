#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "memrec/datasets.hpp"
#include "memrec/error.hpp"
#include "memrec/synthetic.hpp"
#include "support.hpp"

using namespace memrec;
using memrec::testing::fixture;
using memrec::testing::slurp;
using memrec::testing::spit;
using memrec::testing::TempDir;

namespace {

const nlohmann::json& expected() {
  static const auto doc = nlohmann::json::parse(slurp(fixture("prepared_expected.json")));
  return doc;
}

LoadResult amazon_movies() {
  return load_amazon(fixture("amazon-mini/movies_ratings.csv"), fixture("amazon-mini/movies_meta.jsonl"),
                     Domain::movie());
}

LoadResult amazon_books() {
  return load_amazon(fixture("amazon-mini/books_ratings.csv"), fixture("amazon-mini/books_meta.jsonl"),
                     Domain::book());
}

RawInteraction raw(const std::string& user, const std::string& item, double rating, std::int64_t ts,
                   Source source = Source::amazon_movies) {
  return {user, item, rating, ts, source};
}

}  // namespace

TEST(MovieLens, CountsMatchOracle) {
  const auto& e = expected()["movielens"];
  const auto loaded = load_movielens(fixture("ml-mini"));
  EXPECT_EQ(loaded.ratings_report.input_lines, e["ratings_lines"].get<std::size_t>());
  EXPECT_EQ(loaded.ratings_report.accepted, e["ratings_accepted"].get<std::size_t>());
  EXPECT_EQ(loaded.ratings_report.rejected(), e["ratings_rejected"].get<std::size_t>());
  EXPECT_EQ(loaded.catalog_report.accepted, e["catalog_accepted"].get<std::size_t>());
  EXPECT_EQ(loaded.catalog_report.rejected(), e["catalog_rejected"].get<std::size_t>());
  EXPECT_EQ(loaded.interactions.size(), loaded.ratings_report.accepted);
}

TEST(MovieLens, Latin1TitlesAndGenreFlags) {
  const auto& e = expected()["movielens"];
  const auto loaded = load_movielens(fixture("ml-mini"));
  EXPECT_EQ(loaded.catalog.at("7").title, e["latin1_title"].get<std::string>());
  EXPECT_EQ(loaded.catalog.at("1").genres, e["genres_of_item_1"].get<GenreList>());
  EXPECT_EQ(movielens_genres().size(), 19u);
}

TEST(MovieLens, SingleDomainPreparationMatchesOracle) {
  const auto& e = expected()["movielens"]["single_domain"];
  const auto loaded = load_movielens(fixture("ml-mini"));
  const auto users = prepare_single_domain(loaded.interactions, loaded.catalog);
  ASSERT_EQ(users.size(), e.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto& u = users[i];
    EXPECT_EQ(u.user_id, e[i]["user_id"].get<std::string>());
    ASSERT_EQ(u.history.size(), 19u);
    for (std::size_t j = 0; j < 19; ++j) {
      EXPECT_EQ(u.history[j].item_id, e[i]["items"][j].get<std::string>()) << u.user_id << " " << j;
      EXPECT_EQ(u.history[j].rating, e[i]["ratings"][j].get<double>());
      EXPECT_EQ(u.history[j].timestamp, e[i]["timestamps"][j].get<std::int64_t>());
      EXPECT_EQ(u.history[j].record_id,
                u.history[j].item_id + "@" + std::to_string(u.history[j].timestamp));
    }
    EXPECT_FALSE(u.cross_target.has_value());
  }
}

TEST(MovieLens, MalformedHeaderAndMissingFile) {
  TempDir dir;
  try {
    load_movielens(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_file);
  }
  spit(dir / "u.item", slurp(fixture("ml-mini/u.item")));
  spit(dir / "u.data", "user_id,item_id,rating,timestamp\n1,1,5,1\n");
  try {
    load_movielens(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::malformed_header);
  }
}

TEST(MovieLens, EveryLineAccountedOnce) {
  TempDir dir;
  spit(dir / "u.item", slurp(fixture("ml-mini/u.item")));
  spit(dir / "u.data",
       "1\t1\t5\t100\n"
       "1\t2\t3\n"
       "1\t3\tx\t1\n"
       "1\t4\t9\t1\n"
       "1\t999\t3\t1\n"
       "\t4\t3\t1\n"
       "2\t5\t2\tnever\n"
       "2\t6\t1\t7\n");
  const auto loaded = load_movielens(dir.path());
  const auto& r = loaded.ratings_report;
  EXPECT_EQ(r.input_lines, 8u);
  EXPECT_EQ(r.accepted, 2u);
  EXPECT_EQ(r.accepted + r.rejected(), r.input_lines);
  EXPECT_EQ(r.rejected_by_reason.at("wrong field count"), 1u);
  EXPECT_EQ(r.rejected_by_reason.at("unparsable rating"), 1u);
  EXPECT_EQ(r.rejected_by_reason.at("rating out of range"), 1u);
  EXPECT_EQ(r.rejected_by_reason.at("unknown item"), 1u);
  EXPECT_EQ(r.rejected_by_reason.at("missing id"), 1u);
  EXPECT_EQ(r.rejected_by_reason.at("unparsable timestamp"), 1u);
  EXPECT_EQ(r.samples.size(), 6u);
  const auto doc = to_json(r);
  EXPECT_EQ(doc["input_lines"], 8);
}

TEST(Amazon, CountsMatchOracle) {
  const auto& e = expected()["amazon"];
  const auto movies = amazon_movies();
  EXPECT_EQ(movies.ratings_report.input_lines, e["movie_ratings_lines"].get<std::size_t>());
  EXPECT_EQ(movies.ratings_report.accepted, e["movie_ratings_accepted"].get<std::size_t>());
  for (const auto& [reason, count] : e["movie_ratings_excluded"].items()) {
    EXPECT_EQ(movies.ratings_report.rejected_by_reason.at(reason), count.get<std::size_t>()) << reason;
  }
  EXPECT_EQ(movies.catalog_report.rejected(), e["movie_catalog_rejected"].get<std::size_t>());
}

TEST(Amazon, CrossDomainPreparationMatchesOracle) {
  const auto& e = expected()["amazon"]["cross_domain"];
  const auto users = prepare_cross_domain(amazon_movies(), amazon_books());
  ASSERT_EQ(users.size(), e.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto& u = users[i];
    EXPECT_EQ(u.user_id, e[i]["user_id"].get<std::string>());
    ASSERT_EQ(u.history.size(), 18u);
    for (std::size_t j = 0; j < 18; ++j) {
      EXPECT_EQ(u.history[j].item_id, e[i]["items"][j].get<std::string>());
      EXPECT_EQ(u.history[j].rating, e[i]["ratings"][j].get<double>());
      EXPECT_EQ(u.history[j].domain, Domain::movie());
      EXPECT_FALSE(u.history[j].genres.empty());
    }
    ASSERT_TRUE(u.cross_target);
    EXPECT_EQ(u.cross_target->item_id, e[i]["book"].get<std::string>());
    EXPECT_EQ(u.cross_target->rating, e[i]["book_rating"].get<double>());
    EXPECT_EQ(u.cross_target->domain, Domain::book());
  }
}

TEST(Amazon, TwentyMoviesAndTwoBooksKeepEarliest) {
  LoadResult movies;
  LoadResult books;
  for (int i = 0; i < 20; ++i) {
    const auto id = "m" + std::to_string(i);
    movies.catalog[id] = {id, "Movie " + std::to_string(i), {"drama"}, Domain::movie()};
    movies.interactions.push_back(raw("u", id, 1 + i % 5, 1000 - i));
  }
  books.catalog["b1"] = {"b1", "Late Book", {"fiction"}, Domain::book()};
  books.catalog["b2"] = {"b2", "Early Book", {"fiction"}, Domain::book()};
  books.interactions.push_back(raw("u", "b1", 2, 500, Source::amazon_books));
  books.interactions.push_back(raw("u", "b2", 5, 400, Source::amazon_books));
  const auto users = prepare_cross_domain(movies, books);
  ASSERT_EQ(users.size(), 1u);
  ASSERT_EQ(users[0].history.size(), 18u);
  EXPECT_EQ(users[0].history.front().item_id, "m19");
  EXPECT_EQ(users[0].history.back().item_id, "m2");
  EXPECT_EQ(users[0].cross_target->item_id, "b2");
}

TEST(Amazon, UsersWithoutBooksOrTooFewMoviesDropped) {
  LoadResult movies;
  LoadResult books;
  for (int i = 0; i < 18; ++i) {
    const auto id = "m" + std::to_string(i);
    movies.catalog[id] = {id, id, {"drama"}, Domain::movie()};
    movies.interactions.push_back(raw("full", id, 3, i));
    movies.interactions.push_back(raw("nobook", id, 3, i));
    if (i < 17) movies.interactions.push_back(raw("short", id, 3, i));
  }
  books.catalog["b"] = {"b", "B", {"fiction"}, Domain::book()};
  books.interactions.push_back(raw("full", "b", 4, 1, Source::amazon_books));
  books.interactions.push_back(raw("short", "b", 4, 1, Source::amazon_books));
  const auto users = prepare_cross_domain(movies, books);
  ASSERT_EQ(users.size(), 1u);
  EXPECT_EQ(users[0].user_id, "full");
}

TEST(SingleDomain, ThresholdCapAndTies) {
  Catalog catalog;
  std::vector<RawInteraction> rows;
  for (int i = 0; i < 25; ++i) {
    const auto id = std::to_string(i);
    catalog[id] = {id, "T" + id, {"Drama"}, Domain::movie()};
    rows.push_back(raw("10", id, 3, i / 2, Source::movielens));
    if (i < 18) rows.push_back(raw("9", id, 3, i, Source::movielens));
  }
  const auto users = prepare_single_domain(rows, catalog);
  ASSERT_EQ(users.size(), 1u);
  EXPECT_EQ(users[0].user_id, "10");
  ASSERT_EQ(users[0].history.size(), 19u);
  EXPECT_EQ(users[0].history[2].item_id, "2");
  EXPECT_EQ(users[0].history[3].item_id, "3");
  for (std::size_t i = 1; i < users[0].history.size(); ++i) {
    EXPECT_LE(users[0].history[i - 1].timestamp, users[0].history[i].timestamp);
  }
}

TEST(SingleDomain, UsersOrderedNumerically) {
  Catalog catalog;
  std::vector<RawInteraction> rows;
  for (int i = 0; i < 19; ++i) {
    const auto id = std::to_string(i);
    catalog[id] = {id, id, {}, Domain::movie()};
    for (const char* u : {"10", "9", "100"}) rows.push_back(raw(u, id, 3, i, Source::movielens));
  }
  const auto users = prepare_single_domain(rows, catalog);
  ASSERT_EQ(users.size(), 3u);
  EXPECT_EQ(users[0].user_id, "9");
  EXPECT_EQ(users[1].user_id, "10");
  EXPECT_EQ(users[2].user_id, "100");
}

TEST(Prepared, RoundTripAndDeterminism) {
  TempDir dir;
  const auto loaded = load_movielens(fixture("ml-mini"));
  const auto users = prepare_single_domain(loaded.interactions, loaded.catalog);
  write_prepared_users(dir / "a.jsonl", users);
  write_prepared_users(dir / "b.jsonl",
                       prepare_single_domain(load_movielens(fixture("ml-mini")).interactions,
                                             loaded.catalog));
  EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
  EXPECT_EQ(read_prepared_users(dir / "a.jsonl"), users);
  const auto cross = prepare_cross_domain(amazon_movies(), amazon_books());
  write_prepared_users(dir / "c.jsonl", cross);
  EXPECT_EQ(read_prepared_users(dir / "c.jsonl"), cross);
  const auto summary = summarize(cross);
  EXPECT_EQ(summary.users, cross.size());
  EXPECT_EQ(summary.history_ratings, cross.size() * 18);
  EXPECT_EQ(summary.cross_targets, cross.size());
}

TEST(Synthetic, MovieLensWriterLoadsCleanly) {
  TempDir dir;
  synthetic::write_movielens(dir.path(), {});
  const auto loaded = load_movielens(dir.path());
  EXPECT_EQ(loaded.ratings_report.rejected(), 0u);
  EXPECT_EQ(loaded.catalog.size(), 300u);
  const auto users = prepare_single_domain(loaded.interactions, loaded.catalog);
  EXPECT_GT(users.size(), 30u);
  TempDir again;
  synthetic::write_movielens(again.path(), {});
  EXPECT_EQ(slurp(dir / "u.data"), slurp(again / "u.data"));
}

TEST(Synthetic, AmazonWriterFeedsCrossDomain) {
  TempDir dir;
  const auto paths = synthetic::write_amazon(dir.path(), {});
  const auto movies = load_amazon(paths.movie_ratings, paths.movie_metadata, Domain::movie());
  const auto books = load_amazon(paths.book_ratings, paths.book_metadata, Domain::book());
  EXPECT_GT(movies.ratings_report.rejected_by_reason.count("no categories"), 0u);
  const auto users = prepare_cross_domain(movies, books);
  EXPECT_GT(users.size(), 20u);
}

TEST(Synthetic, GenrePopulationIsGenreConsistent) {
  const auto pop = synthetic::genre_consistent_population({});
  ASSERT_EQ(pop.users.size(), 60u);
  for (const auto& u : pop.users) {
    ASSERT_EQ(u.history.size(), 19u);
    for (const auto& r : u.history) {
      ASSERT_EQ(r.genres.size(), 1u);
      EXPECT_EQ(r.rating, pop.preferences.at(u.user_id).at(normalize_genre(r.genres[0])));
    }
  }
}
