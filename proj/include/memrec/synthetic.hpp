#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memrec/datasets.hpp"
#include "memrec/gateway.hpp"

// Deterministic fixture generators. Everything here is a pure function of
// the options, including the seed.
namespace memrec::synthetic {

struct MovieLensOptions {
  std::size_t users = 60;
  std::size_t items = 300;
  std::size_t min_ratings = 12;  // some users fall below the 19-rating cut
  std::size_t max_ratings = 45;
  std::uint64_t seed = 7;
};

// Writes <dir>/u.data and <dir>/u.item in the standard 100k layout.
void write_movielens(const std::filesystem::path& dir, const MovieLensOptions& options = {});

struct AmazonOptions {
  std::size_t users = 80;
  std::size_t movie_items = 250;
  std::size_t book_items = 150;
  std::size_t min_movies = 10;
  std::size_t max_movies = 40;
  double book_reader_share = 0.7;
  std::size_t max_books = 4;
  // Share of items written without categories; their ratings are excluded.
  double uncategorized_share = 0.05;
  std::uint64_t seed = 13;
};

struct AmazonPaths {
  std::filesystem::path movie_ratings;
  std::filesystem::path movie_metadata;
  std::filesystem::path book_ratings;
  std::filesystem::path book_metadata;
};

// Ratings CSV (item,user,rating,timestamp) plus JSON-lines metadata for a
// movie catalog and a book catalog sharing one user population.
AmazonPaths write_amazon(const std::filesystem::path& dir, const AmazonOptions& options = {});

struct GenrePopulationOptions {
  std::size_t users = 60;
  std::size_t history = 19;
  std::vector<std::string> genres = {"Action", "Comedy", "Drama", "Horror", "Romance", "Sci-Fi"};
  std::uint64_t seed = 11;
};

struct GenrePopulation {
  std::vector<PreparedUser> users;
  PreferenceMap preferences;  // user -> normalized genre -> rating
};

// Every item carries exactly one genre and every rating equals the user's
// fixed rating for that genre.
GenrePopulation genre_consistent_population(const GenrePopulationOptions& options = {});

struct ConstantPopulationOptions {
  std::size_t users = 20;
  std::size_t history = 19;
  double rating = 3.0;
  bool book_target = false;  // history 18 movies + one book when set
  std::uint64_t seed = 5;
};

// Ratings are all `rating`; titles and genres vary.
std::vector<PreparedUser> constant_rating_population(const ConstantPopulationOptions& options = {});

}  // namespace memrec::synthetic
