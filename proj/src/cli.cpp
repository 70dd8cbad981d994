#include "memrec/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "memrec/config.hpp"
#include "memrec/datasets.hpp"
#include "memrec/error.hpp"
#include "memrec/eval.hpp"
#include "memrec/service.hpp"
#include "memrec/session.hpp"
#include "memrec/synthetic.hpp"
#include "memrec/text.hpp"

namespace memrec {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::atomic<Service*> g_service{nullptr};

extern "C" void stop_service(int) {
  if (auto* s = g_service.load()) s->stop();
}

AppConfig resolve_config(const std::string& path) {
  if (!path.empty()) return load_config(path);
  if (const char* env = std::getenv("MEMREC_CONFIG"); env && *env) return load_config(env);
  return {};
}

fs::path report_path(const AppConfig& config, const std::string& ref) {
  const fs::path p(ref);
  if (fs::exists(p)) return p;
  const auto by_id = config.store.reports / (ref + ".json");
  if (fs::exists(by_id)) return by_id;
  throw Error(ErrorCode::missing_file, "no report at " + ref + " or " + by_id.string());
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& part : split(text, ',')) {
    if (trim(part).empty()) continue;
    try {
      out.push_back(std::stoi(trim(part)));
    } catch (const std::exception&) {
      throw UsageError("not an integer list: " + text);
    }
  }
  return out;
}

void print_load_report(std::ostream& out, const std::string& label, const LoadResult& r) {
  out << label << " ratings: " << r.ratings_report.input_lines << " lines, "
      << r.ratings_report.accepted << " accepted, " << r.ratings_report.rejected() << " rejected\n";
  for (const auto& [reason, n] : r.ratings_report.rejected_by_reason) {
    out << "  rejected (" << reason << "): " << n << "\n";
  }
  out << label << " catalog: " << r.catalog_report.accepted << " items, "
      << r.catalog_report.rejected() << " rejected\n";
}

struct PrepareArgs {
  std::string dataset;
  std::string dir;
  std::string movies_ratings, movies_meta, books_ratings, books_meta;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t min_count = 19, cap = 19, movie_min = 18, movie_cap = 18;
};

int run_prepare(const AppConfig& config, const PrepareArgs& a, std::ostream& out) {
  std::vector<PreparedUser> users;
  nlohmann::ordered_json rejects;
  std::string suffix;
  const fs::path dir = a.dir.empty() ? fs::path(".") : fs::path(a.dir);

  auto dataset = a.dataset;
  if (dataset == "synthetic-movielens") {
    synthetic::MovieLensOptions o;
    if (a.seed) o.seed = a.seed;
    synthetic::write_movielens(dir, o);
    out << "wrote synthetic MovieLens files to " << dir.string() << "\n";
    dataset = "movielens";
  } else if (dataset == "synthetic-amazon") {
    synthetic::AmazonOptions o;
    if (a.seed) o.seed = a.seed;
    synthetic::write_amazon(dir, o);
    out << "wrote synthetic Amazon files to " << dir.string() << "\n";
    dataset = "amazon";
  }

  if (dataset == "movielens") {
    const auto loaded = load_movielens(dir);
    print_load_report(out, "movielens", loaded);
    users = prepare_single_domain(loaded.interactions, loaded.catalog, {a.min_count, a.cap});
    rejects["ratings"] = to_json(loaded.ratings_report);
    rejects["catalog"] = to_json(loaded.catalog_report);
    suffix = "single";
  } else if (dataset == "amazon") {
    const auto pick = [&](const std::string& given, const char* name) {
      return given.empty() ? dir / name : fs::path(given);
    };
    const auto movies = load_amazon(pick(a.movies_ratings, "movies_ratings.csv"),
                                    pick(a.movies_meta, "movies_meta.jsonl"), Domain::movie());
    const auto books = load_amazon(pick(a.books_ratings, "books_ratings.csv"),
                                   pick(a.books_meta, "books_meta.jsonl"), Domain::book());
    print_load_report(out, "movies", movies);
    print_load_report(out, "books", books);
    users = prepare_cross_domain(movies, books, {a.movie_min, a.movie_cap});
    rejects["movies"] = {{"ratings", to_json(movies.ratings_report)},
                         {"catalog", to_json(movies.catalog_report)}};
    rejects["books"] = {{"ratings", to_json(books.ratings_report)},
                        {"catalog", to_json(books.catalog_report)}};
    suffix = "cross";
  } else {
    throw UsageError("unknown dataset: " + a.dataset);
  }

  const fs::path target = a.out.empty() ? config.store.prepared / (dataset + "-" + suffix + ".jsonl")
                                        : fs::path(a.out);
  write_prepared_users(target, users);
  std::ofstream(target.string() + ".rejects.json") << rejects.dump(2) << '\n';

  const auto s = summarize(users);
  out << "prepared users: " << s.users << "\n";
  out << "history ratings: " << s.history_ratings << "\n";
  out << "cross-domain targets: " << s.cross_targets << "\n";
  out << "wrote " << target.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string protocol;
  std::string recommender;
  std::string users;
  std::string stub;
  std::optional<std::size_t> k;
  std::string strategy;
  std::string seeds;
  std::optional<std::size_t> limit;
  int history_max = 18;
  std::string out;
  std::string checkpoint;
  bool audit = false;
};

int run_eval(AppConfig config, const EvalArgs& a, std::ostream& out) {
  if (!a.stub.empty()) {
    config.gateway.provider = "stub";
    config.gateway.stub = a.stub;
  }
  if (a.k) config.retrieval.k = *a.k;
  if (!a.strategy.empty()) config.retrieval.strategy = a.strategy;

  ProtocolConfig pc;
  pc.protocol = parse_protocol(a.protocol);
  pc.recommender = parse_recommender(a.recommender);
  pc.retrieval = make_retrieval(config);
  pc.history_max = a.history_max;
  pc.user_limit = a.limit;
  pc.audit_ids = a.audit;
  pc.prices = config.gateway.prices;
  if (!a.seeds.empty()) {
    pc.shuffle_seeds.clear();
    for (const int s : parse_int_list(a.seeds)) pc.shuffle_seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (!a.checkpoint.empty()) pc.checkpoint_dir = fs::path(a.checkpoint);

  const fs::path users_path =
      !a.users.empty() ? fs::path(a.users)
                       : config.store.prepared / (pc.protocol == Protocol::single_domain
                                                      ? "movielens-single.jsonl"
                                                      : "amazon-cross.jsonl");
  const auto users = read_prepared_users(users_path);

  Gateway gateway(make_chat_backend(config.gateway), config.gateway.prices,
                  config.gateway.max_in_flight);
  EvalHarness harness(gateway, PromptBuilder(make_templates(config)));
  const auto report = harness.run(pc, users);

  const auto id = std::string(protocol_name(pc.protocol)) + "-" +
                  std::string(recommender_name(pc.recommender)) + "-" + report.config_hash.substr(0, 8);
  const fs::path path = a.out.empty() ? config.store.reports / (id + ".json") : fs::path(a.out);
  write_report(path, report);
  auto stem = path;
  stem.replace_extension();
  write_traces_csv(stem.string() + ".traces.csv", report);
  std::ofstream(stem.string() + ".svg")
      << render_mae_svg({series_of(report)}, "MAE by history size");

  out << "users: " << report.users << ", traces: " << report.traces.size() << "\n";
  out << "MAE by history size:";
  for (const auto& s : report.by_size) {
    out << " " << s.history_size << "=" << std::fixed << std::setprecision(4) << s.mae;
  }
  out << "\n";
  out << "tokens: " << report.ledger.prompt_tokens << " prompt, " << report.ledger.reply_tokens
      << " reply; cost per 10 history: $" << std::setprecision(6) << report.cost_per_10_history
      << "\n";
  out << "report " << path.string() << "\n";
  return 0;
}

struct Runtime {
  AppConfig config;
  std::unique_ptr<ProfileStore> store;
  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<SessionEngine> engine;

  explicit Runtime(AppConfig c) : config(std::move(c)) {
    store = config.store.profiles ? std::make_unique<ProfileStore>(*config.store.profiles)
                                  : std::make_unique<ProfileStore>();
    gateway = std::make_unique<Gateway>(make_chat_backend(config.gateway), config.gateway.prices,
                                        config.gateway.max_in_flight);
    SessionConfig sc;
    sc.retrieval = make_retrieval(config);
    sc.llm_classification = config.session.llm_classification;
    sc.extraction = config.session.extraction;
    engine = std::make_unique<SessionEngine>(*store, *gateway, PromptBuilder(make_templates(config)),
                                             sc);
  }
};

int run_session(const AppConfig& config, const std::string& user, std::istream& in,
                std::ostream& out) {
  Runtime rt(config);
  std::string line;
  while (std::getline(in, line)) {
    const auto text = trim(line);
    if (text.empty()) continue;
    if (text == "/quit" || text == "/exit") break;
    if (text == "/profile") {
      for (const auto& r : rt.store->read_profile(user)) {
        out << "  " << r.record_id << "  " << r.title << "  " << format_number(r.rating) << "/5\n";
      }
      continue;
    }
    try {
      const auto event = rt.engine->handle_query(user, text);
      out << "[" << query_type_letter(event.classified_type) << "] " << event.response_text << "\n";
      for (const auto& m : event.memory_used) {
        out << "    memory " << format_number(m.score) << "  " << m.record.title << " "
            << format_number(m.record.rating) << "/5\n";
      }
      if (event.error_code) out << "    (" << *event.error_code << ")\n";
    } catch (const Error& e) {
      out << "[!] " << error_code_name(e.code()) << ": " << e.what() << "\n";
    }
  }
  return 0;
}

int run_serve(AppConfig config, const std::string& host, std::optional<int> port, std::ostream& out) {
  if (!host.empty()) config.service.host = host;
  if (port) config.service.port = *port;
  Runtime rt(config);
  ServiceOptions options;
  options.host = config.service.host;
  options.port = config.service.port;
  options.reports_dir = config.store.reports;
  options.static_dir = config.service.static_dir;
  Service service(*rt.engine, *rt.store, options);
  const int bound = service.bind();
  out << "listening on http://" << options.host << ":" << bound << "\n" << std::flush;
  g_service = &service;
  std::signal(SIGINT, stop_service);
  std::signal(SIGTERM, stop_service);
  service.run();
  g_service = nullptr;
  return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
                 std::ostream& err) {
  CLI::App app{"Memory-assisted rating prediction: data preparation, evaluation and live sessions",
               "memrec"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "YAML configuration file (default: $MEMREC_CONFIG)");

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Load a raw dataset and write prepared users");
  prepare->add_option("--dataset", prep.dataset,
                      "movielens, amazon, synthetic-movielens or synthetic-amazon")
      ->required()
      ->check(CLI::IsMember({"movielens", "amazon", "synthetic-movielens", "synthetic-amazon"}));
  prepare->add_option("--dir", prep.dir, "Directory holding (or receiving) the raw files");
  prepare->add_option("--movies-ratings", prep.movies_ratings, "Amazon movie ratings CSV");
  prepare->add_option("--movies-meta", prep.movies_meta, "Amazon movie metadata JSON lines");
  prepare->add_option("--books-ratings", prep.books_ratings, "Amazon book ratings CSV");
  prepare->add_option("--books-meta", prep.books_meta, "Amazon book metadata JSON lines");
  prepare->add_option("--out", prep.out, "Prepared-users output file");
  prepare->add_option("--seed", prep.seed, "Seed for synthetic datasets");
  prepare->add_option("--min-ratings", prep.min_count, "Single-domain minimum ratings per user");
  prepare->add_option("--keep", prep.cap, "Single-domain ratings kept per user");
  prepare->add_option("--movie-min", prep.movie_min, "Cross-domain minimum movie ratings");
  prepare->add_option("--movie-keep", prep.movie_cap, "Cross-domain movie ratings kept");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Run an evaluation protocol and write a report");
  eval->add_option("protocol", ev.protocol, "single or cross")
      ->required()
      ->check(CLI::IsMember({"single", "cross"}));
  eval->add_option("--recommender", ev.recommender, "map or baseline")
      ->required()
      ->check(CLI::IsMember({"map", "baseline"}));
  eval->add_option("--users", ev.users, "Prepared-users file");
  eval->add_option("--stub", ev.stub,
                   "Use a stub model: constant:<r>, echo-mean, scripted:<file>, genre-oracle:<file>");
  eval->add_option("--k", ev.k, "Memory size for map");
  eval->add_option("--strategy", ev.strategy, "genre_overlap or embedding_cosine")
      ->check(CLI::IsMember({"genre_overlap", "embedding_cosine"}));
  eval->add_option("--seeds", ev.seeds, "Comma-separated shuffle seeds (cross)");
  eval->add_option("--limit", ev.limit, "Evaluate only the first N users");
  eval->add_option("--history-max", ev.history_max, "Largest history size")
      ->check(CLI::Range(1, 1000));
  eval->add_option("--out", ev.out, "Report file (default: <reports>/<id>.json)");
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory for resumable runs");
  eval->add_flag("--audit", ev.audit, "Tag record ids into prompts and record them per trace");

  std::string report_a, report_b, sizes, plot;
  auto* compare = app.add_subcommand("compare", "Compare two reports (base first)");
  compare->add_option("base", report_a, "Baseline report path or id")->required();
  compare->add_option("candidate", report_b, "Candidate report path or id")->required();
  compare->add_option("--sizes", sizes, "History sizes to show, e.g. 5,9,13,17");
  compare->add_option("--plot", plot, "Write an SVG chart of both series");

  std::string host;
  std::optional<int> port;
  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));

  std::string session_user;
  auto* session = app.add_subcommand("session", "Chat with the recommender on the terminal");
  session->add_option("--user", session_user, "User id")->required();

  std::vector<std::string> argv_storage{"memrec"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const auto config = resolve_config(config_path);
    if (*prepare) return run_prepare(config, prep, out);
    if (*eval) return run_eval(config, ev, out);
    if (*compare) {
      const auto a = read_report(report_path(config, report_a));
      const auto b = read_report(report_path(config, report_b));
      const auto table = compare_reports(a, b);
      out << format_comparison(table, parse_int_list(sizes));
      if (!plot.empty()) {
        std::ofstream(plot) << render_mae_svg({series_of(a), series_of(b)}, "MAE by history size");
      }
      return 0;
    }
    if (*serve) return run_serve(config, host, port, out);
    if (*session) return run_session(config, session_user, in, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error (" << error_code_name(e.code()) << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace memrec
