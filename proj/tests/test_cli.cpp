#include <gtest/gtest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "memrec/cli.hpp"
#include "support.hpp"

using memrec::testing::slurp;
using memrec::testing::spit;
using memrec::testing::TempDir;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args, const std::string& input = {}) {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = memrec::cli_dispatch(args, in, out, err);
  return {code, out.str(), err.str()};
}

// Workspace with a config whose store lives under the temp directory.
struct Workspace {
  Workspace() {
    spit(dir / "memrec.yaml",
         "store:\n  reports: reports\n  prepared: prepared\ngateway:\n  stub: constant:3\n");
  }
  std::string config() const { return (dir / "memrec.yaml").string(); }
  TempDir dir;
};

}  // namespace

TEST(Cli, PrepareEvalCompareRoundTrip) {
  Workspace ws;
  const auto prep = run({"--config", ws.config(), "prepare", "--dataset", "synthetic-movielens", "--dir",
                         (ws.dir / "raw").string()});
  ASSERT_EQ(prep.code, 0) << prep.err;
  EXPECT_NE(prep.out.find("prepared users: "), std::string::npos);
  const auto prepared = ws.dir / "prepared/movielens-single.jsonl";
  ASSERT_TRUE(std::filesystem::exists(prepared));
  EXPECT_TRUE(std::filesystem::exists(prepared.string() + ".rejects.json"));

  const auto map = run({"--config", ws.config(), "eval", "single", "--recommender", "map", "--stub",
                        "constant:3", "--out", (ws.dir / "map.json").string(), "--limit", "5"});
  ASSERT_EQ(map.code, 0) << map.err;
  const auto doc = nlohmann::json::parse(slurp(ws.dir / "map.json"));
  ASSERT_TRUE(doc.contains("mae_by_history_size"));
  EXPECT_EQ(doc["mae_by_history_size"].size(), 18u);
  EXPECT_TRUE(std::filesystem::exists(ws.dir / "map.traces.csv"));
  EXPECT_TRUE(std::filesystem::exists(ws.dir / "map.svg"));

  const auto base = run({"--config", ws.config(), "eval", "single", "--recommender", "baseline",
                         "--limit", "5"});
  ASSERT_EQ(base.code, 0) << base.err;
  const auto line = base.out.substr(base.out.find("report ") + 7);
  const auto base_path = line.substr(0, line.find('\n'));
  EXPECT_EQ(std::filesystem::path(base_path).parent_path(), ws.dir / "reports");

  const auto cmp = run({"--config", ws.config(), "compare", base_path, (ws.dir / "map.json").string(),
                        "--sizes", "5,9,13,17", "--plot", (ws.dir / "cmp.svg").string()});
  ASSERT_EQ(cmp.code, 0) << cmp.err;
  EXPECT_EQ(cmp.out.rfind("History size", 0), 0u);
  EXPECT_NE(cmp.out.find("Improvement"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(ws.dir / "cmp.svg"));

  const auto id = std::filesystem::path(base_path).stem().string();
  EXPECT_EQ(run({"--config", ws.config(), "compare", id, id}).code, 0);
}

TEST(Cli, CrossDomainSynthetic) {
  Workspace ws;
  ASSERT_EQ(run({"--config", ws.config(), "prepare", "--dataset", "synthetic-amazon", "--dir",
                 (ws.dir / "raw").string()})
                .code,
            0);
  const auto ev = run({"--config", ws.config(), "eval", "cross", "--recommender", "map", "--limit", "3",
                       "--seeds", "1,2"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("traces: 162"), std::string::npos) << ev.out;
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"eval", "sideways"}).code, 1);
  EXPECT_EQ(run({"serve", "--port", "99999"}).code, 1);
  const auto r = run({"prepare", "--dataset", "imdb"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("imdb"), std::string::npos);
}

TEST(Cli, RuntimeFailuresExitTwo) {
  Workspace ws;
  const auto missing = run({"--config", ws.config(), "prepare", "--dataset", "movielens", "--dir",
                            (ws.dir / "nothing").string()});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("missing_file"), std::string::npos);
  EXPECT_EQ(run({"--config", (ws.dir / "absent.yaml").string(), "eval", "single", "--recommender", "map"}).code, 2);
  spit(ws.dir / "bad.yaml", "retrieval:\n  k: lots\n");
  const auto bad = run({"--config", (ws.dir / "bad.yaml").string(), "eval", "single", "--recommender", "map"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("bad.yaml:2:"), std::string::npos);
}

TEST(Cli, SessionLoop) {
  Workspace ws;
  const auto r = run({"--config", ws.config(), "session", "--user", "u1"},
                     "I rate \"Heat\" (Crime) 4/5\nRecommend me a crime movie\n/profile\n/quit\n");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("[B]"), std::string::npos);
  EXPECT_NE(r.out.find("[A]"), std::string::npos);
  EXPECT_NE(r.out.find("Heat"), std::string::npos);
}
