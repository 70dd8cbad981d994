#include <gtest/gtest.h>

#include "memrec/text.hpp"

using namespace memrec;

TEST(Text, TrimAndCollapse) {
  EXPECT_EQ(trim("  a b \t\n"), "a b");
  EXPECT_EQ(trim(""), "");
  EXPECT_EQ(collapse_whitespace("  Sci   Fi\t\tnoir "), "Sci Fi noir");
  EXPECT_EQ(to_lower_ascii("Children's SCI-FI"), "children's sci-fi");
}

TEST(Text, SplitKeepsEmptyFields) {
  const auto parts = split("1|Toy Story||x|", '|');
  ASSERT_EQ(parts.size(), 5u);
  EXPECT_EQ(parts[2], "");
  EXPECT_EQ(parts[4], "");
  EXPECT_EQ(join({"a", "b", "c"}, ", "), "a, b, c");
}

TEST(Text, FormatNumberDropsIntegralFraction) {
  EXPECT_EQ(format_number(4.0), "4");
  EXPECT_EQ(format_number(3.5), "3.5");
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(-2.0), "-2");
}

TEST(Text, IdLessOrdersDigitIdsNumerically) {
  EXPECT_TRUE(id_less("9", "10"));
  EXPECT_FALSE(id_less("10", "9"));
  EXPECT_TRUE(id_less("10", "9a"));  // bytewise once either id has a non-digit
  EXPECT_TRUE(id_less("007", "8"));
  EXPECT_FALSE(id_less("5", "5"));
}

TEST(Text, Latin1BytesBecomeUtf8) {
  const std::string latin1 = "Cit\xe9";
  EXPECT_EQ(ensure_utf8(latin1), "Cit\xc3\xa9");
  const std::string already = "Cit\xc3\xa9";
  EXPECT_EQ(ensure_utf8(already), already);
}

TEST(Text, FnvMatchesPublishedVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a32(""), 0x811c9dc5U);
  EXPECT_EQ(fnv1a32("a"), 0xe40c292cU);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}
