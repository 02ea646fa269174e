#include <gtest/gtest.h>

#include "jitflow/csv.hpp"
#include "jitflow/error.hpp"
#include "support.hpp"

using namespace jitflow;

TEST(Csv, WritesHeaderAndCrlf) {
  Table t({"a", "b c"}, {{1.0, std::string("x,y")}, {2.5, std::monostate{}}});
  EXPECT_EQ(csv::write_table(t), "a,b c\r\n1,\"x,y\"\r\n2.5,\r\n");
}

TEST(Csv, TypesUnquotedFields) {
  auto t = csv::read_table("n,s,b,z\n3,hi,True,\n-1.5,\"7\",false,x\n");
  ASSERT_EQ(t.row_count(), 2u);
  EXPECT_EQ(t.rows()[0][0], Cell(3.0));
  EXPECT_EQ(t.rows()[0][1], Cell(std::string("hi")));
  EXPECT_EQ(t.rows()[0][2], Cell(true));
  EXPECT_EQ(t.rows()[0][3], Cell(std::monostate{}));
  EXPECT_EQ(t.rows()[1][1], Cell(std::string("7")));
}

TEST(Csv, QuotedSpecials) {
  auto t = csv::read_table("a\r\n\"line\nbreak \"\"q\"\"\"\r\n");
  EXPECT_EQ(std::get<std::string>(t.rows()[0][0]), "line\nbreak \"q\"");
}

TEST(Csv, Errors) {
  EXPECT_THROW(csv::read_table("a,b\n1\n"), Error);
  EXPECT_THROW(csv::read_table("a\n\"open\n"), Error);
}

TEST(Csv, HeaderOnly) {
  auto t = csv::read_table("a,b\r\n");
  EXPECT_EQ(t.columns().size(), 2u);
  EXPECT_EQ(t.row_count(), 0u);
}

TEST(Csv, RoundTripProperty) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    auto t = testkit::random_table(rng);
    auto text = csv::write_table(t);
    ASSERT_EQ(csv::read_table(text), t) << text;
  }
}

TEST(Csv, AmbiguousTextIsQuoted) {
  for (const char* s : {"", "true", "False", "12", "1e5", " 3", "null"}) {
    Table t({"c"}, {{std::string(s)}});
    EXPECT_EQ(csv::read_table(csv::write_table(t)), t) << s;
  }
}
