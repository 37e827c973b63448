#include "aeroflight/errors.hpp"
#include "aeroflight/text.hpp"

#include <cmath>
#include <doctest.h>

using namespace aeroflight;

TEST_CASE("format_double round-trips") {
  for (double v : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 6.02214076e23, -1e-300, 43.3}) {
    CHECK(text::parse_double(text::format_double(v)) == v);
  }
  CHECK(text::format_double(0.1) == "0.1");
}

TEST_CASE("strict number parsing") {
  CHECK(text::parse_double(" 2.5 ") == 2.5);
  CHECK_THROWS_AS(text::parse_double("2.5x"), ParseError);
  CHECK_THROWS_AS(text::parse_double(""), ParseError);
  CHECK(text::parse_long("-12") == -12);
  CHECK_THROWS_AS(text::parse_long("1.5"), ParseError);
  try {
    text::parse_double("abc", 7);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 7);
  }
}

TEST_CASE("lists and vectors") {
  const auto v = text::parse_vec3("1,-2,3.5");
  CHECK(v == Eigen::Vector3d(1, -2, 3.5));
  CHECK_THROWS_AS(text::parse_vec3("1,2"), ParseError);
  CHECK_THROWS_AS(text::parse_list("1,2,3", 2), ParseError);
  CHECK(text::split("a,,b", ',').size() == 3);
  CHECK(text::split_ws("  a  b\tc ").size() == 3);
  CHECK(text::trim("  x ") == "x");
}

TEST_CASE("key-value files") {
  const auto kv = text::parse_kv_file("# comment\n\na = 1\nb=two # trailing\n");
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "two");
  CHECK_THROWS_AS(text::parse_kv_file("a=1\na=2\n"), ParseError);
  CHECK_THROWS_AS(text::parse_kv_file("justaword\n"), ParseError);
}

TEST_CASE("paths") {
  CHECK(text::dirname("a/b/c.txt") == "a/b");
  CHECK(text::dirname("c.txt").empty());
  CHECK(text::resolve("a/b", "c.txt") == "a/b/c.txt");
  CHECK(text::resolve("a/b", "/abs/c.txt") == "/abs/c.txt");
  CHECK_THROWS_AS(text::read_file("/nonexistent/dir/file"), IoError);
}
