#include <doctest.h>

#include <random>
#include <map>
#include <set>

#include "tabsynth/error.h"
#include "tabsynth/schema.h"
#include "tabsynth/split.h"
#include "tabsynth/table.h"

using namespace tabsynth;

namespace {

Table numeric_table(std::string name, const std::vector<std::optional<double>>& values) {
  return Table({Column::from_numbers(std::move(name), values)});
}

}  // namespace

TEST_CASE("load_csv marks empty tokens missing") {
  const Table t = parse_csv("a,b\n1,x\n,y\n3,z\n");
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 2);
  CHECK(t.column("a").missing_count() == 1);
  CHECK(t.column("b").missing_count() == 0);
  CHECK(t.column("a").is_missing(1));
  CHECK(*t.column("a").number(2) == 3.0);
}

TEST_CASE("load_csv reads an adult-format header") {
  const std::string header =
      "age,workclass,fnlwgt,education,education-num,marital-status,occupation,relationship,race,sex,"
      "capital-gain,capital-loss,hours-per-week,income\n";
  const std::string row = "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, "
                          "Male, 2174, 0, 40, <=50K\n";
  const Table t = parse_csv(header + row + row);
  CHECK(t.cols() == 14);
  CHECK(t.rows() == 2);
  CHECK(t.column("workclass").token(0) == "State-gov");
}

TEST_CASE("ragged rows are a hard error naming the record") {
  try {
    parse_csv("a,b,c,d\n1,2,3,4\n1,2,3\n");
    FAIL("expected ragged-row error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("record 2") != std::string::npos);
  }
}

TEST_CASE("unreadable file") { CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), InputError); }

TEST_CASE("RFC-4180 quoting and custom delimiter") {
  const Table t = parse_csv("name;note\n\"a;b\";\"say \"\"hi\"\"\"\nc;\"multi\nline\"\n", {';', true});
  CHECK(t.column("name").token(0) == "a;b");
  CHECK(t.column("note").token(0) == "say \"hi\"");
  CHECK(t.column("note").token(1) == "multi\nline");
}

TEST_CASE("write then reload preserves every cell") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> pool = {"plain", "with,comma", "quote\"d", "new\nline", "12.5", "-3", "x y"};
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t cols = 1 + rng() % 4, rows = rng() % 20;
    std::vector<Column> columns;
    for (std::size_t c = 0; c < cols; ++c) {
      std::vector<Cell> cells;
      for (std::size_t r = 0; r < rows; ++r) {
        if (rng() % 5 == 0) cells.emplace_back(std::nullopt);
        else cells.emplace_back(pool[rng() % pool.size()]);
      }
      columns.emplace_back("c" + std::to_string(c), std::move(cells));
    }
    const Table original(std::move(columns));
    const Table reloaded = parse_csv(to_csv(original));
    REQUIRE(reloaded.cols() == original.cols());
    REQUIRE(reloaded.rows() == original.rows());
    for (std::size_t c = 0; c < cols; ++c) CHECK(reloaded.column(c).cells() == original.column(c).cells());
  }
}

TEST_CASE("format_number round-trips exactly") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = n(rng);
    CHECK(*parse_number(format_number(v)) == v);
  }
  CHECK_FALSE(parse_number("nan"));
  CHECK_FALSE(parse_number("12abc"));
  CHECK(*parse_number("+4") == 4.0);
}

TEST_CASE("infer_schema: non-numeric tokens are categorical") {
  std::vector<Cell> cells;
  for (int i = 0; i < 50000; ++i) cells.emplace_back(i % 3 ? "male" : "female");
  const Schema s = infer_schema(Table({Column("sex", std::move(cells))}));
  CHECK(std::holds_alternative<CategoricalKind>(s.column("sex").kind));
}

TEST_CASE("infer_schema: zero spike over a continuous remainder is mixed") {
  std::mt19937_64 rng(11);
  std::lognormal_distribution<double> bulk(4.0, 0.6);
  std::vector<std::optional<double>> values;
  for (int i = 0; i < 5000; ++i) values.push_back(i % 10 < 7 ? std::optional<double>(0.0) : std::optional<double>(std::round(bulk(rng))));
  const Schema s = infer_schema(numeric_table("mortgage", values));
  const auto* mixed = std::get_if<MixedKind>(&s.column("mortgage").kind);
  REQUIRE(mixed != nullptr);
  CHECK(mixed->categorical_values == std::vector<double>{0.0});
}

TEST_CASE("infer_schema: many distinct floats without missing are continuous") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::optional<double>> values;
  for (int i = 0; i < 10000; ++i) values.push_back(n(rng));
  const Schema s = infer_schema(numeric_table("x", values));
  const auto* cont = std::get_if<ContinuousKind>(&s.column("x").kind);
  REQUIRE(cont != nullptr);
  CHECK_FALSE(cont->log_transform);
}

TEST_CASE("infer_schema: numeric column with missing cells is promoted to mixed") {
  std::vector<std::optional<double>> values;
  for (int i = 0; i < 1000; ++i) values.push_back(i % 50 == 0 ? std::nullopt : std::optional<double>(i * 0.37));
  const Schema s = infer_schema(numeric_table("x", values));
  const auto* mixed = std::get_if<MixedKind>(&s.column("x").kind);
  REQUIRE(mixed != nullptr);
  CHECK(mixed->categorical_values.empty());
}

TEST_CASE("infer_schema: few distinct numeric values are categorical, heavy skew flags long tail") {
  std::vector<std::optional<double>> small;
  for (int i = 0; i < 1000; ++i) small.push_back(i % 4);
  CHECK(std::holds_alternative<CategoricalKind>(infer_schema(numeric_table("k", small)).column("k").kind));

  std::mt19937_64 rng(9);
  std::lognormal_distribution<double> heavy(0.0, 2.5);
  std::vector<std::optional<double>> tail;
  for (int i = 0; i < 20000; ++i) tail.push_back(heavy(rng));
  const auto kind = infer_schema(numeric_table("amount", tail)).column("amount").kind;
  REQUIRE(std::holds_alternative<ContinuousKind>(kind));
  CHECK(std::get<ContinuousKind>(kind).log_transform);
}

TEST_CASE("infer_schema is pure and rejects empty tables") {
  const Table t = parse_csv("a,b\n1,x\n2,y\n");
  CHECK(infer_schema(t) == infer_schema(t));
  CHECK_THROWS_AS(infer_schema(Table{}), InputError);
}

TEST_CASE("apply_overrides") {
  const Table t = parse_csv("a,b,c,d,e\n1,x,3,4,5\n2,y,3,4,5\n");
  const Schema base = infer_schema(t);
  CHECK(base.included_count() == 5);

  SUBCASE("exclude one column") {
    const std::vector<ColumnOverride> ov{{"c", std::nullopt, false, std::nullopt}};
    const Schema s = apply_overrides(base, ov);
    CHECK(s.included_count() == 4);
    CHECK(s.included().size() == 4);
  }
  SUBCASE("replace kind") {
    const std::vector<ColumnOverride> ov{{"a", MixedKind{{0.0}, false}, std::nullopt, std::nullopt}};
    const Schema s = apply_overrides(base, ov);
    CHECK(std::get<MixedKind>(s.column("a").kind).categorical_values == std::vector<double>{0.0});
    CHECK(s.numeric_count() == 1);
  }
  SUBCASE("unknown column") {
    const std::vector<ColumnOverride> ov{{"zzz", std::nullopt, false, std::nullopt}};
    CHECK_THROWS_AS(apply_overrides(base, ov), InputError);
  }
  SUBCASE("target cannot be excluded") {
    const std::vector<ColumnOverride> mark{{"b", std::nullopt, std::nullopt, true}};
    const Schema s = apply_overrides(base, mark);
    REQUIRE(s.target() != nullptr);
    CHECK(s.target()->name == "b");
    const std::vector<ColumnOverride> drop{{"b", std::nullopt, false, std::nullopt}};
    CHECK_THROWS_AS(apply_overrides(s, drop), InputError);
  }
  SUBCASE("json document round trip") {
    const auto ov = overrides_from_json(nlohmann::json::parse(
        R"({"overrides":[{"column":"a","kind":{"type":"mixed","categorical_values":[0]}},{"column":"e","include":false}]})"));
    const Schema s = apply_overrides(base, ov);
    CHECK(schema_from_json(to_json(s)) == s);
    CHECK(s.included_count() == 4);
  }
}

TEST_CASE("stratified_split: exact class allocation") {
  std::vector<Cell> labels;
  for (int i = 0; i < 100; ++i) labels.emplace_back(i < 90 ? "neg" : "pos");
  const Table t({Column("y", labels)});
  const auto split = stratified_split(t, {ProblemKind::Binary, "y"}, 0.2, 42);
  CHECK(split.test.rows() == 20);
  std::size_t pos = 0;
  for (const auto& c : split.test.column("y").cells()) pos += *c == "pos";
  CHECK(pos == 2);
  CHECK(split.test.rows() - pos == 18);
}

TEST_CASE("stratified_split: adult-sized table gives 39k/9k") {
  std::vector<Cell> labels;
  for (int i = 0; i < 48000; ++i) labels.emplace_back(i % 4 == 0 ? ">50K" : "<=50K");
  const Table t({Column("income", labels)});
  const auto split = stratified_split(t, {ProblemKind::Binary, "income"}, 0.1875, 1);
  CHECK(split.train.rows() == 39000);
  CHECK(split.test.rows() == 9000);
}

TEST_CASE("stratified_split: deterministic, per-class share within one row") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t rows = 20 + rng() % 500, classes = 2 + rng() % 4;
    std::vector<Cell> labels;
    for (std::size_t i = 0; i < rows; ++i) labels.emplace_back("c" + std::to_string(i % classes == 0 ? 0 : rng() % classes));
    const Table t({Column("y", labels), Column("id", std::vector<Cell>(rows, Cell{"v"}))});
    const double f = 0.05 + 0.9 * static_cast<double>(rng() % 1000) / 1000.0;
    std::map<std::string, std::size_t> total;
    for (const auto& c : labels) ++total[*c];
    bool tiny = false;
    for (const auto& [k, v] : total) tiny |= v < 2;
    if (tiny) {
      CHECK_THROWS_AS(stratified_split(t, {ProblemKind::Multiclass, "y"}, f, 3), InputError);
      continue;
    }
    const auto a = stratified_split(t, {ProblemKind::Multiclass, "y"}, f, 3);
    const auto b = stratified_split(t, {ProblemKind::Multiclass, "y"}, f, 3);
    CHECK(a.test.column("y").cells() == b.test.column("y").cells());
    std::map<std::string, std::size_t> in_test;
    for (const auto& c : a.test.column("y").cells()) ++in_test[*c];
    for (const auto& [k, v] : total) {
      CHECK(std::abs(static_cast<double>(in_test[k]) - f * static_cast<double>(v)) <= 1.0);
    }
    CHECK(a.train.rows() + a.test.rows() == rows);
  }
}

TEST_CASE("stratified_split: singleton class and bad fraction") {
  const Table t({Column("y", {Cell{"a"}, Cell{"a"}, Cell{"b"}})});
  CHECK_THROWS_AS(stratified_split(t, {ProblemKind::Binary, "y"}, 0.5, 0), InputError);
  CHECK_THROWS_AS(stratified_split(t, {}, 1.0, 0), InputError);
}

TEST_CASE("resolve_target infers binary and multiclass") {
  const Table t = parse_csv("x,y,z\n1,a,p\n2,b,q\n3,a,r\n");
  const std::vector<ColumnOverride> by{{"y", std::nullopt, std::nullopt, true}};
  CHECK(resolve_target(apply_overrides(infer_schema(t), by), t).kind == ProblemKind::Binary);
  const std::vector<ColumnOverride> bz{{"z", std::nullopt, std::nullopt, true}};
  CHECK(resolve_target(apply_overrides(infer_schema(t), bz), t).kind == ProblemKind::Multiclass);
  CHECK(resolve_target(infer_schema(t), t).kind == ProblemKind::None);
}
