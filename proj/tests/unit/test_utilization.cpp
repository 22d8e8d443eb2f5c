#include <doctest.h>

#include "idfsim/utilization.hpp"
#include "support/oracles.hpp"

using namespace idfsim::campaign;

TEST_CASE("utilization CSV parsing") {
  const auto r = parse_utilization("# c\nsite_type,used,fixed,available\nSlice,836,0,13300\nSLICEL,621,0,-\nX,4,,-\n");
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].available == 13300);
  CHECK_FALSE(r.rows[1].available.has_value());
  CHECK_FALSE(r.rows[2].fixed.has_value());
  CHECK(r.find("SLICEL")->used == 621);
  CHECK(r.find("nope") == nullptr);
  CHECK_THROWS_AS((void)parse_utilization("a,b\n"), idfsim::ParseError);
  CHECK_THROWS_AS((void)parse_utilization("a,1,2,x\n"), idfsim::ParseError);
}

TEST_CASE("overhead for transcribed reports") {
  const auto without = load_utilization(oracle::fixture("util_without_idf.csv"));
  const auto with = load_utilization(oracle::fixture("util_with_idf.csv"));
  const auto result = overhead_diff(without, with);
  CHECK(result.warnings.empty());
  auto row = [&](const std::string& name) -> const OverheadRow& {
    const auto it = std::find_if(result.rows.begin(), result.rows.end(),
                                 [&](const OverheadRow& r) { return r.site_type == name; });
    REQUIRE(it != result.rows.end());
    return *it;
  };
  CHECK(row("Slice LUTs").idf_overhead == 1260);
  CHECK(row("Slice LUTs").label == "Slice Look Up Tables");
  CHECK(row("Slice LUTs").percent == doctest::Approx(100.0 * 1260 / 53200));
  CHECK(row("DSP").idf_overhead == 20);
  CHECK(row("LUT as Distributed RAM").idf_overhead == 0);
  CHECK(row("LUT as Distributed RAM").percent == 0.0);
  CHECK(row("MMCME2_ADV").percent == doctest::Approx(50.0));
  const std::string csv = overhead_csv(result.rows);
  CHECK(csv.find("Slice LUTs,1260,2.4\n") != std::string::npos);
  // Repeated site types appear once.
  CHECK(std::count_if(result.rows.begin(), result.rows.end(),
                      [](const OverheadRow& r) { return r.site_type == "LUT as Logic"; }) == 1);
}

TEST_CASE("overhead warnings") {
  const auto a = parse_utilization("A,1,0,10\nB,1,0,10\n");
  const auto b = parse_utilization("A,1,0,-\nC,1,0,3\n");
  const auto r = overhead_diff(a, b);
  CHECK(r.rows.size() == 1);
  CHECK(r.warnings.size() == 3);
}
