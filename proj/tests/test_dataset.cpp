#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "natmed/dataset.hpp"
#include "natmed/oracle.hpp"
#include "natmed/sim.hpp"

using namespace natmed;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/natmed_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
  void write(const std::string& content) {
    std::ofstream out(path);
    out << content;
  }
};

ColumnSpec small_spec() {
  ColumnSpec s;
  s.w = {"W1"};
  s.m = {"M"};
  return s;
}

}  // namespace

TEST_CASE("load_csv parses a small file") {
  TempFile f("small.csv");
  f.write("W1,A,Z,M,Y\n0.5,1,0,2.25,1\n-1,0,1,0,0\n3,1,1,-0.5,1\n");
  const Dataset d = load_csv(f.path, small_spec());
  CHECK(d.size() == 3);
  CHECK(d.w_dim() == 1);
  CHECK(d.m_dim() == 1);
  CHECK(d.records[0].w[0] == 0.5);
  CHECK(d.records[0].a == 1);
  CHECK(d.records[0].z == 0);
  CHECK(d.records[1].m[0] == 0.0);
  CHECK(d.records[2].y == 1.0);
}

TEST_CASE("load_csv rejects domain violations naming the row") {
  TempFile f("bad.csv");
  std::string rows;
  for (int i = 0; i < 6; ++i) rows += "0,1,0,0,1\n";
  rows += "0,2,0,0,1\n";  // A=2 in data row 7
  f.write("W1,A,Z,M,Y\n" + rows);
  CHECK_THROWS_WITH_AS(load_csv(f.path, small_spec()),
                       doctest::Contains("row 7"), DataError);
}

TEST_CASE("load_csv rejects missing columns, cells, and non-numeric cells") {
  ColumnSpec s = small_spec();
  SUBCASE("missing column") {
    TempFile f("nocol.csv");
    f.write("W1,A,Z,M\n0,1,0,0\n");
    CHECK_THROWS_WITH_AS(load_csv(f.path, s), doctest::Contains("'Y'"), DataError);
  }
  SUBCASE("missing cell") {
    TempFile f("gap.csv");
    f.write("W1,A,Z,M,Y\n0,1,0,,1\n");
    CHECK_THROWS_WITH_AS(load_csv(f.path, s), doctest::Contains("missing"),
                         DataError);
  }
  SUBCASE("non-numeric cell") {
    TempFile f("alpha.csv");
    f.write("W1,A,Z,M,Y\n0,1,0,x,1\n");
    CHECK_THROWS_WITH_AS(load_csv(f.path, s), doctest::Contains("non-numeric"),
                         DataError);
  }
  SUBCASE("short row") {
    TempFile f("short.csv");
    f.write("W1,A,Z,M,Y\n0,1,0,1\n");
    CHECK_THROWS_AS(load_csv(f.path, s), DataError);
  }
}

TEST_CASE("write_csv then load_csv reproduces the dataset exactly") {
  const Dataset d = sample_dgm(dgm_sim_study(), 500, 42);
  TempFile f("roundtrip.csv");
  write_csv(d, f.path);
  ColumnSpec s;
  s.w = d.w_names;
  s.m = d.m_names;
  s.y_kind = d.y_kind;
  const Dataset back = load_csv(f.path, s);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.records[i].w == d.records[i].w);
    CHECK(back.records[i].a == d.records[i].a);
    CHECK(back.records[i].z == d.records[i].z);
    CHECK(back.records[i].m == d.records[i].m);
    CHECK(back.records[i].y == d.records[i].y);
  }
}

TEST_CASE("write/load round-trips non-integral doubles") {
  Dataset d;
  d.w_names = {"W1"};
  d.m_names = {"M1", "M2"};
  d.y_kind = YKind::continuous;
  d.records.push_back(
      {{0.1}, 1, 0, {1.0 / 3.0, -2.718281828459045}, 0.30000000000000004});
  d.records.push_back({{-1e-17}, 0, 1, {5e300, 0.0}, -7.25});
  TempFile f("floats.csv");
  write_csv(d, f.path);
  ColumnSpec s;
  s.w = d.w_names;
  s.m = d.m_names;
  s.y_kind = YKind::continuous;
  const Dataset back = load_csv(f.path, s);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.records[i].w == d.records[i].w);
    CHECK(back.records[i].m == d.records[i].m);
    CHECK(back.records[i].y == d.records[i].y);
  }
}

TEST_CASE("diagnose on simulation-study data matches enumerated compliance rates") {
  // enumerated: P(Z=1|A=1)=0.706046, P(Z=1|A=0)=0.245967
  const Dataset d = sample_dgm(dgm_sim_study(), 10000, 7);
  const DiagnosticsReport rep = diagnose(d);
  CHECK(rep.pz_given_a1 == doctest::Approx(0.706046).epsilon(0.05));
  CHECK(rep.pz_given_a0 == doctest::Approx(0.245967).epsilon(0.08));
  CHECK(rep.pz_given_a1 > rep.pz_given_a0);
  CHECK_FALSE(rep.monotonicity_flag);
}

TEST_CASE("diagnose flags only aggregate monotonicity violations") {
  Dataset d;
  d.w_names = {"W1"};
  d.m_names = {"M"};
  auto add = [&](int a, int z) { d.records.push_back({{0.0}, a, z, {0.0}, 0.0}); };
  SUBCASE("perfect compliance Z == A") {
    for (int i = 0; i < 10; ++i) add(i % 2, i % 2);
    const DiagnosticsReport rep = diagnose(d);
    CHECK(rep.pz_given_a1 == 1.0);
    CHECK(rep.pz_given_a0 == 0.0);
    CHECK_FALSE(rep.monotonicity_flag);
  }
  SUBCASE("all defiers Z == 1-A") {
    for (int i = 0; i < 10; ++i) add(i % 2, 1 - i % 2);
    const DiagnosticsReport rep = diagnose(d);
    CHECK(rep.monotonicity_flag);
  }
}

TEST_CASE("diagnose per-stratum reporting skips empty arms with a warning") {
  Dataset d;
  d.w_names = {"W1"};
  d.m_names = {"M"};
  // stratum W1=0 has both arms; stratum W1=1 only A=1
  d.records.push_back({{0.0}, 0, 0, {0.0}, 0.0});
  d.records.push_back({{0.0}, 1, 1, {0.0}, 0.0});
  d.records.push_back({{1.0}, 1, 1, {0.0}, 0.0});
  const DiagnosticsReport rep = diagnose(d, {"W1"});
  REQUIRE(rep.strata.size() == 2);
  CHECK_FALSE(rep.strata[0].skipped);
  CHECK(rep.strata[1].skipped);
  CHECK(rep.warnings.size() == 1);
}

TEST_CASE("diagnose is read-only and deterministic") {
  const Dataset d = sample_dgm(dgm_sim_study(), 300, 3);
  const Dataset copy = d;
  const DiagnosticsReport r1 = diagnose(d);
  const DiagnosticsReport r2 = diagnose(d);
  CHECK(r1.pz_given_a1 == r2.pz_given_a1);
  CHECK(r1.pz_given_a0 == r2.pz_given_a0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d.records[i].a == copy.records[i].a);
    CHECK(d.records[i].y == copy.records[i].y);
  }
}

TEST_CASE("validate rejects inconsistent records") {
  Dataset d;
  d.w_names = {"W1"};
  d.m_names = {"M"};
  d.records.push_back({{0.0, 1.0}, 0, 0, {0.0}, 0.0});  // wrong w arity
  CHECK_THROWS_AS(d.validate(), DataError);
}
