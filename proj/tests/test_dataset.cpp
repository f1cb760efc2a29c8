#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "dataset.hpp"
#include "errors.hpp"

using namespace wmdl;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

MultiSourceData two_source_toy() {
  MultiSourceData d;
  d.d_x = 2;
  d.target_source = 1;
  for (int id : {1, 2}) {
    SourceData s;
    s.id = id;
    s.y = {1.0, -0.5, 2.0, 0.25};
    s.a = {1, -1, 1, -1};
    s.x.resize(4, 2);
    s.x << 0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.0, 0.125;
    s.z.resize(4, id == 2 ? 1 : 0);
    if (id == 2) s.z << 0.5, -0.5, 0.25, 0.0;
    d.sources.push_back(s);
  }
  return d;
}

}  // namespace

TEST_CASE("csv load maps sources, outcomes, and both treatment encodings") {
  const std::string p = temp_path("wmdl_basic.csv");
  write_file(p,
             "source,y,a,x1,x2\n"
             "1,1.5,1,0.1,0.2\n"
             "1,-0.5,0,0.3,-0.1\n"
             "2,2.0,-1,-0.2,0.4\n"
             "2,0.25,1,0.6,0.0\n");
  const MultiSourceData d = load_csv(p);
  REQUIRE(d.n_sources() == 2);
  CHECK(d.d_x == 2);
  const SourceData& s1 = d.source(1);
  CHECK(s1.rows() == 2);
  CHECK(s1.y[0] == 1.5);
  CHECK(s1.a[0] == 1);
  CHECK(s1.a[1] == -1);  // 0 is control
  CHECK(s1.x(1, 0) == 0.3);
  const SourceData& s2 = d.source(2);
  CHECK(s2.a[0] == -1);  // -1 passes through
  CHECK(s2.a[1] == 1);
  CHECK(s2.x(0, 1) == 0.4);
  CHECK(d.total_rows() == 4);
  CHECK_FALSE(d.transfer_mode());
}

TEST_CASE("csv errors carry row/column context") {
  const std::string p = temp_path("wmdl_bad.csv");

  write_file(p, "");
  CHECK_THROWS_AS(load_csv(p), config_error);

  write_file(p, "source,y,a,x1\n");
  CHECK_THROWS_WITH_AS(load_csv(p), doctest::Contains("no data rows"), config_error);

  write_file(p, "source,y,a,x1\n1,0.5,2,0.1\n");
  CHECK_THROWS_WITH_AS(load_csv(p), doctest::Contains("treatment"), config_error);

  write_file(p, "source,y,a,x1\n1,0.5,1,oops\n");
  CHECK_THROWS_WITH_AS(load_csv(p), doctest::Contains("x1"), config_error);

  write_file(p, "source,y,a,x1\n1,0.5,1\n");
  CHECK_THROWS_WITH_AS(load_csv(p), doctest::Contains("expected 4 cells"), config_error);

  write_file(p, "y,a,x1\n0.5,1,0.1\n");
  CHECK_THROWS_WITH_AS(load_csv(p), doctest::Contains("source"), config_error);
}

TEST_CASE("a source missing its own covariate on some rows is rejected by name") {
  const std::string p = temp_path("wmdl_partial_z.csv");
  write_file(p,
             "source,y,a,x1,z1\n"
             "1,1.0,1,0.1,\n"
             "1,0.0,0,0.2,\n"
             "2,1.0,1,0.3,0.7\n"
             "2,0.0,0,0.4,\n");
  try {
    load_csv(p);
    FAIL("expected config_error");
  } catch (const config_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("source 2") != std::string::npos);
    CHECK(msg.find("z1") != std::string::npos);
  }
}

TEST_CASE("covariates-only rows are only legal for the declared target") {
  const std::string p = temp_path("wmdl_transfer.csv");
  const std::string body =
      "source,y,a,x1\n"
      "0,,,0.5\n"
      "0,,,-0.5\n"
      "1,1.0,1,0.1\n"
      "1,0.0,0,0.2\n";
  write_file(p, body);

  CsvSchema schema;
  schema.target_source = 0;
  const MultiSourceData d = load_csv(p, schema);
  CHECK(d.transfer_mode());
  CHECK_FALSE(d.source(0).has_outcomes);
  CHECK(d.source(0).rows() == 2);

  // Same file with target 1: source 0 has no outcomes and is not the target.
  try {
    load_csv(p);
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("source 0") != std::string::npos);
  }
}

TEST_CASE("save then load round-trips values, per-source covariates, and gaps") {
  MultiSourceData d = two_source_toy();
  const std::string p = temp_path("wmdl_roundtrip.csv");
  save_csv(d, p);
  const MultiSourceData back = load_csv(p);
  REQUIRE(back.n_sources() == 2);
  for (int i = 0; i < 2; ++i) {
    const auto& a = d.sources[i];
    const auto& b = back.sources[i];
    CHECK(a.id == b.id);
    REQUIRE(a.rows() == b.rows());
    CHECK(a.d_z() == b.d_z());
    for (int r = 0; r < a.rows(); ++r) {
      CHECK(a.y[r] == b.y[r]);  // exact: shortest round-trip formatting
      CHECK(a.a[r] == b.a[r]);
      for (int j = 0; j < d.d_x; ++j) CHECK(a.x(r, j) == b.x(r, j));
      for (int j = 0; j < a.d_z(); ++j) CHECK(a.z(r, j) == b.z(r, j));
    }
  }
}

TEST_CASE("validate rejects single-armed sources and bad shapes") {
  MultiSourceData d = two_source_toy();
  d.sources[0].a = {1, 1, 1, 1};
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("at least one treated and one control"),
                       config_error);

  d = two_source_toy();
  d.sources[1].x.resize(4, 3);
  d.sources[1].x.setZero();
  CHECK_THROWS_AS(d.validate(), config_error);

  d = two_source_toy();
  d.sources[1].id = 1;  // duplicate
  CHECK_THROWS_AS(d.validate(), config_error);

  d = two_source_toy();
  d.target_source = 9;
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("target source 9"), config_error);

  d = two_source_toy();
  d.sources[0].y[2] = std::nan("");
  CHECK_THROWS_AS(d.validate(), config_error);
}

TEST_CASE("restrict_to_source keeps one source and retargets it") {
  const MultiSourceData d = two_source_toy();
  const MultiSourceData r = restrict_to_source(d, 2);
  CHECK(r.n_sources() == 1);
  CHECK(r.target_source == 2);
  CHECK(r.source(2).rows() == 4);
  CHECK(r.source(2).d_z() == 1);
  r.validate();
}

TEST_CASE("fold split is balanced, stratified, and seed-deterministic") {
  MultiSourceData d;
  d.d_x = 1;
  d.target_source = 1;
  SourceData s;
  s.id = 1;
  const int n = 301;
  s.x.resize(n, 1);
  s.z.resize(n, 0);
  for (int r = 0; r < n; ++r) {
    s.x(r, 0) = r;
    s.y.push_back(r % 3);
    s.a.push_back(r % 2 == 0 ? 1 : -1);
  }
  d.sources.push_back(s);

  const FoldAssignment fa = split_folds(d, 3, 7);
  REQUIRE(fa.fold_of.size() == 1);
  std::vector<int> count(3, 0);
  for (int f : fa.fold_of[0]) {
    REQUIRE(f >= 0);
    REQUIRE(f < 3);
    ++count[f];
  }
  std::sort(count.begin(), count.end());
  CHECK(count == std::vector<int>{100, 100, 101});

  const FoldAssignment again = split_folds(d, 3, 7);
  CHECK(fa.fold_of[0] == again.fold_of[0]);
  const FoldAssignment other = split_folds(d, 3, 8);
  CHECK(fa.fold_of[0] != other.fold_of[0]);

  CHECK_THROWS_AS(split_folds(d, 1, 7), config_error);
  CHECK_THROWS_AS(split_folds(d, 302, 7), config_error);
}

TEST_CASE("fold split covers multi-source data exactly") {
  MultiSourceData d = two_source_toy();
  const FoldAssignment fa = split_folds(d, 2, 42);
  for (size_t i = 0; i < d.sources.size(); ++i) {
    std::set<int> seen(fa.fold_of[i].begin(), fa.fold_of[i].end());
    CHECK(seen == std::set<int>{0, 1});
    CHECK(fa.fold_of[i].size() == 4);
  }
}
