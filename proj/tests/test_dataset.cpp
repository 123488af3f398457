#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "intervene/dataset.hpp"

using namespace intervene;

namespace {

Dataset make_random(int n, int d, unsigned seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  Dataset data;
  data.covariates.resize(n, d);
  data.outcomes.resize(n);
  for (int c = 0; c < d; ++c) data.column_names.push_back("x" + std::to_string(c + 1));
  data.outcome_name = "y";
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) data.covariates(r, c) = u(eng);
    data.outcomes[r] = u(eng);
  }
  return data;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("standardize centers and scales with the n-1 denominator") {
  Dataset data;
  data.covariates.resize(2, 1);
  data.covariates << 1.0, 3.0;
  data.outcomes.resize(2);
  data.outcomes << 10.0, 30.0;
  data.column_names = {"x1"};
  data.outcome_name = "y";

  const auto [std_data, scaling] = standardize(data);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(std_data.covariates(0, 0) == doctest::Approx(-inv_sqrt2).epsilon(1e-14));
  CHECK(std_data.covariates(1, 0) == doctest::Approx(inv_sqrt2).epsilon(1e-14));
  CHECK(std_data.outcomes[0] == doctest::Approx(-inv_sqrt2).epsilon(1e-14));
  CHECK(std_data.outcomes[1] == doctest::Approx(inv_sqrt2).epsilon(1e-14));
  CHECK(scaling.means[0] == doctest::Approx(2.0));
  CHECK(scaling.means[1] == doctest::Approx(20.0));
  CHECK(scaling.scales[0] == doctest::Approx(std::sqrt(2.0)));
  CHECK(scaling.scales[1] == doctest::Approx(std::sqrt(200.0)));
}

TEST_CASE("standardize then unstandardize is the identity within 1e-12") {
  const Dataset data = make_random(40, 4, 11);
  const auto [std_data, scaling] = standardize(data);
  const Dataset back = unstandardize(std_data, scaling);
  CHECK((back.covariates - data.covariates).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.outcomes - data.outcomes).cwiseAbs().maxCoeff() < 1e-12);

  // Standardized columns have zero mean and unit variance.
  for (int c = 0; c < 4; ++c) {
    const auto col = std_data.covariates.col(c);
    CHECK(std::abs(col.mean()) < 1e-12);
    const double var = (col.array() - col.mean()).square().sum() / (40 - 1);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("constant columns are rejected with the column named") {
  Dataset data = make_random(10, 2, 3);
  data.covariates.col(1).setConstant(7.0);
  try {
    standardize(data);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("x2") != std::string::npos);
  }
}

TEST_CASE("csv save and load round-trip preserves values and names") {
  const Dataset data = make_random(25, 3, 5);
  const std::string path = temp_path("intervene_test_roundtrip.csv");
  save_csv(data, path);
  const Dataset loaded = load_dataset(path, "y");
  CHECK(loaded.rows() == 25);
  CHECK(loaded.dim() == 3);
  CHECK(loaded.column_names == data.column_names);
  CHECK(loaded.outcome_name == "y");
  CHECK((loaded.covariates - data.covariates).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((loaded.outcomes - data.outcomes).cwiseAbs().maxCoeff() < 1e-12);
  std::remove(path.c_str());
}

TEST_CASE("outcome column may sit anywhere; remaining columns keep file order") {
  const std::string path = temp_path("intervene_test_order.csv");
  {
    std::ofstream os(path);
    os << "a,y,b\n1,10,2\n3,30,4\n";
  }
  const Dataset loaded = load_dataset(path, "y");
  CHECK(loaded.column_names == std::vector<std::string>{"a", "b"});
  CHECK(loaded.covariates(0, 0) == doctest::Approx(1.0));
  CHECK(loaded.covariates(0, 1) == doctest::Approx(2.0));
  CHECK(loaded.outcomes[0] == doctest::Approx(10.0));
  CHECK(loaded.outcomes[1] == doctest::Approx(30.0));
  std::remove(path.c_str());
}

TEST_CASE("loader errors carry the offending location") {
  const std::string path = temp_path("intervene_test_bad.csv");

  SUBCASE("missing outcome column") {
    {
      std::ofstream os(path);
      os << "a,b\n1,2\n";
    }
    CHECK_THROWS_AS(load_dataset(path, "y"), std::invalid_argument);
  }
  SUBCASE("non-numeric cell") {
    {
      std::ofstream os(path);
      os << "a,y\n1,2\nfoo,4\n";
    }
    CHECK_THROWS_AS(load_dataset(path, "y"), std::invalid_argument);
  }
  SUBCASE("ragged row") {
    {
      std::ofstream os(path);
      os << "a,y\n1,2\n3\n";
    }
    CHECK_THROWS_AS(load_dataset(path, "y"), std::invalid_argument);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_dataset(temp_path("definitely_absent.csv"), "y"),
                    std::invalid_argument);
  }
  std::remove(path.c_str());
}

TEST_CASE("validate rejects shape mismatches and non-finite values") {
  Dataset data = make_random(5, 2, 9);
  CHECK_NOTHROW(data.validate());

  Dataset bad_rows = data;
  bad_rows.outcomes.resize(4);
  CHECK_THROWS_AS(bad_rows.validate(), std::invalid_argument);

  Dataset bad_value = data;
  bad_value.covariates(2, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bad_value.validate(), std::invalid_argument);
}

TEST_CASE("checksum pins the exact table") {
  const Dataset a = make_random(12, 3, 21);
  Dataset b = a;
  CHECK(dataset_checksum(a) == dataset_checksum(b));
  b.covariates(5, 1) += 1e-12;
  CHECK(dataset_checksum(a) != dataset_checksum(b));
}

TEST_CASE("scaling info json round-trip") {
  const Dataset data = make_random(15, 2, 33);
  const auto [std_data, scaling] = standardize(data);
  const ScalingInfo back = ScalingInfo::from_json(scaling.to_json());
  CHECK((back.means - scaling.means).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((back.scales - scaling.scales).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(back.columns == scaling.columns);

  nlohmann::json j = scaling.to_json();
  j["scales"][0] = 0.0;
  CHECK_THROWS_AS(ScalingInfo::from_json(j), std::invalid_argument);
}
