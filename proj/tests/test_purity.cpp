#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <type_traits>

#include <gtest/gtest.h>

#include "srmq/qlearn.hpp"

// The learner sees the plant only through data tuples: no inductance, no
// resistance, no model coefficients.
static_assert(std::is_same_v<decltype(srmq::DataTuple::m_k), srmq::QVector>);
static_assert(std::is_same_v<decltype(srmq::DataTuple::m_next), srmq::QVector>);
static_assert(std::is_same_v<decltype(srmq::DataTuple::stage_cost), double>);
static_assert(sizeof(srmq::DataTuple) == 2 * sizeof(srmq::QVector) + sizeof(double));

namespace {

std::string source(const std::string& relative) {
  std::ifstream in(std::filesystem::path(SRMQ_SOURCE_DIR) / relative);
  EXPECT_TRUE(in) << relative;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ModelFreeLearner, DoesNotIncludeModelHeaders) {
  const std::regex forbidden(R"(#include\s+"srmq/(plant|lqt_oracle|scheduler|sim)\.hpp")");
  for (const char* file : {"include/srmq/qlearn.hpp", "src/qlearn.cpp"}) {
    EXPECT_FALSE(std::regex_search(source(file), forbidden)) << file;
  }
}

TEST(ModelFreeLearner, DoesNotNameModelQuantities) {
  const std::regex forbidden(
      R"(\b(InductanceSurface|MotorParams|discretize|are_fixed_point|AugmentedModel|optimal_gain|step_phase|QCoreTable|resistance|inductance)\b)");
  for (const char* file : {"include/srmq/qlearn.hpp", "src/qlearn.cpp"}) {
    std::smatch m;
    const std::string text = source(file);
    EXPECT_FALSE(std::regex_search(text, m, forbidden)) << file << ": " << m.str();
  }
}
