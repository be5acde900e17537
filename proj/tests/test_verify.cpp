#include <gtest/gtest.h>

#include <functional>

#include "spg/verify/suites.hpp"

namespace spg::verify {
namespace {

struct Group {
  const char* name;
  std::function<Checks()> run;
};

void PrintTo(const Group& g, std::ostream* os) { *os << g.name; }

class SuiteGroup : public ::testing::TestWithParam<Group> {};

TEST_P(SuiteGroup, EveryCheckPasses) {
  const Checks checks = GetParam().run();
  ASSERT_FALSE(checks.empty());
  for (const auto& c : checks) EXPECT_TRUE(c.pass) << c.name << ": " << c.detail;
}

INSTANTIATE_TEST_SUITE_P(All, SuiteGroup,
                         ::testing::Values(Group{"grad", grad_checks}, Group{"distance", distance_map_checks},
                                           Group{"sean", sean_checks}, Group{"warp", warp_checks},
                                           Group{"region", region_checks}, Group{"metric", metric_checks},
                                           Group{"loss", loss_checks}, Group{"op", op_checks},
                                           Group{"synth", synth_checks}),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(RunSuite, UnknownNameThrows) { EXPECT_THROW(run_suite("everything"), std::invalid_argument); }

TEST(RunSuite, AllIsTheUnionOfTheOthers) {
  const auto n = run_suite("grad").size() + run_suite("invariants").size() + run_suite("oracle").size();
  EXPECT_EQ(run_suite("all").size(), n);
}

}  // namespace
}  // namespace spg::verify
