#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "failover/checks.hpp"

using namespace failover;

TEST_CASE("property suite passes on the pristine implementation") {
    for (const auto& result : run_all_checks(1234, /*inject_acceptor_bug=*/false)) {
        CAPTURE(result.name);
        CAPTURE(result.detail);
        REQUIRE(result.passed);
    }
}

TEST_CASE("agreement trials catch a deliberately broken acceptor rule") {
    CheckResult result = check_agreement(1234, 500, /*inject_acceptor_bug=*/true);
    CHECK(!result.passed);
    CHECK(!result.detail.empty());  // counterexample trace
}

TEST_CASE("individual checks are deterministic per seed") {
    auto a = check_online_stats_oracle(7, 50);
    auto b = check_online_stats_oracle(7, 50);
    CHECK(a.passed);
    CHECK(a.passed == b.passed);
    CHECK(a.detail == b.detail);
}
