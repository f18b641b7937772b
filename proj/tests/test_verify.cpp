#include <doctest.h>

#include "poskern/verify.hpp"

using namespace poskern;

TEST_CASE("check_equivariance passes on random instances") {
    const CheckResult r = check_equivariance(123, 10);
    CAPTURE(r.detail);
    CHECK(r.pass);
    CHECK(r.trials == 10);
    CHECK(r.worst < 1e-10);
}

TEST_CASE("check_kernel_breaks_equivariance passes both clauses") {
    const CheckResult r = check_kernel_breaks_equivariance(123, 10);
    CAPTURE(r.detail);
    CHECK(r.pass);
    CHECK(r.trials >= 10);
}

TEST_CASE("check_causality passes for every scheme and kernel mode") {
    const CheckResult r = check_causality(123, 3);
    CAPTURE(r.detail);
    CHECK(r.pass);
    CHECK(r.worst == 0.0);  // exact equality, not a tolerance
}

TEST_CASE("check_param_count census") {
    const CheckResult r = check_param_count();
    CAPTURE(r.detail);
    CHECK(r.pass);
}

TEST_CASE("check_gradients passes") {
    const CheckResult r = check_gradients(123);
    CAPTURE(r.detail);
    CHECK(r.pass);
    CHECK(r.worst < 1e-4);
}

TEST_CASE("run_all_checks aggregates and serializes") {
    const VerifyReport rep = run_all_checks(7, 6);
    CHECK(rep.checks.size() == 5);
    CHECK(rep.all_pass());
    const std::string text = rep.text();
    CHECK(text.find("[PASS]") != std::string::npos);
    CHECK(text.find("[FAIL]") == std::string::npos);
    const std::string js = rep.json();
    for (const auto& c : rep.checks)
        CHECK(js.find("\"" + c.name + "\"") != std::string::npos);
}
