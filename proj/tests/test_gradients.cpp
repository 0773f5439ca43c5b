#include <doctest.h>

#include "gradient_check.hpp"

using namespace tergan;

TEST_CASE("analytic gradients of every objective term match central differences") {
  for (const auto& c : test::check_objective_gradients()) {
    CAPTURE(c.term);
    CAPTURE(c.worst_at);
    CHECK(c.probes > 0);
    CHECK(c.worst_relative_error < 1e-3);
  }
}
