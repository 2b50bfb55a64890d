#include <doctest.h>

#include <cmath>

#include "iddm/error.hpp"
#include "iddm/schedule.hpp"

using namespace iddm;

TEST_SUITE("schedule") {
  TEST_CASE("default schedule is linear with the conventional endpoints") {
    const Schedule s = make_schedule(1000);
    CHECK(s.steps == 1000);
    CHECK(s.beta[1] == doctest::Approx(1e-4));
    CHECK(s.beta[1000] == doctest::Approx(0.02));
    CHECK(s.beta[500] == doctest::Approx(1e-4 + (0.02 - 1e-4) * 499.0 / 999.0));
    CHECK(s.alpha_bar[0] == 1.0);
    // abar_T by direct product in long double.
    long double prod = 1.0L;
    for (int i = 0; i < 1000; ++i) prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * i / 999.0L);
    CHECK(std::abs(s.alpha_bar[1000] - double(prod)) <= 1e-15);
    CHECK(s.alpha_bar[1000] < 5e-5);
  }

  TEST_CASE("variance recursion holds to 1e-12") {
    for (int steps : {1, 7, 200, 1000}) {
      const Schedule s = make_schedule(steps);
      for (int t = 1; t <= steps; ++t) {
        const double lhs = s.alpha[t] * (1.0 - s.alpha_bar[t - 1]) + (1.0 - s.alpha[t]);
        CHECK(std::abs(lhs - (1.0 - s.alpha_bar[t])) <= 1e-12);
        CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
      }
      CHECK(check_schedule(s).ok);
    }
  }

  TEST_CASE("scaled range keeps the terminal signal level across T") {
    const auto [lo, hi] = scaled_beta_range(200);
    CHECK(lo == doctest::Approx(5e-4));
    CHECK(hi == doctest::Approx(0.1));
    const Schedule s = make_schedule(200, lo, hi);
    CHECK(s.alpha_bar[200] < 5e-5);
    CHECK(s.alpha_bar[200] > 3e-5);
  }

  TEST_CASE("corrupted schedules are reported") {
    Schedule s = make_schedule(50);
    s.alpha_bar[20] *= 1.01;
    const ScheduleReport r = check_schedule(s);
    CHECK_FALSE(r.ok);
    CHECK(r.max_recursion_error > 1e-3);

    std::vector<double> abar(10);
    for (int t = 0; t < 10; ++t) abar[t] = 1.0 - 0.05 * (t + 1);
    abar[5] = abar[3];
    CHECK_FALSE(check_schedule(schedule_from_alpha_bar(abar)).ok);
  }

  TEST_CASE("schedule_from_alpha_bar inverts the cumulative product") {
    const Schedule ref = make_schedule(30);
    const Schedule s = schedule_from_alpha_bar(std::vector<double>(ref.alpha_bar.begin() + 1, ref.alpha_bar.end()));
    for (int t = 1; t <= 30; ++t) CHECK(s.beta[t] == doctest::Approx(ref.beta[t]).epsilon(1e-9));
  }

  TEST_CASE("invalid betas are rejected") {
    CHECK_THROWS_AS(make_schedule(0), Error);
    CHECK_THROWS_AS(make_schedule(10, 0.2, 0.1), Error);
    CHECK_THROWS_AS(schedule_from_betas({0.1, 1.0}), Error);
    CHECK_THROWS_AS(schedule_from_betas({}), Error);
    const Schedule s = make_schedule(10);
    CHECK_THROWS_AS(s.check_step(11), Error);
    CHECK_THROWS_AS(s.check_step(0), Error);
  }

  TEST_CASE("subsequence is sorted, unique, bounded and ends at T") {
    CHECK(subsequence(200, 10).steps == std::vector<int>{1, 21, 41, 61, 81, 101, 121, 141, 161, 181, 200});
    CHECK(subsequence(1000, 10).steps.front() == 1);
    CHECK(subsequence(10, 10).steps == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    CHECK(subsequence(5, 1).steps == std::vector<int>{1, 5});
    for (int steps : {1, 3, 17, 200, 1000})
      for (int samples : {1, 2, 3, 10}) {
        if (samples > steps) continue;
        const auto sub = subsequence(steps, samples).steps;
        CHECK(sub.back() == steps);
        CHECK(sub.front() >= 1);
        for (std::size_t i = 1; i < sub.size(); ++i) CHECK(sub[i] > sub[i - 1]);
      }
    CHECK_THROWS_AS(subsequence(10, 11), Error);
    CHECK_THROWS_AS(subsequence(10, 0), Error);
  }
}
