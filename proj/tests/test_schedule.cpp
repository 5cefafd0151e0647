#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "spectraldiff/schedule.hpp"

using namespace spectraldiff;

TEST_CASE("cosine schedule starts at alpha_bar 1 and decreases strictly") {
  NoiseSchedule s = cosine_schedule(1080);
  CHECK(s.alpha_bar_at(0) == 1.0);
  for (int d = 1; d <= 1080; ++d) {
    CHECK(s.alpha_bar_at(d) < s.alpha_bar_at(d - 1));
    CHECK(s.alpha_bar_at(d) > 0.0);
  }
}

TEST_CASE("cosine betas stay in (0, 0.999]") {
  NoiseSchedule s = cosine_schedule(1080);
  for (int d = 1; d <= 1080; ++d) {
    CHECK(s.beta_at(d) > 0.0);
    CHECK(s.beta_at(d) <= 0.999);
  }
  // The clamp actually engages near the end of the schedule.
  CHECK(s.beta_at(1080) == Catch::Approx(0.999));
}

TEST_CASE("alpha_bar is the running product of (1 - beta)") {
  NoiseSchedule s = cosine_schedule(64);
  double prod = 1.0;
  for (int d = 1; d <= 64; ++d) {
    prod *= 1.0 - s.beta_at(d);
    CHECK(s.alpha_bar_at(d) == Catch::Approx(prod).epsilon(1e-12));
  }
}

TEST_CASE("early alpha_bar tracks the cosine target") {
  // Before any clamping: alpha_bar_d ~ f(d)/f(0), f(d) = cos^2(((d/D+s)/(1+s)) pi/2).
  const int D = 100;
  NoiseSchedule sched = cosine_schedule(D);
  auto f = [&](double d) {
    const double s = 0.008;
    const double t = ((d / D + s) / (1.0 + s)) * (3.14159265358979323846 / 2.0);
    const double c = std::cos(t);
    return c * c;
  };
  for (int d : {1, 10, 50, 90}) {
    CHECK(sched.alpha_bar_at(d) == Catch::Approx(f(d) / f(0)).epsilon(1e-9));
  }
}

TEST_CASE("schedule rejects bad arguments") {
  CHECK_THROWS(cosine_schedule(0));
  CHECK_THROWS(cosine_schedule(-3));
  NoiseSchedule s = cosine_schedule(8);
  CHECK_THROWS(s.beta_at(0));
  CHECK_THROWS(s.beta_at(9));
  CHECK_THROWS(s.alpha_bar_at(-1));
  CHECK_THROWS(s.alpha_bar_at(9));
}

TEST_CASE("single-step schedule is usable") {
  NoiseSchedule s = cosine_schedule(1);
  CHECK(s.beta_at(1) > 0.0);
  CHECK(s.beta_at(1) <= 0.999);
  CHECK(s.alpha_bar_at(1) > 0.0);
  CHECK(s.alpha_bar_at(1) < 1.0);
}
