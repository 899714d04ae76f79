#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "heparl/outcomes.hpp"
#include "heparl/synth.hpp"

using namespace heparl;

namespace {

VitalSigns healthy() {
  VitalSigns v;
  v.x = {500, 500, 200, 10, 80, 0, 0, 0, 0, 15, 60, 2000};
  return v;
}

VitalSigns with_platelets(double plt) {
  VitalSigns v = healthy();
  v.x[2] = plt;
  return v;
}

double dose_for(int action) {
  static const double doses[] = {0.0, 1.0, 1.5, 2.0, 4.0};
  return doses[action];
}

// All decision steps sit in scalar state 1 (platelets 120), where the fixture
// table's best action is 2.
Episode make_ep(const std::string& id, const std::vector<int>& phys, bool died = false,
                double los = 10.0) {
  Episode ep;
  ep.patient_id = id;
  ep.episode_id = id + "-r0";
  for (size_t t = 0; t < phys.size(); ++t) {
    ep.steps.push_back(
        make_step(static_cast<int>(t), with_platelets(120.0), dose_for(phys[t])));
  }
  ep.steps.push_back(make_step(static_cast<int>(phys.size()), healthy(), 0.0, true, died));
  ep.outcome = died ? Outcome::Died : Outcome::Survived;
  ep.los_days = los;
  return ep;
}

Checkpoint fixture_checkpoint() {
  QTable t;
  t.q[1] = {0.0, 1.0, 2.0, 1.0, 0.5};  // best 2, worst 0
  Checkpoint ck;
  ck.epoch = 4;
  ck.algo = Algo::QL;
  ck.kind = ScoreKind::Sofa;
  ck.q.table = t;
  return ck;
}

std::vector<int> phys_with_matches(int n, int matches) {
  std::vector<int> phys(static_cast<size_t>(n), 0);
  for (int i = 0; i < matches; ++i) phys[static_cast<size_t>(i)] = 2;
  return phys;
}

}  // namespace

TEST_CASE("welch t-test") {
  SECTION("textbook example") {
    const auto r = welch_t({1, 2, 3, 4, 5}, {2, 3, 4, 5, 6});
    CHECK_FALSE(r.degenerate);
    CHECK_THAT(r.t, Catch::Matchers::WithinAbs(-1.0, 1e-12));
    CHECK_THAT(r.df, Catch::Matchers::WithinAbs(8.0, 1e-12));
    CHECK_THAT(r.p, Catch::Matchers::WithinAbs(0.34659350708733416, 1e-10));
  }
  SECTION("identical samples give t 0 and p 1") {
    const std::vector<double> x = {3.0, 1.0, 4.0, 1.5};
    const auto r = welch_t(x, x);
    CHECK(r.t == 0.0);
    CHECK(r.p == 1.0);
    CHECK_FALSE(r.degenerate);
  }
  SECTION("swapping the samples negates t and keeps p") {
    const std::vector<double> a = {1, 2, 3, 4, 5}, b = {2, 3, 4, 7};
    const auto ab = welch_t(a, b);
    const auto ba = welch_t(b, a);
    CHECK(ab.t == -ba.t);
    CHECK(ab.df == ba.df);
    CHECK(ab.p == ba.p);
  }
  SECTION("indicator samples match the frozen reference") {
    const auto r = welch_t({1, 0, 0}, {0, 0});
    CHECK_THAT(r.t, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(r.df, Catch::Matchers::WithinAbs(2.0, 1e-12));
    CHECK_THAT(r.p, Catch::Matchers::WithinAbs(0.42264973081037427, 1e-10));
  }
  SECTION("stay samples match the frozen reference") {
    const auto r = welch_t({10, 20, 30}, {5, 15});
    CHECK_THAT(r.t, Catch::Matchers::WithinAbs(1.3093073414159544, 1e-12));
    CHECK_THAT(r.df, Catch::Matchers::WithinAbs(2.8823529411764706, 1e-12));
    CHECK_THAT(r.p, Catch::Matchers::WithinAbs(0.28502284001427436, 1e-10));
  }
  SECTION("degenerate inputs are flagged with undefined p") {
    const auto zero_var = welch_t({0, 0, 0}, {0, 0});
    CHECK(zero_var.degenerate);
    CHECK(std::isnan(zero_var.p));
    const auto tiny = welch_t({1.0}, {1.0, 2.0});
    CHECK(tiny.degenerate);
    CHECK(std::isnan(tiny.p));
    CHECK_THROWS_AS(welch_t({1, std::nan("")}, {1, 2}), ValidationError);
  }
}

TEST_CASE("two-proportion z-test") {
  SECTION("frozen references") {
    const auto r = two_proportion_z(1, 3, 0, 2);
    CHECK_THAT(r.z, Catch::Matchers::WithinAbs(0.91287092917527668, 1e-12));
    CHECK_THAT(r.p, Catch::Matchers::WithinAbs(0.3613104285261789, 1e-10));
    const auto r2 = two_proportion_z(8, 100, 2, 100);
    CHECK_THAT(r2.z, Catch::Matchers::WithinAbs(1.9466570535691503, 1e-12));
    CHECK_THAT(r2.p, Catch::Matchers::WithinAbs(0.051575863620877078, 1e-10));
    CHECK(r2.p > 0.05);  // just misses significance
  }
  SECTION("antisymmetry") {
    const auto ab = two_proportion_z(5, 40, 2, 30);
    const auto ba = two_proportion_z(2, 30, 5, 40);
    CHECK(ab.z == -ba.z);
    CHECK(ab.p == ba.p);
  }
  SECTION("degenerate pools") {
    CHECK(two_proportion_z(0, 10, 0, 10).degenerate);
    CHECK(two_proportion_z(10, 10, 10, 10).degenerate);
    CHECK(two_proportion_z(0, 0, 1, 10).degenerate);
    CHECK(two_proportion_z(5, 3, 0, 10).degenerate);
  }
}

TEST_CASE("improvement arithmetic") {
  CHECK_THAT(100.0 * improvement(1.83, 0.74),
             Catch::Matchers::WithinAbs(59.562841530054648, 1e-9));
  CHECK_THAT(100.0 * improvement(11.11, 9.42),
             Catch::Matchers::WithinAbs(15.211521152115207, 1e-9));
  CHECK(improvement(0.5, 0.5) == 0.0);
  CHECK(improvement(2.0, 3.0) == -0.5);
}

TEST_CASE("follower matching") {
  const Checkpoint ck = fixture_checkpoint();

  SECTION("strictly more than tau of the decision steps must match") {
    Cohort cohort;
    cohort.episodes.push_back(make_ep("eight", phys_with_matches(10, 8)));
    cohort.episodes.push_back(make_ep("seven", phys_with_matches(10, 7)));
    const auto split = match_followers(cohort, ck, 0.7);
    REQUIRE(split.followers.size() == 1);
    REQUIRE(split.non_followers.size() == 1);
    CHECK(split.followers[0].patient_id == "eight");   // 0.8 > 0.7
    CHECK(split.non_followers[0].patient_id == "seven");  // 0.7 is not > 0.7
    CHECK(split.policy_id == "ql-sofa-e4");
    CHECK(split.tau == 0.7);
  }
  SECTION("a policy equal to the physician makes everyone a follower below tau 1") {
    Cohort cohort;
    cohort.episodes.push_back(make_ep("a", {2, 2, 2}));
    cohort.episodes.push_back(make_ep("b", {2, 2}));
    for (double tau : {0.0, 0.5, 0.99}) {
      CHECK(match_followers(cohort, ck, tau).followers.size() == 2);
    }
    CHECK(match_followers(cohort, ck, 1.0).followers.empty());
  }
  SECTION("completeness and monotonicity over tau on a synthetic cohort") {
    SynthParams params;
    params.patients = 30;
    params.mean_len = 8.0;
    const Cohort cohort = synth_cohort(params, 9).cohort;
    Checkpoint deep;
    deep.epoch = 1;
    deep.algo = Algo::DQN;
    deep.kind = ScoreKind::Cxsofa;
    deep.q.mlp = init_mlp(6, 8, 5, 2);
    size_t prev = cohort.episodes.size() + 1;
    for (double tau : {0.0, 0.3, 0.5, 0.7, 0.9}) {
      const auto split = match_followers(cohort, deep, tau);
      CHECK(split.followers.size() + split.non_followers.size() == cohort.episodes.size());
      CHECK(split.followers.size() <= prev);
      prev = split.followers.size();
    }
  }
  SECTION("input validation") {
    Cohort cohort;
    cohort.episodes.push_back(make_ep("a", {2}));
    CHECK_THROWS_AS(match_followers(cohort, ck, 1.5), ValidationError);
    Episode stub;
    stub.episode_id = "s-r0";
    stub.steps.push_back(make_step(0, healthy(), 0.0, true));
    cohort.episodes[0] = stub;
    CHECK_THROWS_AS(match_followers(cohort, ck, 0.7), ValidationError);
  }
}

TEST_CASE("group statistics") {
  FollowerSplit split;
  split.tau = 0.7;
  split.followers = {make_ep("f1", {2, 2}, true, 10.0), make_ep("f2", {2, 2}, false, 20.0),
                     make_ep("f3", {2, 2}, false, 30.0)};
  split.non_followers = {make_ep("n1", {0, 0}, false, 5.0), make_ep("n2", {0, 0}, false, 15.0)};

  SECTION("rates, stays, and improvements against the pooled baseline") {
    const auto [f, nf] = group_stats(split);
    CHECK(f.n_episodes == 3);
    CHECK(f.n_deaths == 1);
    CHECK_THAT(f.mortality, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
    CHECK(f.stay_days == 20.0);
    CHECK(nf.mortality == 0.0);
    CHECK(nf.stay_days == 10.0);
    // baseline: mortality 0.2, stay 16
    CHECK_THAT(f.improvement_mortality,
               Catch::Matchers::WithinAbs((0.2 - 1.0 / 3.0) / 0.2, 1e-12));
    CHECK(nf.improvement_mortality == 1.0);
    CHECK(f.improvement_stay == (16.0 - 20.0) / 16.0);
    CHECK(nf.improvement_stay == (16.0 - 10.0) / 16.0);
  }
  SECTION("significance tests mirror the frozen fixtures in both rows") {
    const auto [f, nf] = group_stats(split);
    CHECK_THAT(f.t_mortality.t, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(f.t_mortality.p, Catch::Matchers::WithinAbs(0.42264973081037427, 1e-10));
    CHECK_THAT(f.t_stay.p, Catch::Matchers::WithinAbs(0.28502284001427436, 1e-10));
    CHECK_THAT(f.z_mortality.z, Catch::Matchers::WithinAbs(0.91287092917527668, 1e-12));
    CHECK(nf.t_mortality.p == f.t_mortality.p);
    CHECK(nf.t_stay.p == f.t_stay.p);
    CHECK(nf.z_mortality.p == f.z_mortality.p);
  }
  SECTION("an empty group is flagged and carries no statistics") {
    FollowerSplit lone;
    lone.followers = split.followers;
    const auto [f, nf] = group_stats(lone);
    CHECK_FALSE(f.empty);
    CHECK(nf.empty);
    CHECK(nf.n_episodes == 0);
    REQUIRE_FALSE(nf.flags.empty());
    CHECK(nf.flags[0].find("empty group") != std::string::npos);
    CHECK(f.t_mortality.degenerate);
    CHECK(std::isnan(f.t_mortality.p));
  }
  SECTION("zero baseline mortality leaves improvement at 0 with a flag") {
    FollowerSplit alive;
    alive.followers = {make_ep("f1", {2, 2}, false, 10.0), make_ep("f2", {2, 2}, false, 12.0)};
    alive.non_followers = {make_ep("n1", {0, 0}, false, 8.0),
                           make_ep("n2", {0, 0}, false, 9.0)};
    const auto [f, nf] = group_stats(alive);
    CHECK(f.improvement_mortality == 0.0);
    bool flagged = false;
    for (const auto& fl : f.flags) {
      if (fl.find("baseline mortality is zero") != std::string::npos) flagged = true;
    }
    CHECK(flagged);
    CHECK(f.t_mortality.degenerate);  // no variance in the indicators
    CHECK_FALSE(f.t_stay.degenerate);
  }
}

TEST_CASE("outcome report") {
  const Checkpoint ck = fixture_checkpoint();
  Cohort cohort;
  cohort.episodes = {make_ep("a", {2, 2, 2}, false, 12.0), make_ep("b", {2, 2}, true, 6.0),
                     make_ep("c", {2, 2, 2, 2}, false, 9.0), make_ep("d", {2, 2}, false, 15.0)};

  SECTION("a model identical to the physician reproduces the baseline row") {
    const auto report = outcome_report(cohort, {{"aligned-ql", ck}}, 0.7);
    REQUIRE(report.models.size() == 1);
    const auto& f = report.models[0].followers;
    CHECK(f.n_episodes == cohort.episodes.size());
    CHECK(f.mortality == report.baseline.mortality);
    CHECK(f.stay_days == report.baseline.stay_days);
    CHECK(f.improvement_mortality == 0.0);
    CHECK(f.improvement_stay == 0.0);
    CHECK(report.models[0].non_followers.empty);
    CHECK(report.baseline.label == "physician");
    CHECK(report.baseline.n_episodes == 4);
    CHECK_THAT(report.baseline.mortality, Catch::Matchers::WithinAbs(0.25, 1e-15));
  }
  SECTION("csv layout") {
    const auto report = outcome_report(cohort, {{"aligned-ql", ck}}, 0.7);
    const std::string csv = outcome_csv(report);
    REQUIRE(csv.rfind("model,n_followers,MoR,AIHS,improvement_MoR,improvement_AIHS,p_MoR,"
                      "p_AIHS,tau\n", 0) == 0);
    size_t lines = 0;
    for (char c : csv) {
      if (c == '\n') ++lines;
    }
    CHECK(lines == 3);  // header + physician + one model
    CHECK(csv.find("\nphysician,4,") != std::string::npos);
    CHECK(csv.find("\naligned-ql,4,") != std::string::npos);
    // degenerate p-values print as empty cells
    CHECK(csv.find(",,") != std::string::npos);
  }
  SECTION("json mirror carries significance marks and the tau") {
    const auto report = outcome_report(cohort, {{"aligned-ql", ck}}, 0.6);
    const auto j = to_json(report);
    CHECK(j.at("tau").get<double>() == 0.6);
    CHECK(j.at("baseline").at("label").get<std::string>() == "physician");
    REQUIRE(j.at("models").size() == 1);
    const auto& fj = j.at("models")[0].at("followers");
    CHECK(fj.at("significant_mortality").is_boolean());
    CHECK(fj.at("n_episodes").get<size_t>() == 4);
  }
  SECTION("parallel evaluation over models is deterministic") {
    std::vector<std::pair<std::string, Checkpoint>> models;
    for (int i = 0; i < 5; ++i) models.push_back({"m" + std::to_string(i), ck});
    const auto seq = outcome_report(cohort, models, 0.7, 1);
    const auto par = outcome_report(cohort, models, 0.7, 4);
    CHECK(to_json(seq).dump() == to_json(par).dump());
  }
}
