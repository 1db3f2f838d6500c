#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "kdaudit/bound.hpp"
#include "kdaudit/error.hpp"
#include "kdaudit/metrics.hpp"
#include "kdaudit/rng.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

using namespace kdaudit;
using testutil::dataset;
using testutil::rec;

namespace {

// random pair whose two sides differ by a small perturbation and keep a
// clear argmax margin, so every record agrees and has a nonzero diff
PairedDataset perturbed_pairs(SplitMix64& rng, std::size_t n, std::size_t C) {
    std::vector<PairedLogitRecord> recs;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> t(C), s(C);
        std::size_t top = rng.next_below(C);
        for (std::size_t c = 0; c < C; ++c) t[c] = rng.uniform(-1.0, 1.0);
        t[top] += 4.0; // decisive winner
        for (std::size_t c = 0; c < C; ++c) s[c] = t[c] + rng.uniform(-0.2, 0.2);
        recs.push_back(testutil::rec(std::to_string(i), std::move(t), std::move(s)));
    }
    return dataset(std::move(recs));
}

} // namespace

TEST_CASE("sum_squared_logit_gap fixed examples") {
    CHECK(sum_squared_logit_gap(dataset({rec("a", {1, 0}, {0, 0})})) == 1.0);

    auto same = dataset({rec("a", {1, 2}, {1, 2}), rec("b", {-3, 4}, {-3, 4})});
    CHECK(sum_squared_logit_gap(same) == 0.0);

    auto two = dataset({
        rec("a", {1.0, 1.0}, {1.3, 0.6}),
        rec("b", {0.0, 0.0}, {0.3, -0.4}),
    });
    CHECK(sum_squared_logit_gap(two) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("sum_squared_logit_gap is order-independent") {
    SplitMix64 rng(11);
    auto ds = testutil::random_dataset(rng, 300, 4, 100.0, false);
    double base = sum_squared_logit_gap(ds);
    for (int round = 0; round < 10; ++round) {
        rng.shuffle(ds.records);
        double got = sum_squared_logit_gap(ds);
        CHECK(std::abs(got - base) <= 1e-9 * std::max(1.0, std::abs(base)));
    }
}

TEST_CASE("kappa_from_loss_bound values and monotonicity") {
    CHECK(kappa_from_loss_bound(1.0, 4.0, 0.0, 400) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(kappa_from_loss_bound(1.0, 0.0, 0.0, 10) == 0.0);
    CHECK(kappa_from_loss_bound(2.0, 3.0, 0.25, 50) ==
          doctest::Approx(2.0 * kappa_from_loss_bound(1.0, 3.0, 0.25, 50)).epsilon(1e-15));

    SplitMix64 rng(23);
    for (int round = 0; round < 200; ++round) {
        double gamma = rng.uniform(0.1, 3.0);
        double beta = rng.uniform(0.0, 10.0);
        double alpha = rng.uniform(0.0, 0.95);
        std::size_t n = 1 + rng.next_below(1000);
        double k = kappa_from_loss_bound(gamma, beta, alpha, n);
        CHECK(k >= 0.0);
        // increasing in beta and gamma, decreasing in n
        CHECK(kappa_from_loss_bound(gamma, beta + 1.0, alpha, n) >= k);
        CHECK(kappa_from_loss_bound(gamma + 0.5, beta, alpha, n) >= k);
        CHECK(kappa_from_loss_bound(gamma, beta, alpha, n + 50) <= k);
    }

    CHECK_THROWS_AS(kappa_from_loss_bound(1.0, 1.0, 1.0, 10), Error);
    CHECK_THROWS_AS(kappa_from_loss_bound(1.0, -0.1, 0.0, 10), Error);
    CHECK_THROWS_AS(kappa_from_loss_bound(0.0, 1.0, 0.0, 10), Error);
    CHECK_THROWS_AS(kappa_from_loss_bound(1.0, 1.0, 0.0, 0), Error);
}

TEST_CASE("verify_chain on identical models") {
    auto ds = dataset({
        rec("a", {2, 0}, {2, 0}),
        rec("b", {-1, 3}, {-1, 3}),
        rec("c", {0, 0}, {0, 0}),
    });
    for (double gamma : {0.5, 1.0, 2.0}) {
        auto rep = verify_chain(ds, gamma, 0.0, 0.0, 1e-9);
        CHECK(rep.lhs_sigma_sq_n == 0.0);
        CHECK(rep.sigma == 0.0);
        CHECK(rep.step1_holds);
        CHECK(rep.step2_holds);
        CHECK(rep.step3_holds);
        CHECK(rep.all_hold);
    }
}

TEST_CASE("verify_chain handmade two-record dataset") {
    auto ds = dataset({
        rec("a", {2, 0}, {1, 0}),
        rec("b", {1, 1}, {1, 1}),
    });
    double loss = sum_squared_logit_gap(ds); // alpha = 0, so loss is the gap sum
    REQUIRE(loss == 1.0);

    auto rep = verify_chain(ds, 1.0, 0.0, loss, 1e-9);

    // only record "a" has a nonzero diff: conf drops from e^2/(e^2+1) to e/(e+1)
    double d = 1.0 / (1.0 + std::exp(-1.0)) - 1.0 / (1.0 + std::exp(-2.0));
    CHECK(rep.lhs_sigma_sq_n == doctest::Approx(d * d).epsilon(1e-12));
    CHECK(rep.mid_gamma_sq_logit_mse == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.beta == 1.0);
    CHECK(rep.rhs_loss_bound == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.sigma == doctest::Approx(std::sqrt(d * d / 2.0)).epsilon(1e-12));
    CHECK(rep.kappa_theoretical == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(rep.step1_holds);
    CHECK(rep.step2_holds);
    CHECK(rep.step3_holds);
    CHECK(rep.all_hold);
    CHECK(rep.slack1 >= 0.0);
}

TEST_CASE("chain step one is not vacuous: lhs/mid ratio lies in (0,1]") {
    SplitMix64 rng(37);
    for (int round = 0; round < 50; ++round) {
        auto ds = perturbed_pairs(rng, 5 + rng.next_below(40), 2 + rng.next_below(3));
        double mid = sum_squared_logit_gap(ds);
        if (mid == 0.0) continue;
        auto rep = verify_chain(ds, 1.0, 0.0, mid, 1e-9);
        double ratio = rep.lhs_sigma_sq_n / rep.mid_gamma_sq_logit_mse;
        CHECK(ratio > 0.0);
        CHECK(ratio <= 1.0);
    }
}

TEST_CASE("chain step one never fails, any gamma") {
    SplitMix64 rng(41);
    for (int round = 0; round < 200; ++round) {
        auto ds = testutil::random_dataset(rng, 50, 2 + rng.next_below(4), 5.0, false);
        for (double gamma : {0.5, 1.0, 2.0}) {
            double gap = sum_squared_logit_gap(ds);
            auto rep = verify_chain(ds, gamma, 0.0, gap, 1e-9);
            CHECK(rep.step1_holds);
        }
    }
}

TEST_CASE("spread is bounded by the loss root when gamma 1 alpha 0") {
    SplitMix64 rng(43);
    for (int round = 0; round < 200; ++round) {
        auto ds = testutil::random_dataset(rng, 80, 3, 4.0, false);
        double gap = sum_squared_logit_gap(ds);
        auto sig = confidence_spread(ds, 1.0, BotPolicy::zero);
        double n = static_cast<double>(ds.size());
        CHECK(sig.sigma <= std::sqrt(gap / n) + 1e-9);
    }
}

TEST_CASE("verify_chain flags an understated loss") {
    SplitMix64 rng(47);
    auto ds = perturbed_pairs(rng, 30, 3);
    double gap = sum_squared_logit_gap(ds);
    REQUIRE(gap > 0.0);

    auto rep = verify_chain(ds, 1.0, 0.0, gap * 0.5, 1e-9);
    CHECK(rep.step1_holds);
    CHECK_FALSE(rep.step2_holds);
    CHECK_FALSE(rep.all_hold);
}

TEST_CASE("verify_chain argument validation") {
    auto ds = dataset({rec("a", {1, 0}, {0, 1})});
    CHECK_THROWS_AS(verify_chain(ds, 1.0, 1.0, 0.0, 1e-9), Error);
    CHECK_THROWS_AS(verify_chain(ds, 0.0, 0.0, 0.0, 1e-9), Error);
    CHECK_THROWS_AS(verify_chain(ds, 1.0, -0.1, 0.0, 1e-9), Error);
}

TEST_CASE("observed_loss_from_pairs") {
    SplitMix64 rng(53);

    SUBCASE("alpha 0 equals the logit gap sum") {
        for (int round = 0; round < 50; ++round) {
            auto ds = testutil::random_dataset(rng, 40, 3, 3.0, false);
            double got = observed_loss_from_pairs(ds, 0.0, 1.0);
            double want = sum_squared_logit_gap(ds);
            CHECK(got == doctest::Approx(want).epsilon(1e-12));
        }
    }

    SUBCASE("alpha 1 equals the summed student cross-entropy") {
        for (int round = 0; round < 50; ++round) {
            auto ds = testutil::random_dataset(rng, 40, 3, 3.0, true);
            double gamma = rng.uniform(0.5, 2.0);
            double got = observed_loss_from_pairs(ds, 1.0, gamma);
            double want = 0.0;
            for (const auto& r : ds.records) {
                auto p = oracle::softmax(r.student_logits, gamma);
                want += -std::log(p[*r.label]);
            }
            CHECK(got == doctest::Approx(want).epsilon(1e-9));
        }
    }

    SUBCASE("intermediate alpha blends the two parts") {
        auto ds = testutil::random_dataset(rng, 30, 2, 2.0, true);
        double ce = observed_loss_from_pairs(ds, 1.0, 1.0);
        double gap = observed_loss_from_pairs(ds, 0.0, 1.0);
        double mix = observed_loss_from_pairs(ds, 0.5, 1.0);
        CHECK(mix == doctest::Approx(0.5 * ce + 0.5 * gap).epsilon(1e-9));
    }

    SUBCASE("missing label is an error only when the CE part is active") {
        auto ds = dataset({rec("a", {1, 0}, {0, 1})});
        CHECK_NOTHROW(observed_loss_from_pairs(ds, 0.0, 1.0));
        CHECK_THROWS_WITH_AS(observed_loss_from_pairs(ds, 0.5, 1.0), doctest::Contains("a"),
                             Error);
    }
}

TEST_CASE("render_chain_report carries every key") {
    auto ds = dataset({rec("a", {2, 0}, {1, 0})});
    auto rep = verify_chain(ds, 1.0, 0.0, sum_squared_logit_gap(ds), 1e-9);
    auto text = render_chain_report(rep);
    for (const char* key : {"step1_holds", "step2_holds", "step3_holds", "sigma",
                            "kappa_theoretical", "slack1", "slack2", "slack3"})
        CHECK(text.find(std::string(key) + ":") != std::string::npos);
    CHECK(text.find("step1_holds: true") != std::string::npos);
}
