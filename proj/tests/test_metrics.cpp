#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "kdaudit/error.hpp"
#include "kdaudit/metrics.hpp"
#include "kdaudit/rng.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

using namespace kdaudit;
using testutil::conf_rec;
using testutil::dataset;
using testutil::rec;

TEST_CASE("softmax fixed points") {
    auto p = softmax(std::vector<double>{0.0, 0.0}, 1.0);
    CHECK(p.probs[0] == 0.5);
    CHECK(p.probs[1] == 0.5);

    p = softmax(std::vector<double>{1.0, 0.0}, 1.0);
    // e / (e + 1)
    CHECK(p.probs[0] == doctest::Approx(0.7310585786300049).epsilon(1e-15));

    // gamma rescales the gap: [1,0] at gamma 2 matches [2,0] at gamma 1
    auto hot = softmax(std::vector<double>{1.0, 0.0}, 2.0);
    auto ref = softmax(std::vector<double>{2.0, 0.0}, 1.0);
    CHECK(hot.probs[0] == doctest::Approx(ref.probs[0]).epsilon(1e-15));
}

TEST_CASE("softmax survives extreme logits") {
    auto p = softmax(std::vector<double>{1000.0, 0.0}, 1.0);
    CHECK(p.probs[0] == doctest::Approx(1.0));
    CHECK(std::isfinite(p.probs[1]));
    CHECK(p.probs[1] >= 0.0);

    p = softmax(std::vector<double>{-1000.0, -1000.0}, 1.0);
    CHECK(p.probs[0] == doctest::Approx(0.5));
}

TEST_CASE("softmax argument validation") {
    std::vector<double> two{1.0, 0.0};
    CHECK_THROWS_AS(softmax(two, 0.0), Error);
    CHECK_THROWS_AS(softmax(two, -1.0), Error);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0}, 1.0), Error);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}, 1.0), Error);
}

TEST_CASE("softmax sums to one and ignores logit shifts") {
    SplitMix64 rng(314);
    for (int round = 0; round < 400; ++round) {
        std::size_t C = 2 + rng.next_below(6);
        double gamma = rng.uniform(0.2, 3.0);
        std::vector<double> z(C), shifted(C);
        double shift = rng.uniform(-50.0, 50.0);
        for (std::size_t i = 0; i < C; ++i) {
            z[i] = rng.uniform(-20.0, 20.0);
            shifted[i] = z[i] + shift;
        }
        auto p = softmax(z, gamma);
        auto q = softmax(shifted, gamma);
        double sum = 0.0;
        for (double v : p.probs) sum += v;
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        for (std::size_t i = 0; i < C; ++i)
            CHECK(std::abs(p.probs[i] - q.probs[i]) < 1e-9);

        auto naive = oracle::softmax(z, gamma);
        for (std::size_t i = 0; i < C; ++i)
            CHECK(p.probs[i] == doctest::Approx(naive[i]).epsilon(1e-12));
    }
}

TEST_CASE("confidence picks the max with ties to the lowest index") {
    // logits log(0.2), log(0.5), log(0.3) give probs (0.2, 0.5, 0.3)
    std::vector<double> z{std::log(0.2), std::log(0.5), std::log(0.3)};
    auto c = confidence(z, 1.0);
    CHECK(c.value == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c.index == 1);

    auto tie = confidence(std::vector<double>{0.0, 0.0}, 1.0);
    CHECK(tie.value == doctest::Approx(0.5));
    CHECK(tie.index == 0);

    auto sharp = confidence(std::vector<double>{2.0, 0.0}, 1.0);
    // e^2 / (e^2 + 1)
    CHECK(sharp.value == doctest::Approx(0.8807970779778823).epsilon(1e-15));
    CHECK(sharp.index == 0);
}

TEST_CASE("pairwise_diff on agreement, disagreement, identity") {
    // teacher conf 0.8808 (class 0), student conf 0.7311 (class 0)
    auto r = rec("a", {2.0, 0.0}, {1.0, 0.0});
    auto d = pairwise_diff(r, 1.0);
    REQUIRE(d.agreed());
    CHECK(*d.value == doctest::Approx(-0.14973849934787744).epsilon(1e-14));

    auto flip = rec("b", {2.0, 0.0}, {0.0, 2.0});
    CHECK_FALSE(pairwise_diff(flip, 1.0).agreed());

    auto same = rec("c", {1.0, -1.0}, {1.0, -1.0});
    auto zero = pairwise_diff(same, 1.0);
    REQUIRE(zero.agreed());
    CHECK(*zero.value == 0.0);
}

TEST_CASE("confidence_spread hand examples") {
    SUBCASE("two diffs of +-0.1 give sigma 0.1") {
        auto ds = dataset({conf_rec("a", 0.8, 0.9), conf_rec("b", 0.9, 0.8)});
        auto sig = confidence_spread(ds, 1.0, BotPolicy::zero);
        CHECK(sig.sigma == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(sig.n_total == 2);
        CHECK(sig.n_agree == 2);
        CHECK(sig.n_disagree == 0);
    }

    SUBCASE("one diff of 0.2 plus one disagreement") {
        auto ds = dataset({
            conf_rec("a", 0.7, 0.9),
            rec("b", {2.0, 0.0}, {0.0, 2.0}),
        });
        auto z = confidence_spread(ds, 1.0, BotPolicy::zero);
        CHECK(z.sigma == doctest::Approx(std::sqrt(0.04 / 2.0)).epsilon(1e-12));
        CHECK(z.n_disagree == 1);

        auto e = confidence_spread(ds, 1.0, BotPolicy::exclude);
        CHECK(e.sigma == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(e.n_agree == 1);
    }

    SUBCASE("exclude with zero agreements is an error") {
        auto ds = dataset({rec("a", {2.0, 0.0}, {0.0, 2.0})});
        CHECK_NOTHROW(confidence_spread(ds, 1.0, BotPolicy::zero));
        CHECK_THROWS_AS(confidence_spread(ds, 1.0, BotPolicy::exclude), Error);
    }
}

TEST_CASE("confidence_spread matches the reference on random datasets") {
    SplitMix64 rng(2718);
    for (int round = 0; round < 300; ++round) {
        std::size_t C = 2 + rng.next_below(4);
        auto ds = testutil::random_dataset(rng, 60, C, 6.0, false);
        for (BotPolicy policy : {BotPolicy::zero, BotPolicy::exclude}) {
            bool exclude = policy == BotPolicy::exclude;
            auto want = oracle::sigma(ds, 1.0, exclude);
            if (!want.defined) {
                CHECK_THROWS_AS(confidence_spread(ds, 1.0, policy), Error);
                continue;
            }
            auto got = confidence_spread(ds, 1.0, policy);
            CHECK(std::abs(got.sigma - want.sigma) <= 1e-12);
            CHECK(got.n_agree == want.n_agree);
            CHECK(got.n_disagree == want.n_disagree);
            CHECK(got.n_total == ds.size());
        }
    }
}

TEST_CASE("confidence_spread is invariant under record permutation") {
    SplitMix64 rng(99);
    auto ds = testutil::random_dataset(rng, 200, 3, 10.0, false);
    auto base = confidence_spread(ds, 1.0, BotPolicy::zero);
    for (int round = 0; round < 20; ++round) {
        rng.shuffle(ds.records);
        auto sig = confidence_spread(ds, 1.0, BotPolicy::zero);
        CHECK(std::abs(sig.sigma - base.sigma) <= 1e-12);
    }
}

TEST_CASE("zero and exclude policies describe the same sum of squares") {
    SplitMix64 rng(424242);
    for (int round = 0; round < 100; ++round) {
        auto ds = testutil::random_dataset(rng, 80, 3, 4.0, false);
        auto z = confidence_spread(ds, 1.0, BotPolicy::zero);
        if (z.n_agree == 0) continue;
        auto e = confidence_spread(ds, 1.0, BotPolicy::exclude);
        double lhs = z.sigma * z.sigma * static_cast<double>(z.n_total);
        double rhs = e.sigma * e.sigma * static_cast<double>(e.n_agree);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("verdict thresholding") {
    CHECK(verdict(0.026, 0.05));
    CHECK_FALSE(verdict(0.062, 0.05));
    CHECK(verdict(0.05, 0.05)); // boundary is inclusive

    SigmaResult sig;
    sig.sigma = 0.04;
    CHECK(verdict(sig, 0.05));

    CHECK_THROWS_AS(verdict(0.01, 0.0), Error);
    CHECK_THROWS_AS(verdict(0.01, -0.5), Error);

    SplitMix64 rng(7);
    for (int round = 0; round < 200; ++round) {
        double s = rng.uniform(0.0, 0.2);
        double k1 = rng.uniform(0.001, 0.2);
        double k2 = k1 + rng.uniform(0.0, 0.1);
        // larger threshold never turns a pass into a fail
        if (verdict(s, k1)) CHECK(verdict(s, k2));
    }
}

TEST_CASE("accuracy counts argmax hits against labels") {
    auto ds = dataset({
        conf_rec("a", 0.9, 0.9, true, true),
        conf_rec("b", 0.9, 0.9, true, true),
        conf_rec("c", 0.9, 0.9, true, true),
        conf_rec("d", 0.9, 0.9, true, false),
    });
    CHECK(accuracy(ds, Side::student, 1.0) == 0.75);
    CHECK(accuracy(ds, Side::teacher, 1.0) == 0.75);

    for (auto& r : ds.records) r.label = 0;
    CHECK(accuracy(ds, Side::student, 1.0) == 1.0);
    for (auto& r : ds.records) r.label = 1;
    CHECK(accuracy(ds, Side::student, 1.0) == 0.0);

    ds.records[2].label.reset();
    CHECK_THROWS_WITH_AS(accuracy(ds, Side::student, 1.0), doctest::Contains("c"), Error);
}

TEST_CASE("calibration error fixed examples") {
    // two correct at conf 0.95, one wrong at 0.85, one correct at 0.75:
    // bins (10): conf 0.95 -> bin 9 (acc 1, conf 0.95, gap 0.05, weight 0.5)
    //            conf 0.85 -> bin 8 (acc 0, conf 0.85, gap 0.85, weight 0.25)
    //            conf 0.75 -> bin 7 (acc 1, conf 0.75, gap 0.25, weight 0.25)
    // total = (0.025 + 0.2125 + 0.0625) * 100 = 30.0
    auto ds = dataset({
        conf_rec("a", 0.5, 0.95, true, true),
        conf_rec("b", 0.5, 0.95, true, true),
        conf_rec("c", 0.5, 0.85, true, false),
        conf_rec("d", 0.5, 0.75, true, true),
    });
    CHECK(std::abs(ece_percent(ds, Side::student, 1.0, 10) - 30.0) <= 1e-9);

    auto one = dataset({conf_rec("a", 0.5, 0.6, true, false)});
    CHECK(std::abs(ece_percent(one, Side::student, 1.0, 10) - 60.0) <= 1e-9);

    // perfectly confident and correct everywhere: zero error
    auto sure = dataset({
        rec("a", {0.0, 0.0}, {1000.0, 0.0}, 0),
        rec("b", {0.0, 0.0}, {1000.0, 0.0}, 0),
    });
    CHECK(ece_percent(sure, Side::student, 1.0, 10) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("calibration error with one bin reduces to a mean gap") {
    SplitMix64 rng(606);
    for (int round = 0; round < 100; ++round) {
        auto ds = testutil::random_dataset(rng, 50, 3, 5.0, true);
        double got = ece_percent(ds, Side::teacher, 1.0, 1);
        double conf_sum = 0.0, hit_sum = 0.0;
        for (const auto& r : ds.records) {
            auto c = confidence(r.teacher_logits, 1.0);
            conf_sum += c.value;
            hit_sum += c.index == *r.label ? 1.0 : 0.0;
        }
        double n = static_cast<double>(ds.size());
        double want = 100.0 * std::abs(hit_sum / n - conf_sum / n);
        CHECK(std::abs(got - want) <= 1e-9);
    }
}

TEST_CASE("calibration error matches the reference and stays in range") {
    SplitMix64 rng(8080);
    for (int round = 0; round < 150; ++round) {
        auto ds = testutil::random_dataset(rng, 60, 2 + rng.next_below(3), 5.0, true);
        std::size_t bins = 1 + rng.next_below(20);
        for (Side side : {Side::teacher, Side::student}) {
            double got = ece_percent(ds, side, 1.0, bins);
            double want = oracle::ece_percent(ds, side == Side::student, 1.0, bins);
            CHECK(std::abs(got - want) <= 1e-9);
            CHECK(got >= 0.0);
            CHECK(got <= 100.0);
        }
    }
}

TEST_CASE("ece argument validation") {
    auto ds = dataset({conf_rec("a", 0.9, 0.9)});
    CHECK_THROWS_AS(ece_percent(ds, Side::student, 1.0, 0), Error);
    ds.records[0].label.reset();
    CHECK_THROWS_AS(ece_percent(ds, Side::student, 1.0, 10), Error);
}

TEST_CASE("distributions bin confidences and differences") {
    // identical logits: every delta is exactly 0, which lands in bin 5 of
    // 10 over [-1, 1) since 0 sits on the right-opening edge
    std::vector<PairedLogitRecord> recs;
    for (int i = 0; i < 6; ++i)
        recs.push_back(rec(std::to_string(i), {1.0, 0.0}, {1.0, 0.0}));
    auto same = distributions(dataset(recs), 1.0, 10);
    CHECK(same.delta.counts[5] == 6);
    CHECK(same.delta.total() == 6);
    CHECK(same.bot_count == 0);
    CHECK(same.delta.lo == -1.0);
    CHECK(same.delta.hi == 1.0);

    // teacher confidences 0.55 and 0.95 land in bins 5 and 9 of 10
    auto ds = dataset({conf_rec("a", 0.55, 0.55), conf_rec("b", 0.95, 0.95)});
    auto d = distributions(ds, 1.0, 10);
    CHECK(d.teacher_conf.counts[5] == 1);
    CHECK(d.teacher_conf.counts[9] == 1);
    CHECK(d.teacher_conf.total() == 2);
    CHECK(d.teacher_conf.lo == 0.0);
    CHECK(d.teacher_conf.hi == 1.0);
}

TEST_CASE("distributions conserve counts") {
    SplitMix64 rng(515);
    for (int round = 0; round < 60; ++round) {
        auto ds = testutil::random_dataset(rng, 80, 3, 6.0, false);
        auto d = distributions(ds, 1.0, 1 + rng.next_below(40));
        CHECK(d.teacher_conf.total() == ds.size());
        CHECK(d.student_conf.total() == ds.size());
        CHECK(d.delta.total() + d.bot_count == ds.size());
    }
}

TEST_CASE("histogram_csv layout") {
    Histogram h;
    h.lo = 0.0;
    h.hi = 1.0;
    h.counts = {3, 0, 1};
    auto csv = histogram_csv(h);
    CHECK(csv.rfind("bin_lo,bin_hi,count\n", 0) == 0);
    CHECK(csv.find("\n0,") != std::string::npos);
    CHECK(csv.find(",3\n") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("report assembly and rendering") {
    auto ds = dataset({
        conf_rec("a", 0.8, 0.9, true, true),
        conf_rec("b", 0.9, 0.8, true, true),
    });
    auto rep = make_report(ds, 1.0, 0.05, BotPolicy::zero, 10);
    REQUIRE(rep.acc_teacher.has_value());
    CHECK(*rep.acc_teacher == 1.0);
    CHECK(rep.spread.sigma == doctest::Approx(0.1).epsilon(1e-12));
    CHECK_FALSE(rep.holds);
    CHECK(rep.kappa == 0.05);

    auto text = render_report(rep);
    const char* keys[] = {"acc_teacher", "acc_student", "ece_teacher", "ece_student",
                          "sigma",       "n_total",     "n_agree",     "n_disagree",
                          "kappa",       "holds",       "split"};
    std::size_t pos = 0;
    for (const char* k : keys) {
        auto at = text.find(std::string(k) + ":", pos);
        REQUIRE(at != std::string::npos);
        pos = at;
    }
    CHECK(text.find("holds: false") != std::string::npos);
    CHECK(text.find("split: train") != std::string::npos);

    SUBCASE("unlabeled data renders absent metrics") {
        for (auto& r : ds.records) r.label.reset();
        auto bare = make_report(ds, 1.0, 0.5, BotPolicy::zero, 10);
        CHECK_FALSE(bare.acc_teacher.has_value());
        CHECK_FALSE(bare.ece_student.has_value());
        CHECK(bare.holds);
        auto t = render_report(bare);
        CHECK(t.find("acc_teacher: absent") != std::string::npos);
        CHECK(t.find("ece_student: absent") != std::string::npos);
        CHECK(t.find("holds: true") != std::string::npos);
    }

    SUBCASE("eval split tag is carried through") {
        auto ev = ds;
        ev.split_tag = Split::eval;
        auto r2 = make_report(ev, 1.0, 0.05, BotPolicy::zero, 10);
        CHECK(render_report(r2).find("split: eval") != std::string::npos);
    }
}

TEST_CASE("policy names round-trip") {
    CHECK(bot_policy_from_name("zero") == BotPolicy::zero);
    CHECK(bot_policy_from_name("exclude") == BotPolicy::exclude);
    CHECK(bot_policy_name(BotPolicy::exclude) == "exclude");
    CHECK_THROWS_AS(bot_policy_from_name("drop"), Error);
}
