#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "esiqa/metrics/correlation.hpp"
#include "esiqa/stats/subjective.hpp"
#include "esiqa/stats/wilcoxon.hpp"
#include "../common/synthetic.hpp"

using namespace esiqa;
using namespace esiqa::stats;

namespace {

const char* kTs = "2026-10-19T08:00:00Z";

std::vector<RatingRecord> from_matrix(const std::vector<std::vector<int>>& rows, DisplayMode mode = DisplayMode::flat_2d) {
    std::vector<RatingRecord> out;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            out.push_back({testkit::rater_name(i), testkit::image_name(j), mode, rows[i][j], kTs});
    return out;
}

// Independent exact rank-sum oracle: midranks by counting, every subset of
// positions enumerated through a bitmask.
double exact_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::size_t n = pooled.size(), n1 = a.size();
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (double v : pooled) {
            less += v < pooled[i];
            equal += v == pooled[i];
        }
        rank[i] = less + (equal + 1.0) / 2.0;
    }
    double w = 0;
    for (std::size_t i = 0; i < n1; ++i) w += rank[i];
    const double mean = double(n1) * double(n + 1) / 2.0;
    std::size_t extreme = 0, total = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (std::size_t(std::popcount(mask)) != n1) continue;
        double s = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1u) s += rank[i];
        ++total;
        if (std::abs(s - mean) >= std::abs(w - mean) - 1e-9) ++extreme;
    }
    return double(extreme) / double(total);
}

}  // namespace

TEST_CASE("ratings csv round trip and validation") {
    std::vector<RatingRecord> recs{{"alice", "img1", DisplayMode::window_3d, 7, kTs},
                                   {"bob", "img1", DisplayMode::window_3d, 10, "2026-10-19T08:00:01.250+00:00"}};
    std::stringstream ss;
    write_ratings(ss, recs);
    CHECK(ss.str().rfind(std::string(kRatingsHeader) + "\n", 0) == 0);
    const auto back = read_ratings(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[1].participant_id == "bob");
    CHECK(back[1].score == 10);
    CHECK(back[1].mode == DisplayMode::window_3d);

    auto parse = [](const std::string& body) {
        std::stringstream in(std::string(kRatingsHeader) + "\n" + body);
        return read_ratings(in);
    };
    CHECK_THROWS_AS(parse("a,i,2d,11,2026-10-19T08:00:00Z\n"), RatingsError);
    CHECK_THROWS_AS(parse("a,i,2d,0,2026-10-19T08:00:00Z\n"), RatingsError);
    CHECK_THROWS_AS(parse("a,i,2d,5.5,2026-10-19T08:00:00Z\n"), RatingsError);
    CHECK_THROWS_AS(parse("a,i,4d,5,2026-10-19T08:00:00Z\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("a,i,2d,5,yesterday\n"), RatingsError);
    try {
        parse("a,i,2d,5,2026-10-19T08:00:00Z\nb,i,2d,5,2026-10-19T08:00:00Z\na,i,2d,6,2026-10-19T08:00:00Z\n");
        FAIL("duplicate accepted");
    } catch (const RatingsError& e) {
        CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
    CHECK(parse("a,i,2d,5,2026-10-19T08:00:00Z\na,i,3d_window,5,2026-10-19T08:00:00Z\n").size() == 2);
    CHECK(is_iso8601_utc(utc_now_iso8601()));
    CHECK_FALSE(is_iso8601_utc("2026-10-19 08:00:00"));
    CHECK_FALSE(is_iso8601_utc("2026-10-19T08:00:00+02:00"));
}

TEST_CASE("incomplete matrix lists the missing cells") {
    auto recs = from_matrix({{1, 2, 3}, {2, 3, 4}, {5, 6, 7}});
    recs.erase(recs.begin() + 4);  // p01 img001
    try {
        build_matrix(recs, DisplayMode::flat_2d);
        FAIL("accepted incomplete matrix");
    } catch (const IncompleteMatrixError& e) {
        REQUIRE(e.missing_cells.size() == 1);
        CHECK(e.missing_cells[0] == std::pair<std::string, std::string>{"p01", "img001"});
    }
    CHECK_THROWS_AS(reject_outlier_subjects(recs, DisplayMode::flat_2d), IncompleteMatrixError);
}

TEST_CASE("screening edge cases") {
    // every subject gives the same score per image
    const auto same = from_matrix({{1, 4, 9, 2}, {1, 4, 9, 2}, {1, 4, 9, 2}, {1, 4, 9, 2}});
    const auto r = reject_outlier_subjects(same, DisplayMode::flat_2d);
    CHECK(r.retained.size() == 4);
    for (const auto& s : r.subjects) CHECK(s.p + s.q == 0);

    // two honest raters and one constant rater
    CHECK_THROWS_AS(reject_outlier_subjects(from_matrix({{2, 5, 8}, {3, 5, 9}, {5, 5, 5}}), DisplayMode::flat_2d),
                    ZeroVarianceError);
    CHECK_THROWS_AS(reject_outlier_subjects(from_matrix({{2, 5, 8}, {3, 5, 9}}), DisplayMode::flat_2d),
                    std::invalid_argument);
    CHECK_THROWS_AS(reject_outlier_subjects(std::vector<RatingRecord>{}, DisplayMode::flat_2d), std::invalid_argument);
}

TEST_CASE("screening rule on a hand-built panel") {
    // 20 honest raters per image: one 3, four 4s, ten 5s, four 6s, one 7,
    // rotated across images. Rater 20 answers 8 and 2 alternately.
    const int pattern[20] = {3, 4, 4, 4, 4, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 6, 6, 6, 6, 7};
    std::vector<std::vector<int>> rows(21, std::vector<int>(20));
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t j = 0; j < 20; ++j) rows[i][j] = pattern[(i + j) % 20];
    for (std::size_t j = 0; j < 20; ++j) rows[20][j] = j % 2 == 0 ? 8 : 2;
    const auto r = reject_outlier_subjects(from_matrix(rows), DisplayMode::flat_2d);
    CHECK(r.retained.count("p20") == 0);
    CHECK(r.retained.size() == 20);
    CHECK(r.subjects[20].rejected);
    CHECK(r.subjects[20].p == 10);
    CHECK(r.subjects[20].q == 10);
    for (std::size_t i = 0; i < 20; ++i) CHECK(r.subjects[i].p + r.subjects[i].q == 0);

    // one-sided deviation: the balance term keeps the rater
    for (std::size_t j = 0; j < 20; ++j) rows[20][j] = j % 2 == 0 ? 8 : 9;
    const auto one_sided = reject_outlier_subjects(from_matrix(rows), DisplayMode::flat_2d);
    CHECK(one_sided.retained.count("p20") == 1);
    CHECK(one_sided.subjects[20].q == 0);
    CHECK(one_sided.subjects[20].p > 0);
}

TEST_CASE("kurtosis") {
    CHECK(sample_kurtosis({1, 1, 1}) == 0.0);
    // two-point symmetric distribution has kurtosis exactly 1
    CHECK(sample_kurtosis({-1, 1, -1, 1}) == doctest::Approx(1.0));
    // {0,0,0,0,10}: m2 = 16, m4 = (4*16+64*... ) computed directly
    const std::vector<double> v{0, 0, 0, 0, 10};
    double mean = 2, m2 = 0, m4 = 0;
    for (double x : v) {
        m2 += std::pow(x - mean, 2) / 5;
        m4 += std::pow(x - mean, 4) / 5;
    }
    CHECK(sample_kurtosis(v) == doctest::Approx(m4 / (m2 * m2)));
}

TEST_CASE("z-score examples") {
    const auto recs = from_matrix({{3, 5, 7}, {1, 5, 9}, {4, 5, 6}});
    const auto z = zscore_normalize(recs, {"p00", "p01", "p02"}, DisplayMode::flat_2d);
    REQUIRE(z.size() == 9);
    CHECK(z[0].z_prime == doctest::Approx(100.0 / 3.0));
    CHECK(z[1].z_prime == 50.0);
    CHECK(z[2].z_prime == doctest::Approx(200.0 / 3.0));
    CHECK(rescale_z(0.0) == 50.0);
    CHECK(rescale_z(4.0) == 100.0);
    CHECK(rescale_z(-4.0) == 0.0);

    std::vector<int> row(26, 1);
    row.back() = 10;
    const auto far = zscore_normalize(from_matrix({row, row, row}), {"p00"}, DisplayMode::flat_2d);
    CHECK(far[25].z > 4.0);
    CHECK(far[25].z_prime == 100.0);

    CHECK_THROWS_AS(zscore_normalize(from_matrix({{3, 5, 7}, {4, 4, 4}, {4, 5, 6}}), {"p00", "p01"}, DisplayMode::flat_2d),
                    ZeroVarianceError);
}

TEST_CASE("z-scores are invariant to a subject's affine rescaling") {
    const auto a = zscore_normalize(from_matrix({{1, 2, 3, 4}, {2, 2, 5, 1}, {1, 3, 3, 4}}), {"p00"}, DisplayMode::flat_2d);
    const auto b = zscore_normalize(from_matrix({{3, 5, 7, 9}, {2, 2, 5, 1}, {1, 3, 3, 4}}), {"p00"}, DisplayMode::flat_2d);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a[i].z == doctest::Approx(b[i].z).epsilon(1e-14));
}

TEST_CASE("mos examples") {
    std::vector<ZScore> z{{"a", "x", DisplayMode::flat_2d, 0, 40}, {"b", "x", DisplayMode::flat_2d, 0, 60}};
    const auto m = compute_mos(z, DisplayMode::flat_2d);
    REQUIRE(m.size() == 1);
    CHECK(m[0].mos == 50.0);
    CHECK(m[0].std == doctest::Approx(std::sqrt(200.0)));
    CHECK(m[0].ci_halfwidth == doctest::Approx(1.96 * std::sqrt(200.0) / std::sqrt(2.0)));
    CHECK(m[0].n_subjects == 2);

    const auto single = compute_mos({{"a", "x", DisplayMode::flat_2d, 0, 71}}, DisplayMode::flat_2d);
    CHECK(single[0].mos == 71.0);
    CHECK(single[0].ci_halfwidth == 0.0);
    CHECK(single[0].single_subject);
    CHECK_THROWS_AS(compute_mos({}, DisplayMode::flat_2d), EmptyInputError);

    const auto constant = mos_pipeline(from_matrix({{6, 6, 6}, {6, 6, 6}, {6, 6, 6}}), DisplayMode::flat_2d);
    for (const auto& e : constant) CHECK(e.mos == 50.0);
}

TEST_CASE("mos csv round trip") {
    std::mt19937_64 rng(3);
    const auto study = testkit::synthetic_study(12, 6, 0, 1.0, rng);
    const auto mos = mos_pipeline(study.records, DisplayMode::window_3d);
    std::stringstream ss;
    write_mos(ss, mos);
    CHECK(ss.str().rfind(std::string(kMosHeader) + "\n", 0) == 0);
    const auto back = read_mos(ss);
    REQUIRE(back.size() == mos.size());
    for (std::size_t i = 0; i < mos.size(); ++i) {
        CHECK(back[i].image_id == mos[i].image_id);
        CHECK(back[i].mos == doctest::Approx(mos[i].mos).epsilon(1e-9));
        CHECK(back[i].n_subjects == mos[i].n_subjects);
    }
}

TEST_CASE("mos recovers the latent ordering") {
    std::mt19937_64 rng(99);
    const auto study = testkit::synthetic_study(100, 22, 0, 1.0, rng);
    const auto mos = mos_pipeline(study.records, DisplayMode::window_3d);
    std::vector<double> m;
    for (const auto& e : mos) m.push_back(e.mos);
    CHECK(metrics::srcc(m, study.latent) > 0.95);
}

TEST_CASE("uniform random rater is screened out of an honest panel") {
    int rejected = 0, honest_rejected = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(900 + seed);
        const auto study = testkit::synthetic_study(500, 21, 1, 1.0, rng);
        const auto report = reject_outlier_subjects(study.records, DisplayMode::window_3d);
        rejected += report.retained.count(testkit::rater_name(21)) == 0;
        honest_rejected += static_cast<int>(21 - (report.retained.size() - report.retained.count(testkit::rater_name(21))));
    }
    CHECK(rejected >= 95);
    CHECK(honest_rejected == 0);
}

TEST_CASE("mean ci follows the 1/sqrt(N) law") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0.0, 1.0);
    RatingMatrix m;
    for (std::size_t i = 0; i < 20; ++i) m.subjects.push_back(testkit::rater_name(i));
    for (std::size_t j = 0; j < 200; ++j) m.images.push_back(testkit::image_name(j));
    for (std::size_t k = 0; k < 20 * 200; ++k) m.scores.push_back(g(rng));
    CurveOptions opt;
    opt.subset_sizes = {5, 10, 20};
    opt.trials = 200;
    opt.seed = 4;
    const auto curve = mean_ci_curve(m, opt);
    for (const auto& [n, ci] : curve) {
        INFO("N = ", n);
        // one unit of z is 100/6 points of z′
        CHECK(ci / (kZ95 / std::sqrt(double(n)) * 100.0 / 6.0) == doctest::Approx(1.0).epsilon(0.10));
    }
    CHECK(curve.at(20) / curve.at(5) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("ranking scores") {
    const auto w = default_rank_weights();
    CHECK(ranking_score({"imm", {{1, 22}}, 22}, w) == doctest::Approx(3.0));
    CHECK(ranking_score({"imm", {{1, 12}, {2, 4}, {3, 6}}, 22}, w) == doctest::Approx(50.0 / 22.0));
    CHECK(ranking_score({"x", {{1, 0}, {2, 0}}, 22}, w) == 0.0);
    CHECK_THROWS_AS(ranking_score({"x", {{4, 1}}, 22}, w), std::invalid_argument);
    CHECK_THROWS_AS(ranking_score({"x", {{1, 1}}, 0}, w), std::invalid_argument);
    CHECK_THROWS_AS(ranking_score({"x", {{1, 20}, {2, 5}}, 22}, w), std::invalid_argument);

    // complete strict rankings sum to 6
    std::mt19937_64 rng(8);
    std::vector<RankingTally> t(3);
    for (int p = 0; p < 22; ++p) {
        std::vector<int> order{0, 1, 2};
        std::shuffle(order.begin(), order.end(), rng);
        for (int r = 0; r < 3; ++r) ++t[order[r]].frequency[r + 1];
    }
    double total = 0;
    for (auto& x : t) {
        x.n = 22;
        total += ranking_score(x, w);
    }
    CHECK(total == doctest::Approx(6.0));
}

TEST_CASE("Q1 ranking triple from every admissible tally") {
    const auto w = default_rank_weights();
    const std::pair<int, double> targets[] = {{50, 2.27}, {48, 2.18}, {34, 1.55}};
    for (const auto& [sum, reported] : targets) {
        std::size_t tallies = 0;
        for (int f1 = 0; f1 <= 22; ++f1)
            for (int f2 = 0; f1 + f2 <= 22; ++f2)
                for (int f3 = 0; f1 + f2 + f3 <= 22; ++f3) {
                    if (3 * f1 + 2 * f2 + f3 != sum) continue;
                    ++tallies;
                    const double s = ranking_score({"q1", {{1, f1}, {2, f2}, {3, f3}}, 22}, w);
                    CHECK(std::round(s * 100.0) / 100.0 == doctest::Approx(reported));
                }
        CHECK(tallies > 0);
    }
    CHECK(std::round((2.27 + 2.18 + 1.55) * 100) / 100 == doctest::Approx(6.00));
}

TEST_CASE("questionnaire summary") {
    const auto m = questionnaire_summary({{4, 4, 5}, {3, 3, 3}});
    CHECK(m[0] == doctest::Approx(13.0 / 3.0));
    CHECK(m[1] == 3.0);
    CHECK_THROWS_AS(questionnaire_summary({{}}), std::invalid_argument);
    // a 22-answer multiset with mean 4.27 (94/22) and one with 2.27 (50/22)
    std::vector<double> dizzy(22, 4.0), mild(22, 2.0);
    for (int i = 0; i < 6; ++i) dizzy[i] = 5.0;
    for (int i = 0; i < 6; ++i) mild[i] = 3.0;
    const auto q = questionnaire_summary({dizzy, mild});
    CHECK(std::round(q[0] * 100) / 100 == doctest::Approx(4.27));
    CHECK(std::round(q[1] * 100) / 100 == doctest::Approx(2.27));
}

TEST_CASE("wilcoxon exact path matches an independent enumeration") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> score(1, 6);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n1 = 1 + rng() % 8, n2 = 1 + rng() % 8;
        std::vector<double> a(n1), b(n2);
        for (double& v : a) v = score(rng);
        for (double& v : b) v = score(rng);
        const double oracle = exact_oracle(a, b);
        const auto r = wilcoxon_rank_sum(a, b);
        CHECK(r.exact);
        CHECK(r.p_value == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(wilcoxon_exact_enumeration(a, b) == doctest::Approx(oracle).epsilon(1e-12));
    }
    CHECK(wilcoxon_rank_sum(std::vector<double>{1, 2, 3}, std::vector<double>{4, 5, 6, 7}).p_value ==
          doctest::Approx(0.05714285714285714));
}

TEST_CASE("wilcoxon normal approximation against reference values") {
    // two-sided asymptotic Mann-Whitney with tie and continuity correction
    const std::vector<double> a{1, 2, 2, 3, 5, 5, 5, 7, 8, 9, 9}, b{2, 3, 4, 4, 6, 7, 8, 8, 10, 10, 10, 10};
    const auto r = wilcoxon_rank_sum(a, b);
    CHECK_FALSE(r.exact);
    CHECK(r.p_value == doctest::Approx(0.1633900226238606).epsilon(1e-9));
    const std::vector<double> c{3.1, 4.2, 5.5, 6.0, 2.2, 7.7, 1.0, 9.9, 4.4, 5.0}, d{6.1, 7.2, 8.5, 9.0, 5.2, 10.7, 4.0, 12.9, 7.4};
    CHECK(wilcoxon_rank_sum(c, d).p_value == doctest::Approx(0.037336415920662856).epsilon(1e-9));
    const std::vector<double> flat(12, 4.0);
    CHECK(wilcoxon_rank_sum(flat, flat).p_value == 1.0);
}

TEST_CASE("discriminability examples") {
    // two images, identical score multisets
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < 22; ++i) rows.push_back({1 + i % 10, 1 + (i + 3) % 10});
    auto m = build_matrix(from_matrix(rows), DisplayMode::flat_2d);
    std::vector<std::size_t> all(22);
    std::iota(all.begin(), all.end(), 0);
    CHECK(discriminability(m, all, 0.05) == 0.0);

    rows.clear();
    for (int i = 0; i < 22; ++i) rows.push_back({1 + i % 3, 8 + i % 3});
    m = build_matrix(from_matrix(rows), DisplayMode::flat_2d);
    CHECK(discriminability(m, all, 0.05) == 1.0);
}

TEST_CASE("discriminability on a 3-image study equals the exact oracle") {
    const std::vector<std::vector<int>> rows{{2, 5, 9}, {3, 6, 8}, {1, 5, 9}, {2, 7, 10}, {4, 4, 6}, {3, 6, 7}};
    const auto m = build_matrix(from_matrix(rows), DisplayMode::flat_2d);
    std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
    double expect = 0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) expect += exact_oracle(m.column(i), m.column(j)) < 0.05;
    CHECK(discriminability(m, all, 0.05) == doctest::Approx(expect / 3.0));
}

TEST_CASE("curves: errors, zero variance and seeding") {
    std::mt19937_64 rng(5);
    const auto study = testkit::synthetic_study(10, 8, 0, 1.0, rng);
    CurveOptions opt;
    opt.subset_sizes = {2, 4, 8};
    opt.trials = 20;
    opt.seed = 3;
    const auto a = discriminability_curve(study.records, DisplayMode::window_3d, opt);
    const auto b = discriminability_curve(study.records, DisplayMode::window_3d, opt);
    CHECK(a == b);
    opt.subset_sizes = {9};
    CHECK_THROWS_AS(discriminability_curve(study.records, DisplayMode::window_3d, opt), std::invalid_argument);
    opt.subset_sizes = {2};
    opt.alpha = 1.0;
    CHECK_THROWS_AS(discriminability_curve(study.records, DisplayMode::window_3d, opt), std::invalid_argument);

    const std::vector<double> flat(5 * 3, 50.0);
    CHECK(mean_ci(flat, 3, {0, 1, 2, 3, 4}) == 0.0);
}

TEST_CASE("discriminability grows with panel size") {
    std::vector<double> rhos;
    for (std::uint64_t rerun = 0; rerun < 10; ++rerun) {
        std::mt19937_64 rng(1000 + rerun);
        const auto study = testkit::synthetic_study(12, 22, 0, 1.5, rng);
        CurveOptions opt;
        opt.subset_sizes = {3, 6, 10, 15, 22};
        opt.trials = 10;
        opt.seed = rerun;
        const auto curve = discriminability_curve(study.records, DisplayMode::window_3d, opt);
        std::vector<double> sizes, values;
        for (const auto& [s, v] : curve) {
            sizes.push_back(double(s));
            values.push_back(v);
        }
        rhos.push_back(metrics::srcc(sizes, values));
    }
    CHECK(std::accumulate(rhos.begin(), rhos.end(), 0.0) / double(rhos.size()) > 0.0);
}
