#include <doctest.h>

#include "cdsbench/analysis.hpp"
#include "cdsbench/error.hpp"

#include "test_support.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace cdsbench;

namespace {

// Test-local gaussian from raw engine words (Box-Muller); keeps the
// Monte Carlo check independent of library distribution choices.
double gaussian(std::mt19937_64& rng) {
    double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53;
    double u2 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

MetricRecord make_record(const std::string& id, const std::string& source, Role role,
                         int age_months, double value_seed) {
    MetricRecord rec;
    rec.conversation_id = id;
    rec.source = source;
    rec.role = role;
    rec.age_months = age_months;
    for (Measure m : kAllMeasures) {
        rec.measure(m).value = value_seed + static_cast<double>(m) * 0.1;
        rec.measure(m).n_scored = 1;
    }
    return rec;
}

}  // namespace

TEST_CASE("bootstrap_ci on degenerate inputs") {
    std::vector<double> constant = {2.0, 2.0, 2.0, 2.0};
    BootstrapCi ci = bootstrap_ci(constant, 200, 7);
    CHECK(ci.mean == doctest::Approx(2.0));
    CHECK(ci.ci_low == doctest::Approx(2.0));
    CHECK(ci.ci_high == doctest::Approx(2.0));
    CHECK(ci.n == 4);

    std::vector<double> single = {3.25};
    ci = bootstrap_ci(single, 50, 7);
    CHECK(ci.mean == doctest::Approx(3.25));
    CHECK(ci.ci_low == doctest::Approx(3.25));
    CHECK(ci.ci_high == doctest::Approx(3.25));

    CHECK_THROWS_AS(bootstrap_ci(std::vector<double>{}, 10, 7), Error);
    CHECK_THROWS_AS(bootstrap_ci(constant, 0, 7), Error);
}

TEST_CASE("bootstrap_ci is deterministic under a fixed seed") {
    std::mt19937_64 rng(99);
    std::vector<double> values;
    for (int i = 0; i < 25; ++i) values.push_back(gaussian(rng));
    BootstrapCi a = bootstrap_ci(values, 500, 1234);
    BootstrapCi b = bootstrap_ci(values, 500, 1234);
    CHECK(a.ci_low == b.ci_low);
    CHECK(a.ci_high == b.ci_high);
    BootstrapCi c = bootstrap_ci(values, 500, 1235);
    CHECK((c.ci_low != a.ci_low || c.ci_high != a.ci_high));
    CHECK(a.ci_low <= a.mean);
    CHECK(a.mean <= a.ci_high);
}

TEST_CASE("bootstrap CI covers the true mean in most seeded replications") {
    const double mu = 0.7;
    int covered = 0;
    for (int rep = 0; rep < 100; ++rep) {
        std::mt19937_64 rng(1000 + static_cast<unsigned>(rep));
        std::vector<double> values;
        for (int i = 0; i < 40; ++i) values.push_back(mu + gaussian(rng));
        BootstrapCi ci = bootstrap_ci(values, 400, 77 + static_cast<unsigned>(rep));
        if (ci.ci_low <= mu && mu <= ci.ci_high) ++covered;
    }
    CHECK(covered >= 90);
}

TEST_CASE("aggregate_with_ci groups by measure, source, role, age") {
    std::vector<MetricRecord> records;
    records.push_back(make_record("c1", "reference", Role::Child, 26, 1.0));
    records.push_back(make_record("c2", "reference", Role::Child, 27, 3.0));
    records.push_back(make_record("c3", "reference", Role::Child, 40, 2.0));
    records.push_back(make_record("c1", "reference", Role::Caregiver, 26, 5.0));
    // An undefined value with a reason: excluded with a note.
    records.back().measure(Measure::Concreteness).value.reset();
    records.back().measure(Measure::Concreteness).reason = "no_rated_content_words";

    std::vector<std::string> notes;
    std::vector<AggregateRow> rows =
        aggregate_with_ci(records, AgeGrouping::PerBucket, 100, 42, &notes);

    // Measures x (child@2y, child@3y, caregiver@2y) minus the one empty
    // caregiver concreteness group.
    CHECK(rows.size() == 6 * 3 - 1);
    bool found_empty_note = false;
    for (const std::string& note : notes) {
        if (note.find("concreteness") != std::string::npos &&
            note.find("omitted") != std::string::npos) {
            found_empty_note = true;
        }
    }
    CHECK(found_empty_note);

    for (const AggregateRow& row : rows) {
        CHECK(row.ci_low <= row.mean + 1e-12);
        CHECK(row.mean <= row.ci_high + 1e-12);
        if (row.measure == "mean_utterance_length" && row.role == Role::Child &&
            row.age_years == 2) {
            // child@2y values: 1.0 + 0.2, 3.0 + 0.2 -> mean 2.2
            CHECK(row.mean == doctest::Approx(2.2));
            CHECK(row.n == 2);
        }
    }

    // Permuting the record order changes nothing.
    std::vector<MetricRecord> reversed(records.rbegin(), records.rend());
    std::vector<AggregateRow> rows2 =
        aggregate_with_ci(reversed, AgeGrouping::PerBucket, 100, 42, nullptr);
    REQUIRE(rows2.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].measure == rows2[i].measure);
        CHECK(rows[i].mean == rows2[i].mean);
        CHECK(rows[i].ci_low == rows2[i].ci_low);
        CHECK(rows[i].ci_high == rows2[i].ci_high);
    }

    // Pooled grouping folds ages together.
    std::vector<AggregateRow> pooled =
        aggregate_with_ci(records, AgeGrouping::Pooled, 100, 42, nullptr);
    CHECK(pooled.size() == 6 * 2 - 1);
    for (const AggregateRow& row : pooled) CHECK(row.age_years == -1);
}

TEST_CASE("aggregate totals reconcile with the defined record values") {
    std::vector<MetricRecord> records;
    for (int i = 0; i < 9; ++i) {
        MetricRecord rec = make_record("c" + std::to_string(i), i % 2 ? "reference" : "llm:x",
                                       i % 3 ? Role::Child : Role::Caregiver, 24 + 3 * i,
                                       static_cast<double>(i));
        if (i % 4 == 0) {
            rec.measure(Measure::SyntacticDepth).value.reset();
            rec.measure(Measure::SyntacticDepth).reason = "provider_unavailable";
        }
        records.push_back(std::move(rec));
    }
    std::vector<AggregateRow> rows =
        aggregate_with_ci(records, AgeGrouping::PerBucket, 50, 3, nullptr);
    for (Measure m : kAllMeasures) {
        int defined = 0;
        for (const MetricRecord& rec : records) {
            if (rec.measure(m).value) ++defined;
        }
        int aggregated = 0;
        for (const AggregateRow& row : rows) {
            if (row.measure == measure_name(m)) aggregated += row.n;
        }
        CHECK(aggregated == defined);  // no silent row drops
    }
}

TEST_CASE("regression recovers an exact constant shift") {
    std::vector<double> ref = {1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> llm;
    for (double v : ref) llm.push_back(v + 0.5);
    RegressionResult result = regress_vs_reference(llm, ref, "m", "cfg");
    CHECK(result.coefficient == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(result.n_obs == 10);
    REQUIRE(result.p_value);
}

TEST_CASE("regression on identical groups gives zero effect, p = 1") {
    std::vector<double> values = {1.0, 2.0, 3.0, 4.0};
    RegressionResult result = regress_vs_reference(values, values, "m", "cfg");
    CHECK(std::abs(result.coefficient) <= 1e-9);
    REQUIRE(result.p_value);
    CHECK(std::abs(*result.p_value - 1.0) <= 1e-9);
}

TEST_CASE("regression coefficient equals the difference of group means") {
    std::mt19937_64 rng(4242);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> ref;
        std::vector<double> llm;
        int n0 = 2 + static_cast<int>(rng() % 20);
        int n1 = 2 + static_cast<int>(rng() % 20);
        for (int i = 0; i < n0; ++i) ref.push_back(gaussian(rng));
        for (int i = 0; i < n1; ++i) llm.push_back(gaussian(rng) + 0.3);
        double mean0 = 0.0;
        for (double v : ref) mean0 += v;
        mean0 /= n0;
        double mean1 = 0.0;
        for (double v : llm) mean1 += v;
        mean1 /= n1;
        RegressionResult result = regress_vs_reference(llm, ref, "m", "cfg");
        CHECK(result.coefficient == doctest::Approx(mean1 - mean0).epsilon(1e-12));
    }
}

TEST_CASE("regression error paths") {
    // Degenerate design: zero variance in both groups, nonzero effect.
    std::vector<double> a = {1.0, 1.0, 1.0};
    std::vector<double> b = {2.0, 2.0};
    RegressionResult result = regress_vs_reference(b, a, "m", "cfg");
    CHECK(result.coefficient == doctest::Approx(1.0));
    CHECK_FALSE(result.p_value);
    CHECK(result.p_reason == "zero_variance_in_both_groups");

    // Too few observations.
    CHECK_THROWS_AS(regress_vs_reference(std::vector<double>{1.0}, a, "m", "cfg"), Error);
}

TEST_CASE("strong separation yields a small p-value") {
    std::mt19937_64 rng(7);
    std::vector<double> ref;
    std::vector<double> llm;
    for (int i = 0; i < 40; ++i) ref.push_back(0.2 + 0.05 * gaussian(rng));
    for (int i = 0; i < 40; ++i) llm.push_back(0.9 + 0.05 * gaussian(rng));
    RegressionResult result = regress_vs_reference(llm, ref, "m", "cfg");
    CHECK(result.coefficient > 0.5);
    REQUIRE(result.p_value);
    CHECK(*result.p_value < 0.01);
}

TEST_CASE("build_report writes one table pair per populated measure-role") {
    testsupport::TempDir tmp("report");
    std::vector<MetricRecord> records;
    for (int i = 0; i < 4; ++i) {
        records.push_back(
            make_record("c" + std::to_string(i), "reference", Role::Child, 26 + i, 1.0 + i));
        records.push_back(
            make_record("c" + std::to_string(i), "reference", Role::Caregiver, 26 + i, 2.0 + i));
        records.push_back(
            make_record("c" + std::to_string(i), "parrot:zero:single:caregiver",
                        Role::Caregiver, 26 + i, 2.5 + i));
    }
    ReportInputs inputs;
    inputs.record_count = static_cast<std::int64_t>(records.size());
    inputs.aggregates = aggregate_with_ci(records, AgeGrouping::PerBucket, 50, 5, &inputs.notes);
    for (Measure m : {Measure::DialogueAlignment, Measure::DialogueDiversity}) {
        std::vector<double> llm;
        std::vector<double> ref;
        for (const MetricRecord& rec : records) {
            if (rec.role != Role::Caregiver) continue;
            (rec.source == "reference" ? ref : llm).push_back(*rec.measure(m).value);
        }
        RegressionResult r = regress_vs_reference(llm, ref, measure_name(m),
                                                  "parrot:zero:single:caregiver");
        r.role = "caregiver";
        inputs.regressions.push_back(r);
    }
    inputs.manifest_digest = "cafecafecafecafe";
    build_report(inputs, tmp.path());

    namespace fs = std::filesystem;
    int aggregate_files = 0;
    int plot_files = 0;
    for (const auto& entry : fs::directory_iterator(tmp.path())) {
        std::string name = entry.path().filename().string();
        if (name.rfind("aggregate_", 0) == 0) ++aggregate_files;
        if (name.rfind("plot_", 0) == 0) ++plot_files;
    }
    // 6 measures x 2 roles: every pair is populated here.
    CHECK(aggregate_files == 12);
    CHECK(plot_files == 12);
    CHECK(fs::exists(fs::path(tmp.path()) / "regressions.csv"));
    CHECK(fs::exists(fs::path(tmp.path()) / "summary.json"));

    std::string regressions = testsupport::slurp(tmp.sub("regressions.csv"));
    CHECK(testsupport::count_speaker_tier_lines("") == 0);  // keep helper linked
    // Header + the two regression rows.
    CHECK(std::count(regressions.begin(), regressions.end(), '\n') == 3);

    // Rebuilding with the same inputs is byte-identical.
    testsupport::TempDir tmp2("report2");
    build_report(inputs, tmp2.path());
    CHECK(testsupport::slurp(tmp2.sub("regressions.csv")) == regressions);
    CHECK(testsupport::slurp(tmp2.sub("summary.json")) == testsupport::slurp(tmp.sub("summary.json")));
    CHECK(testsupport::slurp(tmp2.sub("aggregate_concreteness_child.csv")) ==
          testsupport::slurp(tmp.sub("aggregate_concreteness_child.csv")));
}
