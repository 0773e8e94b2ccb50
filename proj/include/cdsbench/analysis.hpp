#pragma once

#include "cdsbench/metrics.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cdsbench {

struct BootstrapCi {
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n = 0;
};

// Percentile bootstrap (2.5/97.5) of the mean with n_boot resamples drawn
// from a seeded generator; identical inputs and seed give identical CIs on
// every platform.
BootstrapCi bootstrap_ci(std::span<const double> values, int n_boot, std::uint64_t seed);

enum class AgeGrouping { PerBucket, Pooled };

struct AggregateRow {
    std::string measure;
    std::string source;
    Role role = Role::Child;
    int age_years = 0;  // -1 when pooled
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n = 0;
};

// Groups records by (measure, source, role[, age bucket]); undefined values
// are excluded and counted, empty groups are omitted with a note.
std::vector<AggregateRow> aggregate_with_ci(const std::vector<MetricRecord>& records,
                                            AgeGrouping grouping, int n_boot,
                                            std::uint64_t seed,
                                            std::vector<std::string>* notes = nullptr);

struct RegressionResult {
    std::string measure;
    std::string configuration;
    std::string role;
    double coefficient = 0.0;  // LLM minus reference effect
    double std_error = 0.0;
    std::optional<double> p_value;
    std::string p_reason;  // set when p is undefined (degenerate design)
    int n_obs = 0;
};

// OLS of value on intercept + source indicator (1 = LLM); two-sided t test
// on the indicator coefficient. Needs >= 2 observations per group.
RegressionResult regress_vs_reference(std::span<const double> llm_values,
                                      std::span<const double> ref_values,
                                      const std::string& measure,
                                      const std::string& configuration);

struct ReportInputs {
    std::vector<AggregateRow> aggregates;
    std::vector<RegressionResult> regressions;
    std::vector<std::string> notes;
    std::string manifest_digest;   // provenance; empty for reference-only
    std::int64_t record_count = 0;
    std::int64_t undefined_value_count = 0;
};

// Writes aggregate_<measure>_<role>.csv and plot_<measure>_<role>.csv per
// populated pair, regressions.csv, and summary.json under out_dir.
void build_report(const ReportInputs& inputs, const std::string& out_dir);

}  // namespace cdsbench
