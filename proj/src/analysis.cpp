#include "cdsbench/analysis.hpp"

#include "cdsbench/error.hpp"
#include "cdsbench/util.hpp"

#include <json.hpp>

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>

namespace cdsbench {

namespace {

using nlohmann::json;

double percentile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    if (sorted.size() == 1) return sorted[0];
    double h = p * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(h));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double mean_of(std::span<const double> values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
}

}  // namespace

BootstrapCi bootstrap_ci(std::span<const double> values, int n_boot, std::uint64_t seed) {
    if (values.empty()) {
        throw Error(ErrorCode::EmptyGroup, "bootstrap over zero values");
    }
    if (n_boot < 1) {
        throw Error(ErrorCode::ConfigInvalid, "n_boot must be >= 1");
    }
    BootstrapCi ci;
    ci.n = static_cast<int>(values.size());
    ci.mean = mean_of(values);

    std::mt19937_64 rng(seed);
    std::vector<double> resample_means(static_cast<std::size_t>(n_boot));
    const std::size_t n = values.size();
    for (int b = 0; b < n_boot; ++b) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum += values[uniform_index(rng(), n)];
        }
        resample_means[static_cast<std::size_t>(b)] = sum / static_cast<double>(n);
    }
    std::sort(resample_means.begin(), resample_means.end());
    ci.ci_low = percentile_sorted(resample_means, 0.025);
    ci.ci_high = percentile_sorted(resample_means, 0.975);
    return ci;
}

std::vector<AggregateRow> aggregate_with_ci(const std::vector<MetricRecord>& records,
                                            AgeGrouping grouping, int n_boot,
                                            std::uint64_t seed,
                                            std::vector<std::string>* notes) {
    struct Key {
        std::string measure;
        std::string source;
        Role role;
        int age_years;
        bool operator<(const Key& other) const {
            return std::tie(measure, source, role, age_years) <
                   std::tie(other.measure, other.source, other.role, other.age_years);
        }
    };
    std::map<Key, std::vector<double>> groups;
    std::map<Key, int> undefined_counts;
    for (const MetricRecord& rec : records) {
        int age = grouping == AgeGrouping::Pooled ? -1 : rec.age_months / 12;
        for (Measure m : kAllMeasures) {
            Key key{measure_name(m), rec.source, rec.role, age};
            const MeasureValue& mv = rec.measure(m);
            if (mv.value) {
                groups[key].push_back(*mv.value);
            } else {
                ++undefined_counts[key];
            }
        }
    }
    std::vector<AggregateRow> rows;
    for (const auto& [key, values] : groups) {
        // Seeded per group key so output is independent of record order.
        std::uint64_t group_seed =
            seed ^ fnv1a64(key.measure + "|" + key.source + "|" + role_name(key.role) + "|" +
                           std::to_string(key.age_years));
        BootstrapCi ci = bootstrap_ci(values, n_boot, group_seed);
        AggregateRow row;
        row.measure = key.measure;
        row.source = key.source;
        row.role = key.role;
        row.age_years = key.age_years;
        row.mean = ci.mean;
        row.ci_low = ci.ci_low;
        row.ci_high = ci.ci_high;
        row.n = ci.n;
        rows.push_back(std::move(row));
    }
    if (notes) {
        for (const auto& [key, count] : undefined_counts) {
            if (groups.find(key) == groups.end()) {
                notes->push_back("group omitted (all " + std::to_string(count) +
                                 " values undefined): " + key.measure + "/" + key.source + "/" +
                                 role_name(key.role) +
                                 (key.age_years >= 0
                                      ? "/" + std::to_string(key.age_years) + "y"
                                      : ""));
            } else if (count > 0) {
                notes->push_back(std::to_string(count) + " undefined value(s) excluded: " +
                                 key.measure + "/" + key.source + "/" + role_name(key.role) +
                                 (key.age_years >= 0
                                      ? "/" + std::to_string(key.age_years) + "y"
                                      : ""));
            }
        }
    }
    return rows;
}

RegressionResult regress_vs_reference(std::span<const double> llm_values,
                                      std::span<const double> ref_values,
                                      const std::string& measure,
                                      const std::string& configuration) {
    if (llm_values.size() < 2 || ref_values.size() < 2) {
        throw Error(ErrorCode::DegenerateDesign,
                    "need >= 2 observations per group, got " +
                        std::to_string(llm_values.size()) + " LLM / " +
                        std::to_string(ref_values.size()) + " reference");
    }
    RegressionResult result;
    result.measure = measure;
    result.configuration = configuration;
    const auto n1 = static_cast<double>(llm_values.size());
    const auto n0 = static_cast<double>(ref_values.size());
    const double n = n0 + n1;
    result.n_obs = static_cast<int>(n);

    // OLS on [1, indicator]: closed-form normal equations. The indicator
    // coefficient equals the difference of group means.
    const double mean1 = mean_of(llm_values);
    const double mean0 = mean_of(ref_values);
    result.coefficient = mean1 - mean0;

    double rss = 0.0;
    for (double v : ref_values) rss += (v - mean0) * (v - mean0);
    for (double v : llm_values) rss += (v - mean1) * (v - mean1);
    const double df = n - 2.0;
    const double sigma2 = rss / df;
    result.std_error = std::sqrt(sigma2 * (1.0 / n0 + 1.0 / n1));

    if (rss == 0.0) {
        if (result.coefficient == 0.0) {
            // Identical constant groups: no evidence of any effect.
            result.p_value = 1.0;
        } else {
            result.p_reason = "zero_variance_in_both_groups";
        }
        return result;
    }
    const double t = result.coefficient / result.std_error;
    boost::math::students_t dist(df);
    result.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return result;
}

void build_report(const ReportInputs& inputs, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    // Aggregate and plot-data tables, one file per measure x role pair.
    struct TableKey {
        std::string measure;
        Role role;
        bool operator<(const TableKey& other) const {
            return std::tie(measure, role) < std::tie(other.measure, other.role);
        }
    };
    std::map<TableKey, std::vector<const AggregateRow*>> tables;
    for (const AggregateRow& row : inputs.aggregates) {
        tables[{row.measure, row.role}].push_back(&row);
    }
    for (const auto& [key, rows] : tables) {
        std::string agg = "source,age_years,mean,ci_low,ci_high,n\n";
        std::string plot = "source,x,y,err_low,err_high\n";
        for (const AggregateRow* row : rows) {
            std::string age = row->age_years < 0 ? "all" : std::to_string(row->age_years);
            agg += csv_escape(row->source) + "," + age + "," + format_double(row->mean) + "," +
                   format_double(row->ci_low) + "," + format_double(row->ci_high) + "," +
                   std::to_string(row->n) + "\n";
            plot += csv_escape(row->source) + "," + age + "," + format_double(row->mean) + "," +
                    format_double(row->mean - row->ci_low) + "," +
                    format_double(row->ci_high - row->mean) + "\n";
        }
        std::string stem = key.measure + "_" + role_name(key.role);
        write_text_file((fs::path(out_dir) / ("aggregate_" + stem + ".csv")).string(), agg);
        write_text_file((fs::path(out_dir) / ("plot_" + stem + ".csv")).string(), plot);
    }

    std::string reg = "measure,configuration,role,coefficient,std_error,p_value,p_reason,n_obs\n";
    for (const RegressionResult& r : inputs.regressions) {
        reg += csv_escape(r.measure) + "," + csv_escape(r.configuration) + "," +
               csv_escape(r.role) + "," + format_double(r.coefficient) + "," +
               format_double(r.std_error) + "," +
               (r.p_value ? format_double(*r.p_value) : "") + "," + csv_escape(r.p_reason) +
               "," + std::to_string(r.n_obs) + "\n";
    }
    write_text_file((fs::path(out_dir) / "regressions.csv").string(), reg);

    json summary;
    summary["manifest_digest"] = inputs.manifest_digest;
    summary["record_count"] = inputs.record_count;
    summary["undefined_value_count"] = inputs.undefined_value_count;
    summary["aggregate_rows"] = inputs.aggregates.size();
    summary["regression_rows"] = inputs.regressions.size();
    summary["notes"] = inputs.notes;
    write_text_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2) + "\n");
}

}  // namespace cdsbench
