#pragma once

#include "geoforge/manifest.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace geoforge {

// A sampled time series: strictly increasing times, finite values.
struct Signal {
    std::vector<double> times;
    std::vector<double> values;
    std::string label;

    std::size_t size() const { return values.size(); }

    bool operator==(const Signal&) const = default;
};

// Two-column whitespace-separated ASCII (time, value). Lines starting with
// '#' and blank lines are ignored. Decimal and scientific notation accepted.
Signal parse_timeseries(const std::filesystem::path& path);
Signal parse_timeseries_text(std::string_view text, const std::string& label);

struct DifferenceProfile {
    std::vector<double> abs_diff;
    std::vector<double> rel_diff;

    bool operator==(const DifferenceProfile&) const = default;
};

struct ComparisonResult {
    std::string metric;
    double statistic = 0.0;
    double threshold = 0.0;
    bool passed = false;
    // Nonempty for degenerate cases that need surfacing: "length mismatch"
    // (exact) or "zero-reference fallback" (l2 with a zero golden signal).
    std::string note;
    std::optional<DifferenceProfile> profile;
};

// Statistic: count of samples whose (time, value) bits differ.
ComparisonResult compare_exact(const Signal& a, const Signal& b);

// Statistic: max |a_i - b_i|. Passes iff <= tol.
ComparisonResult compare_absolute(const Signal& a, const Signal& b, double tol);

// Statistic: max |a_i - b_i| / max(|a_i|, |b_i|), 0 when both are 0.
ComparisonResult compare_relative(const Signal& a, const Signal& b, double tol);

// Statistic: ||a - b||_2 / ||a||_2, with ||b||_2 as a flagged fallback when
// the reference norm is zero. `a` is the golden reference.
ComparisonResult compare_l2(const Signal& a, const Signal& b, double tol);

// Statistic: zero-lag Pearson correlation. Passes iff >= threshold.
// Throws CompareError on zero variance (fall back to an absolute comparison).
ComparisonResult compare_correlation(const Signal& a, const Signal& b, double threshold);

DifferenceProfile difference_profile(const Signal& a, const Signal& b);

// Dispatch on the manifest comparator enum; `golden` is the reference side.
ComparisonResult compare_signals(const Signal& golden, const Signal& candidate,
                                 Comparator comparator, double threshold);

} // namespace geoforge
