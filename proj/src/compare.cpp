#include "geoforge/compare.hpp"

#include "geoforge/errors.hpp"
#include "geoforge/util.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>

namespace geoforge {

namespace {

[[noreturn]] void parse_fail(const std::string& label, int line, const std::string& msg)
{
    throw ParseError(label + ":" + std::to_string(line) + ": " + msg);
}

double parse_field(std::string_view field, const std::string& label, int line, const char* what)
{
    double out = 0.0;
    auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
    if (ec != std::errc{} || p != field.data() + field.size())
        parse_fail(label, line, std::string("malformed ") + what + " \"" + std::string(field) + "\"");
    return out;
}

} // namespace

Signal parse_timeseries_text(std::string_view text, const std::string& label)
{
    Signal sig;
    sig.label = label;
    int line_no = 0;
    for (std::string& raw : split_lines(text)) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r')
            raw.pop_back();
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#')
            continue;

        std::size_t ws = line.find_first_of(" \t");
        if (ws == std::string::npos)
            parse_fail(label, line_no, "expected two whitespace-separated columns");
        std::string t_field = line.substr(0, ws);
        std::string v_field = trim(line.substr(ws));
        if (v_field.find_first_of(" \t") != std::string::npos)
            parse_fail(label, line_no, "expected exactly two columns");

        double t = parse_field(t_field, label, line_no, "time");
        double v = parse_field(v_field, label, line_no, "value");
        if (!std::isfinite(t))
            parse_fail(label, line_no, "non-finite time \"" + t_field + "\"");
        if (!std::isfinite(v))
            parse_fail(label, line_no, "non-finite value \"" + v_field + "\"");
        if (!sig.times.empty() && t <= sig.times.back())
            parse_fail(label, line_no, "non-increasing time " + t_field);
        sig.times.push_back(t);
        sig.values.push_back(v);
    }
    if (sig.values.empty())
        throw ParseError(label + ": no samples");
    return sig;
}

Signal parse_timeseries(const std::filesystem::path& path)
{
    return parse_timeseries_text(read_text_file(path), path.string());
}

namespace {

constexpr double kTimeAxisTolerance = 1e-9; // seconds, per sample

// Length and time-axis agreement shared by all tolerance comparators.
void check_aligned(const Signal& a, const Signal& b)
{
    if (a.size() != b.size())
        throw CompareError("length mismatch: " + std::to_string(a.size()) + " vs "
                           + std::to_string(b.size()) + " samples");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a.times[i] - b.times[i]) > kTimeAxisTolerance)
            throw CompareError("time axes differ at sample " + std::to_string(i) + ": "
                               + std::to_string(a.times[i]) + " vs "
                               + std::to_string(b.times[i]));
    }
}

double relative_diff(double x, double y)
{
    double denom = std::max(std::abs(x), std::abs(y));
    if (denom == 0.0)
        return 0.0;
    return std::abs(x - y) / denom;
}

bool bits_equal(double x, double y)
{
    return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
}

} // namespace

DifferenceProfile difference_profile(const Signal& a, const Signal& b)
{
    check_aligned(a, b);
    DifferenceProfile p;
    p.abs_diff.reserve(a.size());
    p.rel_diff.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        p.abs_diff.push_back(std::abs(a.values[i] - b.values[i]));
        p.rel_diff.push_back(relative_diff(a.values[i], b.values[i]));
    }
    return p;
}

ComparisonResult compare_exact(const Signal& a, const Signal& b)
{
    ComparisonResult r;
    r.metric = "exact";
    r.threshold = 0.0;
    if (a.size() != b.size()) {
        r.statistic = static_cast<double>(a.size() > b.size() ? a.size() - b.size()
                                                              : b.size() - a.size());
        r.passed = false;
        r.note = "length mismatch";
        return r;
    }
    std::size_t differing = 0;
    DifferenceProfile profile; // exact tolerates mismatched time axes, so build inline
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!bits_equal(a.times[i], b.times[i]) || !bits_equal(a.values[i], b.values[i]))
            ++differing;
        profile.abs_diff.push_back(std::abs(a.values[i] - b.values[i]));
        profile.rel_diff.push_back(relative_diff(a.values[i], b.values[i]));
    }
    r.statistic = static_cast<double>(differing);
    r.passed = differing == 0;
    r.profile = std::move(profile);
    return r;
}

ComparisonResult compare_absolute(const Signal& a, const Signal& b, double tol)
{
    check_aligned(a, b);
    ComparisonResult r;
    r.metric = "absolute";
    r.threshold = tol;
    r.profile = difference_profile(a, b);
    r.statistic = *std::max_element(r.profile->abs_diff.begin(), r.profile->abs_diff.end());
    r.passed = r.statistic <= tol;
    return r;
}

ComparisonResult compare_relative(const Signal& a, const Signal& b, double tol)
{
    check_aligned(a, b);
    ComparisonResult r;
    r.metric = "relative";
    r.threshold = tol;
    r.profile = difference_profile(a, b);
    r.statistic = *std::max_element(r.profile->rel_diff.begin(), r.profile->rel_diff.end());
    r.passed = r.statistic <= tol;
    return r;
}

ComparisonResult compare_l2(const Signal& a, const Signal& b, double tol)
{
    check_aligned(a, b);
    ComparisonResult r;
    r.metric = "l2";
    r.threshold = tol;
    r.profile = difference_profile(a, b);
    double diff_sq = 0.0, ref_sq = 0.0, cand_sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.values[i] - b.values[i];
        diff_sq += d * d;
        ref_sq += a.values[i] * a.values[i];
        cand_sq += b.values[i] * b.values[i];
    }
    if (ref_sq == 0.0) {
        r.statistic = std::sqrt(cand_sq);
        r.note = "zero-reference fallback";
    } else {
        r.statistic = std::sqrt(diff_sq) / std::sqrt(ref_sq);
    }
    r.passed = r.statistic <= tol;
    return r;
}

ComparisonResult compare_correlation(const Signal& a, const Signal& b, double threshold)
{
    check_aligned(a, b);
    if (a.size() < 2)
        throw CompareError("correlation needs at least 2 samples, got "
                           + std::to_string(a.size()));
    std::size_t n = a.size();
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += a.values[i];
        mean_b += b.values[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);

    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double da = a.values[i] - mean_a;
        double db = b.values[i] - mean_b;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw CompareError("zero variance in " + std::string(saa == 0.0 ? "reference" : "candidate")
                           + " signal; correlation undefined, fall back to an absolute comparison");

    ComparisonResult r;
    r.metric = "correlation";
    r.threshold = threshold;
    r.statistic = sab / std::sqrt(saa * sbb);
    r.passed = r.statistic >= threshold;
    r.profile = difference_profile(a, b);
    return r;
}

ComparisonResult compare_signals(const Signal& golden, const Signal& candidate,
                                 Comparator comparator, double threshold)
{
    switch (comparator) {
    case Comparator::Exact: return compare_exact(golden, candidate);
    case Comparator::Absolute: return compare_absolute(golden, candidate, threshold);
    case Comparator::Relative: return compare_relative(golden, candidate, threshold);
    case Comparator::L2: return compare_l2(golden, candidate, threshold);
    case Comparator::Correlation: return compare_correlation(golden, candidate, threshold);
    }
    throw CompareError("unhandled comparator");
}

} // namespace geoforge
