#include "geoforge/report.hpp"

#include "geoforge/errors.hpp"
#include "geoforge/util.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace geoforge {

const char* color_class(CellStatus::Build s)
{
    switch (s) {
    case CellStatus::Build::Succeeded: return "green";
    case CellStatus::Build::Failed: return "red";
    case CellStatus::Build::TimedOut: return "red";
    case CellStatus::Build::Running: return "yellow";
    }
    return "?";
}

const char* color_class(CellStatus::Test s)
{
    switch (s) {
    case CellStatus::Test::Passed: return "green";
    case CellStatus::Test::Failed: return "red";
    case CellStatus::Test::TimedOut: return "red";
    case CellStatus::Test::Running: return "yellow";
    case CellStatus::Test::Skipped: return "grey";
    }
    return "?";
}

namespace {

CellStatus::Build to_cell_build(BuildStatus s)
{
    switch (s) {
    case BuildStatus::Succeeded: return CellStatus::Build::Succeeded;
    case BuildStatus::Failed: return CellStatus::Build::Failed;
    case BuildStatus::TimedOut: return CellStatus::Build::TimedOut;
    }
    return CellStatus::Build::Failed;
}

CellStatus::Test to_cell_test(TestStatus s)
{
    switch (s) {
    case TestStatus::Passed: return CellStatus::Test::Passed;
    case TestStatus::Failed: return CellStatus::Test::Failed;
    case TestStatus::TimedOut: return CellStatus::Test::TimedOut;
    case TestStatus::Skipped: return CellStatus::Test::Skipped;
    }
    return CellStatus::Test::Failed;
}

// Manifest declaration order first; ids the manifest does not know sort
// after, alphabetically.
std::vector<std::string> ordered_ids(const std::vector<std::string>& declared,
                                     const std::set<std::string>& present)
{
    std::vector<std::string> out;
    for (const auto& id : declared)
        if (present.count(id))
            out.push_back(id);
    std::vector<std::string> extra;
    for (const auto& id : present)
        if (std::find(out.begin(), out.end(), id) == out.end())
            extra.push_back(id);
    std::sort(extra.begin(), extra.end());
    out.insert(out.end(), extra.begin(), extra.end());
    return out;
}

} // namespace

MatrixResult build_matrix(const Manifest& manifest, const std::vector<CellResult>& results,
                          const std::vector<InFlightCell>& running)
{
    MatrixResult matrix;
    matrix.generated_at_ms = now_ms();

    std::set<std::string> codes, platforms;
    auto add_cell = [&](const std::string& code, const std::string& platform, CellStatus status) {
        auto key = std::make_pair(code, platform);
        if (!matrix.cells.emplace(key, std::move(status)).second)
            throw ValidationError("duplicate cell (" + code + ", " + platform + ")");
        codes.insert(code);
        platforms.insert(platform);
    };

    for (const auto& r : results) {
        CellStatus status;
        status.build = to_cell_build(r.build.status);
        status.test = to_cell_test(r.test.status);
        status.build_log_link = r.build_log_path.string();
        status.test_log_link = r.test_log_path.string();
        add_cell(r.code_id, r.platform_id, std::move(status));
    }
    for (const auto& cell : running) {
        CellStatus status;
        status.build = CellStatus::Build::Running;
        status.test = CellStatus::Test::Running;
        add_cell(cell.code_id, cell.platform_id, std::move(status));
    }

    std::vector<std::string> declared_codes, declared_platforms;
    for (const auto& c : manifest.codes)
        declared_codes.push_back(c.id);
    for (const auto& p : manifest.platforms)
        declared_platforms.push_back(p.id);
    matrix.codes = ordered_ids(declared_codes, codes);
    matrix.platforms = ordered_ids(declared_platforms, platforms);
    return matrix;
}

namespace {

void render_sub_cell(std::ostringstream& out, const char* phase, const char* color,
                     bool timed_out, const std::string& link)
{
    out << "<span class=\"sub " << phase << " " << color << "\">";
    std::string label = std::string(phase) + (timed_out ? " (timeout)" : "");
    if (!link.empty())
        out << "<a href=\"" << html_escape(link) << "\">" << label << "</a>";
    else
        out << label;
    out << "</span>";
}

} // namespace

std::string render_html(const MatrixResult& matrix)
{
    std::ostringstream out;
    out << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        << "<title>geoforge dashboard</title>\n"
        << "<style>\n"
        << "body { font-family: sans-serif; background: #ffffff; color: #222222; }\n"
        << "table.matrix { border-collapse: collapse; }\n"
        << ".matrix th, .matrix td { border: 1px solid #999999; padding: 4px 8px; }\n"
        << ".matrix th.code { text-align: left; }\n"
        << ".sub { display: inline-block; min-width: 6em; padding: 2px 6px; text-align: center; }\n"
        << ".sub a { color: inherit; }\n"
        << ".green { background: #3fb950; color: #ffffff; }\n"
        << ".red { background: #d73a49; color: #ffffff; }\n"
        << ".yellow { background: #f2cc60; color: #222222; }\n"
        << ".grey { background: #b0b0b0; color: #222222; }\n"
        << ".empty { background: #f5f5f5; }\n"
        << "</style>\n</head>\n<body>\n"
        << "<h1>Build and test dashboard</h1>\n"
        << "<p class=\"generated\">Generated " << format_iso8601(matrix.generated_at_ms)
        << "</p>\n"
        << "<table class=\"matrix\">\n";

    out << "<tr><th></th>";
    for (const auto& p : matrix.platforms)
        out << "<th>" << html_escape(p) << "</th>";
    out << "</tr>\n";

    for (const auto& code : matrix.codes) {
        out << "<tr><th class=\"code\">" << html_escape(code) << "</th>";
        for (const auto& platform : matrix.platforms) {
            auto it = matrix.cells.find(std::make_pair(code, platform));
            if (it == matrix.cells.end()) {
                out << "<td class=\"empty\"></td>";
                continue;
            }
            const CellStatus& cell = it->second;
            out << "<td class=\"cell\">";
            render_sub_cell(out, "build", color_class(cell.build),
                            cell.build == CellStatus::Build::TimedOut, cell.build_log_link);
            render_sub_cell(out, "test", color_class(cell.test),
                            cell.test == CellStatus::Test::TimedOut, cell.test_log_link);
            out << "</td>";
        }
        out << "</tr>\n";
    }
    out << "</table>\n</body>\n</html>\n";
    return out.str();
}

std::string render_summary(const MatrixResult& matrix)
{
    std::size_t passed = 0, failed = 0, running = 0, skipped = 0;
    std::ostringstream details;

    for (const auto& code : matrix.codes) {
        for (const auto& platform : matrix.platforms) {
            auto it = matrix.cells.find(std::make_pair(code, platform));
            if (it == matrix.cells.end())
                continue;
            const CellStatus& cell = it->second;
            bool is_running = cell.build == CellStatus::Build::Running
                || cell.test == CellStatus::Test::Running;
            bool is_green = cell.build == CellStatus::Build::Succeeded
                && cell.test == CellStatus::Test::Passed;
            if (cell.test == CellStatus::Test::Skipped)
                ++skipped;
            if (is_green) {
                ++passed;
                continue;
            }
            if (is_running)
                ++running;
            else
                ++failed;

            const char* phase;
            std::string what;
            std::string log;
            if (cell.build != CellStatus::Build::Succeeded) {
                phase = "build";
                log = cell.build_log_link;
                switch (cell.build) {
                case CellStatus::Build::Failed: what = "failed"; break;
                case CellStatus::Build::TimedOut: what = "timed out"; break;
                case CellStatus::Build::Running: what = "running"; break;
                default: what = "failed"; break;
                }
            } else {
                phase = "test";
                log = cell.test_log_link;
                switch (cell.test) {
                case CellStatus::Test::Failed: what = "failed"; break;
                case CellStatus::Test::TimedOut: what = "timed out"; break;
                case CellStatus::Test::Running: what = "running"; break;
                case CellStatus::Test::Skipped: what = "skipped"; break;
                default: what = "failed"; break;
                }
            }
            details << code << " / " << platform << ": " << phase << " " << what;
            if (!log.empty())
                details << " [log: " << log << "]";
            details << "\n";
        }
    }

    std::ostringstream out;
    out << "geoforge test summary - generated " << format_iso8601(matrix.generated_at_ms) << "\n";
    out << passed << " passed, " << failed << " failed, " << running << " running, " << skipped
        << " skipped\n";
    std::string detail_text = details.str();
    if (!detail_text.empty())
        out << "\n" << detail_text;
    return out.str();
}

} // namespace geoforge
