#include "geoforge/results.hpp"

#include "geoforge/errors.hpp"
#include "geoforge/util.hpp"

#include <algorithm>

#include <json.hpp>

using nlohmann::json;

namespace geoforge {

namespace {

BuildStatus build_status_from_name(const std::string& s, const std::string& origin)
{
    if (s == "Succeeded")
        return BuildStatus::Succeeded;
    if (s == "Failed")
        return BuildStatus::Failed;
    if (s == "TimedOut")
        return BuildStatus::TimedOut;
    throw ParseError(origin + ": unknown build status \"" + s + "\"");
}

TestStatus test_status_from_name(const std::string& s, const std::string& origin)
{
    if (s == "Passed")
        return TestStatus::Passed;
    if (s == "Failed")
        return TestStatus::Failed;
    if (s == "TimedOut")
        return TestStatus::TimedOut;
    if (s == "Skipped")
        return TestStatus::Skipped;
    throw ParseError(origin + ": unknown test status \"" + s + "\"");
}

} // namespace

std::string cell_result_to_json(const CellResult& cell)
{
    json j;
    j["schema"] = 1;
    j["code"] = cell.code_id;
    j["platform"] = cell.platform_id;
    j["revision"] = cell.revision;
    j["started_at_ms"] = cell.started_at_ms;
    j["finished_at_ms"] = cell.finished_at_ms;
    j["workdir"] = cell.workdir.string();

    json b;
    b["status"] = build_status_name(cell.build.status);
    b["duration_s"] = cell.build.duration_s;
    if (cell.build.step_index_failed)
        b["step_index_failed"] = *cell.build.step_index_failed;
    b["log_path"] = cell.build_log_path.string();
    j["build"] = std::move(b);

    json t;
    t["status"] = test_status_name(cell.test.status);
    t["duration_s"] = cell.test.duration_s;
    t["log_path"] = cell.test_log_path.string();
    t["per_test"] = json::array();
    for (const auto& pt : cell.test.per_test) {
        json e;
        e["test"] = pt.test_id;
        if (!pt.error.empty())
            e["error"] = pt.error;
        if (pt.comparison) {
            json c;
            c["metric"] = pt.comparison->metric;
            c["statistic"] = pt.comparison->statistic;
            c["threshold"] = pt.comparison->threshold;
            c["passed"] = pt.comparison->passed;
            if (!pt.comparison->note.empty())
                c["note"] = pt.comparison->note;
            e["comparison"] = std::move(c);
        }
        t["per_test"].push_back(std::move(e));
    }
    j["test"] = std::move(t);
    return j.dump(2) + "\n";
}

CellResult cell_result_from_json(const std::string& text, const std::string& origin)
{
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw ParseError(origin + ": not valid JSON");
    try {
        CellResult cell;
        cell.code_id = j.at("code").get<std::string>();
        cell.platform_id = j.at("platform").get<std::string>();
        cell.revision = j.at("revision").get<std::string>();
        cell.started_at_ms = j.value("started_at_ms", std::int64_t{0});
        cell.finished_at_ms = j.value("finished_at_ms", std::int64_t{0});
        cell.workdir = j.value("workdir", "");

        const json& b = j.at("build");
        cell.build.status = build_status_from_name(b.at("status").get<std::string>(), origin);
        cell.build.duration_s = b.value("duration_s", 0.0);
        if (b.contains("step_index_failed"))
            cell.build.step_index_failed = b.at("step_index_failed").get<int>();
        cell.build_log_path = b.value("log_path", "");

        const json& t = j.at("test");
        cell.test.status = test_status_from_name(t.at("status").get<std::string>(), origin);
        cell.test.duration_s = t.value("duration_s", 0.0);
        cell.test_log_path = t.value("log_path", "");
        for (const auto& e : t.value("per_test", json::array())) {
            TestCaseOutcome pt;
            pt.test_id = e.at("test").get<std::string>();
            pt.error = e.value("error", "");
            if (e.contains("comparison")) {
                const json& c = e.at("comparison");
                ComparisonResult cr;
                cr.metric = c.value("metric", "");
                cr.statistic = c.value("statistic", 0.0);
                cr.threshold = c.value("threshold", 0.0);
                cr.passed = c.value("passed", false);
                cr.note = c.value("note", "");
                pt.comparison = std::move(cr);
            }
            cell.test.per_test.push_back(std::move(pt));
        }
        return cell;
    } catch (const json::exception& e) {
        throw ParseError(origin + ": malformed cell result: " + e.what());
    }
}

void save_cell_result(const std::filesystem::path& results_dir, const CellResult& cell)
{
    std::filesystem::path dir = results_dir / sanitize_path_component(cell.code_id);
    std::filesystem::create_directories(dir);
    write_text_file_atomic(dir / (sanitize_path_component(cell.platform_id) + ".json"),
                           cell_result_to_json(cell));
}

std::vector<CellResult> load_cell_results(const std::filesystem::path& results_dir)
{
    std::vector<CellResult> out;
    std::error_code ec;
    if (!std::filesystem::exists(results_dir, ec))
        return out;
    std::vector<std::filesystem::path> files;
    for (const auto& code_dir : std::filesystem::directory_iterator(results_dir, ec)) {
        if (!code_dir.is_directory())
            continue;
        for (const auto& f : std::filesystem::directory_iterator(code_dir.path(), ec)) {
            if (f.path().extension() == ".json")
                files.push_back(f.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
        out.push_back(cell_result_from_json(read_text_file(f), f.string()));
    return out;
}

} // namespace geoforge
