#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "geoforge/errors.hpp"
#include "geoforge/report.hpp"
#include "testutil.hpp"

#include <string>
#include <vector>

using namespace geoforge;

namespace {

const char* kManifest = R"(
[platform gcc]
description = g

[platform clang]
description = c

[code mantle]
repo = x
revision-probe = echo r
build = true
platform = gcc
platform = clang

[code crust]
repo = x
revision-probe = echo r
build = true
platform = gcc
platform = clang

[code core]
repo = x
revision-probe = echo r
build = true
platform = gcc
platform = clang
)";

CellResult cell(const std::string& code, const std::string& platform, BuildStatus build,
                TestStatus test)
{
    CellResult c;
    c.code_id = code;
    c.platform_id = platform;
    c.revision = "r1";
    c.build.status = build;
    c.test.status = test;
    c.build_log_path = "/logs/" + code + "-" + platform + "-build.log";
    c.test_log_path = "/logs/" + code + "-" + platform + "-test.log";
    return c;
}

} // namespace

TEST_CASE("every status maps to exactly the documented color")
{
    CHECK(std::string(color_class(CellStatus::Build::Succeeded)) == "green");
    CHECK(std::string(color_class(CellStatus::Build::Failed)) == "red");
    CHECK(std::string(color_class(CellStatus::Build::TimedOut)) == "red");
    CHECK(std::string(color_class(CellStatus::Build::Running)) == "yellow");

    CHECK(std::string(color_class(CellStatus::Test::Passed)) == "green");
    CHECK(std::string(color_class(CellStatus::Test::Failed)) == "red");
    CHECK(std::string(color_class(CellStatus::Test::TimedOut)) == "red");
    CHECK(std::string(color_class(CellStatus::Test::Running)) == "yellow");
    CHECK(std::string(color_class(CellStatus::Test::Skipped)) == "grey");

    // grey appears for skipped tests and nothing else
    for (auto t : {CellStatus::Test::Passed, CellStatus::Test::Failed, CellStatus::Test::Running,
                   CellStatus::Test::TimedOut})
        CHECK(std::string(color_class(t)) != "grey");
}

TEST_CASE("the matrix follows manifest declaration order")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("core", "clang", BuildStatus::Succeeded, TestStatus::Passed),
        cell("mantle", "gcc", BuildStatus::Succeeded, TestStatus::Passed),
    };
    MatrixResult matrix = build_matrix(m, results);
    REQUIRE(matrix.codes.size() == 2);
    CHECK(matrix.codes[0] == "mantle"); // declared before core
    CHECK(matrix.codes[1] == "core");
    REQUIRE(matrix.platforms.size() == 2);
    CHECK(matrix.platforms[0] == "gcc");
    CHECK(matrix.platforms[1] == "clang");
}

TEST_CASE("ids the manifest does not know sort after declared ones")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("zz-legacy", "gcc", BuildStatus::Succeeded, TestStatus::Passed),
        cell("aa-legacy", "gcc", BuildStatus::Succeeded, TestStatus::Passed),
        cell("mantle", "gcc", BuildStatus::Succeeded, TestStatus::Passed),
    };
    MatrixResult matrix = build_matrix(m, results);
    REQUIRE(matrix.codes.size() == 3);
    CHECK(matrix.codes[0] == "mantle");
    CHECK(matrix.codes[1] == "aa-legacy");
    CHECK(matrix.codes[2] == "zz-legacy");
}

TEST_CASE("in-flight cells show as running")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{cell("mantle", "gcc", BuildStatus::Succeeded,
                                         TestStatus::Passed)};
    MatrixResult matrix = build_matrix(m, results, {{"crust", "gcc"}});
    const CellStatus& running = matrix.cells.at({"crust", "gcc"});
    CHECK(running.build == CellStatus::Build::Running);
    CHECK(running.test == CellStatus::Test::Running);
}

TEST_CASE("duplicate cells are rejected and name the pair")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("mantle", "gcc", BuildStatus::Succeeded, TestStatus::Passed),
        cell("mantle", "gcc", BuildStatus::Failed, TestStatus::Skipped),
    };
    CHECK_THROWS_WITH_AS(build_matrix(m, results), doctest::Contains("mantle"),
                         ValidationError);
    CHECK_THROWS_AS(build_matrix(m, {results[0]}, {{"mantle", "gcc"}}), ValidationError);
}

TEST_CASE("html marks build and test sub-cells with their color classes")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("mantle", "gcc", BuildStatus::Succeeded, TestStatus::Passed),
        cell("mantle", "clang", BuildStatus::Failed, TestStatus::Skipped),
    };
    MatrixResult matrix = build_matrix(m, results);
    std::string html = render_html(matrix);

    CHECK(html.find("class=\"sub build green\"") != std::string::npos);
    CHECK(html.find("class=\"sub test green\"") != std::string::npos);
    CHECK(html.find("class=\"sub build red\"") != std::string::npos);
    CHECK(html.find("class=\"sub test grey\"") != std::string::npos);
    CHECK(html.find("/logs/mantle-gcc-build.log") != std::string::npos);
    CHECK(html.find("<script") == std::string::npos);
}

TEST_CASE("timeouts render red with an annotation")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("mantle", "gcc", BuildStatus::TimedOut, TestStatus::Skipped)};
    std::string html = render_html(build_matrix(m, results));
    CHECK(html.find("class=\"sub build red\"") != std::string::npos);
    CHECK(html.find("(timeout)") != std::string::npos);
}

TEST_CASE("running cells render yellow")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::string html = render_html(build_matrix(m, {}, {{"mantle", "gcc"}}));
    CHECK(html.find("class=\"sub build yellow\"") != std::string::npos);
    CHECK(html.find("class=\"sub test yellow\"") != std::string::npos);
}

TEST_CASE("rendering is deterministic for identical input")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("mantle", "gcc", BuildStatus::Succeeded, TestStatus::Passed),
        cell("crust", "gcc", BuildStatus::Failed, TestStatus::Skipped),
    };
    MatrixResult matrix = build_matrix(m, results);
    matrix.generated_at_ms = 1755864000000; // pinned so both renders agree
    CHECK(render_html(matrix) == render_html(matrix));
    CHECK(render_summary(matrix) == render_summary(matrix));
}

TEST_CASE("summary counts a three-by-two matrix with two broken builds")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("mantle", "gcc", BuildStatus::Succeeded, TestStatus::Passed),
        cell("mantle", "clang", BuildStatus::Succeeded, TestStatus::Passed),
        cell("crust", "gcc", BuildStatus::Failed, TestStatus::Skipped),
        cell("crust", "clang", BuildStatus::Succeeded, TestStatus::Passed),
        cell("core", "gcc", BuildStatus::Failed, TestStatus::Skipped),
        cell("core", "clang", BuildStatus::Succeeded, TestStatus::Passed),
    };
    std::string summary = render_summary(build_matrix(m, results));
    CHECK(summary.find("4 passed, 2 failed, 0 running, 2 skipped") != std::string::npos);
    CHECK(summary.find("crust / gcc: build failed") != std::string::npos);
    CHECK(summary.find("core / gcc: build failed") != std::string::npos);
    CHECK(summary.find("/logs/crust-gcc-build.log") != std::string::npos);
}

TEST_CASE("an all-green summary reports zero failures and no detail lines")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("mantle", "gcc", BuildStatus::Succeeded, TestStatus::Passed),
        cell("mantle", "clang", BuildStatus::Succeeded, TestStatus::Passed),
    };
    std::string summary = render_summary(build_matrix(m, results));
    CHECK(summary.find("2 passed, 0 failed, 0 running, 0 skipped") != std::string::npos);
    CHECK(summary.find(" / ") == std::string::npos); // no per-cell lines
}

TEST_CASE("summary points at the test log when the build was fine")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("mantle", "gcc", BuildStatus::Succeeded, TestStatus::Failed)};
    std::string summary = render_summary(build_matrix(m, results));
    CHECK(summary.find("mantle / gcc: test failed") != std::string::npos);
    CHECK(summary.find("/logs/mantle-gcc-test.log") != std::string::npos);
}

TEST_CASE("running cells count as running, not failed")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("mantle", "gcc", BuildStatus::Succeeded, TestStatus::Passed)};
    std::string summary = render_summary(build_matrix(m, results, {{"crust", "gcc"}}));
    CHECK(summary.find("1 passed, 0 failed, 1 running, 0 skipped") != std::string::npos);
    CHECK(summary.find("crust / gcc: build running") != std::string::npos);
}

TEST_CASE("html escapes untrusted identifier text")
{
    Manifest m = parse_manifest(kManifest, "t", "/x");
    std::vector<CellResult> results{
        cell("mantle", "gcc", BuildStatus::Succeeded, TestStatus::Passed)};
    results[0].code_id = "evil<script>";
    std::string html = render_html(build_matrix(m, results));
    CHECK(html.find("evil<script>") == std::string::npos);
    CHECK(html.find("evil&lt;script&gt;") != std::string::npos);
}
