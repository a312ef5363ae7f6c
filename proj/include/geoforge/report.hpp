#pragma once

#include "geoforge/executor.hpp"
#include "geoforge/manifest.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace geoforge {

// One dashboard cell. Color classes: failure/timeout -> red, running ->
// yellow, success/pass -> green, skipped test -> grey.
struct CellStatus {
    enum class Build { Succeeded, Failed, Running, TimedOut };
    enum class Test { Passed, Failed, Running, Skipped, TimedOut };

    Build build = Build::Failed;
    Test test = Test::Skipped;
    std::string build_log_link; // may be empty
    std::string test_log_link;
};

const char* color_class(CellStatus::Build s);
const char* color_class(CellStatus::Test s);

struct MatrixResult {
    std::vector<std::string> codes;     // rows, manifest declaration order
    std::vector<std::string> platforms; // columns, manifest declaration order
    std::map<std::pair<std::string, std::string>, CellStatus> cells;
    std::int64_t generated_at_ms = 0;
};

struct InFlightCell {
    std::string code_id;
    std::string platform_id;
};

// Rows and columns are ordered by manifest declaration; ids unknown to the
// manifest sort after the declared ones, alphabetically. Duplicate
// (code, platform) pairs across the inputs are an aggregation error.
MatrixResult build_matrix(const Manifest& manifest, const std::vector<CellResult>& results,
                          const std::vector<InFlightCell>& running = {});

// Static HTML table, inline CSS, no scripts. Byte-deterministic for equal
// inputs (generated_at included).
std::string render_html(const MatrixResult& matrix);

// Plain text suitable as an email body: a counts header, then one line per
// non-green cell naming code, platform, phase and log path.
std::string render_summary(const MatrixResult& matrix);

} // namespace geoforge
