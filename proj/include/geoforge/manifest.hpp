#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace geoforge {

// The manifest file format is documented in docs/manifest-format.md.

struct CodeSpec {
    std::string id;
    std::string repo_url;
    std::string revision_probe;
    std::vector<std::string> build_steps;
    std::vector<std::string> library_ids;
    std::vector<std::string> platform_ids;
    std::vector<std::string> test_ids;
    int timeout_build_s = 600;
    int timeout_test_s = 300;

    bool operator==(const CodeSpec&) const = default;
};

struct LibrarySpec {
    std::string id;
    std::string version;
    std::vector<std::string> build_steps;
    std::string install_marker; // relative path that must exist after install

    bool operator==(const LibrarySpec&) const = default;
};

struct PlatformSpec {
    std::string id;
    std::string description;
    std::map<std::string, std::string> env;
    std::string workdir_root; // relative paths resolve against the data dir

    bool operator==(const PlatformSpec&) const = default;
};

enum class Comparator { Exact, Absolute, Relative, L2, Correlation };

const char* comparator_name(Comparator c);
std::optional<Comparator> comparator_from_name(std::string_view name);

// Comparators with a conventional default threshold (correlation, l2)
// may omit it in the manifest; absolute and relative may not.
std::optional<double> comparator_default_threshold(Comparator c);

struct TestSpec {
    std::string id;
    std::vector<std::string> run_steps;
    std::string output_path; // relative to the unit workdir
    std::string golden_path; // absolute, or relative to the manifest file
    Comparator comparator = Comparator::Exact;
    double threshold = 0.0;

    bool operator==(const TestSpec&) const = default;
};

struct Manifest {
    std::vector<CodeSpec> codes;
    std::vector<LibrarySpec> libraries;
    std::vector<PlatformSpec> platforms;
    std::vector<TestSpec> tests;

    // Directory of the file this manifest was loaded from; relative golden
    // paths resolve against it. Not part of structural equality.
    std::filesystem::path base_dir;

    const CodeSpec* find_code(std::string_view id) const;
    const LibrarySpec* find_library(std::string_view id) const;
    const PlatformSpec* find_platform(std::string_view id) const;
    const TestSpec* find_test(std::string_view id) const;

    bool operator==(const Manifest& other) const
    {
        return codes == other.codes && libraries == other.libraries
            && platforms == other.platforms && tests == other.tests;
    }
};

Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest(std::string_view text, const std::string& origin,
                        const std::filesystem::path& base_dir = {});
std::string serialize_manifest(const Manifest& manifest);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// One (platform, libraries, build, tests) execution unit of a plan.
struct PlanUnit {
    PlatformSpec platform;
    std::vector<LibrarySpec> libraries; // declaration order
    std::vector<std::string> build_steps;
    std::vector<TestSpec> tests; // golden paths resolved to absolute

    bool operator==(const PlanUnit&) const = default;
};

struct TestPlan {
    std::string code_id;
    std::string revision;
    int timeout_build_s = 600;
    int timeout_test_s = 300;
    std::vector<PlanUnit> units; // one per declared platform, declaration order

    bool operator==(const TestPlan&) const = default;
};

TestPlan generate_test_plan(const Manifest& manifest, const std::string& code_id,
                            const std::string& revision);

} // namespace geoforge
