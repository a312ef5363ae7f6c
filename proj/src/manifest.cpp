#include "geoforge/manifest.hpp"

#include "geoforge/command.hpp"
#include "geoforge/errors.hpp"
#include "geoforge/util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace geoforge {

const char* comparator_name(Comparator c)
{
    switch (c) {
    case Comparator::Exact: return "exact";
    case Comparator::Absolute: return "absolute";
    case Comparator::Relative: return "relative";
    case Comparator::L2: return "l2";
    case Comparator::Correlation: return "correlation";
    }
    return "?";
}

std::optional<Comparator> comparator_from_name(std::string_view name)
{
    if (name == "exact")
        return Comparator::Exact;
    if (name == "absolute")
        return Comparator::Absolute;
    if (name == "relative")
        return Comparator::Relative;
    if (name == "l2")
        return Comparator::L2;
    if (name == "correlation")
        return Comparator::Correlation;
    return std::nullopt;
}

std::optional<double> comparator_default_threshold(Comparator c)
{
    switch (c) {
    case Comparator::Correlation: return 0.999;
    case Comparator::L2: return 1e-6;
    case Comparator::Exact: return 0.0;
    default: return std::nullopt;
    }
}

const CodeSpec* Manifest::find_code(std::string_view id) const
{
    for (const auto& c : codes)
        if (c.id == id)
            return &c;
    return nullptr;
}

const LibrarySpec* Manifest::find_library(std::string_view id) const
{
    for (const auto& l : libraries)
        if (l.id == id)
            return &l;
    return nullptr;
}

const PlatformSpec* Manifest::find_platform(std::string_view id) const
{
    for (const auto& p : platforms)
        if (p.id == id)
            return &p;
    return nullptr;
}

const TestSpec* Manifest::find_test(std::string_view id) const
{
    for (const auto& t : tests)
        if (t.id == id)
            return &t;
    return nullptr;
}

namespace {

struct Cursor {
    const std::string& origin;
    int line = 0;

    [[noreturn]] void fail(const std::string& msg) const
    {
        throw ParseError(origin + ":" + std::to_string(line) + ": " + msg);
    }

    [[noreturn]] void invalid(const std::string& msg) const
    {
        throw ValidationError(origin + ":" + std::to_string(line) + ": " + msg);
    }
};

int parse_positive_int(const std::string& value, const Cursor& cur, const char* what)
{
    int out = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || p != value.data() + value.size())
        cur.fail(std::string("invalid integer for ") + what + ": \"" + value + "\"");
    if (out <= 0)
        cur.invalid(std::string(what) + " must be positive, got " + value);
    return out;
}

double parse_finite_double(const std::string& value, const Cursor& cur, const char* what)
{
    double out = 0.0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || p != value.data() + value.size())
        cur.fail(std::string("invalid number for ") + what + ": \"" + value + "\"");
    if (!std::isfinite(out))
        cur.invalid(std::string(what) + " must be finite, got " + value);
    return out;
}

bool valid_id(const std::string& id)
{
    if (id.empty() || id.size() > 64)
        return false;
    for (char c : id) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9')
            || c == '.' || c == '_' || c == '-';
        if (!ok)
            return false;
    }
    return id != "." && id != "..";
}

bool relative_without_traversal(const std::string& path)
{
    if (path.empty())
        return false;
    std::filesystem::path p(path);
    if (p.is_absolute())
        return false;
    for (const auto& part : p)
        if (part == "..")
            return false;
    return true;
}

void check_template_vars(const std::string& tmpl, const std::set<std::string>& allowed,
                         const std::string& where)
{
    for (const auto& name : template_variables(tmpl)) {
        if (!allowed.count(name))
            throw ValidationError(where + ": unknown substitution variable {" + name + "}");
    }
}

const std::set<std::string> kProbeVars = {"workdir"};
const std::set<std::string> kCodeBuildVars = {"workdir", "libdir", "revision"};
const std::set<std::string> kLibBuildVars = {"workdir", "libdir"};
const std::set<std::string> kTestRunVars = {"workdir", "libdir", "revision", "output"};

struct TestParseState {
    bool has_threshold = false;
    bool has_comparator = false;
    int header_line = 0;
};

void validate_manifest(const Manifest& m, const std::string& origin,
                       const std::map<std::string, TestParseState>& test_states)
{
    auto dup_check = [&](const char* kind, const std::vector<std::string>& ids) {
        std::set<std::string> seen;
        for (const auto& id : ids)
            if (!seen.insert(id).second)
                throw ValidationError(origin + ": duplicate " + kind + " id \"" + id + "\"");
    };
    std::vector<std::string> ids;
    for (const auto& c : m.codes)
        ids.push_back(c.id);
    dup_check("code", ids);
    ids.clear();
    for (const auto& l : m.libraries)
        ids.push_back(l.id);
    dup_check("library", ids);
    ids.clear();
    for (const auto& p : m.platforms)
        ids.push_back(p.id);
    dup_check("platform", ids);
    ids.clear();
    for (const auto& t : m.tests)
        ids.push_back(t.id);
    dup_check("test", ids);

    for (const auto& lib : m.libraries) {
        std::string where = origin + ": library \"" + lib.id + "\"";
        if (lib.version.empty())
            throw ValidationError(where + ": missing version");
        if (lib.build_steps.empty())
            throw ValidationError(where + ": build steps must not be empty");
        if (!relative_without_traversal(lib.install_marker))
            throw ValidationError(where + ": install-marker must be a relative path without \"..\"");
        for (std::size_t i = 0; i < lib.build_steps.size(); ++i)
            check_template_vars(lib.build_steps[i], kLibBuildVars,
                                where + " build step " + std::to_string(i + 1));
    }

    for (const auto& test : m.tests) {
        std::string where = origin + ": test \"" + test.id + "\"";
        if (!relative_without_traversal(test.output_path))
            throw ValidationError(where + ": output must be a relative path without \"..\"");
        if (test.golden_path.empty())
            throw ValidationError(where + ": missing golden path");
        for (std::size_t i = 0; i < test.run_steps.size(); ++i)
            check_template_vars(test.run_steps[i], kTestRunVars,
                                where + " run step " + std::to_string(i + 1));
        auto it = test_states.find(test.id);
        if (it != test_states.end() && !it->second.has_threshold
            && !comparator_default_threshold(test.comparator)) {
            throw ValidationError(where + ": comparator \"" + comparator_name(test.comparator)
                                  + "\" requires an explicit threshold");
        }
    }

    for (const auto& code : m.codes) {
        std::string where = origin + ": code \"" + code.id + "\"";
        if (code.revision_probe.empty())
            throw ValidationError(where + ": missing revision-probe");
        if (code.build_steps.empty())
            throw ValidationError(where + ": build steps must not be empty");
        for (const auto& id : code.library_ids)
            if (!m.find_library(id))
                throw ValidationError(where + " references undefined library \"" + id + "\"");
        for (const auto& id : code.platform_ids)
            if (!m.find_platform(id))
                throw ValidationError(where + " references undefined platform \"" + id + "\"");
        for (const auto& id : code.test_ids)
            if (!m.find_test(id))
                throw ValidationError(where + " references undefined test \"" + id + "\"");
        check_template_vars(code.revision_probe, kProbeVars, where + " revision-probe");
        for (std::size_t i = 0; i < code.build_steps.size(); ++i)
            check_template_vars(code.build_steps[i], kCodeBuildVars,
                                where + " build step " + std::to_string(i + 1));
    }
}

} // namespace

Manifest parse_manifest(std::string_view text, const std::string& origin,
                        const std::filesystem::path& base_dir)
{
    Manifest m;
    m.base_dir = base_dir;

    enum class Kind { None, Code, Library, Platform, Test };
    Kind kind = Kind::None;
    CodeSpec* code = nullptr;
    LibrarySpec* lib = nullptr;
    PlatformSpec* platform = nullptr;
    TestSpec* test = nullptr;
    std::set<std::string> scalar_keys_seen;
    std::map<std::string, TestParseState> test_states;
    TestParseState* test_state = nullptr;

    Cursor cur{origin};
    for (std::string& raw : split_lines(text)) {
        ++cur.line;
        if (!raw.empty() && raw.back() == '\r')
            raw.pop_back();
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#')
            continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                cur.fail("unterminated section header");
            std::istringstream hdr(line.substr(1, line.size() - 2));
            std::string kind_word, id, extra;
            hdr >> kind_word >> id;
            if (hdr >> extra)
                cur.fail("section header has trailing tokens: \"" + extra + "\"");
            if (kind_word.empty() || id.empty())
                cur.fail("section header must be \"[<kind> <id>]\"");
            if (!valid_id(id))
                cur.invalid("invalid id \"" + id + "\" (allowed: [A-Za-z0-9._-], max 64 chars)");
            scalar_keys_seen.clear();
            code = nullptr;
            lib = nullptr;
            platform = nullptr;
            test = nullptr;
            test_state = nullptr;
            if (kind_word == "code") {
                kind = Kind::Code;
                code = &m.codes.emplace_back();
                code->id = id;
            } else if (kind_word == "library") {
                kind = Kind::Library;
                lib = &m.libraries.emplace_back();
                lib->id = id;
            } else if (kind_word == "platform") {
                kind = Kind::Platform;
                platform = &m.platforms.emplace_back();
                platform->id = id;
            } else if (kind_word == "test") {
                kind = Kind::Test;
                test = &m.tests.emplace_back();
                test->id = id;
                test_state = &test_states[id];
                test_state->header_line = cur.line;
            } else {
                cur.fail("unknown section kind \"" + kind_word
                         + "\" (expected code, library, platform or test)");
            }
            continue;
        }

        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            cur.fail("expected \"key = value\"");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            cur.fail("empty key");
        if (kind == Kind::None)
            cur.fail("key \"" + key + "\" before any section header");

        auto scalar_once = [&](const std::string& k) {
            if (!scalar_keys_seen.insert(k).second)
                cur.fail("duplicate key \"" + k + "\" in section");
        };

        switch (kind) {
        case Kind::Code:
            if (key == "repo") {
                scalar_once(key);
                code->repo_url = value;
            } else if (key == "revision-probe") {
                scalar_once(key);
                code->revision_probe = value;
            } else if (key == "build") {
                code->build_steps.push_back(value);
            } else if (key == "library") {
                code->library_ids.push_back(value);
            } else if (key == "platform") {
                code->platform_ids.push_back(value);
            } else if (key == "test") {
                code->test_ids.push_back(value);
            } else if (key == "build-timeout") {
                scalar_once(key);
                code->timeout_build_s = parse_positive_int(value, cur, "build-timeout");
            } else if (key == "test-timeout") {
                scalar_once(key);
                code->timeout_test_s = parse_positive_int(value, cur, "test-timeout");
            } else {
                cur.fail("unknown key \"" + key + "\" in code section");
            }
            break;
        case Kind::Library:
            if (key == "version") {
                scalar_once(key);
                lib->version = value;
            } else if (key == "build") {
                lib->build_steps.push_back(value);
            } else if (key == "install-marker") {
                scalar_once(key);
                lib->install_marker = value;
            } else {
                cur.fail("unknown key \"" + key + "\" in library section");
            }
            break;
        case Kind::Platform:
            if (key == "description") {
                scalar_once(key);
                platform->description = value;
            } else if (key == "workdir-root") {
                scalar_once(key);
                platform->workdir_root = value;
            } else if (starts_with(key, "env.")) {
                std::string name = key.substr(4);
                if (name.empty())
                    cur.fail("empty environment variable name");
                if (!platform->env.emplace(name, value).second)
                    cur.fail("duplicate environment variable \"" + name + "\"");
            } else {
                cur.fail("unknown key \"" + key + "\" in platform section");
            }
            break;
        case Kind::Test:
            if (key == "run") {
                test->run_steps.push_back(value);
            } else if (key == "output") {
                scalar_once(key);
                test->output_path = value;
            } else if (key == "golden") {
                scalar_once(key);
                test->golden_path = value;
            } else if (key == "comparator") {
                scalar_once(key);
                auto c = comparator_from_name(value);
                if (!c)
                    cur.invalid("unknown comparator \"" + value
                                + "\" (expected exact, absolute, relative, l2 or correlation)");
                test->comparator = *c;
                test_state->has_comparator = true;
            } else if (key == "threshold") {
                scalar_once(key);
                test->threshold = parse_finite_double(value, cur, "threshold");
                test_state->has_threshold = true;
            } else {
                cur.fail("unknown key \"" + key + "\" in test section");
            }
            break;
        case Kind::None:
            break;
        }
    }

    // apply default thresholds before validation so round-trips are stable
    for (auto& t : m.tests) {
        auto& st = test_states[t.id];
        if (!st.has_threshold) {
            if (auto def = comparator_default_threshold(t.comparator))
                t.threshold = *def;
        }
        if (t.comparator == Comparator::Exact)
            t.threshold = 0.0;
    }

    validate_manifest(m, origin, test_states);
    return m;
}

Manifest load_manifest(const std::filesystem::path& path)
{
    std::string text = read_text_file(path);
    std::filesystem::path base = std::filesystem::absolute(path).parent_path();
    return parse_manifest(text, path.string(), base);
}

namespace {

std::string format_double(double v)
{
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

} // namespace

std::string serialize_manifest(const Manifest& m)
{
    std::ostringstream out;
    for (const auto& c : m.codes) {
        out << "[code " << c.id << "]\n";
        if (!c.repo_url.empty())
            out << "repo = " << c.repo_url << "\n";
        out << "revision-probe = " << c.revision_probe << "\n";
        for (const auto& s : c.build_steps)
            out << "build = " << s << "\n";
        for (const auto& s : c.library_ids)
            out << "library = " << s << "\n";
        for (const auto& s : c.platform_ids)
            out << "platform = " << s << "\n";
        for (const auto& s : c.test_ids)
            out << "test = " << s << "\n";
        out << "build-timeout = " << c.timeout_build_s << "\n";
        out << "test-timeout = " << c.timeout_test_s << "\n";
        out << "\n";
    }
    for (const auto& l : m.libraries) {
        out << "[library " << l.id << "]\n";
        out << "version = " << l.version << "\n";
        for (const auto& s : l.build_steps)
            out << "build = " << s << "\n";
        out << "install-marker = " << l.install_marker << "\n";
        out << "\n";
    }
    for (const auto& p : m.platforms) {
        out << "[platform " << p.id << "]\n";
        if (!p.description.empty())
            out << "description = " << p.description << "\n";
        for (const auto& [name, value] : p.env)
            out << "env." << name << " = " << value << "\n";
        if (!p.workdir_root.empty())
            out << "workdir-root = " << p.workdir_root << "\n";
        out << "\n";
    }
    for (const auto& t : m.tests) {
        out << "[test " << t.id << "]\n";
        for (const auto& s : t.run_steps)
            out << "run = " << s << "\n";
        out << "output = " << t.output_path << "\n";
        out << "golden = " << t.golden_path << "\n";
        out << "comparator = " << comparator_name(t.comparator) << "\n";
        if (t.comparator != Comparator::Exact)
            out << "threshold = " << format_double(t.threshold) << "\n";
        out << "\n";
    }
    return out.str();
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path)
{
    write_text_file_atomic(path, serialize_manifest(manifest));
}

TestPlan generate_test_plan(const Manifest& manifest, const std::string& code_id,
                            const std::string& revision)
{
    const CodeSpec* code = manifest.find_code(code_id);
    if (!code)
        throw ValidationError("unknown code id \"" + code_id + "\"");
    if (code->platform_ids.empty())
        throw ValidationError("code \"" + code_id + "\" must target at least one platform");

    TestPlan plan;
    plan.code_id = code->id;
    plan.revision = revision;
    plan.timeout_build_s = code->timeout_build_s;
    plan.timeout_test_s = code->timeout_test_s;

    for (const auto& platform_id : code->platform_ids) {
        PlanUnit unit;
        unit.platform = *manifest.find_platform(platform_id);
        for (const auto& lib_id : code->library_ids)
            unit.libraries.push_back(*manifest.find_library(lib_id));
        unit.build_steps = code->build_steps;
        for (const auto& test_id : code->test_ids) {
            TestSpec t = *manifest.find_test(test_id);
            std::filesystem::path golden(t.golden_path);
            if (golden.is_relative() && !manifest.base_dir.empty())
                t.golden_path = (manifest.base_dir / golden).lexically_normal().string();
            unit.tests.push_back(std::move(t));
        }
        plan.units.push_back(std::move(unit));
    }
    return plan;
}

} // namespace geoforge
