#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "geoforge/command.hpp"
#include "geoforge/errors.hpp"
#include "testutil.hpp"

#include <chrono>

using namespace geoforge;
using namespace std::chrono_literals;

TEST_CASE("template variables are listed in order of first appearance")
{
    auto vars = template_variables("cp {workdir}/a {output} # {workdir}");
    REQUIRE(vars.size() == 2);
    CHECK(vars[0] == "workdir");
    CHECK(vars[1] == "output");
}

TEST_CASE("template substitution expands known variables")
{
    std::map<std::string, std::string> vars{{"workdir", "/w"}, {"revision", "abc"}};
    CHECK(substitute_template("cd {workdir} && echo {revision}", vars)
          == "cd /w && echo abc");
}

TEST_CASE("doubled braces escape to literal braces")
{
    std::map<std::string, std::string> vars{{"workdir", "/w"}};
    CHECK(substitute_template("echo {{x}} in {workdir}", vars) == "echo {x} in /w");
}

TEST_CASE("brace content that is not a bare identifier stays literal")
{
    std::map<std::string, std::string> vars;
    CHECK(substitute_template("awk '{print $1}'", vars) == "awk '{print $1}'");
    CHECK(substitute_template("fmt {a b}", vars) == "fmt {a b}");
}

TEST_CASE("unknown template variable is an error")
{
    std::map<std::string, std::string> vars{{"workdir", "/w"}};
    CHECK_THROWS_AS(substitute_template("echo {libdir}", vars), ValidationError);
}

TEST_CASE("runner captures stdout and stderr together and stdout separately")
{
    testutil::TempDir tmp;
    CommandRunner runner;
    StepResult r = runner.run("echo out; echo err 1>&2", tmp.path(), {}, 5s);
    REQUIRE(r.ok());
    CHECK(r.output.find("out\n") != std::string::npos);
    CHECK(r.output.find("err\n") != std::string::npos);
    CHECK(r.stdout_text == "out\n");
}

TEST_CASE("runner reports the command exit code")
{
    testutil::TempDir tmp;
    CommandRunner runner;
    CHECK(runner.run("exit 0", tmp.path(), {}, 5s).exit_code == 0);
    CHECK(runner.run("exit 7", tmp.path(), {}, 5s).exit_code == 7);
}

TEST_CASE("runner applies the working directory and extra environment")
{
    testutil::TempDir tmp;
    CommandRunner runner;
    StepResult r = runner.run("pwd && printf '%s\\n' \"$GF_TEST_VAR\"", tmp.path(),
                              {{"GF_TEST_VAR", "hello"}}, 5s);
    REQUIRE(r.ok());
    auto canonical = std::filesystem::canonical(tmp.path()).string();
    CHECK(r.stdout_text.find(canonical) != std::string::npos);
    CHECK(r.stdout_text.find("hello") != std::string::npos);
}

TEST_CASE("extra environment overrides an inherited variable")
{
    testutil::TempDir tmp;
    setenv("GF_OVERRIDE_ME", "old", 1);
    CommandRunner runner;
    StepResult r =
        runner.run("printf '%s' \"$GF_OVERRIDE_ME\"", tmp.path(), {{"GF_OVERRIDE_ME", "new"}}, 5s);
    CHECK(r.stdout_text == "new");
    unsetenv("GF_OVERRIDE_ME");
}

TEST_CASE("timeout kills the command and its children")
{
    testutil::TempDir tmp;
    CommandRunner runner;
    auto start = std::chrono::steady_clock::now();
    StepResult r = runner.run("sleep 30 & sleep 30", tmp.path(), {}, 300ms);
    auto elapsed = std::chrono::steady_clock::now() - start;
    CHECK(r.timed_out);
    CHECK_FALSE(r.ok());
    CHECK(elapsed < 5s);

    // the whole process group is gone: the backgrounded sleep does not
    // linger holding the pipe open
    StepResult after = runner.run("echo alive", tmp.path(), {}, 5s);
    CHECK(after.stdout_text == "alive\n");
}

TEST_CASE("commands_run counts every started command")
{
    testutil::TempDir tmp;
    CommandRunner runner;
    CHECK(runner.commands_run() == 0);
    runner.run("true", tmp.path(), {}, 5s);
    runner.run("false", tmp.path(), {}, 5s);
    CHECK(runner.commands_run() == 2);
}

TEST_CASE("output larger than the pipe buffer is captured fully")
{
    testutil::TempDir tmp;
    CommandRunner runner;
    StepResult r = runner.run("seq 1 20000", tmp.path(), {}, 10s);
    REQUIRE(r.ok());
    CHECK(r.stdout_text.find("\n20000\n") != std::string::npos);
}
