#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "testutil.hpp"

#include <cstdlib>
#include <string>

#include <sys/wait.h>

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;
};

// Runs the installed binary through the shell, merging stderr into the
// captured output.
CliResult run_cli(const std::string& args, const std::filesystem::path& cwd)
{
    static int counter = 0;
    std::filesystem::path capture =
        cwd / (".cli-capture-" + std::to_string(counter++) + ".txt");
    std::string command = "cd '" + cwd.string() + "' && '" + GEOFORGE_BINARY + "' " + args
        + " > '" + capture.string() + "' 2>&1";
    int raw = std::system(command.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    if (std::filesystem::exists(capture))
        result.output = testutil::read_file(capture);
    return result;
}

// One code that is green end to end and one whose build always breaks.
void write_fixture(const std::filesystem::path& dir)
{
    testutil::write_file(dir / "golden/wave.txt", "0 0.0\n1 1.0\n2 0.5\n3 -0.25\n");
    testutil::write_file(dir / "repo-rev.txt", "rev-1\n");
    std::string manifest;
    manifest += "[platform host]\n";
    manifest += "description = host toolchain\n";
    manifest += "\n";
    manifest += "[test wave-check]\n";
    manifest += "run = cp {workdir}/signal.txt {output}\n";
    manifest += "output = out/wave.txt\n";
    manifest += "golden = golden/wave.txt\n";
    manifest += "comparator = correlation\n";
    manifest += "\n";
    manifest += "[code wave]\n";
    manifest += "repo = file://" + (dir / "repo").string() + "\n";
    manifest += "revision-probe = cat " + (dir / "repo-rev.txt").string() + "\n";
    manifest += "build = printf '0 0.0\\n1 1.0\\n2 0.5\\n3 -0.25\\n' > {workdir}/signal.txt\n";
    manifest += "platform = host\n";
    manifest += "test = wave-check\n";
    manifest += "\n";
    manifest += "[code brokenbuild]\n";
    manifest += "repo = file://" + (dir / "repo").string() + "\n";
    manifest += "revision-probe = cat " + (dir / "repo-rev.txt").string() + "\n";
    manifest += "build = echo compiling && false\n";
    manifest += "platform = host\n";
    manifest += "test = wave-check\n";
    testutil::write_file(dir / "geoforge.manifest", manifest);
}

std::string base_flags(const std::filesystem::path& dir)
{
    return "--manifest '" + (dir / "geoforge.manifest").string() + "' --data-dir '"
        + (dir / "data").string() + "'";
}

} // namespace

TEST_CASE("a bare invocation and unknown flags are usage errors")
{
    testutil::TempDir tmp;
    CHECK(run_cli("", tmp.path()).exit_code == 2);
    CHECK(run_cli("--no-such-flag poll", tmp.path()).exit_code == 2);
    CHECK(run_cli("frobnicate", tmp.path()).exit_code == 2);
}

TEST_CASE("help exits cleanly")
{
    testutil::TempDir tmp;
    CliResult r = run_cli("--help", tmp.path());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("poll") != std::string::npos);
}

TEST_CASE("a missing manifest is a config error")
{
    testutil::TempDir tmp;
    CliResult r = run_cli("--manifest /nonexistent.manifest poll", tmp.path());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("error") != std::string::npos);
}

TEST_CASE("poll enqueues each changed code once and is quiet when idle")
{
    testutil::TempDir tmp;
    write_fixture(tmp.path());
    CliResult first = run_cli(base_flags(tmp.path()) + " poll", tmp.path());
    CHECK(first.exit_code == 0);
    CHECK(first.output.find("2 jobs enqueued") != std::string::npos);

    CliResult second = run_cli(base_flags(tmp.path()) + " poll", tmp.path());
    CHECK(second.exit_code == 0);
    CHECK(second.output.find("0 jobs enqueued") != std::string::npos);

    CliResult ls = run_cli(base_flags(tmp.path()) + " queue ls", tmp.path());
    CHECK(ls.output.find("job 1:") != std::string::npos);
    CHECK(ls.output.find("job 2:") != std::string::npos);
}

TEST_CASE("run exits zero only when the whole matrix is green")
{
    testutil::TempDir tmp;
    write_fixture(tmp.path());
    CliResult green = run_cli(base_flags(tmp.path()) + " run wave", tmp.path());
    CHECK(green.exit_code == 0);
    CHECK(green.output.find("build Succeeded") != std::string::npos);

    CliResult red = run_cli(base_flags(tmp.path()) + " run brokenbuild", tmp.path());
    CHECK(red.exit_code == 1);
    CHECK(red.output.find("build Failed") != std::string::npos);
    CHECK(red.output.find("test Skipped") != std::string::npos);

    // the dashboard shows the broken cell as red build plus grey test
    std::string html = testutil::read_file(tmp / "data/reports/dashboard.html");
    CHECK(html.find("class=\"sub build red\"") != std::string::npos);
    CHECK(html.find("class=\"sub test grey\"") != std::string::npos);
}

TEST_CASE("run rejects unknown codes")
{
    testutil::TempDir tmp;
    write_fixture(tmp.path());
    CliResult r = run_cli(base_flags(tmp.path()) + " run nosuchcode", tmp.path());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("nosuchcode") != std::string::npos);
}

TEST_CASE("compare exits by verdict and produces a profile on request")
{
    testutil::TempDir tmp;
    testutil::write_file(tmp / "a.txt", "0 1.0\n1 2.0\n2 3.0\n");
    testutil::write_file(tmp / "b.txt", "0 1.0\n1 2.0\n2 3.0\n");
    testutil::write_file(tmp / "c.txt", "0 1.0\n1 2.0\n2 9.0\n");
    testutil::write_file(tmp / "flat.txt", "0 5.0\n1 5.0\n2 5.0\n");

    CliResult same =
        run_cli("compare a.txt b.txt --metric correlation", tmp.path());
    CHECK(same.exit_code == 0);
    CHECK(same.output.find("result: pass") != std::string::npos);

    CliResult off = run_cli("compare a.txt c.txt --metric exact", tmp.path());
    CHECK(off.exit_code == 1);
    CHECK(off.output.find("result: fail") != std::string::npos);

    CliResult flat = run_cli("compare flat.txt a.txt --metric correlation", tmp.path());
    CHECK(flat.exit_code == 2);

    CliResult prof = run_cli(
        "compare a.txt c.txt --metric absolute --tol 0.5 --profile prof.tsv", tmp.path());
    CHECK(prof.exit_code == 1);
    std::string tsv = testutil::read_file(tmp / "prof.tsv");
    CHECK(tsv.find("\t6\t") != std::string::npos); // |3 - 9| on the last sample
}

TEST_CASE("compare treats missing thresholds and bad metrics as usage errors")
{
    testutil::TempDir tmp;
    testutil::write_file(tmp / "a.txt", "0 1.0\n");
    CHECK(run_cli("compare a.txt a.txt --metric absolute", tmp.path()).exit_code == 2);
    CHECK(run_cli("compare a.txt a.txt --metric vibes", tmp.path()).exit_code == 2);
    CHECK(run_cli("compare a.txt missing.txt --metric exact", tmp.path()).exit_code == 2);
}

TEST_CASE("report renders stored results and is not gating")
{
    testutil::TempDir tmp;
    write_fixture(tmp.path());
    run_cli(base_flags(tmp.path()) + " run brokenbuild", tmp.path());
    CliResult r = run_cli(base_flags(tmp.path()) + " report --out '"
                              + (tmp / "site").string() + "'",
                          tmp.path());
    CHECK(r.exit_code == 0); // red cells do not fail the report verb
    CHECK(std::filesystem::exists(tmp / "site/dashboard.html"));
    CHECK(std::filesystem::exists(tmp / "site/summary.txt"));
    std::string summary = testutil::read_file(tmp / "site/summary.txt");
    CHECK(summary.find("brokenbuild / host: build failed") != std::string::npos);
}

TEST_CASE("queue compact keeps live jobs")
{
    testutil::TempDir tmp;
    write_fixture(tmp.path());
    run_cli(base_flags(tmp.path()) + " poll", tmp.path());
    CliResult r = run_cli(base_flags(tmp.path()) + " queue compact", tmp.path());
    CHECK(r.exit_code == 0);
    CliResult ls = run_cli(base_flags(tmp.path()) + " queue ls", tmp.path());
    CHECK(ls.output.find("job 1:") != std::string::npos);
    CHECK(ls.output.find("job 2:") != std::string::npos);
}

TEST_CASE("cache ls and invalidate are wired end to end")
{
    testutil::TempDir tmp;
    write_fixture(tmp.path());
    // no libraries in this fixture: both verbs still behave
    CliResult ls = run_cli(base_flags(tmp.path()) + " cache ls", tmp.path());
    CHECK(ls.exit_code == 0);
    CHECK(ls.output.find("cache empty") != std::string::npos);
    CliResult inv = run_cli(base_flags(tmp.path()) + " cache invalidate", tmp.path());
    CHECK(inv.exit_code == 0);
    CHECK(inv.output.find("invalidated 0") != std::string::npos);
}

TEST_CASE("the GEOFORGE_DATA_DIR variable steers state placement")
{
    testutil::TempDir tmp;
    write_fixture(tmp.path());
    std::string command = "cd '" + tmp.path().string() + "' && GEOFORGE_DATA_DIR='"
        + (tmp / "envdata").string() + "' '" + GEOFORGE_BINARY + "' --manifest '"
        + (tmp / "geoforge.manifest").string() + "' poll > /dev/null 2>&1";
    int raw = std::system(command.c_str());
    CHECK(WEXITSTATUS(raw) == 0);
    CHECK(std::filesystem::exists(tmp / "envdata/queue.log"));
}

TEST_CASE("a config file supplies defaults and flags override it")
{
    testutil::TempDir tmp;
    write_fixture(tmp.path());
    testutil::write_file(tmp / "geoforge.conf",
                         "manifest = " + (tmp / "geoforge.manifest").string() + "\n"
                             + "data_dir = " + (tmp / "confdata").string() + "\n");
    CliResult via_conf =
        run_cli("--config '" + (tmp / "geoforge.conf").string() + "' poll", tmp.path());
    CHECK(via_conf.exit_code == 0);
    CHECK(std::filesystem::exists(tmp / "confdata/queue.log"));

    CliResult flag_wins = run_cli("--config '" + (tmp / "geoforge.conf").string()
                                      + "' --data-dir '" + (tmp / "flagdata").string() + "' poll",
                                  tmp.path());
    CHECK(flag_wins.exit_code == 0);
    CHECK(std::filesystem::exists(tmp / "flagdata/queue.log"));

    CliResult bad_conf = run_cli("--config '" + (tmp / "missing.conf").string() + "' poll",
                                 tmp.path());
    CHECK(bad_conf.exit_code == 2);
}

TEST_CASE("the daemon drains the queue and exits when idle")
{
    testutil::TempDir tmp;
    write_fixture(tmp.path());
    CliResult r = run_cli(base_flags(tmp.path())
                              + " --poll-interval 1 daemon --exit-when-idle",
                          tmp.path());
    CHECK(r.exit_code == 0);
    CliResult ls = run_cli(base_flags(tmp.path()) + " queue ls", tmp.path());
    CHECK(ls.output.find("Done") != std::string::npos);
    CHECK(ls.output.find("Pending") == std::string::npos);
    std::string summary = testutil::read_file(tmp / "data/reports/summary.txt");
    CHECK(summary.find("1 passed, 1 failed, 0 running, 1 skipped") != std::string::npos);
}
