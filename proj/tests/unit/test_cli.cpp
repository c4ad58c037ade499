#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = "\""s + PGSR_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  const fs::path out = fs::temp_directory_path() / "pgsr_cli_out";
  fs::remove_all(out);
  const std::string smoke = std::string(PGSR_SOURCE_DIR) + "/configs/smoke.toml";
  CHECK(run("--out " + out.string() + " run " + smoke) == 0);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(run("--out " + out.string() + " sweep " + smoke + " --axis M --values 3,5") == 0);
  CHECK(fs::exists(out / "M=5" / "glms.csv"));
  CHECK(run("analyze " + smoke) == 0);

  const fs::path bad = write_config("pgsr_cli_bad.toml", "name = \"x\"\nno_such_key = 1\nseed = 1\n");
  CHECK(run("run " + bad.string()) == 2);
  CHECK(run("run /no/such/file.toml") == 2);
  CHECK(run("frobnicate") == 2);

  const fs::path wild = write_config("pgsr_cli_wild.toml",
                                     "n_nodes = 6\nbandwidth = 2\nm_measurements = 3\ns_count = 4\n"
                                     "noise_variance = 0.1\ntrials = 2\nhorizon = 50\nseed = 3\n"
                                     "[[algorithm]]\nkind = \"glms\"\nmu = 1e80\n");
  CHECK(run("--out " + out.string() + " run " + wild.string()) == 3);
  fs::remove(bad);
  fs::remove(wild);
  fs::remove_all(out);
}

}  // TEST_SUITE
