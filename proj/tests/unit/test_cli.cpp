#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "mtu/checkpoint.hpp"
#include "mtu/cli.hpp"
#include "mtu/dataset.hpp"
#include "support/temp_dir.hpp"

namespace fs = std::filesystem;
using mtu::testing::TempDir;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mtu");
  return mtu::cli::run(args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Restores an environment variable when the scope ends.
class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) previous_ = old;
    if (value != nullptr) {
      ::setenv(name, value, 1);
    } else {
      ::unsetenv(name);
    }
  }
  ~ScopedEnv() {
    if (previous_) {
      ::setenv(name_.c_str(), previous_->c_str(), 1);
    } else {
      ::unsetenv(name_.c_str());
    }
  }
  ScopedEnv(const ScopedEnv&) = delete;
  ScopedEnv& operator=(const ScopedEnv&) = delete;

 private:
  std::string name_;
  std::optional<std::string> previous_;
};

std::vector<std::string> synth_args(const fs::path& out) {
  return {"make-synthetic", "--out", out.string(), "--videos", "2", "--frames", "14", "--size", "32", "--speed", "4",
          "--max-displacement", "2", "--seed", "7"};
}

}  // namespace

TEST_CASE("usage errors and validation errors have distinct exit codes") {
  TempDir tmp;
  CHECK(run_cli({}) == mtu::cli::kExitUsage);
  CHECK(run_cli({"no-such-command"}) == mtu::cli::kExitUsage);
  CHECK(run_cli({"make-synthetic", "--out", (tmp / "a").string(), "--bogus"}) == mtu::cli::kExitUsage);
  CHECK(run_cli({"make-synthetic"}) == mtu::cli::kExitUsage);
  CHECK(run_cli({"make-synthetic", "--out", (tmp / "b").string(), "--size", "63"}) == mtu::cli::kExitFailure);
  CHECK(run_cli({"eval", "--checkpoint", (tmp / "missing.mtu").string(), "--dataset", tmp.path().string()}) ==
        mtu::cli::kExitFailure);
  CHECK(run_cli({"--help"}) == mtu::cli::kExitOk);
}

TEST_CASE("seed resolution prefers the flag, then the environment") {
  {
    ScopedEnv env("MTU_SEED", nullptr);
    CHECK(mtu::cli::resolve_seed(std::nullopt, 5) == 5);
    CHECK(mtu::cli::resolve_seed(11, 5) == 11);
  }
  {
    ScopedEnv env("MTU_SEED", "42");
    CHECK(mtu::cli::resolve_seed(std::nullopt) == 42);
    CHECK(mtu::cli::resolve_seed(3) == 3);
  }
  {
    ScopedEnv env("MTU_SEED", "4x");
    CHECK_THROWS_AS(mtu::cli::resolve_seed(std::nullopt), std::invalid_argument);
  }
}

TEST_CASE("backend resolution prefers the flag, then the environment") {
  {
    ScopedEnv env("MTU_DEVICE", nullptr);
    CHECK(mtu::cli::resolve_backend(std::nullopt) == "host");
  }
  ScopedEnv env("MTU_DEVICE", "async");
  CHECK(mtu::cli::resolve_backend(std::nullopt) == "async");
  CHECK(mtu::cli::resolve_backend(std::string("host")) == "host");
}

TEST_CASE("make-synthetic is deterministic for a fixed seed") {
  TempDir tmp;
  REQUIRE(run_cli(synth_args(tmp / "one")) == mtu::cli::kExitOk);
  REQUIRE(run_cli(synth_args(tmp / "two")) == mtu::cli::kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp / "one")) {
    if (!e.is_regular_file()) continue;
    const auto twin = tmp / "two" / fs::relative(e.path(), tmp / "one");
    REQUIRE(fs::exists(twin));
    CHECK(slurp(e.path()) == slurp(twin));
    ++files;
  }
  CHECK(files > 0);
  const auto ds = mtu::data::ingest_dataset(tmp / "one");
  CHECK(ds.train.size() + ds.test.size() == 2);
}

TEST_CASE("train, infer and eval work end to end") {
  TempDir tmp;
  const auto data_dir = tmp / "data";
  REQUIRE(run_cli(synth_args(data_dir)) == mtu::cli::kExitOk);
  const auto run_dir = tmp / "run";
  REQUIRE(run_cli({"train", "--dataset", data_dir.string(), "--out", run_dir.string(), "--steps", "2", "--crop", "32",
                   "--checkpoint-every", "1", "--seed", "1"}) == mtu::cli::kExitOk);
  REQUIRE(fs::exists(run_dir / "model.mtu"));
  CHECK(fs::exists(run_dir / "ckpt_2.mtu"));
  CHECK(mtu::load_checkpoint(run_dir / "model.mtu").step == 2);

  const auto ds = mtu::data::ingest_dataset(data_dir);
  REQUIRE_FALSE(ds.test.empty());
  const auto blur_dir = ds.test.front().dir / "blur";
  const auto out_dir = tmp / "restored";
  CHECK(run_cli({"infer", "--checkpoint", (run_dir / "model.mtu").string(), "--in", blur_dir.string(), "--out",
                 out_dir.string(), "--precision", "half"}) == mtu::cli::kExitOk);
  std::size_t written = 0;
  for (const auto& e : fs::directory_iterator(out_dir)) written += e.path().extension() == ".png";
  CHECK(written == 14);

  const auto report = tmp / "eval";
  CHECK(run_cli({"eval", "--checkpoint", (run_dir / "model.mtu").string(), "--dataset", data_dir.string(), "--report",
                 report.string()}) == mtu::cli::kExitOk);
  CHECK(fs::exists(tmp / "eval.txt"));
  CHECK(fs::exists(tmp / "eval.json"));
  CHECK(run_cli({"eval", "--checkpoint", (run_dir / "model.mtu").string(), "--dataset", data_dir.string(), "--split",
                 "valid"}) == mtu::cli::kExitFailure);
  CHECK(run_cli({"infer", "--checkpoint", (run_dir / "model.mtu").string(), "--in", (tmp / "nowhere").string(), "--out",
                 out_dir.string()}) == mtu::cli::kExitFailure);
}
