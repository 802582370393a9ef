#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "../temp_dir.hpp"
#include "trident/commands.hpp"
#include "trident/decoder_process.hpp"
#include "trident/errors.hpp"
#include "trident/synth.hpp"

using namespace trident;
namespace fs = std::filesystem;

namespace {

/// Sets an environment variable for the lifetime of the object.
struct ScopedEnv {
  std::string name;
  std::optional<std::string> old;
  ScopedEnv(std::string n, const char* value) : name(std::move(n)) {
    if (const char* v = std::getenv(name.c_str())) old = v;
    if (value)
      ::setenv(name.c_str(), value, 1);
    else
      ::unsetenv(name.c_str());
  }
  ~ScopedEnv() {
    if (old)
      ::setenv(name.c_str(), old->c_str(), 1);
    else
      ::unsetenv(name.c_str());
  }
};

std::string stub(const std::string& args = "") { return std::string(TRIDENT_STUB_DECODER) + " " + args; }

std::vector<PromptSet> prompts_for(std::size_t n, Index size) {
  std::vector<PromptSet> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].mask = RowMatrix<float>::Constant(size, size, 0.1f * (i + 1));
  return out;
}

}  // namespace

TEST_CASE("config precedence") {
  ScopedEnv env("TRIDENT_DECODER_CMD", nullptr);
  const auto defaults = resolve_run_config({});
  CHECK(defaults.paradigm == Paradigm::splice_then_segment);
  CHECK_FALSE(defaults.window.has_value());
  CHECK_FALSE(defaults.decoder_cmd.has_value());

  RunOverrides file;
  file.preset = "voc21";
  file.epsilon = 0.3;
  file.paradigm = "baseline";
  file.stride = 112;
  RunOverrides cli;
  cli.epsilon = 0.6;
  const auto c = resolve_run_config(cli, file);
  CHECK(c.preset == "voc21");
  CHECK(c.window == 336);
  CHECK(c.stride == 112);
  CHECK(c.pipeline.epsilon == 0.6);
  CHECK(c.paradigm == Paradigm::segment_then_splice);

  cli.preset = "context59";
  CHECK(resolve_run_config(cli, file).preset == "context59");
  cli.preset = "nope";
  CHECK_THROWS_AS(resolve_run_config(cli, file), ConfigError);
}

TEST_CASE("config file parsing") {
  const auto o = overrides_from_json(nlohmann::json{{"epsilon", 0.2}, {"refine", true}, {"out", "x"}});
  CHECK(o.epsilon == 0.2);
  CHECK(o.refine == true);
  CHECK(o.out == fs::path("x"));
  CHECK_THROWS_AS(overrides_from_json(nlohmann::json{{"epsilon", 0.2}, {"epsilonn", 1}}), ConfigError);
  CHECK_THROWS_AS(overrides_from_json(nlohmann::json::array()), ConfigError);

  TempDir tmp;
  std::ofstream(tmp.path / "bad.json") << "{ not json";
  CHECK_THROWS_AS(read_config_file(tmp.path / "bad.json"), ConfigError);
  CHECK_THROWS_AS(read_config_file(tmp.path / "missing.json"), ConfigError);
  std::ofstream(tmp.path / "ok.json") << R"({"workers": 2})";
  CHECK(read_config_file(tmp.path / "ok.json").workers == 2);
}

TEST_CASE("decoder command falls back to the environment") {
  ScopedEnv env("TRIDENT_DECODER_CMD", "from-env");
  CHECK(resolve_run_config({}).decoder_cmd == "from-env");
  RunOverrides cli;
  cli.decoder_cmd = "from-cli";
  CHECK(resolve_run_config(cli).decoder_cmd == "from-cli");
}

TEST_CASE("invalid settings are rejected") {
  RunOverrides cli;
  cli.window = 100;
  CHECK_THROWS_AS(resolve_run_config(cli), ConfigError);
  cli = {};
  cli.workers = 0;
  CHECK_THROWS_AS(resolve_run_config(cli), ConfigError);
  cli = {};
  cli.epsilon = 2.0;
  CHECK_THROWS_AS(resolve_run_config(cli), ConfigError);
  cli = {};
  cli.correlation = "fourier";
  CHECK_THROWS_AS(resolve_run_config(cli), ConfigError);
}

TEST_CASE("segment command") {
  ScopedEnv env("TRIDENT_DECODER_CMD", nullptr);
  TempDir tmp;
  generate_bundle(seam_scene(), tmp.path / "bundles" / "seam");
  std::ostringstream sink;
  RunOverrides cli;
  cli.out = tmp.path / "out";
  cli.deterministic = true;
  cli.epsilon = 0.5;

  SUBCASE("writes outputs") {
    const auto config = resolve_run_config(cli);
    REQUIRE(cmd_segment(config, {tmp.path / "bundles"}, sink) == exit_code::ok);
    for (const char* f : {"labels.png", "scores.trdt", "log.json"}) CHECK(fs::exists(tmp.path / "out" / "seam" / f));
    std::ifstream log(tmp.path / "out" / "seam" / "log.json");
    const auto j = nlohmann::json::parse(log);
    CHECK(j["paradigm"] == "trident");
    CHECK(j["timings_ms"].is_null());
    CHECK(j["miou"].get<double>() > 0.9);
  }
  SUBCASE("validation failures") {
    CHECK(cmd_segment(resolve_run_config(cli), {tmp.path / "nowhere"}, sink) == exit_code::validation);
    cli.shorter_side = 512;
    cli.window = 336;
    CHECK(cmd_segment(resolve_run_config(cli), {tmp.path / "bundles"}, sink) == exit_code::validation);
  }
  SUBCASE("refinement without a decoder") {
    cli.refine = true;
    std::ostringstream msg;
    CHECK(cmd_segment(resolve_run_config(cli), {tmp.path / "bundles"}, msg) == exit_code::decoder);
    CHECK(msg.str().find("TRIDENT_DECODER_CMD") != std::string::npos);
  }
  SUBCASE("refinement through the stub") {
    cli.refine = true;
    cli.decoder_cmd = stub("--gain 200");
    REQUIRE(cmd_segment(resolve_run_config(cli), {tmp.path / "bundles"}, sink) == exit_code::ok);
    std::ifstream log(tmp.path / "out" / "seam" / "log.json");
    const auto j = nlohmann::json::parse(log);
    CHECK(j["refine"]["requests"].get<int>() > 0);
    CHECK(j["refine"]["fallbacks"] == 0);
  }
  SUBCASE("decoder failure with and without fallback") {
    cli.refine = true;
    cli.decoder_cmd = stub("--fail-all");
    CHECK(cmd_segment(resolve_run_config(cli), {tmp.path / "bundles"}, sink) == exit_code::ok);
    cli.allow_fallback = false;
    CHECK(cmd_segment(resolve_run_config(cli), {tmp.path / "bundles"}, sink) == exit_code::decoder);
  }
}

TEST_CASE("subprocess decoder against the stub") {
  TempDir tmp;
  const auto prompts = prompts_for(5, 8);
  std::vector<DecodeRequest> requests;
  for (std::uint64_t i = 0; i < prompts.size(); ++i) requests.push_back({i + 10, i % 2 ? "odd" : "even", &prompts[i]});

  SUBCASE("answers are matched by id") {
    SubprocessDecoder dec(stub("--reverse --gain 2"), tmp.path);
    for (int round = 0; round < 2; ++round) {
      const auto responses = dec.decode(requests);
      REQUIRE(responses.size() == requests.size());
      for (const auto& r : responses) {
        REQUIRE(r.mask.has_value());
        const float expect = std::min(1.0f, 2.0f * 0.1f * static_cast<float>(r.id - 10 + 1));
        CHECK((*r.mask)(0, 0) == doctest::Approx(expect));
      }
    }
  }
  SUBCASE("per-image errors") {
    SubprocessDecoder dec(stub("--fail-image odd"), tmp.path);
    for (const auto& r : dec.decode(requests)) {
      if (r.id % 2) {
        CHECK_FALSE(r.mask.has_value());
        CHECK_FALSE(r.error.empty());
      } else {
        CHECK(r.mask.has_value());
      }
    }
  }
  SUBCASE("early exit") {
    SubprocessDecoder dec(stub("--exit-after 2"), tmp.path);
    CHECK_THROWS_AS(dec.decode(requests), DecoderError);
  }
  SUBCASE("request encoding") {
    PromptSet p;
    p.point = {3, 4, 1};
    p.box = {1, 2, 5, 6};
    const DecodeRequest r{7, "img.png", &p};
    const auto j = nlohmann::json::parse(encode_decode_request(r, "m.trdt"));
    CHECK(j["id"] == 7);
    CHECK(j["image_ref"] == "img.png");
    CHECK(j["point"] == nlohmann::json::array({3, 4, 1}));
    CHECK(j["box"] == nlohmann::json::array({1, 2, 5, 6}));
    CHECK(j["mask_ref"] == "m.trdt");
  }
}

TEST_CASE("selfcheck") {
  std::ostringstream out;
  CHECK(cmd_selfcheck(out) == exit_code::ok);
  std::ostringstream nan_out;
  CHECK(cmd_selfcheck(nan_out, SelfcheckFault::nan) == exit_code::failure);
  std::ostringstream magic_out;
  CHECK(cmd_selfcheck(magic_out, SelfcheckFault::magic) == exit_code::failure);
}

TEST_CASE("compare command") {
  TempDir tmp;
  generate_bundle(seam_scene(), tmp.path / "seam");
  RunOverrides cli;
  cli.epsilon = 0.5;
  cli.out = tmp.path / "out";
  const auto config = resolve_run_config(cli);
  const auto rows = compare_bundles(config, {tmp.path / "seam"});
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].delta().has_value());
  CHECK(*rows[0].delta() > 0.1);
  CHECK(*rows[0].trident_seam < rows[0].baseline_seam);
  std::ostringstream out;
  CHECK(cmd_compare(config, {tmp.path / "seam"}, out) == exit_code::ok);
  CHECK(fs::exists(tmp.path / "out" / "compare.json"));
}
