#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "moma/config.hpp"

using namespace moma;

namespace {

const char* kValidConfig = R"([data]
regime = same
input_dim = 6
source_classes = 3
target_classes = 3
target_train = 32
target_val = 16
target_test = 32

[model]
embed_dim = 8
proj_dim = 8
heads = 4
encoder_hidden = 8,8

[distill]
alpha = 0.9999
tau = 0.07
kd_temperature = 4

[optim]
lr = 0.001
batch_size = 8
epochs = 2
seed = 7

[io]
out_dir = /tmp/moma_cfg_test
)";

}  // namespace

TEST_CASE("a valid config parses with defaults filled in") {
  RunConfig config = RunConfig::parse_text(kValidConfig);
  CHECK(config.regime == TaskKind::same);
  CHECK(config.input_dim == 6);
  CHECK(config.encoder_hidden == std::vector<std::size_t>{8, 8});
  CHECK(config.alpha == 0.9999);
  CHECK(config.tau == 0.07);
  CHECK(config.kd_temperature == 4.0);
  CHECK(config.beta1 == 0.9);
  CHECK(config.beta2 == 0.9999);   // as stated, not the common 0.999
  CHECK(config.eps == 1e-8);
  CHECK(config.queue_size == 512);
  CHECK(config.normalize_embeddings);
  CHECK(config.gamma_auto);
  CHECK(config.resolved_gamma() == 1);
  CHECK(config.seed == 7);
}

TEST_CASE("unknown keys are hard errors that carry the line number") {
  std::string bad = kValidConfig;
  bad += "\n[distill]\ntaus = 0.07\n";
  try {
    RunConfig::parse_text(bad);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("taus") != std::string::npos);
    CHECK(what.find("line") != std::string::npos);
  }
}

TEST_CASE("unknown sections and malformed lines are rejected") {
  CHECK_THROWS_AS(RunConfig::parse_text("[nonsense]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("[data]\nno_equals_here\n"),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("regime = same\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("[data]\ninput_dim = banana\n"),
                  ConfigError);
}

TEST_CASE("validation rejects inconsistent settings") {
  {
    RunConfig config = RunConfig::parse_text(kValidConfig);
    config.batch_size = config.queue_size + 1;
    CHECK_THROWS_AS(config.validate(), ConfigError);
  }
  {
    RunConfig config = RunConfig::parse_text(kValidConfig);
    config.proj_dim = 6;  // not divisible by 4 heads
    CHECK_THROWS_AS(config.validate(), ConfigError);
  }
  {
    RunConfig config = RunConfig::parse_text(kValidConfig);
    config.tau = 0.0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
  }
  {
    RunConfig config = RunConfig::parse_text(kValidConfig);
    config.regime = TaskKind::same;
    config.target_classes = 5;
    CHECK_THROWS_AS(config.validate(), ConfigError);
  }
}

TEST_CASE("gamma resolution: auto follows the regime, override wins") {
  RunConfig config = RunConfig::parse_text(kValidConfig);
  CHECK(config.resolved_gamma() == 1);
  config.regime = TaskKind::irrelevant;
  CHECK(config.resolved_gamma() == 0);
  config.gamma_auto = false;
  config.gamma = 1;
  CHECK(config.resolved_gamma() == 1);
}

TEST_CASE("echo keeps the raw text verbatim and appends overrides") {
  RunConfig config = RunConfig::parse_text(kValidConfig);
  CHECK(config.echo_text().rfind(kValidConfig, 0) == 0);
  config.overrides.push_back("seed=99");
  const std::string echoed = config.echo_text();
  CHECK(echoed.find("override: seed=99") != std::string::npos);
  // The full effective key set rides along for defaulted values.
  CHECK(echoed.find("queue_size=512") != std::string::npos);
}

TEST_CASE("canonical round-trips through the parser") {
  RunConfig config = RunConfig::parse_text(kValidConfig);
  RunConfig reparsed = RunConfig::parse_text(config.canonical());
  CHECK(reparsed.canonical() == config.canonical());
  CHECK(reparsed.seed == config.seed);
  CHECK(reparsed.queue_size == config.queue_size);
  CHECK(reparsed.out_dir == config.out_dir);
}
