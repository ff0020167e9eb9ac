#include <string>

#include "doctest.h"
#include "o2o/config.hpp"
#include "o2o/errors.hpp"

using namespace o2o;

TEST_SUITE_BEGIN("config");

TEST_CASE("key = value lines with comments and overrides") {
  TrainConfig cfg = parse_train_config(
      {
          "# a comment",
          "algorithm = rankq",
          "dataset = d.o2o",
          "batch_size = 64   # trailing comment",
          "critic_hidden = 32,32",
          "",
          "mixing_ratio = -1",
      },
      {"seed=9", "alpha0=20"});
  CHECK(cfg.algorithm == "rankq");
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.critic_hidden == std::vector<std::size_t>{32, 32});
  CHECK(cfg.mixing_ratio == -1.0);
  CHECK(cfg.seed == 9);
  CHECK(cfg.alpha0 == 20.0);
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_AS(parse_train_config({"dataset = d.o2o", "not_a_key = 1"}, {}),
                  ConfigError);
}

TEST_CASE("every problem is listed at once") {
  try {
    parse_train_config({"algorithm = rankq", "batch_size = 0",
                        "grad_clip = -1", "gamma = 2"},
                       {});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("batch_size") != std::string::npos);
    CHECK(msg.find("grad_clip") != std::string::npos);
    CHECK(msg.find("gamma") != std::string::npos);
    CHECK(msg.find("dataset") != std::string::npos);  // rankq needs one
  }
}

TEST_CASE("sac must be pure online") {
  CHECK_THROWS_AS(
      parse_train_config({"algorithm = sac", "offline_steps = 100"}, {}),
      ConfigError);
  TrainConfig ok =
      parse_train_config({"algorithm = sac", "offline_steps = 0"}, {});
  CHECK(ok.dataset.empty());
}

TEST_CASE("algorithm matrix maps offline and online objectives") {
  CHECK(algorithm_spec("cql").online == CriticObjective::kCql);
  CHECK(algorithm_spec("cql_sac").online == CriticObjective::kTd);
  CHECK(algorithm_spec("cql_sac").offline == CriticObjective::kCql);
  CHECK(algorithm_spec("calql_sac").offline == CriticObjective::kCalql);
  CHECK(algorithm_spec("rankq").offline == CriticObjective::kRankq);
  CHECK(algorithm_spec("rankq_sac").online == CriticObjective::kTd);
  CHECK(algorithm_spec("sac_off").pooled_buffer);
  CHECK(algorithm_spec("hybrid").fixed_half_mix);
  CHECK(!algorithm_spec("sac").uses_offline_data);
  CHECK_THROWS_AS(algorithm_spec("ppo"), ConfigError);
}

TEST_CASE("config help lists every key with a default") {
  std::string help = config_key_help();
  for (const char* key :
       {"algorithm", "env", "dataset", "offline_steps", "online_env_steps",
        "batch_size", "actor_lr", "critic_lr", "grad_clip", "mixing_ratio",
        "gamma", "tau", "seed", "alpha", "alpha0", "alpha1", "sigma",
        "cql_estimator", "fail_pair", "use_lagrange", "target_action_gap",
        "target_action_samples", "ablate_no_chain"})
    CHECK(help.find(key) != std::string::npos);
}

TEST_CASE("objective conversion carries the knobs across") {
  TrainConfig cfg = parse_train_config(
      {"algorithm = rankq", "dataset = d.o2o", "sigma = 0.3",
       "ablate_no_chain = true", "fail_pair = noisy",
       "cql_estimator = mean-policy", "target_action_samples = 4"},
      {});
  CriticObjectiveConfig oc = cfg.objective(CriticObjective::kRankq);
  CHECK(oc.sigma == 0.3);
  CHECK(oc.ablate_no_chain);
  CHECK(oc.fail_pair == FailPair::kNoisy);
  CHECK(oc.estimator == CqlEstimator::kMeanPolicy);
  CHECK(oc.n_target_action_samples == 4);
}

TEST_SUITE_END();
