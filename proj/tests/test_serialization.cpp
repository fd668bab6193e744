#include <gtest/gtest.h>

#include <random>

#include "lvae/config.hpp"
#include "lvae/serialization.hpp"
#include "lvae/verify.hpp"

namespace {

using lvae::Json;

TEST(Serialization, LinearVaeJsonRoundTripIsExact) {
  std::mt19937_64 rng(1);
  const auto vae = lvae::fixtures::random_linear_vae(5, 3, rng);
  const auto back = lvae::linear_vae_from_json(Json::parse(lvae::dump(lvae::to_json(vae))));
  EXPECT_EQ(back.decoder, vae.decoder);
  EXPECT_EQ(back.encoder, vae.encoder);
  EXPECT_EQ(back.variances, vae.variances);
  EXPECT_EQ(back.mean, vae.mean);
  EXPECT_EQ(back.noise, vae.noise);
}

TEST(Serialization, LinearVaeBinaryRoundTripIsExact) {
  std::mt19937_64 rng(2);
  const auto vae = lvae::fixtures::random_linear_vae(4, 2, rng);
  const auto bytes = lvae::linear_vae_to_binary(vae);
  const auto back = lvae::linear_vae_from_binary(bytes);
  EXPECT_EQ(back.decoder, vae.decoder);
  EXPECT_EQ(back.encoder, vae.encoder);
  EXPECT_EQ(back.variances, vae.variances);
  EXPECT_EQ(back.mean, vae.mean);
  EXPECT_EQ(back.noise, vae.noise);
  EXPECT_THROW(lvae::linear_vae_from_binary(bytes.substr(0, bytes.size() - 3)), lvae::LengthError);
  EXPECT_THROW(lvae::linear_vae_from_binary(bytes + "x"), lvae::LengthError);
}

TEST(Serialization, MalformedModelJsonIsAFormatError) {
  std::mt19937_64 rng(3);
  auto j = lvae::to_json(lvae::fixtures::random_linear_vae(3, 2, rng));
  auto wrong_type = j;
  wrong_type["type"] = "ppca_model";
  EXPECT_THROW(lvae::linear_vae_from_json(wrong_type), lvae::FormatError);
  auto short_values = j;
  short_values["decoder"]["values"].erase(0);
  EXPECT_THROW(lvae::linear_vae_from_json(short_values), lvae::FormatError);
  auto bad_noise = j;
  bad_noise["noise"] = -1.0;
  EXPECT_THROW(lvae::linear_vae_from_json(bad_noise), lvae::FormatError);
  auto missing = j;
  missing.erase("encoder");
  EXPECT_THROW(lvae::linear_vae_from_json(missing), lvae::FormatError);
}

TEST(Serialization, ElboBreakdownRoundTrip) {
  const lvae::ElboBreakdown b{0.25, 1.0 / 3.0, -12.5, -12.8333, -12.5833};
  const auto back = lvae::elbo_breakdown_from_json(Json::parse(lvae::to_json(b).dump()));
  EXPECT_EQ(back.term_a, b.term_a);
  EXPECT_EQ(back.term_b, b.term_b);
  EXPECT_EQ(back.elbo, b.elbo);
  EXPECT_THROW(lvae::elbo_breakdown_from_json(Json::object()), lvae::FormatError);
}

TEST(Serialization, CsvHeaders) {
  lvae::TrainTrajectory t;
  t.steps.push_back({0, -1.5, -1.0, 0.5, 0.75, 1.0});
  EXPECT_EQ(lvae::trajectory_to_csv(t), "step,elbo,log_marginal,term_a,sigma2,beta\n0,-1.5,-1,0.5,0.75,1\n");
  lvae::CollapseReport r;
  r.epsilons = {0.01};
  r.collapsed_fraction = {0.5};
  EXPECT_EQ(lvae::collapse_to_csv(r), "epsilon,collapsed_fraction\n0.01,0.5\n");
}

TEST(Serialization, CsvUsesSeventeenSignificantDigits) {
  lvae::TrainTrajectory t;
  t.steps.push_back({3, 0.1, 0.0, 0.0, 1.0, 1.0});
  EXPECT_NE(lvae::trajectory_to_csv(t).find("0.10000000000000001"), std::string::npos);
}

TEST(Config, DefaultsAndRelativePaths) {
  const auto c = lvae::parse_config(Json::parse(R"({"data": {"source": "csv", "path": "x.csv"}})"), "/base");
  ASSERT_TRUE(c.data);
  EXPECT_EQ(c.data->path, std::filesystem::path("/base/x.csv"));
  EXPECT_EQ(c.outputs.directory, std::filesystem::path("/base/out"));
  EXPECT_EQ(c.model.k, 1);
  EXPECT_EQ(c.train.steps, 1000);
  EXPECT_EQ(c.collapse.delta, 0.01);
}

TEST(Config, FullDocumentParses) {
  const auto c = lvae::parse_config(Json::parse(R"({
    "data": {"source": "synthetic", "synthetic": {"latent_dim": 2, "ambient_dim": 5, "eigenvalues": [3, 1],
             "noise": 0.5, "sample_count": 100, "seed": 4}},
    "model": {"k": 2, "init": "stationary", "retained": [0], "noise_eigen_index": 2},
    "train": {"mode": "stochastic", "optimizer": "gradient_ascent", "learning_rate": 0.001, "steps": 20,
              "beta_schedule": "linear", "warmup": 10, "samples_per_datum": 2, "learn_mu": true},
    "landscape": {"axes": [{"column": 0, "direction": 1}, {"column": 1, "direction": 3}], "extent": 2,
                  "resolution": 5, "objective": "elbo"},
    "sweep": {"k_values": [1, 2, 3], "reference_k": 2},
    "collapse": {"epsilons": [0.1], "delta": 0.05},
    "probe": {"warmup": 5, "steps": 10, "sigma_fixed": 2.0},
    "compare": {"pairs": 3},
    "verify": {"seed": 9},
    "outputs": {"directory": "/tmp/o", "formats": ["csv", "binary"]}
  })"), "/base");
  EXPECT_EQ(c.data->synthetic.ambient_dim, 5);
  EXPECT_EQ(*c.model.noise_eigen_index, 2);
  EXPECT_EQ(c.train.mode, lvae::GradientMode::stochastic);
  EXPECT_EQ(c.train.beta_schedule.kind, lvae::BetaSchedule::Kind::linear);
  EXPECT_EQ(c.landscape->direction2, 3);
  EXPECT_EQ(c.landscape->objective, lvae::LandscapeObjective::elbo);
  EXPECT_EQ(c.sweep->reference_k, 2);
  EXPECT_EQ(c.probe->sigma_fixed, 2.0);
  EXPECT_EQ(c.compare.pairs, 3);
  EXPECT_EQ(c.verify.seed, 9u);
  EXPECT_TRUE(c.outputs.csv);
  EXPECT_FALSE(c.outputs.json);
  EXPECT_TRUE(c.outputs.binary);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  const char* bad[] = {
      R"({"extra": 1})",
      R"({"data": {"source": "csv", "path": "x", "colour": 1}})",
      R"({"data": {"source": "tape"}})",
      R"({"data": {"source": "csv"}})",
      R"({"model": {"k": 0}})",
      R"({"model": {"init": "magic"}})",
      R"({"model": {"init": "stationary"}})",
      R"({"model": {"noise": 1, "noise_eigen_index": 1}})",
      R"({"train": {"learning_rate": -1}})",
      R"({"train": {"steps": "many"}})",
      R"({"train": {"beta_schedule": "linear", "warmup": 5000}})",
      R"({"landscape": {"axes": [{"column": 0, "direction": 1}]}})",
      R"({"landscape": {"axes": [{"column": 0, "direction": 1}, {"column": 1, "direction": 2}], "resolution": 2}})",
      R"({"collapse": {"delta": 1.5}})",
      R"({"probe": {"warmup": 10, "steps": 10, "sigma_fixed": 1}})",
      R"({"outputs": {"formats": ["pdf"]}})",
      R"([1, 2])",
  };
  for (const char* text : bad) EXPECT_THROW(lvae::parse_config(Json::parse(text), "."), lvae::ConfigError) << text;
}

}  // namespace
