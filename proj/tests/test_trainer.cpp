#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "clucdd/synth.hpp"
#include "clucdd/trainer.hpp"
#include "support/gradcheck.hpp"

using namespace clucdd;

namespace {

std::string bytes_of(const Checkpoint& ck) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, ck);
  return out.str();
}

Checkpoint from_bytes(const std::string& s) {
  std::istringstream in(s, std::ios::binary);
  return read_checkpoint(in);
}

std::vector<Dialogue> corpus(int dialogues, std::uint64_t seed, int n_max = 12) {
  SynthConfig sc;
  sc.dialogues = dialogues;
  sc.n_min = 6;
  sc.n_max = n_max;
  sc.seed = seed;
  sc.vocab_per_session = 6;
  sc.noise_vocab = 4;
  return synthesize(sc);
}

TrainConfig small_config() {
  TrainConfig c;
  c.dim = 8;
  c.epochs = 3;
  c.batch_size = 2;
  c.learning_rate = 5e-3;
  c.seed = 21;
  return c;
}

}  // namespace

TEST(ModelGradient, FullLossMatchesFiniteDifferences) {
  for (auto variant : {SffVariant::full, SffVariant::no_bilstm, SffVariant::no_sff}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto inst = gradcheck::make_instance(seed, 4, 8, 4, variant);
      const ContrastiveConfig cfg;
      ModelGradients g = inst.model.zero_gradients();
      dialogue_loss(inst.model, inst.dialogue, cfg, &g);
      const auto worst =
          gradcheck::compare(inst.model, g, [&] { return dialogue_loss(inst.model, inst.dialogue, cfg).total; });
      EXPECT_LT(worst.error, gradcheck::kTolerance)
          << to_string(variant) << " seed " << seed << " " << worst.tensor << "[" << worst.index << "]";
    }
  }
}

TEST(Adam, ScalarFirstStep) {
  TrainConfig c;
  double param = 0.0, grad = 1.0;
  Eigen::ArrayXd m = Eigen::ArrayXd::Zero(1), v = Eigen::ArrayXd::Zero(1);
  adam_update(&param, &grad, 1, m, v, 1, c);
  EXPECT_NEAR(param, -5e-4, 1e-10);
}

TEST(Adam, ZeroGradientLeavesParamsAndDecaysMoments) {
  TrainConfig c;
  double param = 0.3, grad = 0.0;
  Eigen::ArrayXd m = Eigen::ArrayXd::Constant(1, 0.0), v = Eigen::ArrayXd::Constant(1, 0.0);
  adam_update(&param, &grad, 1, m, v, 1, c);
  EXPECT_EQ(param, 0.3);
  m[0] = 0.2;
  v[0] = 0.4;
  grad = 0.0;
  const double before = param;
  adam_update(&param, &grad, 1, m, v, 2, c);
  EXPECT_NEAR(m[0], 0.9 * 0.2, 1e-15);
  EXPECT_NEAR(v[0], 0.999 * 0.4, 1e-15);
  EXPECT_NE(param, before);  // the decayed first moment still moves the parameter
}

TEST(Adam, StepIsDeterministicAndSkipsFrozenTensors) {
  auto inst = gradcheck::make_instance(3);
  TrainConfig c;
  c.freeze_encoder = true;
  ModelGradients g = inst.model.zero_gradients();
  dialogue_loss(inst.model, inst.dialogue, c.contrastive, &g);
  Model a = inst.model, b = inst.model;
  AdamState sa = make_adam_state(a, c), sb = make_adam_state(b, c);
  EXPECT_EQ(sa.first[0].size(), 0);
  adam_step(a, g, sa, c);
  adam_step(b, g, sb, c);
  EXPECT_TRUE(sa == sb);
  EXPECT_EQ(a.vocab.table, inst.model.vocab.table);
  EXPECT_EQ(a.sff.fc_weight, b.sff.fc_weight);
  EXPECT_NE(a.sff.fc_weight, inst.model.sff.fc_weight);
}

TEST(Adam, NonFiniteGradientNamesTensorAndChangesNothing) {
  auto inst = gradcheck::make_instance(4);
  TrainConfig c;
  ModelGradients g = inst.model.zero_gradients();
  g.head.out_bias[1] = std::numeric_limits<double>::quiet_NaN();
  Model m = inst.model;
  AdamState s = make_adam_state(m, c);
  try {
    adam_step(m, g, s, c);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("head.out.bias"), std::string::npos);
  }
  EXPECT_EQ(s.step, 0u);
  EXPECT_EQ(m.head.out_bias, inst.model.head.out_bias);
}

TEST(Train, FrozenEncoderTableIsBitwiseUnchanged) {
  const auto data = corpus(6, 1);
  TrainConfig c = small_config();
  c.freeze_encoder = true;
  TrainInputs in;
  in.train = data;
  const auto before = build_vocabulary(data, c.dim, c.seed).table;
  const auto r = train(in, c);
  EXPECT_EQ(r.last.model.vocab.table, before);
  EXPECT_EQ(r.last.adam.first[0].size(), 0);
  EXPECT_GT(r.last.adam.first[1].size(), 0);
  EXPECT_TRUE(from_bytes(bytes_of(r.last)).freeze_encoder);
}

TEST(Train, OverfitsOneDialogue) {
  auto data = corpus(1, 2);
  TrainConfig c = small_config();
  c.dim = 16;
  c.epochs = 200;
  c.batch_size = 1;
  c.learning_rate = 1e-2;
  TrainInputs in;
  in.train = data;
  const auto r = train(in, c);
  const double first = r.log.front().mean_loss, last = r.log.back().mean_loss;
  EXPECT_LT(last, 0.01 * first) << first << " -> " << last;
}

TEST(Train, SmallLearningRateIsEventuallyMonotone) {
  auto data = corpus(1, 3);
  TrainConfig c = small_config();
  c.epochs = 200;
  c.batch_size = 1;
  c.learning_rate = 1e-4;
  TrainInputs in;
  in.train = data;
  const auto r = train(in, c);
  for (std::size_t e = 151; e < r.log.size(); ++e) {
    EXPECT_LE(r.log[e].mean_loss, r.log[e - 1].mean_loss + 1e-12) << "epoch " << e + 1;
  }
}

TEST(Train, SameSeedSameCheckpoint) {
  const auto data = corpus(8, 4);
  const auto dev = corpus(3, 5);
  TrainInputs in;
  in.train = data;
  in.dev = dev;
  const auto a = train(in, small_config());
  const auto b = train(in, small_config());
  EXPECT_EQ(bytes_of(a.checkpoint), bytes_of(b.checkpoint));
  EXPECT_EQ(bytes_of(a.last), bytes_of(b.last));
  ASSERT_EQ(a.log.size(), 3u);
  EXPECT_TRUE(a.log[0].dev.has_value());
  EXPECT_TRUE(a.log[0].selected);
}

TEST(Train, RejectsBadInputs) {
  TrainInputs in;
  EXPECT_THROW(train(in, small_config()), ValidationError);
  auto data = corpus(2, 6);
  in.train = data;
  TrainConfig c = small_config();
  c.k_max = 2;
  bool any_big = false;
  for (const auto& d : data) any_big = any_big || d.labeling().k > 2;
  if (any_big) EXPECT_THROW(train(in, c), ValidationError);
  c = small_config();
  c.dim = 7;
  EXPECT_THROW(train(in, c), ConfigError);
}

TEST(Checkpoint, RoundTripAndResume) {
  const auto data = corpus(6, 7);
  TrainConfig c = small_config();
  c.epochs = 1;
  TrainInputs in;
  in.train = data;
  const auto first = train(in, c);
  const std::string bytes = bytes_of(first.last);
  const Checkpoint loaded = from_bytes(bytes);
  EXPECT_EQ(bytes_of(loaded), bytes);
  EXPECT_TRUE(loaded.adam == first.last.adam);

  in.resume = &first.last;
  const auto direct = train(in, c);
  in.resume = &loaded;
  const auto reloaded = train(in, c);
  EXPECT_EQ(bytes_of(direct.last), bytes_of(reloaded.last));
  EXPECT_EQ(direct.last.adam.step, 2 * first.last.adam.step);
}

TEST(Checkpoint, TruncationAndBadMagicRejected) {
  const auto inst = gradcheck::make_instance(8);
  Checkpoint ck;
  ck.model = inst.model;
  ck.adam = make_adam_state(ck.model, TrainConfig{});
  const std::string bytes = bytes_of(ck);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(from_bytes(bytes.substr(0, cut)), FormatError) << cut;
  }
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(from_bytes(bad), FormatError);
  EXPECT_THROW(from_bytes(bytes + "x"), FormatError);
}

TEST(TrainConfig, JsonOverlay) {
  TrainConfig c;
  apply_json(c, nlohmann::json{{"learning_rate", 0.01}, {"variant", "no_sff"}, {"reduction", "mean"}});
  EXPECT_EQ(c.learning_rate, 0.01);
  EXPECT_EQ(c.variant, SffVariant::no_sff);
  EXPECT_EQ(c.contrastive.reduction, Reduction::mean);
  EXPECT_THROW(apply_json(c, nlohmann::json{{"lr", 1}}), ConfigError);
  EXPECT_THROW(apply_json(c, nlohmann::json{{"epochs", "many"}}), ConfigError);
  EXPECT_THROW(apply_json(c, nlohmann::json{{"variant", "tiny"}}), ConfigError);
  TrainConfig d;
  apply_json(d, to_json(c));
  EXPECT_EQ(config_hash(c), config_hash(d));
}
