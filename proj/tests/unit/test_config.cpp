#include <gtest/gtest.h>

#include "episodica/config.hpp"
#include "episodica/error.hpp"

using namespace episodica;
using config::RunConfig;
using config::Variant;

namespace {

std::string error_of(const std::string& text) {
  try {
    config::parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  EXPECT_EQ(config::serialize(config::parse_config("")), config::serialize(RunConfig::defaults()));
  EXPECT_EQ(config::serialize(config::parse_config("# only a comment\n\n")), config::serialize(RunConfig::defaults()));
}

TEST(Config, VariantDefaults) {
  const RunConfig s = RunConfig::defaults(Variant::kSimclr);
  EXPECT_EQ(s.loss.temperature, 0.5);
  EXPECT_EQ(s.loss.similarity, contrastive::Similarity::kCosine);
  EXPECT_EQ(s.batch_size, 32u);
  EXPECT_EQ(s.task, (episodic::TaskSpec{5, 1, 15, 10000}));
  const RunConfig m = RunConfig::defaults(Variant::kMoco);
  EXPECT_EQ(m.loss.temperature, 0.2);
  EXPECT_EQ(m.loss.similarity, contrastive::Similarity::kDot);
  ASSERT_FALSE(m.projection_head.empty());
  EXPECT_EQ(m.projection_head.back(), model::LayerSpec::l2_normalize_output());
}

TEST(Config, VariantLineOrderDoesNotMatter) {
  const RunConfig a = config::parse_config("temperature = 0.07\nvariant = moco\n");
  EXPECT_EQ(a.variant, Variant::kMoco);
  EXPECT_EQ(a.loss.temperature, 0.07);
  EXPECT_EQ(a.loss.similarity, contrastive::Similarity::kDot);
}

TEST(Config, ParsesValues) {
  const RunConfig c = config::parse_config(
      "seed = 17  # trailing comment\n"
      "temperature = 0.25\n"
      "backbone = conv3x3 3 8 2; relu; global_avg_pool\n"
      "projection_head = none\n"
      "image_mean = 0.1, 0.2, 0.3\n"
      "nesterov = false\n"
      "lr_schedule = cosine\n"
      "classifier = 1nn-centroid\n"
      "k_shot = 5\n");
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.loss.temperature, 0.25);
  EXPECT_EQ(c.backbone.size(), 3u);
  EXPECT_TRUE(c.projection_head.empty());
  EXPECT_EQ(c.augment.image_mean, (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_FALSE(c.optim.nesterov);
  EXPECT_EQ(c.optim.schedule, config::LrSchedule::kCosine);
  EXPECT_EQ(c.classifier, episodic::Classifier::kNearestCentroid);
  EXPECT_EQ(c.task.k_shot, 5u);
}

TEST(Config, SerializeIsAFixpoint) {
  for (auto v : {Variant::kSimclr, Variant::kMoco}) {
    const std::string once = config::serialize(RunConfig::defaults(v));
    const std::string twice = config::serialize(config::parse_config(once));
    EXPECT_EQ(once, twice);
  }
  const RunConfig c = config::parse_config("temperature = 0.1\nkey_momentum = 0.99\nweight_decay = 5e-4\n");
  const RunConfig back = config::parse_config(config::serialize(c));
  EXPECT_EQ(back.loss.temperature, 0.1);
  EXPECT_EQ(back.key_momentum, 0.99);
  EXPECT_EQ(back.optim.weight_decay, 5e-4);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_EQ(error_of("seed = 1\n\nbogus_key = 3\n").rfind("config line 3: unknown key 'bogus_key'", 0), 0u);
  EXPECT_EQ(error_of("temperature = hot\n").rfind("config line 1", 0), 0u);
  EXPECT_NE(error_of("seed = 1\nseed = 2\n").find("duplicate key 'seed'"), std::string::npos);
  EXPECT_NE(error_of("just words\n").find("expected 'key = value'"), std::string::npos);
  EXPECT_FALSE(error_of("variant = byol\n").empty());
  EXPECT_FALSE(error_of("nesterov = maybe\n").empty());
  EXPECT_FALSE(error_of("epochs = -3\n").empty());
}

TEST(Config, ValidationRejectsBadValues) {
  EXPECT_THROW(config::parse_config("temperature = 0\n").validate(), ConfigError);
  EXPECT_THROW(config::parse_config("batch_size = 1\n").validate(), ConfigError);
  EXPECT_THROW(config::parse_config("key_momentum = 1.5\n").validate(), ConfigError);
  EXPECT_THROW(config::parse_config("epochs = 0\n").validate(), ConfigError);
  EXPECT_THROW(config::parse_config("n_way = 0\n").validate(), ConfigError);
  EXPECT_THROW(config::parse_config("backbone = dense 4 2\n").validate(), ConfigError);
}

TEST(Config, ArchFollowsImageSize) {
  const RunConfig c = config::parse_config("image_size = 24\n");
  EXPECT_EQ(c.arch().input, (Shape{3, 24, 24}));
}

TEST(Config, HelpMentionsEveryKey) {
  const std::string help = config::help_text();
  for (const char* key : {"variant", "seed", "temperature", "queue_capacity", "key_momentum", "classifier", "workers"})
    EXPECT_NE(help.find(key), std::string::npos) << key;
}
