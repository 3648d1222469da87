#include <gtest/gtest.h>

#include "thermocast/config.hpp"
#include "thermocast/errors.hpp"

using namespace thermocast;

TEST(Config, DefaultsAreDocumentedValues) {
  const RunConfig c;
  EXPECT_EQ(c.train.init_lr, 1e-3);
  EXPECT_EQ(c.train.epochs, 100u);
  EXPECT_EQ(c.train.batch_size, 32u);
  EXPECT_EQ(c.train.patience, 10u);
  EXPECT_EQ(c.train.min_delta, 1e-4);
  EXPECT_EQ(c.model.window, 30u);
  EXPECT_EQ(c.pipeline.window, 30u);
  EXPECT_EQ(c.pipeline.train_fraction, 0.8);
}

TEST(Config, ParsesKeyValueText) {
  const RunConfig c = parse_config_text(
      "# training\n"
      "epochs = 7\n"
      "init_lr=0.005   # faster\n"
      "\n"
      "window = 12\n"
      "aggregation = max\n"
      "dense_activation = linear\n"
      "reduction = mean\n");
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.train.init_lr, 0.005);
  EXPECT_EQ(c.model.window, 12u);
  EXPECT_EQ(c.pipeline.window, 12u);
  EXPECT_EQ(c.pipeline.aggregation, Aggregation::Max);
  EXPECT_EQ(c.model.dense_activation, Activation::Linear);
  EXPECT_EQ(c.model.reduction, SequenceReduction::MeanOverTime);
}

TEST(Config, LaterSettingsWin) {
  RunConfig c = parse_config_text("seed = 1\nseed = 2\n");
  EXPECT_EQ(c.train.seed, 2u);
  c.set("seed", "9");
  EXPECT_EQ(c.train.seed, 9u);
}

TEST(Config, EchoRoundTrips) {
  RunConfig c = parse_config_text("epochs = 3\nmin_delta = 0.25\nexclusions = /tmp/x.txt\nlstm_units = 7\n");
  const std::string text = c.to_text();
  const RunConfig again = parse_config_text(text);
  EXPECT_EQ(again.to_text(), text);
  EXPECT_EQ(again.model, c.model);
  EXPECT_EQ(again.exclusions_path, "/tmp/x.txt");
  for (const std::string& key : RunConfig::keys()) EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config_text("epoch = 3\n"), ContractError);
  EXPECT_THROW(parse_config_text("epochs = three\n"), ContractError);
  EXPECT_THROW(parse_config_text("epochs 3\n"), ContractError);
  EXPECT_THROW(parse_config_text("aggregation = median\n"), ContractError);
  EXPECT_THROW(parse_config_text("epochs = 3x\n"), ContractError);
}
