#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "lamnet/config_file.hpp"

using namespace lamnet;

namespace {

CliConfig exotic_config() {
  CliConfig c;
  c.model.scale = 4;
  c.model.channels = 48;
  c.model.num_blocks = 3;
  c.model.pairs_per_block = 5;
  c.model.groups = 2;
  c.model.focal.strides = {1, 2};
  c.model.focal.steps = {3, 3};
  c.model.csm_hidden = 12;
  c.model.softmax_weights = true;
  c.model.bias = false;
  c.model.dtype = DType::f64;
  c.train.total_steps = 1234;
  c.train.batch_size = 3;
  c.train.lr_patch = 48;
  c.train.lr0 = 5e-4;
  c.train.beta1 = 0.85;
  c.train.beta2 = 0.99;
  c.train.adam_eps = 1e-7;
  c.train.milestones = {0.25, 0.75};
  c.train.seed = 99;
  c.train.augment = false;
  c.train.shuffle = false;
  c.train.checkpoint_every = 100;
  c.train.log_every = 10;
  c.train.checkpoint_out = "/tmp/out.ckpt";
  c.hr_dir = "/data/hr";
  c.lr_dir = "/data/lr";
  c.log_out = "/tmp/log.csv";
  c.init_from = "/tmp/seed.ckpt";
  return c;
}

}  // namespace

TEST_CASE("empty input yields the defaults") {
  std::istringstream in("");
  CHECK(parse_config(in) == CliConfig{});
}

TEST_CASE("comments and blank lines are ignored") {
  std::istringstream in(
      "# a comment\n"
      "\n"
      "   \n"
      "scale = 3\n"
      "# another\n");
  CliConfig c = parse_config(in);
  CHECK(c.model.scale == 3);
}

TEST_CASE("emit then parse round-trips every field") {
  CliConfig c = exotic_config();
  std::ostringstream out;
  emit_config(out, c);
  std::istringstream in(out.str());
  CliConfig back = parse_config(in);
  CHECK(back == c);
  CHECK(back.model.focal.strides == std::vector<int64_t>{1, 2});
  CHECK(back.train.milestones == std::vector<double>{0.25, 0.75});
}

TEST_CASE("spacing around the equals sign is flexible") {
  std::istringstream in("channels=24\nseed   =   7\n");
  CliConfig c = parse_config(in);
  CHECK(c.model.channels == 24);
  CHECK(c.train.seed == 7);
}

TEST_CASE("unknown keys are rejected with the line number") {
  std::istringstream in("scale = 2\nnot_a_key = 1\n");
  CHECK_THROWS_WITH_AS(parse_config(in), doctest::Contains("line 2"), config_error);
}

TEST_CASE("a line without an equals sign is rejected") {
  std::istringstream in("scale 2\n");
  CHECK_THROWS_AS(parse_config(in), config_error);
}

TEST_CASE("malformed values are rejected") {
  auto reject = [](const std::string& text) {
    std::istringstream in(text);
    CHECK_THROWS_AS(parse_config(in), config_error);
  };
  reject("channels = twelve\n");
  reject("channels = 12abc\n");
  reject("lr0 = fast\n");
  reject("augment = yes\n");
  reject("dtype = f16\n");
  reject("strides = \n");
  reject("milestones = 0.5,,0.9\n");
}

TEST_CASE("boolean values accept exactly true and false") {
  std::istringstream in("softmax_weights = true\nbias = false\n");
  CliConfig c = parse_config(in);
  CHECK(c.model.softmax_weights);
  CHECK_FALSE(c.model.bias);
}

TEST_CASE("later assignments override earlier ones") {
  std::istringstream in("scale = 2\nscale = 4\n");
  CHECK(parse_config(in).model.scale == 4);
}

TEST_CASE("missing file raises a config error") {
  CHECK_THROWS_AS(parse_config_file("/tmp/lamnet_no_such_config.cfg"), config_error);
}
