#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "lamnet/trainer.hpp"

using namespace lamnet;

namespace {

LamNetConfig tiny_model() {
  LamNetConfig c;
  c.scale = 2;
  c.channels = 8;
  c.num_blocks = 1;
  c.pairs_per_block = 1;
  c.groups = 4;
  c.dtype = DType::f64;
  return c;
}

// two constant-valued 8x8/16x16 pairs with very different brightness
Dataset two_tone_dataset() {
  Dataset d;
  d.scale = 2;
  for (double v : {0.05, 0.95}) {
    ImagePair p;
    p.name = v < 0.5 ? "dark" : "bright";
    p.lr = Tensor::full({1, 3, 8, 8}, v, DType::f64);
    p.hr = Tensor::full({1, 3, 16, 16}, v, DType::f64);
    d.pairs.push_back(std::move(p));
  }
  return d;
}

TrainConfig quick_train(int64_t steps) {
  TrainConfig t;
  t.total_steps = steps;
  t.batch_size = 1;
  t.lr_patch = 8;
  t.lr0 = 1e-3;
  t.seed = 1;
  t.augment = false;
  t.shuffle = false;
  return t;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/lamnet_trainer_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("l1 loss value and gradients") {
  Tensor pred = Tensor::from_data({1, 1, 1, 2}, {1.0, -2.0}, DType::f64, true);
  Tensor target = Tensor::from_data({1, 1, 1, 2}, {0.5, -1.0}, DType::f64, true);
  Tape tape;
  Tensor loss = l1_loss(pred, target);
  CHECK(loss.values()[0] == doctest::Approx(0.75));
  tape.backward(loss);
  CHECK(pred.grad() == std::vector<double>{0.5, -0.5});
  CHECK(target.grad() == std::vector<double>{-0.5, 0.5});
}

TEST_CASE("l1 loss takes sign(0) = 0") {
  Tensor pred = Tensor::from_data({1, 1, 1, 2}, {3.0, 1.0}, DType::f64, true);
  Tensor target = Tensor::from_data({1, 1, 1, 2}, {3.0, 0.0}, DType::f64);
  Tape tape;
  tape.backward(l1_loss(pred, target));
  CHECK(pred.grad()[0] == 0.0);
  CHECK(pred.grad()[1] == 0.5);
}

TEST_CASE("milestone schedule halves past each boundary") {
  TrainConfig cfg;
  cfg.total_steps = 100;
  cfg.lr0 = 1.0;
  CHECK(lr_at(cfg, 1) == 1.0);
  CHECK(lr_at(cfg, 50) == 1.0);
  CHECK(lr_at(cfg, 51) == 0.5);
  CHECK(lr_at(cfg, 80) == 0.5);
  CHECK(lr_at(cfg, 81) == 0.25);
  CHECK(lr_at(cfg, 90) == 0.25);
  CHECK(lr_at(cfg, 91) == 0.125);
  CHECK(lr_at(cfg, 95) == 0.125);
  CHECK(lr_at(cfg, 96) == 0.0625);
  CHECK(lr_at(cfg, 100) == 0.0625);
  CHECK_THROWS_AS(lr_at(cfg, 0), std::invalid_argument);
}

TEST_CASE("adam first step moves by about lr against the gradient sign") {
  Tensor w = Tensor::from_data({1, 1, 1, 2}, {1.0, -3.0}, DType::f64, true);
  w.ensure_grad();
  w.grad()[0] = 0.5;
  w.grad()[1] = -2.0;
  std::vector<NamedParam> params{{"w", w, ParamKind::conv_weight}};
  AdamState state;
  state.init(params);
  adam_step(params, state, 0.001, 0.9, 0.999, 1e-8);
  // bias correction makes mhat = g and vhat = g^2 on the first step, so the
  // update is lr * g/|g| up to eps
  CHECK(w.values()[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-7));
  CHECK(w.values()[1] == doctest::Approx(-3.0 + 0.001).epsilon(1e-7));
  CHECK(state.step == 1);
}

TEST_CASE("adam demands gradients for trainable parameters") {
  Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0}, DType::f64, true);
  std::vector<NamedParam> params{{"w", w, ParamKind::conv_weight}};
  AdamState state;
  state.init(params);
  CHECK_THROWS_AS(adam_step(params, state, 0.1, 0.9, 0.999, 1e-8), std::logic_error);
}

TEST_CASE("training is deterministic given seed and config") {
  Dataset data = two_tone_dataset();
  TrainConfig cfg = quick_train(4);
  cfg.shuffle = true;
  cfg.augment = true;

  Model m1 = build(tiny_model(), 5);
  Model m2 = build(tiny_model(), 5);
  TrainResult r1 = train(m1, data, cfg);
  TrainResult r2 = train(m2, data, cfg);

  REQUIRE(r1.log.size() == r2.log.size());
  for (size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].loss == r2.log[i].loss);  // bit-identical
    CHECK(r1.log[i].lr == r2.log[i].lr);
  }
  auto p1 = m1.named_params(), p2 = m2.named_params();
  for (size_t i = 0; i < p1.size(); ++i)
    CHECK(p1[i].tensor.values() == p2[i].tensor.values());
}

TEST_CASE("round-robin order without shuffle") {
  Dataset data = two_tone_dataset();
  TrainConfig cfg = quick_train(4);
  cfg.lr0 = 0.0;  // freeze the weights so the loss depends only on the batch
  Model m = build(tiny_model(), 5);
  TrainResult r = train(m, data, cfg);
  REQUIRE(r.log.size() == 4);
  CHECK(r.log[0].loss == r.log[2].loss);  // dark, bright, dark, bright
  CHECK(r.log[1].loss == r.log[3].loss);
  CHECK(r.log[0].loss != r.log[1].loss);
  CHECK(r.initial_loss == r.log[0].loss);
  CHECK(r.final_loss == r.log[3].loss);
}

TEST_CASE("full-set batch without shuffle trains on a fixed batch") {
  Dataset data = two_tone_dataset();
  TrainConfig cfg = quick_train(3);
  cfg.batch_size = 2;  // == dataset size
  cfg.lr0 = 0.0;
  Model m = build(tiny_model(), 5);
  TrainResult r = train(m, data, cfg);
  CHECK(r.log[0].loss == r.log[1].loss);
  CHECK(r.log[1].loss == r.log[2].loss);
}

TEST_CASE("losses actually decrease on a constant dataset") {
  Dataset data = two_tone_dataset();
  TrainConfig cfg = quick_train(30);
  cfg.lr0 = 2e-3;
  Model m = build(tiny_model(), 5);
  TrainResult r = train(m, data, cfg);
  CHECK(r.final_loss < r.initial_loss);
}

TEST_CASE("non-finite loss aborts with the step number") {
  Dataset data = two_tone_dataset();
  TrainConfig cfg = quick_train(3);
  Model m = build(tiny_model(), 5);
  m.shallow.weight.values()[0] = std::nan("");
  CHECK_THROWS_AS(train(m, data, cfg), train_abort);
  try {
    Model m2 = build(tiny_model(), 5);
    m2.shallow.weight.values()[0] = std::nan("");
    train(m2, data, cfg);
  } catch (const train_abort& e) {
    CHECK(e.step == 1);
  }
}

TEST_CASE("scale mismatch and empty dataset are rejected") {
  Dataset data = two_tone_dataset();
  LamNetConfig cfg3 = tiny_model();
  cfg3.scale = 3;
  Model m = build(cfg3, 0);
  CHECK_THROWS_AS(train(m, data, quick_train(1)), std::invalid_argument);

  Dataset empty;
  empty.scale = 2;
  Model m2 = build(tiny_model(), 0);
  CHECK_THROWS_AS(train(m2, empty, quick_train(1)), std::invalid_argument);
}

TEST_CASE("zero steps still writes the init checkpoint") {
  TempFile ckpt("zero.ckpt");
  Dataset data = two_tone_dataset();
  TrainConfig cfg = quick_train(0);
  cfg.checkpoint_out = ckpt.path;
  Model m = build(tiny_model(), 7);
  TrainResult r = train(m, data, cfg);
  CHECK(r.log.empty());
  Model loaded = load(ckpt.path);
  auto pa = m.named_params(), pb = loaded.named_params();
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i].tensor.values() == pb[i].tensor.values());
}

TEST_CASE("periodic checkpoints end with the final weights") {
  TempFile ckpt("periodic.ckpt");
  Dataset data = two_tone_dataset();
  TrainConfig cfg = quick_train(5);
  cfg.checkpoint_every = 2;
  cfg.checkpoint_out = ckpt.path;
  Model m = build(tiny_model(), 7);
  train(m, data, cfg);
  Model loaded = load(ckpt.path);
  auto pa = m.named_params(), pb = loaded.named_params();
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i].tensor.values() == pb[i].tensor.values());
}

TEST_CASE("log respects log_every and always includes the last step") {
  Dataset data = two_tone_dataset();
  TrainConfig cfg = quick_train(5);
  cfg.log_every = 2;
  Model m = build(tiny_model(), 7);
  TrainResult r = train(m, data, cfg);
  REQUIRE(r.log.size() == 3);
  CHECK(r.log[0].step == 2);
  CHECK(r.log[1].step == 4);
  CHECK(r.log[2].step == 5);

  std::ostringstream os;
  write_train_log_csv(os, r.log);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "step,lr,loss");
  int rows = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
}
