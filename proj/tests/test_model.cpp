#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "lamnet/analysis.hpp"
#include "lamnet/model.hpp"

using namespace lamnet;

namespace {

LamNetConfig tiny_config() {
  LamNetConfig c;
  c.scale = 2;
  c.channels = 8;
  c.num_blocks = 1;
  c.pairs_per_block = 1;
  c.groups = 4;
  c.dtype = DType::f64;
  return c;
}

Tensor rand_t(Shape4 s, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(s, DType::f64);
  fill_uniform(t, rng, lo, hi);
  return t;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/lamnet_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("config validation") {
  LamNetConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.scale = 5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.channels = 9;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.groups = 3;  // branch width 4 not divisible
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(tiny_config().resolved_csm_hidden() == 4);
  LamNetConfig h = tiny_config();
  h.csm_hidden = 2;
  CHECK(h.resolved_csm_hidden() == 2);
}

TEST_CASE("tiny model parameter hand count") {
  // C=8, 1 block, 1 pair, G=4, K=13 (default focal spec), scale 2:
  //   shallow 3*8*9 = 216
  //   norms 2*(2*8) = 32
  //   ulm (5/2)*64 + 5*13*8 = 680, dgfn 4*64 + 18*8 = 400
  //   trunk 8*8*9 = 576, rec 8*12*9 = 864
  Model m = build(tiny_config(), 0);
  CHECK(m.parameter_count() == 216 + 32 + 680 + 400 + 576 + 864);
  CHECK(m.parameter_count(true, false) == m.parameter_count() - 32);
}

TEST_CASE("base config matches the walked report") {
  Model m = build(LamNetConfig::base(), 1);
  CostReport report = count_model(m, 64, 64);
  CHECK(m.parameter_count(false, true) == report.total_params());
  CHECK(m.parameter_count() == count_trainables(m.named_params(), true, true));
}

TEST_CASE("same seed builds bit-identical models") {
  Model a = build(tiny_config(), 42);
  Model b = build(tiny_config(), 42);
  auto pa = a.named_params(), pb = b.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(pa[i].tensor.values() == pb[i].tensor.values());
  }
  Model c = build(tiny_config(), 43);
  bool differs = false;
  auto pc = c.named_params();
  for (size_t i = 0; i < pa.size(); ++i)
    differs = differs || pa[i].tensor.values() != pc[i].tensor.values();
  CHECK(differs);
}

TEST_CASE("forward output geometry") {
  for (int64_t scale : {2, 3, 4}) {
    LamNetConfig cfg = tiny_config();
    cfg.scale = scale;
    Model m = build(cfg, 0);
    std::mt19937_64 rng(0);
    Tensor x = rand_t({1, 3, 6, 7}, rng);
    Tensor y = m.forward(x);
    CHECK(y.shape() == Shape4{1, 3, 6 * scale, 7 * scale});
  }
}

TEST_CASE("zeroed trunk makes deep equal shallow exactly") {
  Model m = build(tiny_config(), 7);
  std::fill(m.trunk.weight.values().begin(), m.trunk.weight.values().end(), 0.0);
  std::mt19937_64 rng(1);
  Tensor x = rand_t({1, 3, 6, 6}, rng);
  ForwardTrace trace = m.forward_trace(x);
  CHECK(trace.deep.values() == trace.shallow.values());  // bit-exact
}

TEST_CASE("named parameter order is the build order") {
  Model m = build(tiny_config(), 0);
  auto params = m.named_params();
  REQUIRE(params.size() >= 4);
  CHECK(params.front().name == "shallow.weight");
  CHECK(params[1].name == "block0.pair0.ln1.gamma");
  CHECK(params[2].name == "block0.pair0.ln1.beta");
  CHECK(params[params.size() - 2].name == "trunk.weight");
  CHECK(params.back().name == "rec.weight");
}

TEST_CASE("checkpoint round trip preserves forward bits") {
  TempFile f("roundtrip.ckpt");
  LamNetConfig cfg = tiny_config();
  cfg.dtype = DType::f32;
  Model m = build(cfg, 11);
  save(m, f.path);
  Model loaded = load(f.path);
  CHECK(loaded.config == m.config);

  std::mt19937_64 rng(2);
  Tensor x = rand_t({1, 3, 8, 8}, rng).astype(DType::f32);
  CHECK(m.forward(x).values() == loaded.forward(x).values());
}

TEST_CASE("checkpoint rejects garbage") {
  TempFile f("garbage.ckpt");
  {
    std::ofstream os(f.path, std::ios::binary);
    os << "NOTACKPT 123";
  }
  CHECK_THROWS_AS(load(f.path), checkpoint_error);

  // truncated real checkpoint
  Model m = build(tiny_config(), 0);
  TempFile g("trunc.ckpt");
  save(m, g.path);
  std::ifstream is(g.path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), {});
  is.close();
  {
    std::ofstream os(g.path, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load(g.path), checkpoint_error);

  CHECK_THROWS_AS(load("/tmp/lamnet_no_such_file.ckpt"), checkpoint_error);
}

TEST_CASE("transfer init copies the body and keeps the new head") {
  TempFile f("transfer.ckpt");
  LamNetConfig donor_cfg = tiny_config();
  Model donor = build(donor_cfg, 3);
  save(donor, f.path);

  LamNetConfig target_cfg = tiny_config();
  target_cfg.scale = 3;  // scale may differ; rec is rebuilt for the new scale
  Model target = build(target_cfg, 99);
  Tensor rec_before = target.rec.weight.clone();
  load_transfer(target, f.path);

  CHECK(target.shallow.weight.values() == donor.shallow.weight.values());
  CHECK(target.trunk.weight.values() == donor.trunk.weight.values());
  CHECK(target.rec.weight.values() == rec_before.values());  // untouched

  // any other config difference is rejected
  LamNetConfig bad_cfg = tiny_config();
  bad_cfg.channels = 16;
  Model bad = build(bad_cfg, 0);
  CHECK_THROWS_AS(load_transfer(bad, f.path), checkpoint_error);
}

TEST_CASE("config json round trip") {
  LamNetConfig c = tiny_config();
  c.focal = {{1, 2}, {3, 3}};
  c.softmax_weights = true;
  c.csm_hidden = 6;
  LamNetConfig back = config_from_json(config_to_json(c));
  CHECK(back == c);
}

TEST_CASE("translation consistency with the channel branch silenced") {
  // zeroing the CSM convs makes the channel branch 0, which freezes the IEM
  // gates at input-independent values; everything left is convolutional, so a
  // one-pixel input shift produces a scale-pixel output shift away from the
  // borders.
  LamNetConfig cfg = tiny_config();
  Model m = build(cfg, 5);
  for (auto& block : m.blocks)
    for (auto& pair : block.pairs) {
      std::fill(pair.ulm.csm.sqz.weight.values().begin(),
                pair.ulm.csm.sqz.weight.values().end(), 0.0);
      std::fill(pair.ulm.csm.exp.weight.values().begin(),
                pair.ulm.csm.exp.weight.values().end(), 0.0);
    }

  const int64_t H = 16, W = 56, scale = cfg.scale;
  std::mt19937_64 rng(8);
  Tensor base = rand_t({1, 3, H, W + 1}, rng);
  Tensor x1 = Tensor::zeros({1, 3, H, W}, DType::f64);
  Tensor x2 = Tensor::zeros({1, 3, H, W}, DType::f64);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w) {
        x1.at(0, c, h, w) = base.at(0, c, h, w);
        x2.at(0, c, h, w) = base.at(0, c, h, w + 1);  // shifted one pixel left
      }
  Tensor y1 = m.forward(x1), y2 = m.forward(x2);

  // receptive radius of the tiny model is ~21 LR pixels along the shift axis;
  // the H borders clip identically in both inputs, so only W needs a margin
  const int64_t margin = 23 * scale;
  double worst = 0.0;
  int64_t compared = 0;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t h = 0; h < H * scale; ++h)
      for (int64_t w = margin; w + scale < W * scale - margin; ++w) {
        worst = std::max(worst, std::abs(y2.at(0, c, h, w) - y1.at(0, c, h, w + scale)));
        ++compared;
      }
  REQUIRE(compared > 0);
  CHECK(worst < 1e-5);
}
