#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lamnet/analysis.hpp"

using namespace lamnet;

TEST_CASE("headline comparison numbers") {
  // the published comparison runs at C=64, K=8, feature maps 1280x720
  Cost swin_p = closed_form(Arch::swinir, Part::total, 64, 8, 1, 1280, 720);
  CHECK(swin_p.params == 36864);                       // "37K"
  CHECK(std::abs(swin_p.params / 37000.0 - 1) < 0.02);
  CHECK(swin_p.flops == 37866700800);                  // "38G"
  CHECK(std::abs(swin_p.flops / 38e9 - 1) < 0.02);

  Cost lam = closed_form(Arch::lamnet, Part::total, 64, 8, 4, 1280, 720);
  CHECK(lam.params == 30336);                          // "30K"
  CHECK(std::abs(lam.params / 30000.0 - 1) < 0.02);
}

TEST_CASE("per-part closed forms") {
  const int64_t C = 64, K = 8, G = 4, H = 16, W = 16, HW = H * W;

  Cost m = closed_form(Arch::swinir, Part::mixer, C, K, G, H, W);
  CHECK(m.params == 4 * C * C + K * K * K * K);
  CHECK(m.flops == 4 * HW * C * C + 2 * K * K * HW * C);
  Cost f = closed_form(Arch::swinir, Part::ffn, C, K, G, H, W);
  CHECK(f.params == 4 * C * C);
  CHECK(f.flops == 4 * HW * C * C + 2 * HW * C);

  Cost dm = closed_form(Arch::dlgsanet, Part::mixer, C, K, G, H, W);
  CHECK(dm.params == 5 * C * C / 2 + (G + 1) * K * K * C / 2);
  CHECK(dm.flops == 5 * HW * C * C / 2 + (G + 3) * K * K * HW * C / 2);
  Cost df = closed_form(Arch::dlgsanet, Part::ffn, C, K, G, H, W);
  CHECK(df.params == 3 * C * C + 18 * C);
  CHECK(df.flops == 3 * HW * C * C + 20 * HW * C);

  Cost lm = closed_form(Arch::lamnet, Part::mixer, C, K, G, H, W);
  CHECK(lm.params == 5 * C * C / 2 + (G + 1) * K * C);
  CHECK(lm.flops == 5 * HW * C * C / 2 + (G + 2) * K * HW * C);
  Cost lf = closed_form(Arch::lamnet, Part::ffn, C, K, G, H, W);
  CHECK(lf.params == 4 * C * C + 18 * C);
  CHECK(lf.flops == 4 * HW * C * C + 21 * HW * C);

  Cost total = closed_form(Arch::lamnet, Part::total, C, K, G, H, W);
  CHECK(total.params == lm.params + lf.params);
  CHECK(total.flops == lm.flops + lf.flops);

  CHECK_THROWS_AS(closed_form(Arch::lamnet, Part::other, C, K, G, H, W),
                  std::invalid_argument);
  CHECK_THROWS_AS(closed_form(Arch::lamnet, Part::mixer, 63, K, G, H, W),
                  std::invalid_argument);
}

TEST_CASE("counted model parts equal the closed forms") {
  struct Case {
    int64_t c, g;
    FocalSpec spec;
  };
  for (const Case& tc : {Case{16, 2, {{1, 2, 4}, {3, 2, 1}}}, Case{8, 4, {{1, 2}, {2, 1}}},
                         Case{32, 4, {{1}, {1}}}}) {
    LamNetConfig cfg;
    cfg.channels = tc.c;
    cfg.groups = tc.g;
    cfg.focal = tc.spec;
    cfg.num_blocks = 2;
    cfg.pairs_per_block = 3;
    cfg.dtype = DType::f64;
    Model m = build(cfg, 0);
    const int64_t h = 12, w = 10;
    CostReport report = count_model(m, h, w);
    const int64_t layers = cfg.num_blocks * cfg.pairs_per_block;
    const int64_t K = kernel_len(tc.spec);
    Cost mixer = closed_form(Arch::lamnet, Part::mixer, tc.c, K, tc.g, h, w);
    Cost ffn = closed_form(Arch::lamnet, Part::ffn, tc.c, K, tc.g, h, w);
    CHECK(report.part_cost(Part::mixer).params == layers * mixer.params);
    CHECK(report.part_cost(Part::mixer).flops == layers * mixer.flops);
    CHECK(report.part_cost(Part::ffn).params == layers * ffn.params);
    CHECK(report.part_cost(Part::ffn).flops == layers * ffn.flops);
  }
}

TEST_CASE("cost policy switches") {
  LamNetConfig cfg;
  cfg.channels = 16;
  cfg.bias = true;
  cfg.dtype = DType::f64;
  Model m = build(cfg, 0);

  CostReport base = count_model(m, 8, 8, {false, true, 1});
  CostReport want_bias = count_model(m, 8, 8, {true, true, 1});
  CostReport no_norm = count_model(m, 8, 8, {false, false, 1});
  CostReport macs2 = count_model(m, 8, 8, {false, true, 2});

  CHECK(want_bias.total_params() > base.total_params());
  CHECK(no_norm.total_params() < base.total_params());
  CHECK(macs2.total_flops() == 2 * base.total_flops());
  // norm parameters: 2 per pair of (gamma, beta) sets, 2C each
  const int64_t norm_params = cfg.num_blocks * cfg.pairs_per_block * 2 * 2 * cfg.channels;
  CHECK(base.total_params() - no_norm.total_params() == norm_params);
}

TEST_CASE("k sweep is affine for fsa and quadratic for windows") {
  std::vector<FocalSpec> specs = {{{1}, {1}}, {{1, 2}, {2, 1}}, {{1, 2, 4}, {3, 2, 1}}};
  auto rows = k_sweep(specs, 64, 4, 64, 64);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].k == 3);
  CHECK(rows[1].k == 7);
  CHECK(rows[2].k == 13);
  CHECK(rows[2].r == 23);

  // K values 3,7,13 are not equally spaced, so affinity means equal slopes:
  // (f(k2)-f(k1))/(k2-k1) == (f(k3)-f(k2))/(k3-k2), cross-multiplied to stay
  // in integers.
  const int64_t d1 = rows[1].fsa_mixer_flops - rows[0].fsa_mixer_flops;
  const int64_t d2 = rows[2].fsa_mixer_flops - rows[1].fsa_mixer_flops;
  CHECK(d1 * (rows[2].k - rows[1].k) == d2 * (rows[1].k - rows[0].k));

  // dense window attention: remove the K-independent intercept, the rest
  // scales exactly as K^2
  const int64_t HW = 64 * 64, C = 64;
  const int64_t intercept = 4 * HW * C * C;
  for (const KSweepRow& row : rows)
    CHECK(row.window_mixer_flops - intercept == 2 * row.k * row.k * HW * C);

  std::ostringstream os;
  write_k_sweep_csv(os, rows);
  CHECK(os.str().substr(0, os.str().find('\n')) == "k,r,fsa_mixer_flops,window_mixer_flops");
}

TEST_CASE("csv report shape") {
  LamNetConfig cfg;
  cfg.channels = 8;
  cfg.num_blocks = 1;
  cfg.pairs_per_block = 1;
  cfg.dtype = DType::f64;
  Model m = build(cfg, 0);
  CostReport report = count_model(m, 8, 8);
  std::ostringstream os;
  report.write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "name,part,params,flops");
  std::string last;
  while (std::getline(is, line))
    if (!line.empty()) last = line;
  CHECK(last.substr(0, 6) == "total,");
}
