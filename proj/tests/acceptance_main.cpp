// Acceptance checks, one per release criterion. Each prints a single
// PASS/FAIL line; the binary exits nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lamnet/analysis.hpp"
#include "lamnet/check_suite.hpp"
#include "lamnet/config_file.hpp"
#include "lamnet/image.hpp"
#include "lamnet/model.hpp"
#include "lamnet/trainer.hpp"

using namespace lamnet;

namespace {

int g_failures = 0;

void report(const char* id, bool ok, const std::string& detail) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << id << ": " << detail << "\n";
  if (!ok) ++g_failures;
}

FocalSpec spec_for_k(int64_t k) {
  switch (k) {
    case 3: return FocalSpec{{1}, {1}};
    case 7: return FocalSpec{{1, 2}, {2, 1}};
    case 13: return FocalSpec{{1, 2, 4}, {3, 2, 1}};
    default: throw std::logic_error("no spec for K");
  }
}

Tensor random_tensor(Shape4 s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(s, DType::f64);
  fill_uniform(t, rng, lo, hi);
  return t;
}

bool within_frac(double value, double target, double frac) {
  return std::abs(value - target) <= frac * std::abs(target);
}

// ---- criterion 1: multi-scale focal window geometry ----

void check_receptive_fields() {
  bool ok = receptive_field(spec_for_k(13)) == 23 &&
            receptive_field(FocalSpec{{1, 2}, {3, 3}}) == 19 &&
            receptive_field(FocalSpec{{1}, {6}}) == 13 &&
            receptive_field(FocalSpec{{1, 2, 4}, {1, 1, 1}}) == 15;
  report("C1", ok, "receptive fields (1,2,4)/(3,2,1)=23, (1,2)/(3,3)=19, (1)/(6)=13, (1,2,4)/(1,1,1)=15");
}

// ---- criterion 2: closed-form parameter identities ----

void check_param_formulas() {
  std::mt19937_64 rng(11);
  bool ok = true;
  std::string first_bad;
  for (int64_t c : {8, 16, 32, 64})
    for (int64_t g : {2, 4})
      for (int64_t k : {3, 7, 13}) {
        FocalSpec spec = spec_for_k(k);
        UlmParams ulm = UlmParams::init(c, g, spec, c / 2, false, false, DType::f64, rng);
        int64_t got = count_trainables(ulm.named_params("u"), false, false);
        int64_t want = 5 * c * c / 2 + (g + 1) * k * c;
        if (got != want && first_bad.empty())
          first_bad = "ulm C=" + std::to_string(c) + " G=" + std::to_string(g) +
                      " K=" + std::to_string(k) + " got " + std::to_string(got) + " want " +
                      std::to_string(want);
        ok = ok && got == want;

        DgfnParams dgfn = DgfnParams::init(c, false, DType::f64, rng);
        int64_t fgot = count_trainables(dgfn.named_params("f"), false, false);
        int64_t fwant = 4 * c * c + 18 * c;
        if (fgot != fwant && first_bad.empty())
          first_bad = "dgfn C=" + std::to_string(c) + " got " + std::to_string(fgot);
        ok = ok && fgot == fwant;
      }
  report("C2", ok,
         ok ? "mixer params = 5C^2/2 + (G+1)KC and ffn params = 4C^2 + 18C over C in {8,16,32,64}, G in {2,4}, K in {3,7,13}"
            : first_bad);
}

// ---- criterion 3: headline model costs ----

void check_headline_costs() {
  Cost sw = closed_form(Arch::swinir, Part::total, 64, 8, 1, 1280, 720);
  Cost lm = closed_form(Arch::lamnet, Part::total, 64, 8, 4, 1280, 720);
  bool ok = sw.params == 36864 && within_frac(double(sw.params), 37000.0, 0.02) &&
            sw.flops == 37866700800LL && within_frac(double(sw.flops), 38e9, 0.02) &&
            lm.params == 30336 && within_frac(double(lm.params), 30000.0, 0.02);
  std::ostringstream d;
  d << "swinir " << sw.params << " params / " << sw.flops << " flops, lamnet " << lm.params
    << " params (vs 37K / 38G / 30K, each within 2%)";
  report("C3", ok, d.str());
}

// ---- criterion 4: FSA cost affine in K, dense window quadratic ----

void check_k_scaling() {
  const int64_t C = 64, G = 4, H = 720, W = 1280;
  std::vector<FocalSpec> specs = {spec_for_k(3), spec_for_k(7), spec_for_k(13)};
  std::vector<KSweepRow> rows = k_sweep(specs, C, G, H, W);
  bool ok = rows.size() == 3 && rows[0].k == 3 && rows[1].k == 7 && rows[2].k == 13;
  if (ok) {
    // with three points an affine fit is exact iff the two slopes agree
    int64_t lhs = (rows[1].fsa_mixer_flops - rows[0].fsa_mixer_flops) * (rows[2].k - rows[1].k);
    int64_t rhs = (rows[2].fsa_mixer_flops - rows[1].fsa_mixer_flops) * (rows[1].k - rows[0].k);
    ok = lhs == rhs;
    for (const KSweepRow& r : rows)
      ok = ok && (r.window_mixer_flops - 4 * H * W * C * C == 2 * r.k * r.k * H * W * C);
  }
  report("C4", ok, "fsa mixer flops exactly affine in K over {3,7,13}; dense-window reference grows as K^2");
}

// ---- criterion 5: finite-difference gradients ----

void check_gradients() {
  const double tol = 1e-4;
  bool ok = true;
  double worst = 0.0;
  std::string worst_name;
  for (const SuiteCheck& check : gradient_check_suite(20240815, true)) {
    GradCheckResult r = check.run();
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_name = check.name;
    }
    ok = ok && r.max_rel_err < tol;
  }
  std::ostringstream d;
  d << "all ops and the tiny end-to-end model vs central differences; worst " << worst_name
    << " rel err " << worst << " (tol " << tol << ")";
  report("C5", ok, d.str());
}

// ---- criterion 6: algebraic identities ----

void check_identities() {
  std::mt19937_64 rng(21);
  bool ok = true;
  std::string bad;
  auto fail = [&](const std::string& what) {
    if (bad.empty()) bad = what;
    ok = false;
  };

  {  // one-hot weights at the center slot reproduce the input exactly
    FocalSpec spec = spec_for_k(7);
    Tensor x = random_tensor({1, 4, 5, 9}, rng);
    Tensor agents = focal_agents(x, Axis::W, spec);
    Tensor w = Tensor::zeros({1, 7, 5, 9}, DType::f64);
    for (int64_t h = 0; h < 5; ++h)
      for (int64_t p = 0; p < 9; ++p) w.at(0, 3, h, p) = 1.0;  // center slot index = sum(t_l)
    Tensor y = fsa_apply(agents, w, 1);
    if (y.values() != x.values()) fail("one-hot center fsa is not the identity");
  }

  {  // uniform weights over K=3 slots act as a zero-padded box filter
    FocalSpec spec = spec_for_k(3);
    Tensor x = random_tensor({1, 2, 3, 7}, rng);
    Tensor agents = focal_agents(x, Axis::W, spec);
    Tensor w = Tensor::full({1, 3, 3, 7}, 1.0 / 3.0, DType::f64);
    Tensor y = fsa_apply(agents, w, 1);
    for (int64_t c = 0; c < 2 && ok; ++c)
      for (int64_t h = 0; h < 3 && ok; ++h)
        for (int64_t p = 0; p < 7; ++p) {
          double left = p > 0 ? x.at(0, c, h, p - 1) : 0.0;
          double right = p < 6 ? x.at(0, c, h, p + 1) : 0.0;
          double box = (left + x.at(0, c, h, p) + right) / 3.0;
          if (std::abs(y.at(0, c, h, p) - box) > 1e-6) {
            fail("uniform-weight fsa differs from the box filter");
            break;
          }
        }
  }

  {  // grouped weighting against a direct per-group loop
    const int64_t C = 6, K = 5, G = 2, h = 3, w = 4;
    Tensor agents = random_tensor({1, C * K, h, w}, rng);
    Tensor wts = random_tensor({1, G * K, h, w}, rng);
    Tensor y = fsa_apply(agents, wts, G);
    for (int64_t c = 0; c < C && ok; ++c) {
      int64_t g = c / (C / G);
      for (int64_t i = 0; i < h && ok; ++i)
        for (int64_t j = 0; j < w; ++j) {
          double acc = 0.0;
          for (int64_t k = 0; k < K; ++k)
            acc += wts.at(0, g * K + k, i, j) * agents.at(0, c * K + k, i, j);
          if (std::abs(y.at(0, c, i, j) - acc) > 1e-6) {
            fail("grouped fsa_apply differs from the per-group loop");
            break;
          }
        }
    }
  }

  {  // pixel shuffle round trip is a pure rearrangement
    Tensor x = random_tensor({2, 18, 3, 5}, rng);
    Tensor back = pixel_unshuffle(pixel_shuffle(x, 3), 3);
    if (back.values() != x.values()) fail("pixel_shuffle round trip is not bit-exact");
  }

  {  // channel layer norm leaves unit moments at every position
    Tensor x = random_tensor({2, 16, 4, 5}, rng, -2.0, 2.0);
    Tensor gamma = Tensor::full({1, 16, 1, 1}, 1.0, DType::f64);
    Tensor beta = Tensor::zeros({1, 16, 1, 1}, DType::f64);
    Tensor y = layer_norm_channels(x, gamma, beta);
    for (int64_t n = 0; n < 2 && ok; ++n)
      for (int64_t i = 0; i < 4 && ok; ++i)
        for (int64_t j = 0; j < 5; ++j) {
          double mean = 0.0, sq = 0.0;
          for (int64_t c = 0; c < 16; ++c) {
            mean += y.at(n, c, i, j);
            sq += y.at(n, c, i, j) * y.at(n, c, i, j);
          }
          mean /= 16.0;
          double var = sq / 16.0 - mean * mean;
          if (std::abs(mean) > 1e-4 || std::abs(var - 1.0) > 1e-4) {
            fail("layer norm moments off at a position");
            break;
          }
        }
  }

  {  // zeroing the trunk conv reduces the deep feature to the shallow one
    LamNetConfig cfg;
    cfg.channels = 8;
    cfg.num_blocks = 1;
    cfg.pairs_per_block = 1;
    cfg.dtype = DType::f64;
    Model m = build(cfg, 3);
    std::fill(m.trunk.weight.values().begin(), m.trunk.weight.values().end(), 0.0);
    Tensor x = random_tensor({1, 3, 6, 7}, rng, 0.0, 1.0);
    ForwardTrace t = m.forward_trace(x);
    if (t.deep.values() != t.shallow.values()) fail("zeroed trunk does not give deep == shallow");
  }

  report("C6", ok,
         ok ? "one-hot fsa = identity, uniform fsa = box filter, grouped apply = loop oracle, "
              "pixel_shuffle round trip bit-exact, layer-norm moments, zeroed-trunk residual"
            : bad);
}

// ---- criterion 7: parameter-free information exchange ----

void check_iem() {
  std::mt19937_64 rng(31);
  bool ok = true;
  std::string bad;
  auto fail = [&](const std::string& what) {
    if (bad.empty()) bad = what;
    ok = false;
  };

  // the exchange owns no tensors: a mixer's parameters are exactly its four
  // convs plus the weight generators
  UlmParams ulm = UlmParams::init(8, 4, spec_for_k(7), 4, false, false, DType::f64, rng);
  if (ulm.named_params("u").size() != 8) fail("unexpected parameter tensors in the mixer");

  Tensor xs = random_tensor({2, 4, 3, 5}, rng, -3.0, 3.0);
  Tensor xc = random_tensor({2, 4, 3, 5}, rng, -3.0, 3.0);
  IemResult r = iem_exchange_full(xs, xc);
  for (double a : r.alpha.values())
    if (!(a > 0.0 && a < 1.0)) fail("alpha gate outside (0,1)");
  for (double b : r.beta.values())
    if (!(b > 0.0 && b < 1.0)) fail("beta gate outside (0,1)");

  // a zeroed opposite branch hits the sigmoid at 0 exactly
  Tensor zero = Tensor::zeros({2, 4, 3, 5}, DType::f64);
  IemResult rz = iem_exchange_full(xs, zero);
  for (double a : rz.alpha.values())
    if (a != 0.5) fail("alpha not exactly 0.5 with a zero channel branch");
  for (double b : rz.beta.values())
    if (b != 0.5) fail("beta not exactly 0.5 with a zero channel branch");
  for (size_t i = 0; i < xs.values().size(); ++i)
    if (rz.ys.values()[i] != 0.5 * xs.values()[i]) fail("ys != xs/2 with a zero channel branch");
  for (double v : rz.yc.values())
    if (v != 0.0) fail("yc != 0 with a zero channel branch");

  // worked 1x2x1x2 example: every gate lands on sigmoid(1/2)
  Tensor hs = Tensor::from_data({1, 2, 1, 2}, {1.0, 0.0, 0.0, 1.0}, DType::f64);
  Tensor hc = Tensor::from_data({1, 2, 1, 2}, {1.0, 1.0, 0.0, 0.0}, DType::f64);
  IemResult rh = iem_exchange_full(hs, hc);
  const double g = 0.6224593312018546;
  for (double a : rh.alpha.values())
    if (std::abs(a - g) > 1e-6) fail("hand-case alpha != sigmoid(0.5)");
  for (double b : rh.beta.values())
    if (std::abs(b - g) > 1e-6) fail("hand-case beta != sigmoid(0.5)");

  report("C7", ok,
         ok ? "exchange is parameter-free, gates in (0,1), zero branch gives 0.5 exactly, hand case matches sigmoid(0.5)"
            : bad);
}

// ---- criterion 8: desk-scale overfit run ----

Tensor test_card(int which) {
  const int64_t S = 128;
  Tensor t = Tensor::zeros({1, 3, S, S}, DType::f64);
  for (int64_t h = 0; h < S; ++h)
    for (int64_t w = 0; w < S; ++w) {
      double x = double(w), y = double(h), v = 0.0;
      switch (which) {
        case 0: v = 0.5 + 0.45 * std::sin(0.55 * (x + 2.0 * y)); break;
        case 1: {
          double r = std::hypot(x - 63.5, y - 63.5);
          v = 0.5 + 0.45 * std::sin(0.5 * r);
          break;
        }
        case 2: {  // pseudo-random 8x8 tiles
          double s = std::sin(double(h / 8) * 12.9898 + double(w / 8) * 78.233) * 43758.5453;
          v = s - std::floor(s);
          break;
        }
        default: {  // ramp crossed with sharp vertical bars
          double bars = (w / 4) % 2 ? 0.85 : 0.15;
          v = 0.5 * bars + 0.5 * (y / double(S - 1));
          break;
        }
      }
      t.at(0, 0, h, w) = v;
      t.at(0, 1, h, w) = 0.1 + 0.8 * v;
      t.at(0, 2, h, w) = 0.9 - 0.7 * v;
    }
  return t;
}

void check_overfit() {
  LamNetConfig cfg;
  cfg.scale = 2;
  cfg.channels = 16;
  cfg.num_blocks = 1;
  cfg.pairs_per_block = 2;
  cfg.groups = 4;
  cfg.dtype = DType::f64;

  Dataset data;
  data.scale = 2;
  for (int i = 0; i < 4; ++i) {
    ImagePair p;
    p.name = "card" + std::to_string(i);
    p.hr = test_card(i);
    p.lr = bicubic_resize(p.hr, 64, 64);
    data.pairs.push_back(std::move(p));
  }

  TrainConfig tr;
  tr.total_steps = 2000;
  tr.batch_size = 1;
  tr.lr_patch = 64;  // the whole LR frame: the four patches are fixed
  tr.lr0 = 5e-3;
  tr.seed = 5;
  tr.augment = false;
  tr.shuffle = false;
  tr.log_every = 200;

  Model model = build(cfg, 5);
  auto t0 = std::chrono::steady_clock::now();
  TrainResult res = train(model, data, tr, [](const TrainLogRow& row) {
    std::cerr << "  step " << row.step << " lr " << row.lr << " loss " << row.loss << "\n";
  });
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  double model_psnr = 0.0, bicubic_psnr = 0.0;
  for (const ImagePair& p : data.pairs) {
    model_psnr += psnr(model.forward(p.lr), p.hr, cfg.scale);
    bicubic_psnr += psnr(bicubic_resize(p.lr, 128, 128), p.hr, cfg.scale);
  }
  model_psnr /= 4.0;
  bicubic_psnr /= 4.0;

  bool ok = res.final_loss < 0.1 * res.initial_loss && model_psnr > bicubic_psnr + 1.0 &&
            secs < 900.0;
  std::ostringstream d;
  d << "2000 steps in " << int(secs) << "s; L1 " << res.initial_loss << " -> " << res.final_loss
    << " (need <10%); psnr " << model_psnr << " dB vs bicubic " << bicubic_psnr
    << " dB (need +1.0)";
  report("C8", ok, d.str());
}

// ---- criterion 9: metric fixtures ----

void check_metrics() {
  Tensor a = Tensor::zeros({1, 3, 16, 16}, DType::f64);
  Tensor b = Tensor::full({1, 3, 16, 16}, 1.0 / 255.0, DType::f64);
  double p = psnr(a, b);
  bool psnr_ok = std::abs(p - 48.13) <= 0.01;

  std::mt19937_64 rng(41);
  Tensor x = random_tensor({1, 3, 24, 24}, rng, 0.0, 1.0);
  bool ssim_ok = ssim(x, x) == 1.0;

  Tensor white = Tensor::full({1, 3, 2, 2}, 1.0, DType::f64);
  double y = rgb_to_y(white).at(0, 0, 0, 0);
  bool luma_ok = std::abs(y - 235.0 / 255.0) <= 1e-9;

  std::ostringstream d;
  d << "psnr(0, 1/255) = " << p << " (48.13 +- 0.01), ssim(x,x) = 1 exactly, y(white) = 235/255";
  report("C9", psnr_ok && ssim_ok && luma_ok, d.str());
}

// ---- criterion 10: bit-reproducible CLI training ----

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_cli_determinism() {
#ifndef LAMNET_CLI_PATH
  report("C10", false, "CLI path not compiled in");
#else
  namespace fs = std::filesystem;
  fs::path dir = "/tmp/lamnet_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir / "hr");

  std::mt19937_64 rng(51);
  for (int i = 0; i < 2; ++i) {
    Tensor hr = random_tensor({1, 3, 16, 16 + 8 * i}, rng, 0.0, 1.0);
    write_png((dir / "hr" / ("img" + std::to_string(i) + ".png")).string(),
              tensor_to_image(hr));
  }

  CliConfig cfg;
  cfg.model.scale = 2;
  cfg.model.channels = 8;
  cfg.model.num_blocks = 1;
  cfg.model.pairs_per_block = 1;
  cfg.model.groups = 4;
  cfg.train.total_steps = 4;
  cfg.train.batch_size = 1;
  cfg.train.lr_patch = 8;
  cfg.train.seed = 123;
  cfg.hr_dir = (dir / "hr").string();

  bool ok = true;
  std::string bad;
  for (int run = 1; run <= 2 && ok; ++run) {
    CliConfig c = cfg;
    c.train.checkpoint_out = (dir / ("run" + std::to_string(run) + ".ckpt")).string();
    c.log_out = (dir / ("run" + std::to_string(run) + ".csv")).string();
    fs::path cfg_path = dir / ("run" + std::to_string(run) + ".cfg");
    std::ofstream out(cfg_path);
    emit_config(out, c);
    out.close();

    std::string cmd = std::string(LAMNET_CLI_PATH) + " train --config " + cfg_path.string() +
                      " > " + (dir / ("run" + std::to_string(run) + ".out")).string() + " 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      ok = false;
      bad = "train run " + std::to_string(run) + " exited nonzero";
    }
  }
  if (ok) {
    std::string ck1 = read_bytes(dir / "run1.ckpt"), ck2 = read_bytes(dir / "run2.ckpt");
    std::string lg1 = read_bytes(dir / "run1.csv"), lg2 = read_bytes(dir / "run2.csv");
    if (ck1.empty() || ck1 != ck2) {
      ok = false;
      bad = "checkpoints differ between identical runs";
    } else if (lg1.empty() || lg1 != lg2) {
      ok = false;
      bad = "training logs differ between identical runs";
    }
  }
  report("C10", ok,
         ok ? "two identical train invocations produce byte-identical checkpoints and logs" : bad);
#endif
}

}  // namespace

int main() {
  check_receptive_fields();
  check_param_formulas();
  check_headline_costs();
  check_k_scaling();
  check_gradients();
  check_identities();
  check_iem();
  check_overfit();
  check_metrics();
  check_cli_determinism();

  if (g_failures) {
    std::cout << g_failures << " acceptance check(s) failed\n";
    return 1;
  }
  std::cout << "all acceptance checks passed\n";
  return 0;
}
