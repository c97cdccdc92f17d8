#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "lamnet/analysis.hpp"
#include "lamnet/check_suite.hpp"
#include "lamnet/config_file.hpp"
#include "lamnet/dgfn.hpp"
#include "lamnet/image.hpp"
#include "lamnet/model.hpp"
#include "lamnet/parallel.hpp"
#include "lamnet/trainer.hpp"

namespace {

// exit codes: 0 ok, 1 failed check or aborted run, 2 input error,
// 3 checkpoint/state error
constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kInputError = 2;
constexpr int kStateError = 3;

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw lamnet::io_error("cannot open '" + path + "' for writing");
  return os;
}

lamnet::CliConfig load_cli_config(const std::string& path) {
  if (path.empty()) return lamnet::CliConfig{};
  return lamnet::parse_config_file(path);
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& set_keys) {
  lamnet::CliConfig cfg = load_cli_config(config_path);
  // --set key=value lines override the file, one at a time
  for (const std::string& kv : set_keys) {
    std::ostringstream merged;
    lamnet::emit_config(merged, cfg);
    merged << kv << "\n";
    std::istringstream full(merged.str());
    cfg = lamnet::parse_config(full);
  }
  if (cfg.hr_dir.empty()) {
    std::cerr << "train: hr_dir is required (set it in the config file or via --set)\n";
    return kInputError;
  }
  cfg.model.validate();

  lamnet::Dataset data = cfg.lr_dir.empty()
                             ? lamnet::Dataset::synthesize(cfg.hr_dir, cfg.model.scale)
                             : lamnet::Dataset::load_paired(cfg.hr_dir, cfg.lr_dir,
                                                            cfg.model.scale);
  lamnet::Model model = lamnet::build(cfg.model, cfg.train.seed);
  if (!cfg.init_from.empty()) lamnet::load_transfer(model, cfg.init_from);

  std::cout << "training: " << data.pairs.size() << " images, "
            << model.parameter_count() << " parameters, " << cfg.train.total_steps
            << " steps\n";
  const auto t0 = std::chrono::steady_clock::now();
  lamnet::TrainResult result =
      lamnet::train(model, data, cfg.train, [&](const lamnet::TrainLogRow& row) {
        std::cout << "step " << row.step << " lr " << row.lr << " loss " << row.loss << "\n";
      });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!cfg.log_out.empty()) {
    auto os = open_out(cfg.log_out);
    lamnet::write_train_log_csv(os, result.log);
  }
  std::cout << "done in " << std::fixed << std::setprecision(1) << secs << "s";
  if (!result.log.empty())
    std::cout << ", first loss " << std::setprecision(6) << result.initial_loss
              << ", final loss " << result.final_loss;
  std::cout << "\n";
  return kOk;
}

int cmd_infer(const std::string& ckpt, const std::string& input, const std::string& output) {
  lamnet::Model model = lamnet::load(ckpt);
  lamnet::Tensor lr = lamnet::image_to_tensor(lamnet::read_png(input), model.config.dtype);
  const auto t0 = std::chrono::steady_clock::now();
  lamnet::Tensor sr = model.forward(lr);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  lamnet::write_png(output, lamnet::tensor_to_image(sr));
  std::cout << "wrote " << output << " (" << sr.shape().w << "x" << sr.shape().h << "), forward "
            << std::fixed << std::setprecision(1) << ms << " ms\n";
  return kOk;
}

// Y-channel PSNR/SSIM with a `shave`-pixel border removed.
std::pair<double, double> y_metrics(const lamnet::Tensor& pred, const lamnet::Tensor& ref,
                                    int64_t shave) {
  lamnet::Tensor yp = lamnet::rgb_to_y(pred);
  lamnet::Tensor yr = lamnet::rgb_to_y(ref);
  return {lamnet::psnr(yp, yr, shave),
          lamnet::ssim(lamnet::crop_border(yp, shave), lamnet::crop_border(yr, shave))};
}

int cmd_eval(const std::string& ckpt, const std::string& hr_dir, const std::string& lr_dir,
             const std::string& out_path) {
  lamnet::Model model = lamnet::load(ckpt);
  const int64_t scale = model.config.scale;
  lamnet::Dataset data;
  int warnings = 0;
  if (lr_dir.empty()) {
    data = lamnet::Dataset::synthesize(hr_dir, scale);
  } else {
    // match by filename, warn about and skip files without a partner
    auto names = [](const std::string& dir) {
      std::set<std::string> out;
      for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
          out.insert(entry.path().filename().string());
      return out;
    };
    const std::set<std::string> hr_names = names(hr_dir), lr_names = names(lr_dir);
    std::vector<std::string> matched;
    for (const std::string& n : hr_names) {
      if (lr_names.count(n)) {
        matched.push_back(n);
      } else {
        std::cerr << "warning: no LR partner for " << n << ", skipped\n";
        ++warnings;
      }
    }
    for (const std::string& n : lr_names)
      if (!hr_names.count(n)) {
        std::cerr << "warning: no HR partner for " << n << ", skipped\n";
        ++warnings;
      }
    if (matched.empty()) throw lamnet::io_error("no matched PNG pairs in '" + hr_dir + "'");
    data.scale = scale;
    for (const std::string& n : matched) {
      lamnet::ImagePair pair;
      pair.name = n;
      pair.hr = lamnet::image_to_tensor(lamnet::read_png(hr_dir + "/" + n));
      pair.lr = lamnet::image_to_tensor(lamnet::read_png(lr_dir + "/" + n));
      if (pair.hr.shape().h != pair.lr.shape().h * scale ||
          pair.hr.shape().w != pair.lr.shape().w * scale)
        throw lamnet::io_error("LR/HR dimensions of '" + n + "' are not related by x" +
                               std::to_string(scale));
      data.pairs.push_back(std::move(pair));
    }
  }
  std::ostringstream csv;
  csv << std::setprecision(10);
  csv << "method,name,psnr,ssim\n";
  double sp = 0, ss = 0, bp = 0, bs = 0;
  for (const lamnet::ImagePair& pair : data.pairs) {
    lamnet::Tensor lr = pair.lr.astype(model.config.dtype);
    lamnet::Tensor sr = model.forward(lr).astype(pair.hr.dtype());
    lamnet::Tensor up = lamnet::bicubic_resize(pair.lr, pair.hr.shape().h, pair.hr.shape().w);
    const auto [p_sr, s_sr] = y_metrics(sr, pair.hr, scale);
    const auto [p_up, s_up] = y_metrics(up, pair.hr, scale);
    csv << "model," << pair.name << "," << p_sr << "," << s_sr << "\n";
    csv << "bicubic," << pair.name << "," << p_up << "," << s_up << "\n";
    sp += p_sr;
    ss += s_sr;
    bp += p_up;
    bs += s_up;
  }
  const double n = static_cast<double>(data.pairs.size());
  csv << "model,mean," << sp / n << "," << ss / n << "\n";
  csv << "bicubic,mean," << bp / n << "," << bs / n << "\n";
  std::cout << csv.str();
  if (!out_path.empty()) {
    auto os = open_out(out_path);
    os << csv.str();
  }
  if (warnings) std::cout << warnings << " file(s) skipped\n";
  return kOk;
}

int closed_form_mode(const std::string& arch_name, int64_t C, int64_t K, int64_t G,
                     int64_t height, int64_t width) {
  lamnet::Arch arch;
  if (arch_name == "swinir")
    arch = lamnet::Arch::swinir;
  else if (arch_name == "dlgsanet")
    arch = lamnet::Arch::dlgsanet;
  else if (arch_name == "lamnet")
    arch = lamnet::Arch::lamnet;
  else
    throw std::invalid_argument("unknown arch '" + arch_name +
                                "' (expected swinir, dlgsanet or lamnet)");
  std::cout << "arch,part,params,flops\n";
  for (lamnet::Part part : {lamnet::Part::mixer, lamnet::Part::ffn, lamnet::Part::total}) {
    lamnet::Cost cost = lamnet::closed_form(arch, part, C, K, G, height, width);
    std::cout << arch_name << "," << lamnet::part_name(part) << "," << cost.params << ","
              << cost.flops << "\n";
  }
  return kOk;
}

int cmd_analyze(const std::string& config_path, int64_t height, int64_t width,
                const std::string& out_path, const std::string& k_sweep_path,
                const std::string& gate_hist_prefix, bool include_bias, bool exclude_norm,
                int64_t flops_per_mac, bool formula, const std::string& arch, int64_t cf_c,
                int64_t cf_k, int64_t cf_g) {
  if (!arch.empty()) return closed_form_mode(arch, cf_c, cf_k, cf_g, height, width);

  lamnet::CliConfig cfg = load_cli_config(config_path);
  cfg.model.validate();
  lamnet::Model model = lamnet::build(cfg.model, cfg.train.seed);
  lamnet::CostPolicy policy{include_bias, !exclude_norm, flops_per_mac};
  lamnet::CostReport report = lamnet::count_model(model, height, width, policy);
  if (out_path.empty()) {
    report.write_csv(std::cout);
  } else {
    auto os = open_out(out_path);
    report.write_csv(os);
    std::cout << "wrote " << out_path << "\n";
  }
  std::cout << "total params " << report.total_params() << ", total flops "
            << report.total_flops() << " at " << width << "x" << height << "\n";

  if (formula) {
    // counted mixer/ffn rows against the closed forms, per layer instance
    const int64_t layers = cfg.model.num_blocks * cfg.model.pairs_per_block;
    const int64_t K = lamnet::kernel_len(cfg.model.focal);
    bool all_equal = true;
    std::cout << "part,counted_params,formula_params,counted_flops,formula_flops,verdict\n";
    for (lamnet::Part part : {lamnet::Part::mixer, lamnet::Part::ffn}) {
      lamnet::Cost counted = report.part_cost(part);
      lamnet::Cost one = lamnet::closed_form(lamnet::Arch::lamnet, part, cfg.model.channels,
                                             K, cfg.model.groups, height, width);
      const int64_t fp = one.params * layers;
      const int64_t ff = one.flops * layers * flops_per_mac;
      const bool equal = counted.params == fp && counted.flops == ff;
      all_equal = all_equal && equal;
      std::cout << lamnet::part_name(part) << "," << counted.params << "," << fp << ","
                << counted.flops << "," << ff << "," << (equal ? "EQUAL" : "DIFF") << "\n";
    }
    if (!all_equal) return kCheckFailed;
  }

  if (!k_sweep_path.empty()) {
    std::vector<lamnet::FocalSpec> specs = {
        {{1}, {1}}, {{1, 2}, {1, 1}}, {{1, 2, 4}, {3, 2, 1}}, {{1, 2, 4}, {4, 3, 2}}};
    auto rows =
        lamnet::k_sweep(specs, cfg.model.channels, cfg.model.groups, height, width);
    auto os = open_out(k_sweep_path);
    lamnet::write_k_sweep_csv(os, rows);
    std::cout << "wrote " << k_sweep_path << "\n";
  }
  if (!gate_hist_prefix.empty()) {
    std::mt19937_64 rng(cfg.train.seed);
    lamnet::DgfnParams dp =
        lamnet::DgfnParams::init(cfg.model.channels, cfg.model.bias, cfg.model.dtype, rng);
    lamnet::Tensor x = lamnet::Tensor::zeros({1, cfg.model.channels, 32, 32}, cfg.model.dtype);
    lamnet::fill_normal(x, rng, 0.0, 1.0);
    lamnet::GateStats stats = lamnet::gate_stats(x, dp);
    for (const auto& [suffix, tensor] :
         {std::pair<const char*, const lamnet::Tensor&>{"_self.csv", stats.self_gate},
          {"_cross.csv", stats.cross_gate}}) {
      const auto [lo_it, hi_it] =
          std::minmax_element(tensor.values().begin(), tensor.values().end());
      double lo = *lo_it, hi = *hi_it;
      if (!(hi > lo)) hi = lo + 1.0;
      lamnet::Histogram h = lamnet::histogram(tensor, 64, lo, hi);
      auto os = open_out(gate_hist_prefix + suffix);
      lamnet::write_histogram_csv(os, h);
      std::cout << "wrote " << gate_hist_prefix << suffix << "\n";
    }
  }
  return kOk;
}

int cmd_gradcheck(uint64_t seed, double tol, const std::string& module) {
  auto suite = lamnet::gradient_check_suite(seed, true);
  if (module != "all") {
    // name-substring families: fsa, ulm, dgfn, model
    static const std::map<std::string, std::vector<std::string>> families = {
        {"fsa", {"focal_agents", "fsa_apply", "lsam"}},
        {"ulm", {"csm", "iem", "ulm"}},
        {"dgfn", {"dgfn"}},
        {"model", {"model"}}};
    auto it = families.find(module);
    if (it == families.end())
      throw std::invalid_argument("unknown module '" + module +
                                  "' (expected all, fsa, ulm, dgfn or model)");
    std::erase_if(suite, [&](const lamnet::SuiteCheck& check) {
      for (const std::string& stem : it->second)
        if (check.name.find(stem) != std::string::npos) return false;
      return true;
    });
  }
  int failures = 0;
  for (const lamnet::SuiteCheck& check : suite) {
    lamnet::GradCheckResult r = check.run();
    const bool ok = r.max_rel_err < tol;
    std::cout << (ok ? "PASS " : "FAIL ") << std::left << std::setw(28) << check.name
              << " max_rel_err " << std::scientific << std::setprecision(3) << r.max_rel_err
              << std::defaultfloat;
    if (!ok)
      std::cout << "  (input " << r.input_index << " coord " << r.flat_coord << ": analytic "
                << r.analytic << " vs numeric " << r.numeric << ")";
    std::cout << "\n";
    if (!ok) ++failures;
  }
  if (failures) {
    std::cout << failures << " gradient check(s) failed (tolerance " << tol << ")\n";
    return kCheckFailed;
  }
  std::cout << "all " << suite.size() << " gradient checks passed (tolerance " << tol << ")\n";
  return kOk;
}

int cmd_bench(const std::string& ckpt, const std::string& config_path, int64_t height,
              int64_t width, int64_t repeats, const std::string& out_path) {
  lamnet::Model model = [&] {
    if (!ckpt.empty()) return lamnet::load(ckpt);
    lamnet::CliConfig cfg = load_cli_config(config_path);
    cfg.model.validate();
    return lamnet::build(cfg.model, cfg.train.seed);
  }();
  lamnet::Tensor x = lamnet::Tensor::zeros({1, 3, height, width}, model.config.dtype);
  std::mt19937_64 rng(0);
  lamnet::fill_uniform(x, rng, 0.0, 1.0);
  (void)model.forward(x);  // warm-up
  std::vector<double> ms(static_cast<size_t>(repeats));
  for (int64_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)model.forward(x);
    ms[static_cast<size_t>(i)] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
  }
  std::sort(ms.begin(), ms.end());
  const double median = ms[ms.size() / 2];
  const double min = ms.front();
  const int64_t flops = lamnet::count_model(model, height, width).total_flops();
  std::ostringstream csv;
  csv << "h,w,repeats,median_ms,min_ms,flops\n";
  csv << height << "," << width << "," << repeats << "," << median << "," << min << ","
      << flops << "\n";
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    auto os = open_out(out_path);
    os << csv.str();
    std::cout << "wrote " << out_path << "\n";
  }
  return kOk;
}

int cmd_config(const std::string& config_path, const std::string& out_path) {
  lamnet::CliConfig cfg = load_cli_config(config_path);
  if (out_path.empty()) {
    lamnet::emit_config(std::cout, cfg);
  } else {
    auto os = open_out(out_path);
    lamnet::emit_config(os, cfg);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lamnet: lightweight attention-mixing super-resolution toolkit"};
  app.require_subcommand(1);
  std::function<int()> run;

  // train
  auto* train = app.add_subcommand("train", "train a model from a config file");
  static std::string train_config;
  static std::vector<std::string> train_sets;
  train->add_option("--config", train_config, "key = value config file");
  train->add_option("--set", train_sets, "override a config entry, e.g. --set \"seed = 7\"");
  train->callback([&] {
    run = [] { return cmd_train(train_config, train_sets); };
  });

  // infer
  auto* infer = app.add_subcommand("infer", "upscale a PNG with a trained checkpoint");
  static std::string infer_ckpt, infer_in, infer_out;
  infer->add_option("--checkpoint", infer_ckpt, "model checkpoint")->required();
  infer->add_option("--input", infer_in, "input PNG")->required();
  infer->add_option("--output", infer_out, "output PNG")->required();
  infer->callback([&] {
    run = [] { return cmd_infer(infer_ckpt, infer_in, infer_out); };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM against a directory of images");
  static std::string eval_ckpt, eval_hr, eval_lr, eval_out;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--hr-dir", eval_hr, "ground-truth PNG directory")->required();
  eval->add_option("--lr-dir", eval_lr, "paired LR directory (default: synthesize)");
  eval->add_option("--out", eval_out, "CSV output path (default: stdout)");
  eval->callback([&] {
    run = [] { return cmd_eval(eval_ckpt, eval_hr, eval_lr, eval_out); };
  });

  // analyze
  auto* analyze = app.add_subcommand("analyze", "parameter/FLOP report and sweeps");
  static std::string an_config, an_out, an_sweep, an_gate, an_arch;
  static int64_t an_h = 720, an_w = 1280, an_fpm = 1;
  static int64_t an_c = 64, an_k = 8, an_g = 4;
  static bool an_bias = false, an_no_norm = false, an_formula = false;
  analyze->add_option("--config", an_config);
  analyze->add_option("--height", an_h, "feature-map height (default 720)");
  analyze->add_option("--width", an_w, "feature-map width (default 1280)");
  analyze->add_option("--out", an_out, "cost report CSV (default: stdout)");
  analyze->add_option("--k-sweep", an_sweep, "write a window-size sweep CSV here");
  analyze->add_option("--gate-hist", an_gate,
                      "write 64-bin gate histograms to <prefix>_self.csv/_cross.csv");
  analyze->add_flag("--formula", an_formula,
                    "compare counted mixer/FFN rows against the closed forms");
  analyze->add_option("--arch", an_arch,
                      "closed-form mode: swinir, dlgsanet or lamnet (uses --c/--k/--g)");
  analyze->add_option("--c", an_c, "channels for --arch (default 64)");
  analyze->add_option("--k", an_k, "window/kernel size for --arch (default 8)");
  analyze->add_option("--g", an_g, "dynamic-weight groups for --arch (default 4)");
  analyze->add_flag("--include-bias", an_bias, "count bias parameters");
  analyze->add_flag("--exclude-norm", an_no_norm, "drop normalization parameters");
  analyze->add_option("--flops-per-mac", an_fpm, "1 (default) or 2");
  analyze->callback([&] {
    run = [] {
      return cmd_analyze(an_config, an_h, an_w, an_out, an_sweep, an_gate, an_bias,
                         an_no_norm, an_fpm, an_formula, an_arch, an_c, an_k, an_g);
    };
  });

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  static uint64_t gc_seed = 0;
  static double gc_tol = 1e-4;
  static std::string gc_module = "all";
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--tol", gc_tol, "max relative error (default 1e-4)");
  gradcheck->add_option("--module", gc_module, "all (default), fsa, ulm, dgfn or model");
  gradcheck->callback([&] {
    run = [] { return cmd_gradcheck(gc_seed, gc_tol, gc_module); };
  });

  // bench
  auto* bench = app.add_subcommand("bench", "forward-pass timing");
  static std::string bench_ckpt, bench_config, bench_out;
  static int64_t bench_h = 64, bench_w = 64, bench_reps = 5;
  bench->add_option("--checkpoint", bench_ckpt, "time this trained model");
  bench->add_option("--config", bench_config, "or a freshly built one (default config)");
  bench->add_option("--height", bench_h);
  bench->add_option("--width", bench_w);
  bench->add_option("--repeats", bench_reps);
  bench->add_option("--out", bench_out, "CSV output path (default: stdout)");
  bench->callback([&] {
    run = [] {
      return cmd_bench(bench_ckpt, bench_config, bench_h, bench_w, bench_reps, bench_out);
    };
  });

  // config
  auto* config = app.add_subcommand("config", "emit a config file (defaults or normalized)");
  static std::string cfg_in, cfg_out;
  config->add_option("--config", cfg_in, "config to normalize (default: built-in defaults)");
  config->add_option("--out", cfg_out, "output path (default: stdout)");
  config->callback([&] {
    run = [] { return cmd_config(cfg_in, cfg_out); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    return run ? run() : kInputError;
  } catch (const lamnet::train_abort& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const lamnet::checkpoint_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStateError;
  } catch (const lamnet::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const lamnet::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
}
