#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lamnet/tensor.hpp"

namespace lamnet {

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ImageBuffer {
  int64_t width = 0, height = 0;
  std::vector<uint8_t> rgb;  // row-major, interleaved, 3 bytes per pixel
};

ImageBuffer read_png(const std::string& path);
void write_png(const std::string& path, const ImageBuffer& img);

// [0,255] bytes -> [0,1] channels-first (1,3,H,W).
Tensor image_to_tensor(const ImageBuffer& img, DType dtype = DType::f64);
// Clamps to [0,1] and rounds to bytes.
ImageBuffer tensor_to_image(const Tensor& t);

// Catmull-Rom (a = -0.5) separable resampling with half-pixel centers,
// edge-clamped taps and weights normalized to sum 1. Downscaling stretches
// the kernel by the scale factor (antialias); upscaling uses the plain
// 4-tap kernel.
Tensor bicubic_resize(const Tensor& img, int64_t out_h, int64_t out_w);

// ITU-R BT.601 luma from [0,1] RGB: (16 + 65.481 R + 128.553 G + 24.966 B)/255.
Tensor rgb_to_y(const Tensor& rgb);

Tensor crop_border(const Tensor& x, int64_t border);

// 10*log10(1 / MSE) over all elements after shaving `shave` border pixels;
// identical inputs give +inf.
double psnr(const Tensor& a, const Tensor& b, int64_t shave = 0);

// Gaussian-windowed SSIM (11x11, sigma 1.5, K1=0.01, K2=0.03, L=1) averaged
// over valid window positions and channels.
double ssim(const Tensor& a, const Tensor& b);

// 90-degree counter-clockwise rotations (k mod 4) and horizontal flip.
Tensor rot90(const Tensor& x, int64_t k);
Tensor hflip(const Tensor& x);

struct ImagePair {
  std::string name;
  Tensor hr;  // (1,3,H,W)
  Tensor lr;  // (1,3,H/scale,W/scale)
};

struct PatchSample {
  Tensor lr;  // (1,3,p,p)
  Tensor hr;  // (1,3,p*scale,p*scale)
};

// Crops an aligned random LR/HR patch pair; with augment, applies one of the
// eight rotation/flip poses to both. Draw order: row, col, rotation, flip.
PatchSample sample_patch(const ImagePair& pair, int64_t lr_patch, int64_t scale,
                         std::mt19937_64& rng, bool augment);

struct Dataset {
  std::vector<ImagePair> pairs;
  int64_t scale = 0;

  // PNGs matched by filename across the two directories.
  static Dataset load_paired(const std::string& hr_dir, const std::string& lr_dir,
                             int64_t scale);
  // HR-only directory; LR synthesized by antialiased bicubic downscaling
  // (HR cropped to a multiple of scale first).
  static Dataset synthesize(const std::string& hr_dir, int64_t scale);
};

// Stacks same-shaped (1,C,H,W) tensors into (N,C,H,W).
Tensor stack_batch(const std::vector<Tensor>& samples, DType dtype);

}  // namespace lamnet
