#include "lamnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace lamnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageBuffer read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw io_error("cannot open '" + path + "'");
  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw io_error("'" + path + "' is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw io_error("libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  ImageBuffer img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw io_error("failed to decode '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  img.width = static_cast<int64_t>(png_get_image_width(png, info));
  img.height = static_cast<int64_t>(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 3) {
    // tRNS expansion can leave an alpha channel behind; strip once more
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
  }
  img.rgb.resize(static_cast<size_t>(img.width * img.height * 3));
  row_ptrs.resize(static_cast<size_t>(img.height));
  for (int64_t y = 0; y < img.height; ++y)
    row_ptrs[static_cast<size_t>(y)] = img.rgb.data() + y * img.width * 3;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const ImageBuffer& img) {
  if (img.width <= 0 || img.height <= 0 ||
      static_cast<int64_t>(img.rgb.size()) != img.width * img.height * 3)
    throw io_error("write_png: malformed image buffer");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw io_error("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw io_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw io_error("failed to encode '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int64_t y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.rgb.data() + y * img.width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor image_to_tensor(const ImageBuffer& img, DType dtype) {
  Tensor t = Tensor::zeros({1, 3, img.height, img.width}, dtype);
  const double inv = 1.0 / 255.0;
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int64_t c = 0; c < 3; ++c)
        t.at(0, c, y, x) = static_cast<double>(img.rgb[static_cast<size_t>((y * img.width + x) * 3 + c)]) * inv;
  t.quantize();
  return t;
}

ImageBuffer tensor_to_image(const Tensor& t) {
  const Shape4 s = t.shape();
  if (s.n != 1 || s.c != 3)
    throw std::invalid_argument("tensor_to_image: expected (1,3,H,W), got " + to_string(s));
  ImageBuffer img;
  img.height = s.h;
  img.width = s.w;
  img.rgb.resize(static_cast<size_t>(s.h * s.w * 3));
  for (int64_t y = 0; y < s.h; ++y)
    for (int64_t x = 0; x < s.w; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        double v = std::clamp(t.at(0, c, y, x), 0.0, 1.0);
        img.rgb[static_cast<size_t>((y * s.w + x) * 3 + c)] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

namespace {

// Catmull-Rom kernel, a = -0.5.
double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Tap {
  int64_t first = 0;                // first clamped source index
  std::vector<double> weights;      // normalized
};

std::vector<Tap> build_taps(int64_t in_len, int64_t out_len) {
  const double step = static_cast<double>(in_len) / static_cast<double>(out_len);
  const bool shrink = out_len < in_len;
  const double stretch = shrink ? step : 1.0;  // antialias widens the kernel
  const double support = 2.0 * stretch;
  std::vector<Tap> taps(static_cast<size_t>(out_len));
  for (int64_t i = 0; i < out_len; ++i) {
    const double src = (static_cast<double>(i) + 0.5) * step - 0.5;
    int64_t lo = static_cast<int64_t>(std::floor(src - support)) + 1;
    int64_t hi = static_cast<int64_t>(std::floor(src + support));
    Tap tap;
    tap.first = lo;
    tap.weights.resize(static_cast<size_t>(hi - lo + 1));
    double sum = 0.0;
    for (int64_t j = lo; j <= hi; ++j) {
      double w = cubic_kernel((src - static_cast<double>(j)) / stretch);
      tap.weights[static_cast<size_t>(j - lo)] = w;
      sum += w;
    }
    if (sum == 0.0) throw std::logic_error("bicubic_resize: degenerate tap weights");
    for (double& w : tap.weights) w /= sum;
    taps[static_cast<size_t>(i)] = std::move(tap);
  }
  return taps;
}

}  // namespace

Tensor bicubic_resize(const Tensor& img, int64_t out_h, int64_t out_w) {
  if (!img.defined()) throw std::invalid_argument("bicubic_resize: undefined input");
  if (out_h <= 0 || out_w <= 0)
    throw std::invalid_argument("bicubic_resize: output size must be positive");
  const Shape4 in = img.shape();
  const auto taps_w = build_taps(in.w, out_w);
  const auto taps_h = build_taps(in.h, out_h);

  // horizontal pass
  Tensor mid = Tensor::zeros({in.n, in.c, in.h, out_w}, img.dtype());
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t c = 0; c < in.c; ++c)
      for (int64_t y = 0; y < in.h; ++y) {
        const double* row = img.data() + ((n * in.c + c) * in.h + y) * in.w;
        double* out = mid.data() + ((n * in.c + c) * in.h + y) * out_w;
        for (int64_t x = 0; x < out_w; ++x) {
          const Tap& tap = taps_w[static_cast<size_t>(x)];
          double acc = 0.0;
          for (size_t j = 0; j < tap.weights.size(); ++j) {
            int64_t sj = std::clamp<int64_t>(tap.first + static_cast<int64_t>(j), 0, in.w - 1);
            acc += tap.weights[j] * row[sj];
          }
          out[x] = acc;
        }
      }

  // vertical pass
  Tensor out = Tensor::zeros({in.n, in.c, out_h, out_w}, img.dtype());
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t c = 0; c < in.c; ++c)
      for (int64_t y = 0; y < out_h; ++y) {
        const Tap& tap = taps_h[static_cast<size_t>(y)];
        double* orow = out.data() + ((n * in.c + c) * out_h + y) * out_w;
        for (size_t j = 0; j < tap.weights.size(); ++j) {
          int64_t sj = std::clamp<int64_t>(tap.first + static_cast<int64_t>(j), 0, in.h - 1);
          const double* mrow = mid.data() + ((n * in.c + c) * in.h + sj) * out_w;
          const double w = tap.weights[j];
          for (int64_t x = 0; x < out_w; ++x) orow[x] += w * mrow[x];
        }
      }
  out.quantize();
  return out;
}

Tensor rgb_to_y(const Tensor& rgb) {
  const Shape4 s = rgb.shape();
  if (s.c != 3) throw std::invalid_argument("rgb_to_y: expected 3 channels, got " + to_string(s));
  Tensor y = Tensor::zeros({s.n, 1, s.h, s.w}, rgb.dtype());
  const int64_t plane = s.h * s.w;
  for (int64_t n = 0; n < s.n; ++n) {
    const double* r = rgb.data() + (n * 3 + 0) * plane;
    const double* g = rgb.data() + (n * 3 + 1) * plane;
    const double* b = rgb.data() + (n * 3 + 2) * plane;
    double* out = y.data() + n * plane;
    for (int64_t p = 0; p < plane; ++p)
      out[p] = (16.0 + 65.481 * r[p] + 128.553 * g[p] + 24.966 * b[p]) / 255.0;
  }
  y.quantize();
  return y;
}

Tensor crop_border(const Tensor& x, int64_t border) {
  if (border < 0) throw std::invalid_argument("crop_border: negative border");
  if (border == 0) return x;
  const Shape4 s = x.shape();
  if (s.h <= 2 * border || s.w <= 2 * border)
    throw std::invalid_argument("crop_border: border " + std::to_string(border) +
                                " leaves no pixels of " + to_string(s));
  Tensor y = Tensor::zeros({s.n, s.c, s.h - 2 * border, s.w - 2 * border}, x.dtype());
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t h = 0; h < y.shape().h; ++h)
        for (int64_t w = 0; w < y.shape().w; ++w)
          y.at(n, c, h, w) = x.at(n, c, h + border, w + border);
  return y;
}

double psnr(const Tensor& a, const Tensor& b, int64_t shave) {
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument("psnr: shape mismatch " + to_string(a.shape()) + " vs " +
                                to_string(b.shape()));
  Tensor ca = crop_border(a, shave);
  Tensor cb = crop_border(b, shave);
  double mse = 0.0;
  const int64_t n = ca.numel();
  for (int64_t i = 0; i < n; ++i) {
    double d = ca.data()[i] - cb.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument("ssim: shape mismatch " + to_string(a.shape()) + " vs " +
                                to_string(b.shape()));
  const Shape4 s = a.shape();
  constexpr int64_t win = 11;
  constexpr double sigma = 1.5;
  if (s.h < win || s.w < win)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  constexpr double c1 = 0.01 * 0.01;  // (K1*L)^2
  constexpr double c2 = 0.03 * 0.03;  // (K2*L)^2

  double g[win];
  double gsum = 0.0;
  for (int64_t i = 0; i < win; ++i) {
    double d = static_cast<double>(i - 5);
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    gsum += g[i];
  }
  for (int64_t i = 0; i < win; ++i) g[i] /= gsum;

  const int64_t oh = s.h - win + 1, ow = s.w - win + 1;
  const int64_t plane = s.h * s.w;
  // horizontal then vertical Gaussian filtering of the five moment maps
  auto filter = [&](const std::vector<double>& src, std::vector<double>& dst) {
    std::vector<double> tmp(static_cast<size_t>(s.h * ow));
    for (int64_t y = 0; y < s.h; ++y)
      for (int64_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int64_t k = 0; k < win; ++k) acc += g[k] * src[static_cast<size_t>(y * s.w + x + k)];
        tmp[static_cast<size_t>(y * ow + x)] = acc;
      }
    dst.resize(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int64_t k = 0; k < win; ++k) acc += g[k] * tmp[static_cast<size_t>((y + k) * ow + x)];
        dst[static_cast<size_t>(y * ow + x)] = acc;
      }
  };

  double total = 0.0;
  int64_t count = 0;
  std::vector<double> pa(static_cast<size_t>(plane)), pb(static_cast<size_t>(plane)),
      paa(static_cast<size_t>(plane)), pbb(static_cast<size_t>(plane)),
      pab(static_cast<size_t>(plane));
  std::vector<double> mua, mub, muaa, mubb, muab;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c) {
      const double* xa = a.data() + (n * s.c + c) * plane;
      const double* xb = b.data() + (n * s.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        pa[static_cast<size_t>(i)] = xa[i];
        pb[static_cast<size_t>(i)] = xb[i];
        paa[static_cast<size_t>(i)] = xa[i] * xa[i];
        pbb[static_cast<size_t>(i)] = xb[i] * xb[i];
        pab[static_cast<size_t>(i)] = xa[i] * xb[i];
      }
      filter(pa, mua);
      filter(pb, mub);
      filter(paa, muaa);
      filter(pbb, mubb);
      filter(pab, muab);
      for (int64_t i = 0; i < oh * ow; ++i) {
        const double ma = mua[static_cast<size_t>(i)], mb = mub[static_cast<size_t>(i)];
        const double va = muaa[static_cast<size_t>(i)] - ma * ma;
        const double vb = mubb[static_cast<size_t>(i)] - mb * mb;
        const double vab = muab[static_cast<size_t>(i)] - ma * mb;
        const double num = (2.0 * ma * mb + c1) * (2.0 * vab + c2);
        const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
        ++count;
      }
    }
  return total / static_cast<double>(count);
}

Tensor rot90(const Tensor& x, int64_t k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return x.clone();
  const Shape4 s = x.shape();
  Shape4 os = (k % 2 == 1) ? Shape4{s.n, s.c, s.w, s.h} : s;
  Tensor y = Tensor::zeros(os, x.dtype());
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t h = 0; h < s.h; ++h)
        for (int64_t w = 0; w < s.w; ++w) {
          double v = x.at(n, c, h, w);
          switch (k) {
            case 1: y.at(n, c, s.w - 1 - w, h) = v; break;       // 90 CCW
            case 2: y.at(n, c, s.h - 1 - h, s.w - 1 - w) = v; break;
            case 3: y.at(n, c, w, s.h - 1 - h) = v; break;
          }
        }
  return y;
}

Tensor hflip(const Tensor& x) {
  const Shape4 s = x.shape();
  Tensor y = Tensor::zeros(s, x.dtype());
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t h = 0; h < s.h; ++h)
        for (int64_t w = 0; w < s.w; ++w) y.at(n, c, h, s.w - 1 - w) = x.at(n, c, h, w);
  return y;
}

PatchSample sample_patch(const ImagePair& pair, int64_t lr_patch, int64_t scale,
                         std::mt19937_64& rng, bool augment) {
  const Shape4 lrs = pair.lr.shape(), hrs = pair.hr.shape();
  if (hrs.h != lrs.h * scale || hrs.w != lrs.w * scale)
    throw std::invalid_argument("sample_patch: HR is not scale x LR for '" + pair.name + "'");
  if (lrs.h < lr_patch || lrs.w < lr_patch)
    throw std::invalid_argument("sample_patch: '" + pair.name + "' smaller than patch size");
  std::uniform_int_distribution<int64_t> row_dist(0, lrs.h - lr_patch);
  std::uniform_int_distribution<int64_t> col_dist(0, lrs.w - lr_patch);
  const int64_t y0 = row_dist(rng), x0 = col_dist(rng);

  auto crop = [](const Tensor& t, int64_t y, int64_t x, int64_t size) {
    Tensor out = Tensor::zeros({1, t.shape().c, size, size}, t.dtype());
    for (int64_t c = 0; c < t.shape().c; ++c)
      for (int64_t h = 0; h < size; ++h)
        for (int64_t w = 0; w < size; ++w) out.at(0, c, h, w) = t.at(0, c, y + h, x + w);
    return out;
  };
  PatchSample s;
  s.lr = crop(pair.lr, y0, x0, lr_patch);
  s.hr = crop(pair.hr, y0 * scale, x0 * scale, lr_patch * scale);
  if (augment) {
    std::uniform_int_distribution<int64_t> rot_dist(0, 3);
    std::uniform_int_distribution<int64_t> flip_dist(0, 1);
    const int64_t k = rot_dist(rng);
    const bool flip = flip_dist(rng) == 1;
    s.lr = rot90(s.lr, k);
    s.hr = rot90(s.hr, k);
    if (flip) {
      s.lr = hflip(s.lr);
      s.hr = hflip(s.hr);
    }
  }
  return s;
}

namespace {

std::vector<std::filesystem::path> list_pngs(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw io_error("'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) {
      return static_cast<char>(std::tolower(c));
    });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw io_error("no PNG files in '" + dir + "'");
  return files;
}

Tensor crop_to_multiple(const Tensor& t, int64_t m) {
  const Shape4 s = t.shape();
  const int64_t h = (s.h / m) * m, w = (s.w / m) * m;
  if (h == s.h && w == s.w) return t;
  if (h == 0 || w == 0) throw io_error("image too small for the requested scale");
  Tensor out = Tensor::zeros({s.n, s.c, h, w}, t.dtype());
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) out.at(n, c, y, x) = t.at(n, c, y, x);
  return out;
}

}  // namespace

Dataset Dataset::load_paired(const std::string& hr_dir, const std::string& lr_dir,
                             int64_t scale) {
  if (scale < 1) throw std::invalid_argument("load_paired: bad scale");
  Dataset d;
  d.scale = scale;
  for (const auto& hr_path : list_pngs(hr_dir)) {
    std::filesystem::path lr_path = std::filesystem::path(lr_dir) / hr_path.filename();
    if (!std::filesystem::exists(lr_path))
      throw io_error("missing LR counterpart for '" + hr_path.filename().string() + "'");
    ImagePair pair;
    pair.name = hr_path.stem().string();
    pair.hr = image_to_tensor(read_png(hr_path.string()));
    pair.lr = image_to_tensor(read_png(lr_path.string()));
    if (pair.hr.shape().h != pair.lr.shape().h * scale ||
        pair.hr.shape().w != pair.lr.shape().w * scale)
      throw io_error("'" + pair.name + "': HR dimensions are not scale x LR");
    d.pairs.push_back(std::move(pair));
  }
  return d;
}

Dataset Dataset::synthesize(const std::string& hr_dir, int64_t scale) {
  if (scale < 1) throw std::invalid_argument("synthesize: bad scale");
  Dataset d;
  d.scale = scale;
  for (const auto& hr_path : list_pngs(hr_dir)) {
    ImagePair pair;
    pair.name = hr_path.stem().string();
    pair.hr = crop_to_multiple(image_to_tensor(read_png(hr_path.string())), scale);
    pair.lr = bicubic_resize(pair.hr, pair.hr.shape().h / scale, pair.hr.shape().w / scale);
    d.pairs.push_back(std::move(pair));
  }
  return d;
}

Tensor stack_batch(const std::vector<Tensor>& samples, DType dtype) {
  if (samples.empty()) throw std::invalid_argument("stack_batch: empty batch");
  const Shape4 s = samples[0].shape();
  Tensor out = Tensor::zeros({static_cast<int64_t>(samples.size()), s.c, s.h, s.w}, dtype);
  const int64_t stride = s.c * s.h * s.w;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i].shape() == s))
      throw std::invalid_argument("stack_batch: mixed sample shapes");
    std::copy_n(samples[i].data(), stride, out.data() + static_cast<int64_t>(i) * stride);
  }
  out.quantize();
  return out;
}

}  // namespace lamnet
