#include "imcsim/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "imcsim/error.hpp"
#include "imcsim/rng.hpp"

namespace imcsim::data {

namespace fs = std::filesystem;

Dataset read_cifar10_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  if (bytes.size() % kCifarRecord != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % kCifarRecord;
    throw FormatError(path.string() + ": truncated record at byte offset " + std::to_string(offset) + " (" +
                      std::to_string(bytes.size() % kCifarRecord) + " of " + std::to_string(kCifarRecord) +
                      " bytes)");
  }
  Dataset d;
  const std::size_t records = bytes.size() / kCifarRecord;
  d.labels.resize(records);
  d.images.resize(records * kCifarPixels);
  constexpr int plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t offset = r * kCifarRecord;
    const int label = bytes[offset];
    if (label >= kCifarClasses) {
      throw FormatError(path.string() + ": label " + std::to_string(label) + " at byte offset " +
                        std::to_string(offset));
    }
    d.labels[r] = label;
    double* img = d.images.data() + r * kCifarPixels;
    const unsigned char* px = bytes.data() + offset + 1;
    for (int ch = 0; ch < kCifarChannels; ++ch) {
      for (int i = 0; i < plane; ++i) img[i * kCifarChannels + ch] = px[ch * plane + i] / 255.0;
    }
  }
  return d;
}

void write_cifar10_file(const fs::path& path, const Dataset& data) {
  if (data.h != kCifarSide || data.w != kCifarSide || data.c != kCifarChannels) {
    throw DimensionError("CIFAR-10 records hold 32x32x3 images");
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(data.size()) * kCifarRecord);
  constexpr int plane = kCifarSide * kCifarSide;
  for (int r = 0; r < data.size(); ++r) {
    unsigned char* rec = bytes.data() + static_cast<std::size_t>(r) * kCifarRecord;
    if (data.labels[static_cast<std::size_t>(r)] < 0 || data.labels[static_cast<std::size_t>(r)] >= kCifarClasses) {
      throw RangeError("label out of range");
    }
    rec[0] = static_cast<unsigned char>(data.labels[static_cast<std::size_t>(r)]);
    const auto img = data.image(r);
    for (int ch = 0; ch < kCifarChannels; ++ch) {
      for (int i = 0; i < plane; ++i) {
        const double v = std::clamp(img[static_cast<std::size_t>(i) * kCifarChannels + ch], 0.0, 1.0);
        rec[1 + ch * plane + i] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing " + path.string());
}

namespace {

std::vector<fs::path> split_files(const fs::path& dir, Split split) {
  if (split == Split::kTest) return {dir / "test_batch.bin"};
  std::vector<fs::path> files;
  for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  return files;
}

}  // namespace

bool cifar10_present(const fs::path& dir, Split split) {
  for (const auto& f : split_files(dir, split)) {
    if (!fs::exists(f)) return false;
  }
  return true;
}

Dataset load_cifar10(const fs::path& dir, Split split, int per_class) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  Dataset out;
  std::array<int, kCifarClasses> taken{};
  for (const auto& file : split_files(dir, split)) {
    if (!fs::exists(file)) throw IoError("dataset file not found: " + file.string());
    const Dataset part = read_cifar10_file(file);
    for (int i = 0; i < part.size(); ++i) {
      const int label = part.labels[static_cast<std::size_t>(i)];
      if (per_class > 0 && taken[static_cast<std::size_t>(label)] >= per_class) continue;
      ++taken[static_cast<std::size_t>(label)];
      out.labels.push_back(label);
      const auto img = part.image(i);
      out.images.insert(out.images.end(), img.begin(), img.end());
    }
    if (per_class > 0 && std::all_of(taken.begin(), taken.end(), [&](int t) { return t >= per_class; })) break;
  }
  return out;
}

Dataset make_two_class(int samples, int side, int channels, std::uint64_t seed) {
  if (samples <= 0 || side <= 0 || channels <= 0) throw ParameterError("two-class set needs positive sizes");
  Rng rng(seed);
  Dataset d;
  d.h = d.w = side;
  d.c = channels;
  d.classes = 2;
  const std::size_t dim = d.image_size();
  std::vector<double> dir(dim);
  double norm = 0.0;
  for (auto& v : dir) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : dir) v /= norm;

  constexpr double kMargin = 0.35;
  d.images.reserve(static_cast<std::size_t>(samples) * dim);
  for (int i = 0; i < samples; ++i) {
    const int label = i % 2;
    std::vector<double> x(dim);
    for (auto& v : x) v = rng.uniform(0.25, 0.75);
    // Move x along dir until it sits kMargin past the boundary on its side.
    double proj = 0.0;
    for (std::size_t j = 0; j < dim; ++j) proj += (x[j] - 0.5) * dir[j];
    const double target = (label == 1 ? 1.0 : -1.0) * (kMargin + 0.5 * rng.uniform());
    for (std::size_t j = 0; j < dim; ++j) x[j] += (target - proj) * dir[j];
    d.labels.push_back(label);
    d.images.insert(d.images.end(), x.begin(), x.end());
  }
  return d;
}

namespace {

struct Prototype {
  // Two oriented gratings and two Gaussian blobs, each with an RGB tint.
  struct Grating {
    double fx, fy, phase, amp;
    std::array<double, 3> tint;
  };
  struct Blob {
    double cx, cy, radius, amp;
    std::array<double, 3> tint;
  };
  std::array<Grating, 2> gratings;
  std::array<Blob, 2> blobs;
};

std::array<double, 3> random_tint(Rng& rng) {
  return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
}

Prototype make_prototype(Rng& rng) {
  Prototype p;
  for (auto& g : p.gratings) {
    const double freq = rng.uniform(0.5, 2.5) / kCifarSide;
    const double angle = rng.uniform(0.0, std::numbers::pi);
    g = {freq * std::cos(angle), freq * std::sin(angle), rng.uniform(0.0, 2.0 * std::numbers::pi),
         rng.uniform(0.05, 0.12), random_tint(rng)};
  }
  for (auto& b : p.blobs) {
    b = {rng.uniform(6.0, 26.0), rng.uniform(6.0, 26.0), rng.uniform(3.0, 8.0), rng.uniform(0.1, 0.2),
         random_tint(rng)};
  }
  return p;
}

void render(const Prototype& p, double weight, double dx, double dy, std::vector<double>& img) {
  for (int y = 0; y < kCifarSide; ++y) {
    for (int x = 0; x < kCifarSide; ++x) {
      const double sx = x - dx;
      const double sy = y - dy;
      std::array<double, 3> v{};
      for (const auto& g : p.gratings) {
        const double s = g.amp * std::sin(2.0 * std::numbers::pi * (g.fx * sx + g.fy * sy) + g.phase);
        for (int ch = 0; ch < 3; ++ch) v[static_cast<std::size_t>(ch)] += s * g.tint[static_cast<std::size_t>(ch)];
      }
      for (const auto& b : p.blobs) {
        const double r2 = ((sx - b.cx) * (sx - b.cx) + (sy - b.cy) * (sy - b.cy)) / (b.radius * b.radius);
        const double s = b.amp * std::exp(-0.5 * r2);
        for (int ch = 0; ch < 3; ++ch) v[static_cast<std::size_t>(ch)] += s * b.tint[static_cast<std::size_t>(ch)];
      }
      double* px = img.data() + (static_cast<std::size_t>(y) * kCifarSide + x) * 3;
      for (int ch = 0; ch < 3; ++ch) px[ch] += weight * v[static_cast<std::size_t>(ch)];
    }
  }
}

}  // namespace

Dataset make_synthetic_cifar(int per_class, Split split, std::uint64_t seed) {
  if (per_class <= 0) throw ParameterError("synthetic set needs per_class > 0");
  Rng proto_rng(seed);
  std::array<Prototype, kCifarClasses> protos;
  for (auto& p : protos) p = make_prototype(proto_rng);

  Rng rng(seed ^ (split == Split::kTrain ? 0x7261696eULL : 0x74657374ULL) * 0x9e3779b97f4a7c15ULL);
  Dataset d;
  const int total = per_class * kCifarClasses;
  d.images.reserve(static_cast<std::size_t>(total) * kCifarPixels);
  std::vector<double> img(kCifarPixels);
  for (int i = 0; i < total; ++i) {
    const int label = i % kCifarClasses;
    const auto& p = protos[static_cast<std::size_t>(label)];
    const double contrast = rng.uniform(0.4, 1.3);
    const std::array<double, 3> base{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};
    for (int px = 0; px < kCifarSide * kCifarSide; ++px) {
      for (int ch = 0; ch < 3; ++ch) img[static_cast<std::size_t>(px) * 3 + ch] = base[static_cast<std::size_t>(ch)];
    }
    render(p, contrast, rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0), img);
    const auto other = static_cast<std::size_t>((label + 1 + rng.below(kCifarClasses - 1)) % kCifarClasses);
    render(protos[other], rng.uniform(0.0, 0.9), rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0), img);
    const double brightness = rng.uniform(-0.1, 0.1);
    for (auto& v : img) v = std::clamp(v + brightness + rng.normal(0.0, 0.25), 0.0, 1.0);
    d.labels.push_back(label);
    d.images.insert(d.images.end(), img.begin(), img.end());
  }
  return d;
}

}  // namespace imcsim::data
