#pragma once

// Image datasets: the CIFAR-10 binary batch format plus two deterministic
// synthetic generators for tests and offline runs.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace imcsim::data {

inline constexpr int kCifarSide = 32;
inline constexpr int kCifarChannels = 3;
inline constexpr int kCifarClasses = 10;
inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

/// Images are stored NHWC with values in [0, 1].
struct Dataset {
  int h = kCifarSide;
  int w = kCifarSide;
  int c = kCifarChannels;
  int classes = kCifarClasses;
  std::vector<double> images;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  std::size_t image_size() const { return static_cast<std::size_t>(h) * w * c; }
  std::span<const double> image(int i) const {
    return {images.data() + static_cast<std::size_t>(i) * image_size(), image_size()};
  }
};

/// Parses one binary batch file. Throws IoError when unreadable and
/// FormatError (with the byte offset) on a partial record or a label > 9.
Dataset read_cifar10_file(const std::filesystem::path& path);
/// Writes records in the same layout (channel planes, row-major).
void write_cifar10_file(const std::filesystem::path& path, const Dataset& data);

enum class Split { kTrain, kTest };

/// Loads data_batch_1..5.bin or test_batch.bin from dir, keeping the first
/// per_class examples of each class (0 keeps everything).
Dataset load_cifar10(const std::filesystem::path& dir, Split split, int per_class = 0);
/// True when dir holds the batch files for the split.
bool cifar10_present(const std::filesystem::path& dir, Split split);

/// Linearly separable two-class set: a fixed random direction decides the
/// label and every sample keeps a margin from the boundary.
Dataset make_two_class(int samples, int side, int channels, std::uint64_t seed);

/// Ten-class 32x32x3 images built from class prototypes (low-frequency
/// colour gratings and blobs) with random shifts, contrast, cross-class
/// blending and pixel noise. Train and test draw from disjoint streams.
Dataset make_synthetic_cifar(int per_class, Split split, std::uint64_t seed);

}  // namespace imcsim::data
