#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "lfaa/core/errors.hpp"
#include "lfaa/imaging/image.hpp"
#include "lfaa/imaging/image_io.hpp"

namespace lfaa {

enum class Split { train, test };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ArgumentError("unknown split '" + s + "' (expected train or test)");
}

/// Images with class labels. All images share one shape; labels lie in [0, d).
struct LabeledDataset {
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  Split split = Split::train;

  std::size_t size() const { return images.size(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  ImageShape shape() const { return images.empty() ? ImageShape{} : images.front().shape(); }

  /// Throws ShapeError / ArgumentError if the dataset invariants are broken.
  void validate() const {
    if (images.size() != labels.size()) throw ShapeError("dataset has mismatched image and label counts");
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (images[i].shape() != images.front().shape())
        throw ShapeError("image " + std::to_string(i) + " has shape " + images[i].shape().str() + ", expected " +
                         images.front().shape().str());
      if (labels[i] < 0 || labels[i] >= num_classes())
        throw ArgumentError("label " + std::to_string(labels[i]) + " out of range [0," + std::to_string(num_classes()) + ")");
    }
  }

  LabeledDataset subset(const std::vector<std::size_t>& indices) const {
    LabeledDataset out;
    out.class_names = class_names;
    out.split = split;
    for (std::size_t i : indices) {
      out.images.push_back(images.at(i));
      out.labels.push_back(labels.at(i));
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir, bool want_dirs) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (want_dirs ? entry.is_directory() : (entry.is_regular_file() && is_image_file(entry.path())))
      out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// CIFAR-10 style records: 1 label byte followed by a 32x32x3 planar image.
inline void append_cifar_batch(const std::filesystem::path& file, LabeledDataset& ds) {
  constexpr int kSide = 32;
  constexpr std::size_t kPlane = kSide * kSide;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open packed corpus file " + file.string());
  std::vector<unsigned char> record(1 + 3 * kPlane);
  while (in.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(record.size()))) {
    ImageArray img({kSide, kSide, 3});
    for (std::size_t p = 0; p < kPlane; ++p)
      for (int c = 0; c < 3; ++c) img[p * 3 + c] = record[1 + c * kPlane + p] / 255.0;
    ds.images.emplace_back(std::move(img));
    ds.labels.push_back(record[0]);
  }
  if (in.gcount() != 0) throw IoError("truncated record in packed corpus file " + file.string());
}

inline LabeledDataset load_packed(const std::filesystem::path& root, Split split) {
  LabeledDataset ds;
  ds.split = split;
  std::vector<std::filesystem::path> files;
  if (split == Split::train) {
    for (int i = 1; i <= 5; ++i) {
      auto f = root / ("data_batch_" + std::to_string(i) + ".bin");
      if (std::filesystem::exists(f)) files.push_back(f);
    }
  } else {
    files.push_back(root / "test_batch.bin");
  }
  for (const auto& f : files) append_cifar_batch(f, ds);
  std::ifstream meta(root / "batches.meta.txt");
  std::string name;
  while (meta && std::getline(meta, name)) {
    if (!name.empty()) ds.class_names.push_back(name);
  }
  if (ds.class_names.empty()) {
    for (int i = 0; i < 10; ++i) ds.class_names.push_back("class_" + std::to_string(i));
  }
  ds.validate();
  return ds;
}

}  // namespace detail

/// True when `root` holds a CIFAR-10 binary corpus rather than class folders.
inline bool is_packed_corpus(const std::filesystem::path& root) {
  return std::filesystem::exists(root / "test_batch.bin") || std::filesystem::exists(root / "data_batch_1.bin");
}

/// Loads `<root>/<split>/<class>/<images>`; class index follows lexicographic
/// directory order and files are read in lexicographic order within a class.
/// Falls back to a CIFAR-10 binary corpus when `root` holds one.
inline LabeledDataset load_dataset(const std::filesystem::path& root, Split split) {
  if (!std::filesystem::is_directory(root)) throw IoError("dataset directory not found: " + root.string());
  const auto split_dir = root / to_string(split);
  if (!std::filesystem::is_directory(split_dir)) {
    if (is_packed_corpus(root)) return detail::load_packed(root, split);
    throw IoError("dataset split directory not found: " + split_dir.string());
  }

  LabeledDataset ds;
  ds.split = split;
  const auto class_dirs = detail::sorted_entries(split_dir, true);
  if (class_dirs.empty()) throw IoError("no class directories under " + split_dir.string());

  std::vector<std::string> empty;
  std::vector<std::vector<std::filesystem::path>> files;
  for (const auto& dir : class_dirs) {
    ds.class_names.push_back(dir.filename().string());
    files.push_back(detail::sorted_entries(dir, false));
    if (files.back().empty()) empty.push_back(dir.filename().string());
  }
  if (!empty.empty()) {
    std::string msg = "empty class directories:";
    for (const auto& e : empty) msg += " " + e;
    throw IoError(msg + " (under " + split_dir.string() + ")");
  }
  for (std::size_t c = 0; c < files.size(); ++c) {
    for (const auto& f : files[c]) {
      ds.images.push_back(read_image(f));
      ds.labels.push_back(static_cast<int>(c));
      if (ds.images.back().shape() != ds.images.front().shape())
        throw ShapeError("image " + f.string() + " has shape " + ds.images.back().shape().str() + ", expected " +
                         ds.images.front().shape().str());
    }
  }
  return ds;
}

/// Index permutation for one epoch, a pure function of (n, seed, epoch).
inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0x6c66u};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

struct Batch {
  std::vector<std::size_t> indices;
  std::vector<ImageTensor> images;
  std::vector<int> labels;
};

/// One shuffled epoch split into batches; the final short batch is kept.
inline std::vector<Batch> batch_iter(const LabeledDataset& ds, int batch_size, std::uint64_t seed, std::uint64_t epoch = 0) {
  if (batch_size <= 0) throw ArgumentError("batch_size must be positive, got " + std::to_string(batch_size));
  if (static_cast<std::size_t>(batch_size) > ds.size())
    throw ArgumentError("batch_size " + std::to_string(batch_size) + " exceeds dataset size " + std::to_string(ds.size()));
  const auto order = epoch_permutation(ds.size(), seed, epoch);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    for (std::size_t i = start; i < end; ++i) {
      b.indices.push_back(order[i]);
      b.images.push_back(ds.images[order[i]]);
      b.labels.push_back(ds.labels[order[i]]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace lfaa
