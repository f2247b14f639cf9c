#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ganno/data/split.hpp"

namespace ganno {

struct Dataset {
  Split train;
  Split val;
  Split test;
  int num_classes = 0;
  nn::Shape shape;
  std::string source;  // what was actually loaded, e.g. "blobs"
};

// IDX files (big-endian; magic 0x00000803 for u8 images, 0x00000801 for u8
// labels). Pixels are scaled by 1/255. Throws LoadError on bad magic,
// truncation, or an image/label count mismatch.
Split load_idx(const std::filesystem::path& images,
               const std::filesystem::path& labels);

// Writes `split` as IDX, quantizing every input to round(255 * clamp(x, 0, 1)).
// The split must be single-channel.
void write_idx(const Split& split, const std::filesystem::path& images,
               const std::filesystem::path& labels);

// Concatenated CIFAR-10 binary batches: 3073-byte records of one label byte
// followed by 3072 channel-major pixel bytes. Throws LoadError when a file
// length is not a positive multiple of 3073 or a label is >= 10.
Split load_cifar10_binary(const std::vector<std::filesystem::path>& paths);

struct BlobParams {
  int num_classes = 10;
  int per_class = 100;
  int dim = 32;
  double sigma = 0.1;       // per-coordinate noise
  double separation = 10.0; // pairwise centre distance, in units of sigma
  std::uint64_t seed = 0;
  nn::Shape shape{};        // defaults to (dim, 1, 1); size must equal dim
};

// Seeded Gaussian clusters with values clamped into [0, 1]. Examples are
// ordered class-major. Throws ConfigError when num_classes < 2.
Split synthetic_blobs(const BlobParams& params);

// Carves a validation split of round(val_fraction * pool size) examples from
// `pool` using a permutation fixed by `seed`; the rest becomes train.
Dataset make_dataset(const Split& pool, Split test, int num_classes,
                     double val_fraction, std::uint64_t seed);

// Subset of examples by index.
Split take(const Split& split, const std::vector<std::size_t>& indices);

// Standard file layouts under `root`. max_train = 0 keeps every example;
// otherwise the first max_train (max_test) examples of a seeded shuffle are kept.
Dataset load_fashion_mnist(const std::filesystem::path& root,
                           std::size_t max_train, std::size_t max_test,
                           double val_fraction, std::uint64_t seed);
Dataset load_cifar10(const std::filesystem::path& root, std::size_t max_train,
                     std::size_t max_test, double val_fraction,
                     std::uint64_t seed);

// GANNO_DATA environment variable, or empty.
std::filesystem::path default_data_root();

enum class DataSource { blobs, fashion_mnist, cifar10 };

std::string to_string(DataSource source);
DataSource data_source_from_string(const std::string& name);

struct DataConfig {
  DataSource source = DataSource::blobs;
  std::filesystem::path root;  // empty: default_data_root()
  std::size_t max_train = 0;
  std::size_t max_test = 0;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  // Used for DataSource::blobs, and for file sources when the files are
  // missing and fallback_to_blobs is set. per_class counts the train+val pool.
  BlobParams blobs;
  int blob_test_per_class = 100;
  bool fallback_to_blobs = false;
};

// Throws LoadError when files are missing and no fallback is allowed.
Dataset load_dataset(const DataConfig& cfg);

}  // namespace ganno
