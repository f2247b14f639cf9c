#include "ganno/data/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>

#include "ganno/errors.hpp"
#include "ganno/random.hpp"

namespace ganno {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  return idx;
}

Split first_of_shuffle(const Split& split, std::size_t keep, std::uint64_t seed) {
  if (keep == 0 || keep >= split.size()) return split;
  auto idx = permutation(split.size(), seed);
  idx.resize(keep);
  return take(split, idx);
}

}  // namespace

Split load_idx(const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  if (img.size() < 16 || be32(img, 0) != kIdxImages) {
    throw LoadError(images.string() + ": not an IDX u8 image file");
  }
  if (lab.size() < 8 || be32(lab, 0) != kIdxLabels) {
    throw LoadError(labels.string() + ": not an IDX u8 label file");
  }
  const std::size_t n = be32(img, 4);
  const std::size_t rows = be32(img, 8);
  const std::size_t cols = be32(img, 12);
  const std::size_t n_labels = be32(lab, 4);
  if (n != n_labels) {
    throw LoadError("image count " + std::to_string(n) +
                    " does not match label count " + std::to_string(n_labels));
  }
  if (img.size() != 16 + n * rows * cols) {
    throw LoadError(images.string() + ": payload size does not match header");
  }
  if (lab.size() != 8 + n) {
    throw LoadError(labels.string() + ": payload size does not match header");
  }
  Split split;
  split.shape = nn::Shape{1, static_cast<int>(rows), static_cast<int>(cols)};
  split.inputs.resize(n * rows * cols);
  for (std::size_t i = 0; i < split.inputs.size(); ++i) {
    split.inputs[i] = static_cast<float>(img[16 + i]) / 255.0f;
  }
  split.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) split.labels[i] = lab[8 + i];
  return split;
}

void write_idx(const Split& split, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  if (split.shape.channels != 1) {
    throw ConfigError("IDX export needs single-channel examples");
  }
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw LoadError("cannot write IDX files");
  put_be32(img, kIdxImages);
  put_be32(img, static_cast<std::uint32_t>(split.size()));
  put_be32(img, static_cast<std::uint32_t>(split.shape.height));
  put_be32(img, static_cast<std::uint32_t>(split.shape.width));
  for (float x : split.inputs) {
    const double c = std::clamp(static_cast<double>(x), 0.0, 1.0);
    img.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(c * 255.0))));
  }
  put_be32(lab, kIdxLabels);
  put_be32(lab, static_cast<std::uint32_t>(split.size()));
  for (int y : split.labels) {
    if (y < 0 || y > 255) throw ConfigError("IDX labels must fit in a byte");
    lab.put(static_cast<char>(static_cast<std::uint8_t>(y)));
  }
}

Split load_cifar10_binary(const std::vector<std::filesystem::path>& paths) {
  Split split;
  split.shape = nn::Shape{3, 32, 32};
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw LoadError(path.string() + ": length " + std::to_string(bytes.size()) +
                      " is not a positive multiple of 3073");
    }
    const std::size_t n = bytes.size() / kCifarRecord;
    for (std::size_t r = 0; r < n; ++r) {
      const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
      if (rec[0] >= 10) {
        throw LoadError(path.string() + ": label out of range in record " +
                        std::to_string(r));
      }
      split.labels.push_back(rec[0]);
      for (std::size_t i = 1; i < kCifarRecord; ++i) {
        split.inputs.push_back(static_cast<float>(rec[i]) / 255.0f);
      }
    }
  }
  return split;
}

Split synthetic_blobs(const BlobParams& p) {
  if (p.num_classes < 2) throw ConfigError("synthetic_blobs needs >= 2 classes");
  if (p.per_class < 1 || p.dim < 1) {
    throw ConfigError("synthetic_blobs needs per_class >= 1 and dim >= 1");
  }
  nn::Shape shape = p.shape.size() == 1 && p.dim != 1
                        ? nn::Shape{p.dim, 1, 1}
                        : p.shape;
  if (shape.size() != static_cast<std::size_t>(p.dim)) {
    throw ConfigError("blob shape does not match dim");
  }
  Rng rng(p.seed);
  const auto dim = static_cast<std::size_t>(p.dim);
  const auto classes = static_cast<std::size_t>(p.num_classes);

  // Orthonormal directions when they fit, random unit vectors otherwise.
  std::vector<std::vector<double>> dirs;
  for (std::size_t k = 0; k < classes; ++k) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    if (classes <= dim) {
      for (const auto& d : dirs) {
        const double dot = std::inner_product(v.begin(), v.end(), d.begin(), 0.0);
        for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * d[i];
      }
    }
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (double& x : v) x /= n;
    dirs.push_back(std::move(v));
  }
  const double radius = p.separation * p.sigma / std::sqrt(2.0);

  Split split;
  split.shape = shape;
  split.inputs.reserve(classes * p.per_class * dim);
  for (std::size_t k = 0; k < classes; ++k) {
    for (int i = 0; i < p.per_class; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double x = 0.5 + radius * dirs[k][d] + p.sigma * rng.normal();
        split.inputs.push_back(static_cast<float>(std::clamp(x, 0.0, 1.0)));
      }
      split.labels.push_back(static_cast<int>(k));
    }
  }
  return split;
}

Split take(const Split& split, const std::vector<std::size_t>& indices) {
  Split out;
  out.shape = split.shape;
  const std::size_t width = split.shape.size();
  out.inputs.reserve(indices.size() * width);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= split.size()) throw ConfigError("example index out of range");
    const auto first = split.inputs.begin() + static_cast<std::ptrdiff_t>(i * width);
    out.inputs.insert(out.inputs.end(), first, first + static_cast<std::ptrdiff_t>(width));
    out.labels.push_back(split.labels[i]);
  }
  return out;
}

Dataset make_dataset(const Split& pool, Split test, int num_classes,
                     double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must be in [0, 1)");
  }
  for (const Split* s : {&pool, static_cast<const Split*>(&test)}) {
    for (int y : s->labels) {
      if (y < 0 || y >= num_classes) throw ConfigError("label out of range");
    }
  }
  const auto idx = permutation(pool.size(), seed);
  const auto n_val = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(pool.size())));
  std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  Dataset ds;
  ds.train = take(pool, train_idx);
  ds.val = take(pool, val_idx);
  ds.test = std::move(test);
  ds.num_classes = num_classes;
  ds.shape = pool.shape;
  return ds;
}

Dataset load_fashion_mnist(const std::filesystem::path& root,
                           std::size_t max_train, std::size_t max_test,
                           double val_fraction, std::uint64_t seed) {
  const Split train = load_idx(root / "train-images-idx3-ubyte",
                               root / "train-labels-idx1-ubyte");
  const Split test = load_idx(root / "t10k-images-idx3-ubyte",
                              root / "t10k-labels-idx1-ubyte");
  return make_dataset(first_of_shuffle(train, max_train, derive_seed(seed, 1)),
                      first_of_shuffle(test, max_test, derive_seed(seed, 2)), 10,
                      val_fraction, seed);
}

Dataset load_cifar10(const std::filesystem::path& root, std::size_t max_train,
                     std::size_t max_test, double val_fraction,
                     std::uint64_t seed) {
  std::filesystem::path dir = root;
  if (std::filesystem::exists(root / "cifar-10-batches-bin")) {
    dir = root / "cifar-10-batches-bin";
  }
  std::vector<std::filesystem::path> train_files;
  for (int i = 1; i <= 5; ++i) {
    train_files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  }
  const Split train = load_cifar10_binary(train_files);
  const Split test = load_cifar10_binary({dir / "test_batch.bin"});
  return make_dataset(first_of_shuffle(train, max_train, derive_seed(seed, 1)),
                      first_of_shuffle(test, max_test, derive_seed(seed, 2)), 10,
                      val_fraction, seed);
}

std::filesystem::path default_data_root() {
  const char* env = std::getenv("GANNO_DATA");
  return env ? std::filesystem::path(env) : std::filesystem::path();
}

std::string to_string(DataSource source) {
  switch (source) {
    case DataSource::blobs: return "blobs";
    case DataSource::fashion_mnist: return "fashion_mnist";
    case DataSource::cifar10: return "cifar10";
  }
  return "unknown";
}

DataSource data_source_from_string(const std::string& name) {
  if (name == "blobs") return DataSource::blobs;
  if (name == "fashion_mnist") return DataSource::fashion_mnist;
  if (name == "cifar10") return DataSource::cifar10;
  throw ConfigError("unknown dataset '" + name + "'");
}

namespace {

Dataset blob_dataset(const DataConfig& cfg) {
  BlobParams p = cfg.blobs;
  p.per_class = cfg.blobs.per_class + cfg.blob_test_per_class;
  const Split all = synthetic_blobs(p);
  // Examples are class-major; the tail of each class block is held out.
  std::vector<std::size_t> pool_idx, test_idx;
  for (int k = 0; k < p.num_classes; ++k) {
    for (int i = 0; i < p.per_class; ++i) {
      const auto idx = static_cast<std::size_t>(k * p.per_class + i);
      (i < cfg.blobs.per_class ? pool_idx : test_idx).push_back(idx);
    }
  }
  Dataset ds = make_dataset(take(all, pool_idx), take(all, test_idx),
                            p.num_classes, cfg.val_fraction, cfg.seed);
  ds.source = "blobs";
  return ds;
}

}  // namespace

Dataset load_dataset(const DataConfig& cfg) {
  if (cfg.source == DataSource::blobs) return blob_dataset(cfg);
  const auto root = cfg.root.empty() ? default_data_root() : cfg.root;
  try {
    Dataset ds = cfg.source == DataSource::fashion_mnist
                     ? load_fashion_mnist(root, cfg.max_train, cfg.max_test,
                                          cfg.val_fraction, cfg.seed)
                     : load_cifar10(root, cfg.max_train, cfg.max_test,
                                    cfg.val_fraction, cfg.seed);
    ds.source = to_string(cfg.source);
    return ds;
  } catch (const LoadError&) {
    if (!cfg.fallback_to_blobs) throw;
  }
  Dataset ds = blob_dataset(cfg);
  ds.source = "blobs (fallback for " + to_string(cfg.source) + ")";
  return ds;
}

}  // namespace ganno
