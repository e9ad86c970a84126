#include "mcl/tasks.hpp"

#include "mcl/checkpoint.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mcl {
namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::uint32_t read_u32be(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("idx: truncated header in " + path);
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_u32be(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>((v >> 24) & 0xFF), static_cast<char>((v >> 16) & 0xFF),
                     static_cast<char>((v >> 8) & 0xFF), static_cast<char>(v & 0xFF)};
  os.write(b, 4);
}

Batch gather(const RawDataset& data, const std::vector<Index>& idx, Index start, Index stop) {
  Batch b;
  b.inputs.resize(stop - start, data.dim());
  b.labels.resize(static_cast<std::size_t>(stop - start));
  for (Index r = 0; r < stop - start; ++r) {
    const Index src = idx[static_cast<std::size_t>(start + r)];
    b.inputs.row(r) = data.images.row(src);
    b.labels[static_cast<std::size_t>(r)] = data.labels[static_cast<std::size_t>(src)];
  }
  return b;
}

Batch permute_batch_pixels(const Batch& b, const std::vector<Index>& perm) {
  Batch out;
  out.labels = b.labels;
  out.inputs.resize(b.inputs.rows(), b.inputs.cols());
  for (Index r = 0; r < b.inputs.rows(); ++r) {
    for (Index c = 0; c < b.inputs.cols(); ++c) {
      out.inputs(r, c) = b.inputs(r, perm[static_cast<std::size_t>(c)]);
    }
  }
  return out;
}

std::vector<Index> iota_indices(Index n) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

void add_batch(Checkpoint& ckpt, const std::string& prefix, const Batch& b) {
  ckpt.add_matrix(prefix + "/images", b.inputs);
  FlatVector labels(static_cast<Index>(b.labels.size()));
  for (Index i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<double>(b.labels[static_cast<std::size_t>(i)]);
  }
  ckpt.add_vector(prefix + "/labels", labels);
}

Batch get_batch(const Checkpoint& ckpt, const std::string& prefix) {
  Batch b;
  b.inputs = ckpt.get_matrix(prefix + "/images");
  const FlatVector labels = ckpt.get_vector(prefix + "/labels");
  b.labels.resize(static_cast<std::size_t>(labels.size()));
  for (Index i = 0; i < labels.size(); ++i) {
    b.labels[static_cast<std::size_t>(i)] = static_cast<int>(labels[i]);
  }
  return b;
}

}  // namespace

RawDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("idx: cannot open " + images_path);
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw IoError("idx: cannot open " + labels_path);

  const std::uint32_t img_magic = read_u32be(imgs, images_path);
  if (img_magic != kImageMagic) {
    throw FormatError("idx: bad image magic " + std::to_string(img_magic) + " in " + images_path +
                      ", expected " + std::to_string(kImageMagic));
  }
  const std::uint32_t lab_magic = read_u32be(labs, labels_path);
  if (lab_magic != kLabelMagic) {
    throw FormatError("idx: bad label magic " + std::to_string(lab_magic) + " in " + labels_path +
                      ", expected " + std::to_string(kLabelMagic));
  }
  const std::uint32_t n_images = read_u32be(imgs, images_path);
  const std::uint32_t rows = read_u32be(imgs, images_path);
  const std::uint32_t cols = read_u32be(imgs, images_path);
  const std::uint32_t n_labels = read_u32be(labs, labels_path);
  if (n_images != n_labels) {
    throw FormatError("idx: " + std::to_string(n_images) + " images vs " +
                      std::to_string(n_labels) + " labels");
  }

  const std::size_t d = static_cast<std::size_t>(rows) * cols;
  RawDataset data;
  data.images.resize(static_cast<Index>(n_images), static_cast<Index>(d));
  data.labels.resize(n_images);

  std::vector<unsigned char> buf(d);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(d))) {
      throw IoError("idx: truncated image payload in " + images_path);
    }
    for (std::size_t j = 0; j < d; ++j) {
      data.images(static_cast<Index>(i), static_cast<Index>(j)) =
          static_cast<double>(buf[j]) / 255.0;
    }
  }
  std::vector<unsigned char> lab_buf(n_labels);
  if (!labs.read(reinterpret_cast<char*>(lab_buf.data()), n_labels)) {
    throw IoError("idx: truncated label payload in " + labels_path);
  }
  int max_label = 0;
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    data.labels[i] = lab_buf[i];
    max_label = std::max(max_label, data.labels[i]);
  }
  data.num_classes = max_label + 1;
  return data;
}

void save_idx(const RawDataset& data, const std::string& images_path,
              const std::string& labels_path) {
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(data.dim()))));
  if (side * side != data.dim()) throw ArgumentError("save_idx: images are not square");
  std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
  if (!imgs) throw IoError("idx: cannot open " + images_path + " for writing");
  std::ofstream labs(labels_path, std::ios::binary | std::ios::trunc);
  if (!labs) throw IoError("idx: cannot open " + labels_path + " for writing");

  write_u32be(imgs, kImageMagic);
  write_u32be(imgs, static_cast<std::uint32_t>(data.size()));
  write_u32be(imgs, static_cast<std::uint32_t>(side));
  write_u32be(imgs, static_cast<std::uint32_t>(side));
  std::vector<unsigned char> buf(static_cast<std::size_t>(data.dim()));
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) {
      const double v = std::clamp(data.images(i, j), 0.0, 1.0);
      buf[static_cast<std::size_t>(j)] = static_cast<unsigned char>(std::llround(v * 255.0));
    }
    imgs.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }

  write_u32be(labs, kLabelMagic);
  write_u32be(labs, static_cast<std::uint32_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i) {
    const char b = static_cast<char>(data.labels[static_cast<std::size_t>(i)]);
    labs.write(&b, 1);
  }
  if (!imgs || !labs) throw IoError("idx: write failed");
}

RawDataset mean_pool_to_side(const RawDataset& data, Index out_side) {
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(data.dim()))));
  if (side * side != data.dim()) throw ArgumentError("mean_pool_to_side: images are not square");
  if (out_side < 1 || out_side > side) {
    throw ArgumentError("mean_pool_to_side: out_side must be in [1, " + std::to_string(side) + "]");
  }
  const Index factor = (side + out_side - 1) / out_side;
  const Index padded = factor * out_side;
  const Index off = (padded - side) / 2;
  const double inv_area = 1.0 / static_cast<double>(factor * factor);

  RawDataset out;
  out.labels = data.labels;
  out.num_classes = data.num_classes;
  out.images.resize(data.size(), out_side * out_side);
  for (Index i = 0; i < data.size(); ++i) {
    for (Index pr = 0; pr < out_side; ++pr) {
      for (Index pc = 0; pc < out_side; ++pc) {
        double acc = 0.0;
        for (Index r = pr * factor; r < (pr + 1) * factor; ++r) {
          for (Index c = pc * factor; c < (pc + 1) * factor; ++c) {
            const Index sr = r - off, sc = c - off;
            if (sr >= 0 && sr < side && sc >= 0 && sc < side) {
              acc += data.images(i, sr * side + sc);
            }
          }
        }
        out.images(i, pr * out_side + pc) = acc * inv_area;
      }
    }
  }
  return out;
}

std::vector<Index> random_permutation(Index n, Rng& rng) {
  std::vector<Index> perm = iota_indices(n);
  shuffle_indices(perm, rng);
  return perm;
}

RawDataset apply_pixel_permutation(const RawDataset& data, const std::vector<Index>& perm) {
  if (static_cast<Index>(perm.size()) != data.dim()) {
    throw ShapeError("apply_pixel_permutation: permutation length " +
                     std::to_string(perm.size()) + " vs dim " + std::to_string(data.dim()));
  }
  RawDataset out;
  out.labels = data.labels;
  out.num_classes = data.num_classes;
  out.images.resize(data.size(), data.dim());
  for (Index r = 0; r < data.size(); ++r) {
    for (Index c = 0; c < data.dim(); ++c) {
      out.images(r, c) = data.images(r, perm[static_cast<std::size_t>(c)]);
    }
  }
  return out;
}

Task make_permutation_task(const RawDataset& train_base, const RawDataset& test_base,
                           std::uint64_t seed, const SplitSizes& sizes) {
  Rng rng = Rng(seed).fork("pixel_perm");
  const std::vector<Index> perm = random_permutation(train_base.dim(), rng);
  return make_permutation_task(train_base, test_base, seed, sizes, perm);
}

Task make_permutation_task(const RawDataset& train_base, const RawDataset& test_base,
                           std::uint64_t seed, const SplitSizes& sizes,
                           const std::vector<Index>& perm) {
  if (train_base.dim() != test_base.dim()) {
    throw ShapeError("make_permutation_task: train dim " + std::to_string(train_base.dim()) +
                     " vs test dim " + std::to_string(test_base.dim()));
  }
  const Index train_n = sizes.train > 0 ? sizes.train : train_base.size() - sizes.valid;
  const Index valid_n = sizes.valid;
  if (train_n + valid_n > train_base.size()) {
    throw ArgumentError("make_permutation_task: train+valid (" + std::to_string(train_n + valid_n) +
                        ") exceeds pool size " + std::to_string(train_base.size()));
  }
  const Index test_n = sizes.test > 0 ? sizes.test : test_base.size();
  if (test_n > test_base.size()) {
    throw ArgumentError("make_permutation_task: test size " + std::to_string(test_n) +
                        " exceeds pool size " + std::to_string(test_base.size()));
  }

  Rng seed_rng(seed);
  Rng split_rng = seed_rng.fork("splits");
  std::vector<Index> idx = iota_indices(train_base.size());
  shuffle_indices(idx, split_rng);
  Rng test_rng = seed_rng.fork("test_split");
  std::vector<Index> tidx = iota_indices(test_base.size());
  shuffle_indices(tidx, test_rng);

  Task task;
  task.train = permute_batch_pixels(gather(train_base, idx, 0, train_n), perm);
  task.valid = permute_batch_pixels(gather(train_base, idx, train_n, train_n + valid_n), perm);
  task.test = permute_batch_pixels(gather(test_base, tidx, 0, test_n), perm);
  task.descriptor = TaskDescriptor{"permuted", seed, {}};
  return task;
}

std::pair<Task, Task> make_disjoint_tasks(const RawDataset& train_base,
                                          const RawDataset& test_base, int split_point,
                                          const SplitSizes& sizes, std::uint64_t seed) {
  if (split_point <= 0 || split_point >= train_base.num_classes) {
    throw ArgumentError("make_disjoint_tasks: split point " + std::to_string(split_point) +
                        " is degenerate for " + std::to_string(train_base.num_classes) +
                        " classes");
  }
  Rng seed_rng(seed);
  auto build = [&](bool low_half, const char* tag) {
    auto keep = [&](int label) { return low_half ? label < split_point : label >= split_point; };
    std::vector<Index> pool;
    for (Index i = 0; i < train_base.size(); ++i) {
      if (keep(train_base.labels[static_cast<std::size_t>(i)])) pool.push_back(i);
    }
    std::vector<Index> test_pool;
    for (Index i = 0; i < test_base.size(); ++i) {
      if (keep(test_base.labels[static_cast<std::size_t>(i)])) test_pool.push_back(i);
    }
    Rng split_rng = seed_rng.fork("splits", low_half ? 0 : 1);
    shuffle_indices(pool, split_rng);
    const Index avail = static_cast<Index>(pool.size());
    Index valid_n = sizes.valid;
    Index train_n = sizes.train;
    if (train_n == 0) {
      if (valid_n == 0) valid_n = avail / 6;
      train_n = avail - valid_n;
    }
    if (train_n + valid_n > avail) {
      throw ArgumentError("make_disjoint_tasks: train+valid (" + std::to_string(train_n + valid_n) +
                          ") exceeds filtered pool size " + std::to_string(avail));
    }
    Rng test_rng = seed_rng.fork("test_split", low_half ? 0 : 1);
    shuffle_indices(test_pool, test_rng);
    Index test_n = sizes.test > 0 ? sizes.test : static_cast<Index>(test_pool.size());
    if (test_n > static_cast<Index>(test_pool.size())) {
      throw ArgumentError("make_disjoint_tasks: test size " + std::to_string(test_n) +
                          " exceeds filtered pool size " + std::to_string(test_pool.size()));
    }

    Task task;
    task.train = gather(train_base, pool, 0, train_n);
    task.valid = gather(train_base, pool, train_n, train_n + valid_n);
    task.test = gather(test_base, test_pool, 0, test_n);
    task.descriptor.kind = "disjoint";
    task.descriptor.seed = seed;
    for (int c = 0; c < train_base.num_classes; ++c) {
      if (keep(c)) task.descriptor.label_set.push_back(c);
    }
    (void)tag;
    return task;
  };
  return {build(true, "low"), build(false, "high")};
}

RawDataset make_cluster_dataset(std::uint64_t seed, Index d, int classes, Index n_total,
                                double separation) {
  if (d < classes) throw ArgumentError("make_cluster_dataset: need d >= classes");
  if (classes < 2) throw ArgumentError("make_cluster_dataset: need at least 2 classes");
  if (n_total < classes) throw ArgumentError("make_cluster_dataset: need n_total >= classes");
  if (separation < 0.0) throw ArgumentError("make_cluster_dataset: separation must be >= 0");

  Rng rng = Rng(seed).fork("clusters");
  // Seed-derived orthonormal directions via QR of a gaussian draw.
  Matrix g = gaussian_init(rng, d, classes, 1.0);
  Eigen::MatrixXd gcol = g;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gcol);
  Eigen::MatrixXd thin_q =
      qr.householderQ() * Eigen::MatrixXd::Identity(d, static_cast<Index>(classes));

  RawDataset data;
  data.num_classes = classes;
  data.images.resize(n_total, d);
  data.labels.resize(static_cast<std::size_t>(n_total));
  Rng noise = rng.fork("noise");
  for (Index i = 0; i < n_total; ++i) {
    const int c = static_cast<int>(i % classes);
    data.labels[static_cast<std::size_t>(i)] = c;
    for (Index j = 0; j < d; ++j) {
      data.images(i, j) = separation * thin_q(j, c) + noise.next_gaussian();
    }
  }
  std::vector<Index> order = iota_indices(n_total);
  Rng order_rng = rng.fork("order");
  shuffle_indices(order, order_rng);
  RawDataset shuffled;
  shuffled.num_classes = classes;
  shuffled.images.resize(n_total, d);
  shuffled.labels.resize(static_cast<std::size_t>(n_total));
  for (Index i = 0; i < n_total; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    shuffled.images.row(i) = data.images.row(src);
    shuffled.labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(src)];
  }
  return shuffled;
}

Task make_synthetic_task(std::uint64_t seed, Index d, int classes, Index n_per_class,
                         double separation) {
  if (n_per_class < 1) throw ArgumentError("make_synthetic_task: n_per_class must be >= 1");
  const Index eval_per_class = std::max<Index>(1, n_per_class / 5);
  const Index per_class = n_per_class + 2 * eval_per_class;
  RawDataset base = make_cluster_dataset(seed, d, classes, per_class * classes, separation);

  // Balanced split: the first n_per_class of each class go to train, then
  // valid, then test, in dataset order.
  std::vector<Index> train_idx, valid_idx, test_idx;
  std::vector<Index> seen(static_cast<std::size_t>(classes), 0);
  for (Index i = 0; i < base.size(); ++i) {
    const auto c = static_cast<std::size_t>(base.labels[static_cast<std::size_t>(i)]);
    if (seen[c] < n_per_class) {
      train_idx.push_back(i);
    } else if (seen[c] < n_per_class + eval_per_class) {
      valid_idx.push_back(i);
    } else {
      test_idx.push_back(i);
    }
    ++seen[c];
  }
  Task task;
  task.train = gather(base, train_idx, 0, static_cast<Index>(train_idx.size()));
  task.valid = gather(base, valid_idx, 0, static_cast<Index>(valid_idx.size()));
  task.test = gather(base, test_idx, 0, static_cast<Index>(test_idx.size()));
  task.descriptor = TaskDescriptor{"synthetic", seed, {}};
  return task;
}

void save_task_cache(const Task& task, const std::string& path) {
  Checkpoint ckpt;
  ckpt.add_scalar("task/seed", static_cast<double>(task.descriptor.seed));
  add_batch(ckpt, "task/train", task.train);
  add_batch(ckpt, "task/valid", task.valid);
  add_batch(ckpt, "task/test", task.test);
  save_checkpoint(ckpt, path);
}

Task load_task_cache(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  Task task;
  task.descriptor.kind = "cached";
  task.descriptor.seed = static_cast<std::uint64_t>(ckpt.get_scalar("task/seed"));
  task.train = get_batch(ckpt, "task/train");
  task.valid = get_batch(ckpt, "task/valid");
  task.test = get_batch(ckpt, "task/test");
  return task;
}

}  // namespace mcl
