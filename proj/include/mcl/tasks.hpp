#pragma once

#include "mcl/classifier.hpp"
#include "mcl/ndcore.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mcl {

struct RawDataset {
  Matrix images;            // [n x d], values in [0, 1] for image data
  std::vector<int> labels;  // length n, each in [0, num_classes)
  int num_classes = 0;

  Index size() const { return images.rows(); }
  Index dim() const { return images.cols(); }
};

// Parses the IDX pair (big-endian; magic 2051 for images, 2049 for labels)
// and scales pixel bytes to [0, 1] by /255.
RawDataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writes a dataset back out as an IDX pair (values rounded to bytes);
// images must be square (d = side^2).
void save_idx(const RawDataset& data, const std::string& images_path,
              const std::string& labels_path);

// Mean-pools square images down to out_side x out_side, zero-padding the
// input side up to the nearest multiple first (28 -> pad 32 -> pool 4x4).
RawDataset mean_pool_to_side(const RawDataset& data, Index out_side);

struct TaskDescriptor {
  std::string kind;
  std::uint64_t seed = 0;
  std::vector<int> label_set;  // disjoint tasks only
};

struct Task {
  Batch train;
  Batch valid;
  Batch test;
  TaskDescriptor descriptor;
};

enum class SequenceKind { MetaTrain, Target };

struct TaskSequence {
  std::vector<Task> tasks;
  SequenceKind kind = SequenceKind::Target;

  std::size_t size() const { return tasks.size(); }
};

struct SplitSizes {
  Index train = 0;  // 0 means "everything left"
  Index valid = 0;
  Index test = 0;   // 0 means "the whole test pool"
};

std::vector<Index> random_permutation(Index n, Rng& rng);

// Same permutation applied to every image; labels untouched.
RawDataset apply_pixel_permutation(const RawDataset& data, const std::vector<Index>& perm);

// One pixel permutation drawn from seed and applied to all three splits;
// train/valid drawn disjointly from a seed-derived shuffle of train_base,
// test drawn from test_base with the same permutation.
Task make_permutation_task(const RawDataset& train_base, const RawDataset& test_base,
                           std::uint64_t seed, const SplitSizes& sizes);

// Test hook: identical protocol with an explicit permutation.
Task make_permutation_task(const RawDataset& train_base, const RawDataset& test_base,
                           std::uint64_t seed, const SplitSizes& sizes,
                           const std::vector<Index>& perm);

// Splits the label space at split_point: task A holds labels < split_point,
// task B the rest. Both tasks keep the full C-way label space. sizes.train
// == 0 keeps every filtered sample (minus the validation cut).
std::pair<Task, Task> make_disjoint_tasks(const RawDataset& train_base,
                                          const RawDataset& test_base, int split_point,
                                          const SplitSizes& sizes, std::uint64_t seed);

// C unit-variance gaussian clusters whose means have norm `separation`,
// rotated by a seed-derived orthogonal map; balanced classes. Split sizes
// per class: n_per_class train, max(1, n_per_class/5) valid and test.
Task make_synthetic_task(std::uint64_t seed, Index d, int classes, Index n_per_class,
                         double separation);

// Cluster dataset in RawDataset form, usable as a base for permuted or
// disjoint task generation in place of image data.
RawDataset make_cluster_dataset(std::uint64_t seed, Index d, int classes, Index n_total,
                                double separation);

// Task snapshots in the checkpoint container format.
void save_task_cache(const Task& task, const std::string& path);
Task load_task_cache(const std::string& path);

}  // namespace mcl
