#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aigan/rng.hpp"
#include "aigan/tensor.hpp"

namespace aigan {

struct DatasetSplit {
    Tensor images;           // [N,C,H,W], values in [0,1]
    std::vector<int> labels; // length N, in [0,K)
    std::string provenance;

    int size() const { return images.rank() == 4 ? images.dim(0) : 0; }
};

// IDX pair (big-endian magics 0x803 images / 0x801 labels); transparently
// inflates gzip-compressed files; pixel bytes normalized by /255
DatasetSplit load_idx(const std::string& images_path, const std::string& labels_path);

void save_idx(const std::string& images_path, const std::string& labels_path,
              const DatasetSplit& data); // 8-bit quantized

// CIFAR-style binary batches: each record is 1 label byte + c*h*w pixel bytes
DatasetSplit load_cifar_batches(const std::vector<std::string>& paths, int classes = 10);

// Deterministic 1x8x8 synthetic set: per-class template (fixed by seed) plus
// uniform noise in [-0.1, 0.1], clipped to [0,1]. Labels cycle 0..K-1, so N
// must be divisible by K. Linearly separable by construction.
DatasetSplit make_blobs(int classes, int n, std::uint64_t seed);

// contiguous [start, start+count) slice
Tensor slice_images(const Tensor& images, int start, int count);
std::vector<int> slice_labels(const std::vector<int>& labels, int start, int count);
DatasetSplit subset(const DatasetSplit& d, int start, int count);
DatasetSplit take_indices(const DatasetSplit& d, const std::vector<int>& idx);

} // namespace aigan
