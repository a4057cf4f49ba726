#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "airfl/gradient.hpp"
#include "airfl/rng.hpp"

namespace airfl::datasets {

struct ExampleStore {
    std::size_t feature_dim = 0;
    int num_classes = 0;
    std::vector<double> features;  // row-major, size() * feature_dim
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }

    std::span<const double> features_of(std::size_t i) const {
        return {features.data() + i * feature_dim, feature_dim};
    }
};

struct DevicePartition {
    int device_id = 0;
    std::vector<std::size_t> indices;  // into the global example store
};

struct MiniBatch {
    int round = 0;
    int device_id = 0;
    std::vector<std::size_t> indices;
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("idx format error: truncated header in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

// Parses the MNIST IDX pair (big-endian counts, magic 0x00000803 for images
// and 0x00000801 for labels). Pixels are scaled to [0,1] by dividing by 255;
// file order is preserved.
inline ExampleStore load_idx(const std::string& images_path,
                             const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("cannot open " + labels_path);

    const std::uint32_t img_magic = detail::read_be_u32(img, images_path);
    if (img_magic != 0x00000803u)
        throw std::runtime_error("idx format error: bad image magic in " + images_path);
    const std::uint32_t n_images = detail::read_be_u32(img, images_path);
    const std::uint32_t rows = detail::read_be_u32(img, images_path);
    const std::uint32_t cols = detail::read_be_u32(img, images_path);

    const std::uint32_t lab_magic = detail::read_be_u32(lab, labels_path);
    if (lab_magic != 0x00000801u)
        throw std::runtime_error("idx format error: bad label magic in " + labels_path);
    const std::uint32_t n_labels = detail::read_be_u32(lab, labels_path);

    if (n_images != n_labels)
        throw std::runtime_error("idx consistency error: image count " +
                                 std::to_string(n_images) + " != label count " +
                                 std::to_string(n_labels));
    if (n_images == 0)
        throw std::runtime_error("idx consistency error: zero examples");

    ExampleStore store;
    store.feature_dim = std::size_t(rows) * cols;
    const std::size_t total = std::size_t(n_images) * store.feature_dim;
    std::vector<unsigned char> raw(total);
    img.read(reinterpret_cast<char*>(raw.data()), std::streamsize(total));
    if (!img) throw std::runtime_error("idx format error: truncated pixel data in " + images_path);

    std::vector<unsigned char> raw_labels(n_labels);
    lab.read(reinterpret_cast<char*>(raw_labels.data()), std::streamsize(n_labels));
    if (!lab) throw std::runtime_error("idx format error: truncated label data in " + labels_path);

    store.features.resize(total);
    for (std::size_t i = 0; i < total; ++i)
        store.features[i] = double(raw[i]) / 255.0;
    store.labels.assign(raw_labels.begin(), raw_labels.end());
    store.num_classes = 1 + *std::max_element(store.labels.begin(), store.labels.end());
    return store;
}

// Random disjoint split with sizes differing by at most one; leftover
// examples go one per device starting from device 0.
inline std::vector<DevicePartition> partition_iid(const ExampleStore& store,
                                                  int num_devices,
                                                  std::uint64_t seed) {
    if (num_devices <= 0 || std::size_t(num_devices) > store.size())
        throw std::invalid_argument("partition_iid: invalid num_devices");

    std::vector<std::size_t> idx(store.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto eng = rng::engine(seed, rng::Stream::Partition);
    std::shuffle(idx.begin(), idx.end(), eng);

    const std::size_t base = store.size() / num_devices;
    const std::size_t extra = store.size() % num_devices;
    std::vector<DevicePartition> parts(num_devices);
    std::size_t pos = 0;
    for (int d = 0; d < num_devices; ++d) {
        const std::size_t take = base + (std::size_t(d) < extra ? 1 : 0);
        parts[d].device_id = d;
        parts[d].indices.assign(idx.begin() + pos, idx.begin() + pos + take);
        pos += take;
    }
    return parts;
}

// Label-sharded non-i.i.d. split: sort by label, cut into equal contiguous
// shards, deal shards_per_device shards to each device at random.
inline std::vector<DevicePartition> partition_noniid_shards(
    const ExampleStore& store, int num_devices, int shards_per_device,
    std::uint64_t seed) {
    if (num_devices <= 0 || shards_per_device <= 0)
        throw std::invalid_argument("partition_noniid_shards: invalid arguments");
    const std::size_t num_shards = std::size_t(num_devices) * shards_per_device;
    if (store.size() % num_shards != 0)
        throw std::invalid_argument(
            "partition_noniid_shards: store size not divisible into " +
            std::to_string(num_shards) + " shards");
    const std::size_t shard_size = store.size() / num_shards;

    std::vector<std::size_t> idx(store.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return store.labels[a] < store.labels[b];
    });

    std::vector<std::size_t> shard_ids(num_shards);
    std::iota(shard_ids.begin(), shard_ids.end(), std::size_t{0});
    auto eng = rng::engine(seed, rng::Stream::Partition, /*a=*/1);
    std::shuffle(shard_ids.begin(), shard_ids.end(), eng);

    std::vector<DevicePartition> parts(num_devices);
    for (int d = 0; d < num_devices; ++d) {
        parts[d].device_id = d;
        for (int s = 0; s < shards_per_device; ++s) {
            const std::size_t shard = shard_ids[std::size_t(d) * shards_per_device + s];
            const auto begin = idx.begin() + shard * shard_size;
            parts[d].indices.insert(parts[d].indices.end(), begin, begin + shard_size);
        }
    }
    return parts;
}

// Uniform draw without replacement from the device's own partition,
// consuming only the caller-provided per-device engine.
inline MiniBatch sample_minibatch(const DevicePartition& partition, int round,
                                  std::size_t batch_size,
                                  std::mt19937_64& device_rng) {
    if (batch_size == 0 || batch_size > partition.indices.size())
        throw std::invalid_argument("sample_minibatch: batch_size exceeds partition");

    // Partial Fisher-Yates over a scratch copy.
    std::vector<std::size_t> pool = partition.indices;
    MiniBatch batch;
    batch.round = round;
    batch.device_id = partition.device_id;
    batch.indices.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(device_rng)]);
        batch.indices.push_back(pool[i]);
    }
    return batch;
}

// Gaussian blobs around per-class prototypes with a label-flip noise knob.
// Prototypes are drawn far enough apart that a linear model separates the
// clean labels with margin.
inline ExampleStore make_synthetic(std::size_t num_examples,
                                   std::size_t feature_dim, int num_classes,
                                   double label_flip, std::uint64_t seed) {
    if (num_examples == 0 || feature_dim == 0 || num_classes < 2)
        throw std::invalid_argument("make_synthetic: invalid arguments");
    auto eng = rng::engine(seed, rng::Stream::Synthetic);

    std::vector<double> prototypes(std::size_t(num_classes) * feature_dim);
    for (double& p : prototypes) p = rng::normal(eng, 0.0, 2.0);

    ExampleStore store;
    store.feature_dim = feature_dim;
    store.num_classes = num_classes;
    store.features.resize(num_examples * feature_dim);
    store.labels.resize(num_examples);
    for (std::size_t i = 0; i < num_examples; ++i) {
        const int c = int(eng() % std::uint64_t(num_classes));
        for (std::size_t j = 0; j < feature_dim; ++j)
            store.features[i * feature_dim + j] =
                prototypes[std::size_t(c) * feature_dim + j] + rng::normal(eng, 0.0, 0.6);
        int label = c;
        if (label_flip > 0.0 && rng::uniform(eng) < label_flip)
            label = int(eng() % std::uint64_t(num_classes));
        store.labels[i] = label;
    }
    return store;
}

inline nlohmann::json partition_manifest(const std::vector<DevicePartition>& parts) {
    nlohmann::json manifest = nlohmann::json::object();
    for (const auto& p : parts)
        manifest[std::to_string(p.device_id)] = p.indices;
    return manifest;
}

}  // namespace airfl::datasets
