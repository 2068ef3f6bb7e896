#pragma once

#include "hebb/model.hpp"
#include "hebb/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hebb {

struct ImageShape {
    int channels = 3;
    int height = 32;
    int width = 32;

    int pixels() const { return channels * height * width; }
};

inline constexpr ImageShape cifar10_shape{3, 32, 32};
inline constexpr int cifar10_classes = 10;
inline constexpr int cifar10_records_per_file = 10000;

struct Dataset {
    Mat inputs;               // count x dim
    std::vector<int> labels;  // empty for unlabeled sets
    std::string name;

    Eigen::Index count() const { return inputs.rows(); }
    Eigen::Index dim() const { return inputs.cols(); }
    bool has_labels() const { return !labels.empty(); }

    /// Throws ContractError when inputs are non-finite or labels are out of range.
    void validate(int num_classes = cifar10_classes) const;
};

enum class Split { train, test };

/// Layout of one binary record: a label byte followed by plane-major pixel bytes.
struct RecordLayout {
    ImageShape shape = cifar10_shape;
    int num_classes = cifar10_classes;

    std::size_t record_bytes() const { return 1 + static_cast<std::size_t>(shape.pixels()); }
};

/// Reads one batch file of fixed-size records; pixel bytes are scaled by 1/255.
Dataset read_label_pixel_batch(const std::filesystem::path& file, const RecordLayout& layout = {});

/// CIFAR-10 binary batches: data_batch_1..5.bin for train, test_batch.bin for test.
Dataset load_cifar10(const std::filesystem::path& directory, Split split);

/// Writes `data` back in the label + plane-major byte layout (values rounded from [0,1]).
void write_label_pixel_batch(const std::filesystem::path& file, const Dataset& data);

/// i.i.d. standard normal inputs, no labels.
Dataset gaussian_noise_set(int dim, int count, std::uint64_t seed);

/// Samples the model classifies correctly. Throws EmptySubsetError if there are none.
Dataset correct_subset(const EncoderDecoderModel& model, const Dataset& data);

/// First `count` samples (or all, if fewer).
Dataset head(const Dataset& data, Eigen::Index count);

/// Synthetic CIFAR-shaped labeled images with smooth class structure, for smoke runs
/// when the real batches are not available. Values are quantised to 1/255 steps.
Dataset synthetic_images(int count, std::uint64_t seed, const ImageShape& shape = cifar10_shape,
                         int num_classes = cifar10_classes);

/// Writes a complete synthetic CIFAR-10 directory (5 train batches + test batch).
void write_synthetic_cifar10(const std::filesystem::path& directory, int records_per_file, std::uint64_t seed);

}  // namespace hebb
