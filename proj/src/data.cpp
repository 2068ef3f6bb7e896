#include "hebb/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace hebb {

namespace fs = std::filesystem;

void Dataset::validate(int num_classes) const {
    if (!inputs.allFinite()) throw ContractError("dataset '" + name + "': non-finite inputs");
    if (has_labels()) {
        if (static_cast<Eigen::Index>(labels.size()) != inputs.rows())
            throw ContractError("dataset '" + name + "': label count differs from input count");
        for (int l : labels)
            if (l < 0 || l >= num_classes) throw ContractError("dataset '" + name + "': label out of range");
    }
}

Dataset read_label_pixel_batch(const fs::path& file, const RecordLayout& layout) {
    std::ifstream in(file, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cannot open batch file " + file.string());
    std::vector<unsigned char> bytes(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    const std::size_t rec = layout.record_bytes();
    if (bytes.empty() || bytes.size() % rec != 0) {
        throw FormatError(file.string() + ": truncated record at offset " +
                          std::to_string(bytes.size() / rec * rec) + " (file size " + std::to_string(bytes.size()) +
                          " is not a multiple of " + std::to_string(rec) + ")");
    }
    const std::size_t count = bytes.size() / rec;
    const int pixels = layout.shape.pixels();
    Dataset d;
    d.name = file.filename().string();
    d.inputs.resize(static_cast<Eigen::Index>(count), pixels);
    d.labels.resize(count);
    for (std::size_t r = 0; r < count; ++r) {
        const unsigned char* p = bytes.data() + r * rec;
        if (p[0] >= layout.num_classes) {
            throw FormatError(file.string() + ": label byte " + std::to_string(p[0]) + " at offset " +
                              std::to_string(r * rec) + " exceeds " + std::to_string(layout.num_classes - 1));
        }
        d.labels[r] = p[0];
        for (int j = 0; j < pixels; ++j) d.inputs(static_cast<Eigen::Index>(r), j) = p[1 + j] / 255.0;
    }
    return d;
}

Dataset load_cifar10(const fs::path& directory, Split split) {
    std::vector<fs::path> files;
    if (split == Split::train) {
        for (int i = 1; i <= 5; ++i) files.push_back(directory / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
        files.push_back(directory / "test_batch.bin");
    }
    for (const auto& f : files)
        if (!fs::exists(f)) throw FormatError("missing CIFAR-10 batch file " + f.string());

    std::vector<Dataset> parts;
    Eigen::Index total = 0;
    for (const auto& f : files) {
        parts.push_back(read_label_pixel_batch(f));
        total += parts.back().count();
    }
    Dataset out;
    out.name = split == Split::train ? "cifar10-train" : "cifar10-test";
    out.inputs.resize(total, cifar10_shape.pixels());
    Eigen::Index row = 0;
    for (const auto& p : parts) {
        out.inputs.middleRows(row, p.count()) = p.inputs;
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
        row += p.count();
    }
    return out;
}

void write_label_pixel_batch(const fs::path& file, const Dataset& data) {
    if (!data.has_labels()) throw ContractError("write_label_pixel_batch: dataset has no labels");
    std::vector<unsigned char> bytes;
    bytes.reserve(static_cast<std::size_t>(data.count() * (data.dim() + 1)));
    for (Eigen::Index r = 0; r < data.count(); ++r) {
        bytes.push_back(static_cast<unsigned char>(data.labels[static_cast<std::size_t>(r)]));
        for (Eigen::Index j = 0; j < data.dim(); ++j) {
            const double v = std::clamp(data.inputs(r, j), 0.0, 1.0);
            bytes.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
        }
    }
    std::ofstream out(file, std::ios::binary);
    if (!out) throw FormatError("cannot write " + file.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Dataset gaussian_noise_set(int dim, int count, std::uint64_t seed) {
    if (dim <= 0 || count <= 0) throw ContractError("gaussian_noise_set: dim and count must be positive");
    Rng rng(seed);
    Dataset d;
    d.name = "gaussian-noise";
    d.inputs.resize(count, dim);
    for (int r = 0; r < count; ++r)
        for (int j = 0; j < dim; ++j) d.inputs(r, j) = rng.normal();
    return d;
}

Dataset correct_subset(const EncoderDecoderModel& model, const Dataset& data) {
    if (!data.has_labels()) throw ContractError("correct_subset: dataset has no labels");
    const auto predicted = predict_labels(model, data.inputs);
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == data.labels[i]) keep.push_back(static_cast<Eigen::Index>(i));
    if (keep.empty()) throw EmptySubsetError("correct_subset: model classifies no sample of '" + data.name + "' correctly");
    Dataset out;
    out.name = data.name + "-correct";
    out.inputs.resize(static_cast<Eigen::Index>(keep.size()), data.dim());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        out.inputs.row(static_cast<Eigen::Index>(i)) = data.inputs.row(keep[i]);
        out.labels.push_back(data.labels[static_cast<std::size_t>(keep[i])]);
    }
    return out;
}

Dataset head(const Dataset& data, Eigen::Index count) {
    const Eigen::Index n = std::min(count, data.count());
    Dataset out;
    out.name = data.name;
    out.inputs = data.inputs.topRows(n);
    if (data.has_labels()) out.labels.assign(data.labels.begin(), data.labels.begin() + n);
    return out;
}

namespace {

// Smooth random field: coarse Gaussian grid, bilinearly upsampled to one channel plane.
std::vector<double> smooth_field(Rng& rng, int height, int width, int coarse) {
    std::vector<double> grid(static_cast<std::size_t>(coarse * coarse));
    for (auto& g : grid) g = rng.normal();
    std::vector<double> plane(static_cast<std::size_t>(height * width));
    for (int y = 0; y < height; ++y) {
        const double gy = (y + 0.5) / height * (coarse - 1);
        const int y0 = std::min(static_cast<int>(gy), coarse - 2);
        const double fy = gy - y0;
        for (int x = 0; x < width; ++x) {
            const double gx = (x + 0.5) / width * (coarse - 1);
            const int x0 = std::min(static_cast<int>(gx), coarse - 2);
            const double fx = gx - x0;
            auto at = [&](int yy, int xx) { return grid[static_cast<std::size_t>(yy * coarse + xx)]; };
            plane[static_cast<std::size_t>(y * width + x)] =
                (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        }
    }
    return plane;
}

}  // namespace

Dataset synthetic_images(int count, std::uint64_t seed, const ImageShape& shape, int num_classes) {
    if (count <= 0) throw ContractError("synthetic_images: count must be positive");
    const int plane = shape.height * shape.width;
    // Class prototypes come from a fixed stream so train and test share them.
    Rng proto_rng(0x5eedc1a55ULL);
    std::vector<Vec> prototypes;
    for (int c = 0; c < num_classes; ++c) {
        Vec p(shape.pixels());
        for (int ch = 0; ch < shape.channels; ++ch) {
            const auto coarse = smooth_field(proto_rng, shape.height, shape.width, 5);
            const auto fine = smooth_field(proto_rng, shape.height, shape.width, 9);
            for (int k = 0; k < plane; ++k) p[ch * plane + k] = coarse[static_cast<std::size_t>(k)] + 0.5 * fine[static_cast<std::size_t>(k)];
        }
        prototypes.push_back(std::move(p));
    }
    Rng rng(seed);
    Dataset d;
    d.name = "synthetic-images";
    d.inputs.resize(count, shape.pixels());
    d.labels.resize(static_cast<std::size_t>(count));
    for (int r = 0; r < count; ++r) {
        const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_classes)));
        d.labels[static_cast<std::size_t>(r)] = label;
        const double contrast = 0.6 + 0.4 * rng.uniform();
        const double brightness = 0.3 * rng.normal();
        for (int ch = 0; ch < shape.channels; ++ch) {
            const auto clutter = smooth_field(rng, shape.height, shape.width, 7);
            for (int k = 0; k < plane; ++k) {
                const int j = ch * plane + k;
                const double v = contrast * prototypes[static_cast<std::size_t>(label)][j] +
                                 0.8 * clutter[static_cast<std::size_t>(k)] + brightness + 0.1 * rng.normal();
                const double s = 1.0 / (1.0 + std::exp(-v));
                d.inputs(r, j) = std::lround(s * 255.0) / 255.0;
            }
        }
    }
    return d;
}

void write_synthetic_cifar10(const fs::path& directory, int records_per_file, std::uint64_t seed) {
    fs::create_directories(directory);
    for (int i = 1; i <= 5; ++i) {
        write_label_pixel_batch(directory / ("data_batch_" + std::to_string(i) + ".bin"),
                                synthetic_images(records_per_file, seed + static_cast<std::uint64_t>(i)));
    }
    write_label_pixel_batch(directory / "test_batch.bin", synthetic_images(records_per_file, seed + 100));
}

}  // namespace hebb
