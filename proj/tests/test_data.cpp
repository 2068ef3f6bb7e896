#include "hebb/data.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace hebb;
using hebb::testing::TempDir;

namespace {

void write_bytes(const std::filesystem::path& file, const std::vector<unsigned char>& bytes) {
    std::ofstream out(file, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> record(unsigned char label, unsigned char fill) {
    std::vector<unsigned char> r(3073, fill);
    r[0] = label;
    return r;
}

// Identity-encoder model whose logits equal the first `classes` input coordinates.
EncoderDecoderModel coordinate_classifier(int dim, int classes) {
    EncoderDecoderModel m;
    m.W = Mat::Identity(dim, dim);
    m.A = Mat::Zero(classes, dim);
    for (int c = 0; c < classes; ++c) m.A(c, c) = 1.0;
    m.b = Vec::Zero(classes);
    return m;
}

}  // namespace

TEST_CASE("cifar record decoding") {
    TempDir dir;
    auto r = record(7, 0);
    r[1] = 255;          // first red pixel
    r[1 + 1024] = 51;    // first green pixel
    r[1 + 2048 + 5] = 102;
    write_bytes(dir.path() / "one.bin", r);
    const Dataset d = read_label_pixel_batch(dir.path() / "one.bin");
    REQUIRE(d.count() == 1);
    CHECK(d.dim() == 3072);
    CHECK(d.labels[0] == 7);
    CHECK(d.inputs(0, 0) == 1.0);
    CHECK(d.inputs(0, 1024) == doctest::Approx(0.2));
    CHECK(d.inputs(0, 2048 + 5) == doctest::Approx(0.4));
    CHECK(d.inputs(0, 1) == 0.0);
}

TEST_CASE("truncated batch names file and offset") {
    TempDir dir;
    auto bytes = record(1, 3);
    auto second = record(2, 3);
    bytes.insert(bytes.end(), second.begin(), second.begin() + 100);
    write_bytes(dir.path() / "bad.bin", bytes);
    try {
        read_label_pixel_batch(dir.path() / "bad.bin");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string what = e.what();
        CHECK(what.find("bad.bin") != std::string::npos);
        CHECK(what.find("3073") != std::string::npos);
    }
}

TEST_CASE("label byte above 9 is rejected") {
    TempDir dir;
    auto bytes = record(3, 0);
    auto bad = record(10, 0);
    bytes.insert(bytes.end(), bad.begin(), bad.end());
    write_bytes(dir.path() / "labels.bin", bytes);
    try {
        read_label_pixel_batch(dir.path() / "labels.bin");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("offset 3073") != std::string::npos);
    }
}

TEST_CASE("missing batch files are reported") {
    TempDir dir;
    CHECK_THROWS_AS(load_cifar10(dir.path(), Split::test), FormatError);
    write_bytes(dir.path() / "data_batch_1.bin", record(0, 0));
    CHECK_THROWS_WITH_AS(load_cifar10(dir.path(), Split::train), doctest::Contains("data_batch_2.bin"), FormatError);
}

TEST_CASE("train split concatenates batches in file order") {
    TempDir dir;
    for (int i = 1; i <= 5; ++i) {
        auto bytes = record(static_cast<unsigned char>(i), static_cast<unsigned char>(10 * i));
        auto more = record(static_cast<unsigned char>(i + 4), 0);
        bytes.insert(bytes.end(), more.begin(), more.end());
        write_bytes(dir.path() / ("data_batch_" + std::to_string(i) + ".bin"), bytes);
    }
    write_bytes(dir.path() / "test_batch.bin", record(9, 255));
    const Dataset train = load_cifar10(dir.path(), Split::train);
    REQUIRE(train.count() == 10);
    CHECK(train.labels == std::vector<int>{1, 5, 2, 6, 3, 7, 4, 8, 5, 9});
    CHECK(train.inputs(4, 0) == doctest::Approx(30.0 / 255.0));
    const Dataset test = load_cifar10(dir.path(), Split::test);
    CHECK(test.count() == 1);
    CHECK(test.labels[0] == 9);
    CHECK(test.inputs.minCoeff() == 1.0);
}

TEST_CASE("loading is bit deterministic and round-trips through the writer") {
    TempDir dir;
    const Dataset synth = synthetic_images(20, 4);
    write_label_pixel_batch(dir.path() / "s.bin", synth);
    const Dataset a = read_label_pixel_batch(dir.path() / "s.bin");
    const Dataset b = read_label_pixel_batch(dir.path() / "s.bin");
    CHECK(a.inputs == b.inputs);
    CHECK(a.labels == synth.labels);
    CHECK((a.inputs - synth.inputs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("full CIFAR-10 test split") {
    const auto dir = hebb::testing::cifar10_dir();
    if (!dir) {
        MESSAGE("HEBB_CIFAR10_DIR not set; skipping real-data check");
        return;
    }
    const Dataset test = load_cifar10(*dir, Split::test);
    CHECK(test.count() == 10000);
    CHECK(test.dim() == 3072);
    CHECK(test.inputs.minCoeff() >= 0.0);
    CHECK(test.inputs.maxCoeff() <= 1.0);
    CHECK_NOTHROW(test.validate());
}

TEST_CASE("gaussian noise sets") {
    const Dataset a = gaussian_noise_set(3072, 50, 8);
    const Dataset b = gaussian_noise_set(3072, 50, 8);
    CHECK(a.inputs == b.inputs);
    CHECK_FALSE(a.has_labels());
    CHECK(gaussian_noise_set(4, 1, 1).count() == 1);

    const Dataset big = gaussian_noise_set(10, 50000, 21);
    const Mat c = covariance(big.inputs);
    CHECK((c - Mat::Identity(10, 10)).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("correct subset of a perfect classifier is the full set") {
    Dataset d;
    d.name = "onehot";
    d.inputs = Mat::Zero(30, 10);
    for (int i = 0; i < 30; ++i) {
        d.inputs(i, i % 10) = 1.0;
        d.labels.push_back(i % 10);
    }
    const Dataset s = correct_subset(coordinate_classifier(10, 10), d);
    CHECK(s.count() == 30);
    CHECK(s.labels == d.labels);
}

TEST_CASE("constant classifier keeps one class only") {
    Dataset d = synthetic_images(200, 3);
    EncoderDecoderModel m;
    m.W = Mat::Zero(4, d.dim());
    m.A = Mat::Zero(10, 4);
    m.b = Vec::Zero(10);
    m.b[3] = 1.0;
    const Dataset s = correct_subset(m, d);
    const auto expected = std::count(d.labels.begin(), d.labels.end(), 3);
    CHECK(s.count() == expected);
    CHECK(std::set<int>(s.labels.begin(), s.labels.end()) == std::set<int>{3});
    CHECK(std::abs(static_cast<double>(s.count()) / 200.0 - 0.1) < 0.06);

    const Dataset again = correct_subset(m, s);
    CHECK(again.inputs == s.inputs);
    CHECK(again.labels == s.labels);

    m.b[3] = 0.0;
    m.b[0] = 1.0;
    Dataset none = s;  // every label is 3, model says 0
    CHECK_THROWS_AS(correct_subset(m, none), EmptySubsetError);
}
