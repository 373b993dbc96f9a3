#include "ovit/tensorstore.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

namespace {

using ovit::DType;
using ovit::StoreError;
using ovit::Tensor;
using ovit::TensorContainer;

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("ovit_ts_" + name)).string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

TensorContainer random_container(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> count(0, 5), rank(1, 3), extent(1, 4), type(0, 2), chr('a', 'z');
    std::normal_distribution<double> normal;
    TensorContainer c;
    const int n = count(rng);
    for (int t = 0; t < n; ++t) {
        std::string name = "layer." + std::to_string(t) + ".";
        for (int k = 0; k < 3; ++k) name.push_back(static_cast<char>(chr(rng)));
        std::vector<std::uint64_t> dims(static_cast<std::size_t>(rank(rng)));
        std::size_t total = 1;
        for (auto& d : dims) total *= (d = static_cast<std::uint64_t>(extent(rng)));
        switch (type(rng)) {
            case 0: {
                std::vector<float> v(total);
                for (auto& x : v) x = static_cast<float>(normal(rng));
                c.insert(name, Tensor::f32(dims, v));
                break;
            }
            case 1: {
                std::vector<double> v(total);
                for (auto& x : v) x = normal(rng);
                c.insert(name, Tensor::f64(dims, v));
                break;
            }
            default: {
                std::vector<std::uint8_t> v(total);
                for (auto& x : v) x = normal(rng) > 0 ? 1 : 0;
                c.insert(name, Tensor::mask(dims, v));
            }
        }
    }
    return c;
}

StoreError::Kind parse_kind(const std::string& bytes) {
    try {
        ovit::deserialize(bytes);
    } catch (const StoreError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected a parse error";
    return StoreError::Kind::io;
}

TEST(TensorStore, EmptyContainerIsTwelveBytes) {
    const auto bytes = ovit::serialize(TensorContainer{});
    ASSERT_EQ(bytes.size(), 12u);
    EXPECT_EQ(bytes.substr(0, 4), "OVPT");
    EXPECT_EQ(bytes.substr(4), std::string("\x01\0\0\0\0\0\0\0", 8));
}

TEST(TensorStore, SingleF32TensorLayout) {
    TensorContainer c;
    c.insert("w", Tensor::f32({2}, {1.0f, 2.0f}));
    const auto bytes = ovit::serialize(c);
    // header 12 + name len 4 + name 1 + dtype 1 + ndim 4 + dims 8 + data 8
    ASSERT_EQ(bytes.size(), 38u);
    EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\0\0\0", 4));  // one tensor
    EXPECT_EQ(bytes.substr(12, 5), std::string("\x01\0\0\0w", 5));
    EXPECT_EQ(bytes[17], '\0');                                      // f32
    EXPECT_EQ(bytes.substr(18, 4), std::string("\x01\0\0\0", 4));  // rank 1
    EXPECT_EQ(bytes.substr(22, 8), std::string("\x02\0\0\0\0\0\0\0", 8));
    EXPECT_EQ(bytes.substr(30, 4), std::string("\0\0\x80\x3f", 4));  // 1.0f
    EXPECT_EQ(bytes.substr(34, 4), std::string("\0\0\0\x40", 4));    // 2.0f
}

TEST(TensorStore, RandomContainersRoundTripThroughFiles) {
    std::mt19937_64 rng(7);
    const auto a = temp_path("a.ovpt"), b = temp_path("b.ovpt");
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = random_container(rng);
        ovit::write_container(a, c);
        ovit::write_container(b, c);
        EXPECT_EQ(ovit::read_container(a), c) << "trial " << trial;
        EXPECT_EQ(slurp(a), slurp(b)) << "trial " << trial;
    }
    std::filesystem::remove(a);
    std::filesystem::remove(b);
}

TEST(TensorStore, InsertionOrderIsPreserved) {
    TensorContainer c;
    c.insert("z", Tensor::f64({1}, {1.0}));
    c.insert("a", Tensor::f64({1}, {2.0}));
    const auto back = ovit::deserialize(ovit::serialize(c));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.entries()[0].first, "z");
    EXPECT_EQ(back.entries()[1].first, "a");
}

TEST(TensorStore, BadMagicIsRejected) {
    auto bytes = ovit::serialize(TensorContainer{});
    bytes.replace(0, 4, "XXXX");
    EXPECT_EQ(parse_kind(bytes), StoreError::Kind::bad_magic);
}

TEST(TensorStore, EveryTruncationIsDetected) {
    TensorContainer c;
    c.insert("layer.0.weight", Tensor::f64({2, 3}, {1, 2, 3, 4, 5, 6}));
    c.insert("layer.0.mask", Tensor::mask({6}, {1, 0, 1, 1, 0, 1}));
    const auto bytes = ovit::serialize(c);
    for (std::size_t len = 4; len < bytes.size(); ++len)
        EXPECT_EQ(parse_kind(bytes.substr(0, len)), StoreError::Kind::truncated) << "length " << len;

    // Cut inside the first tensor's data: the message names it.
    try {
        ovit::deserialize(bytes.substr(0, 60));
        FAIL();
    } catch (const StoreError& e) {
        EXPECT_NE(std::string(e.what()).find("layer.0.weight"), std::string::npos) << e.what();
    }
}

TEST(TensorStore, UnknownDtypeIsRejected) {
    TensorContainer c;
    c.insert("w", Tensor::f32({1}, {1.0f}));
    auto bytes = ovit::serialize(c);
    bytes[17] = '\x07';
    EXPECT_EQ(parse_kind(bytes), StoreError::Kind::unknown_dtype);
}

TEST(TensorStore, UnsupportedVersionIsRejected) {
    auto bytes = ovit::serialize(TensorContainer{});
    bytes[4] = '\x02';
    EXPECT_EQ(parse_kind(bytes), StoreError::Kind::unsupported_version);
}

TEST(TensorStore, TensorInvariants) {
    EXPECT_THROW(Tensor::f64({}, {}), StoreError);
    EXPECT_THROW(Tensor::f64({2, 0}, {}), StoreError);
    EXPECT_THROW(Tensor::f64({3}, {1, 2}), StoreError);
    EXPECT_THROW(Tensor::mask({2}, {1, 2}), StoreError);
    TensorContainer c;
    c.insert("a", Tensor::f64({1}, {0}));
    EXPECT_THROW(c.insert("a", Tensor::f64({1}, {0})), StoreError);
}

TEST(TensorStore, IoErrorsNameThePath) {
    const std::string path = "/nonexistent-dir/x.ovpt";
    try {
        ovit::write_container(path, TensorContainer{});
        FAIL();
    } catch (const StoreError& e) {
        EXPECT_EQ(e.kind(), StoreError::Kind::io);
        EXPECT_NE(std::string(e.what()).find(path), std::string::npos);
    }
    EXPECT_THROW(ovit::read_container(path), StoreError);
}

TEST(TensorStore, LayerNamingAndGradientSets) {
    TensorContainer c;
    c.insert("layer.0.weight", Tensor::f32({2, 2}, {1, 2, 3, 4}));
    c.insert("layer.0.grads", Tensor::f64({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}));
    c.insert("layer.fc.weight", Tensor::f64({2}, {1, 2}));
    c.insert("other", Tensor::f64({1}, {0}));
    EXPECT_EQ(ovit::layer_ids(c), (std::vector<std::string>{"0", "fc"}));

    const auto g = ovit::GradientSet::from_tensor("0", c.at(ovit::grads_key("0")));
    EXPECT_EQ(g.count(), 3);
    EXPECT_EQ(g.dim(), 4);
    EXPECT_DOUBLE_EQ(g.samples(1, 0), 5.0);  // row-major rows are samples
    EXPECT_EQ(g.to_tensor(), c.at("layer.0.grads"));
    EXPECT_THROW(ovit::GradientSet::from_tensor("fc", c.at("layer.fc.weight")), StoreError);
}

TEST(TensorStore, WithValuesKeepsDtypeAndShape) {
    const auto t = Tensor::f32({2, 2}, {1, 2, 3, 4});
    const auto u = t.with_values(Eigen::Vector4d(0, 5, 0, 7));
    EXPECT_EQ(u.dtype(), DType::f32);
    EXPECT_EQ(u.dims(), t.dims());
    EXPECT_EQ(u.values<float>()[3], 7.0f);
}

}  // namespace
