#include "scpuq/sparse_ndarray.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using scpuq::SparseNdArray;
using Pos = SparseNdArray::Position;

TEST(SparseNdArray, NewArrayIsEmpty) {
    SparseNdArray a({2, 3, 4});
    EXPECT_EQ(a.size(), 0u);
    EXPECT_EQ(a.rank(), 3u);
    EXPECT_EQ(a.dense_size(), 24);
    EXPECT_EQ(a.get_entry({1, 2, 3}), 0.0);

    SparseNdArray s({1});
    EXPECT_EQ(s.rank(), 1u);
    EXPECT_EQ(s.dense_size(), 1);

    SparseNdArray gas({17, 13, 7});
    EXPECT_EQ(gas.dense_size(), 17 * 13 * 7);
}

TEST(SparseNdArray, RejectsNonPositiveExtents) {
    EXPECT_THROW(SparseNdArray({2, 0}), scpuq::ShapeError);
    EXPECT_THROW(SparseNdArray({-1}), scpuq::ShapeError);
    EXPECT_THROW(SparseNdArray(std::vector<SparseNdArray::Extent>{}), scpuq::ShapeError);
}

TEST(SparseNdArray, SetEntryOverwrites) {
    SparseNdArray a({3, 3});
    a.set_entry({0, 0}, 5.0);
    a.set_entry({0, 0}, 7.0);
    EXPECT_EQ(a.get_entry({0, 0}), 7.0);
    EXPECT_EQ(a.size(), 1u);
}

TEST(SparseNdArray, FlushDropsZeros) {
    SparseNdArray a({3, 3});
    a.set_entry({1, 2}, 0.0);
    EXPECT_EQ(a.size(), 1u);
    a.flush();
    EXPECT_EQ(a.size(), 0u);

    SparseNdArray b({2});
    b.set_entry({0}, 1e-6).set_entry({1}, 1e-4);
    b.flush();
    EXPECT_EQ(b.size(), 1u);
    b.flush(1e-3);
    EXPECT_EQ(b.size(), 0u);
}

TEST(SparseNdArray, DistinctPositionsCount) {
    SparseNdArray a({4, 5});
    for (int k = 0; k < 7; ++k) a.set_entry({k % 4, k % 5}, k + 1.0);
    EXPECT_EQ(a.size(), 7u);
}

TEST(SparseNdArray, OutOfBoundsPosition) {
    SparseNdArray a({2, 2});
    EXPECT_THROW(a.set_entry({2, 0}, 1.0), scpuq::IndexError);
    EXPECT_THROW(a.add_entry({0, -1}, 1.0), scpuq::IndexError);
    EXPECT_THROW(a.get_entry({0}), scpuq::IndexError);
    EXPECT_THROW(a.swapaxes(0, 2), scpuq::IndexError);
}

TEST(SparseNdArray, DuplicatesNeedResolution) {
    SparseNdArray a({2, 2});
    a.add_entry({0, 0}, 2.0).add_entry({0, 0}, 2.0);
    EXPECT_EQ(a.size(), 2u);
    EXPECT_THROW(a.get_entry({0, 0}), scpuq::DuplicatePositionError);
    a.remove_duplicates();
    EXPECT_EQ(a.get_entry({0, 0}), 4.0);
    EXPECT_EQ(a.size(), 1u);
}

TEST(SparseNdArray, DuplicateCombiners) {
    SparseNdArray a({3});
    a.add_entry({1}, 2.0).add_entry({1}, 5.0).add_entry({2}, 1.0).add_entry({2}, 3.0);
    a.remove_duplicates_at({1}, 0.5);
    EXPECT_EQ(a.get_entry({1}), 0.5);
    EXPECT_THROW(a.get_entry({2}), scpuq::DuplicatePositionError);
    a.remove_duplicates(std::function<double(std::span<const double>)>(
        [](std::span<const double> v) { return *std::max_element(v.begin(), v.end()); }));
    EXPECT_EQ(a.get_entry({2}), 3.0);
}

TEST(SparseNdArray, SwapaxesPermutesShapeAndPositions) {
    SparseNdArray a({2, 3, 4});
    a.set_entry({1, 2, 3}, 9.0);
    const SparseNdArray b = a.swapaxes(0, 2);
    EXPECT_EQ(b.shape(), (std::vector<SparseNdArray::Extent>{4, 3, 2}));
    EXPECT_EQ(b.get_entry({3, 2, 1}), 9.0);
}

TEST(SparseNdArray, IterateIsLexicographic) {
    SparseNdArray a({3, 3});
    a.add_entry({2, 0}, 1.0).add_entry({0, 2}, 2.0).add_entry({1, 1}, 3.0);
    const auto e = a.iterate();
    ASSERT_EQ(e.size(), 3u);
    EXPECT_EQ(e[0].position, (Pos{0, 2}));
    EXPECT_EQ(e[1].position, (Pos{1, 1}));
    EXPECT_EQ(e[2].position, (Pos{2, 0}));
}

TEST(SparseNdArray, FlattenRoundTrip) {
    SparseNdArray a({3, 4, 5});
    for (SparseNdArray::Extent f = 0; f < a.dense_size(); ++f) EXPECT_EQ(a.flatten(a.unflatten(f)), f);
    EXPECT_THROW(a.unflatten(60), scpuq::IndexError);
}

TEST(SparseNdArray, TextDumpRoundTrip) {
    SparseNdArray a({3, 2});
    a.set_entry({0, 1}, 0.1).set_entry({2, 0}, -1.0 / 3.0);
    std::stringstream ss;
    a.write_text(ss);
    EXPECT_EQ(ss.str().rfind("# shape 3,2\n", 0), 0u);
    const SparseNdArray b = SparseNdArray::read_text(ss);
    EXPECT_EQ(b.shape(), a.shape());
    EXPECT_EQ(b.to_dense(), a.to_dense());

    std::istringstream bad("no header\n");
    EXPECT_THROW(SparseNdArray::read_text(bad), scpuq::ParseError);
    std::istringstream notab("# shape 2\n1 3.0\n");
    EXPECT_THROW(SparseNdArray::read_text(notab), scpuq::ParseError);
}

namespace {

struct RandomArray {
    std::vector<SparseNdArray::Extent> shape;
    std::vector<double> dense;
};

RandomArray random_dense(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> rank_d(1, 4), ext_d(1, 5);
    std::uniform_real_distribution<double> val(-10.0, 10.0), coin(0.0, 1.0);
    RandomArray r;
    const int rank = rank_d(rng);
    for (int k = 0; k < rank; ++k) r.shape.push_back(ext_d(rng));
    SparseNdArray::Extent total = 1;
    for (auto e : r.shape) total *= e;
    for (SparseNdArray::Extent i = 0; i < total; ++i) {
        double v = coin(rng) < 0.3 ? val(rng) : 0.0;
        if (v != 0.0 && std::abs(v) <= 1e-3) v = 1.0;
        r.dense.push_back(v);
    }
    return r;
}

}  // namespace

TEST(SparseNdArrayProperty, DenseRoundTrip) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const RandomArray r = random_dense(rng);
        SparseNdArray a = SparseNdArray::from_dense(r.shape, r.dense);
        EXPECT_EQ(a.to_dense(), r.dense);
        a.flush();
        EXPECT_EQ(a.to_dense(), r.dense);
    }
}

TEST(SparseNdArrayProperty, SwapaxesIsInvolution) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const RandomArray r = random_dense(rng);
        const SparseNdArray a = SparseNdArray::from_dense(r.shape, r.dense);
        for (std::size_t i = 0; i < a.rank(); ++i)
            for (std::size_t j = 0; j < a.rank(); ++j) {
                const SparseNdArray b = a.swapaxes(i, j).swapaxes(i, j);
                EXPECT_EQ(b.shape(), a.shape());
                EXPECT_EQ(b.to_dense(), a.to_dense());
            }
    }
}

TEST(SparseNdArrayProperty, FlushChangesDenseByAtMostTolerance) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> small(-2e-5, 2e-5);
    for (int trial = 0; trial < 100; ++trial) {
        RandomArray r = random_dense(rng);
        for (double& v : r.dense)
            if (v == 0.0) v = small(rng);
        SparseNdArray a = SparseNdArray::from_dense(r.shape, r.dense);
        a.flush();
        const auto after = a.to_dense();
        for (std::size_t i = 0; i < after.size(); ++i)
            EXPECT_LE(std::abs(after[i] - r.dense[i]), SparseNdArray::kDefaultFlushTol);
    }
}

TEST(SparseNdArrayProperty, AddThenSumMatchesDenseAccumulation) {
    std::mt19937_64 rng(14);
    std::uniform_int_distribution<int> pos(0, 3);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        SparseNdArray a({4, 4});
        std::vector<double> dense(16, 0.0);
        for (int k = 0; k < 40; ++k) {
            const int i = pos(rng), j = pos(rng);
            const double v = val(rng);
            a.add_entry({i, j}, v);
            dense[static_cast<std::size_t>(i * 4 + j)] += v;
        }
        a.remove_duplicates();
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) EXPECT_NEAR(a.get_entry({i, j}), dense[static_cast<std::size_t>(i * 4 + j)], 1e-14);
    }
}
