#include <catch2/catch.hpp>

#include <vector>

#include "gradgate/rng.hpp"
#include "gradgate/tensor.hpp"

using namespace gradgate;

TEST_CASE("tensor shape/data length is enforced", "[tensor]") {
    REQUIRE_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f, 3.0f}), std::invalid_argument);
    const Tensor t = Tensor::full({2, 3}, 1.5f);
    REQUIRE(t.numel() == 6);
    REQUIRE(t.all_finite());
}

TEST_CASE("conv2d sums a window of ones", "[tensor]") {
    const Tensor input = Tensor::full({1, 3, 3}, 1.0f);
    const Tensor kernel = Tensor::full({1, 1, 3, 3}, 1.0f);
    const Tensor out = conv2d_forward(input, kernel, {0.0f}, 1, 0);
    REQUIRE(out.shape == std::vector<int>{1, 1, 1});
    REQUIRE(out.data[0] == Approx(9.0f));
}

TEST_CASE("conv2d with a zero kernel is the bias", "[tensor]") {
    Rng rng(11);
    Tensor input = Tensor::zeros({2, 4, 4});
    for (float& v : input.data) v = rng.next_float();
    const Tensor kernel = Tensor::zeros({3, 2, 3, 3});
    const Tensor out = conv2d_forward(input, kernel, {0.5f, -1.0f, 2.0f}, 1, 1);
    REQUIRE(out.shape == std::vector<int>{3, 4, 4});
    for (int y = 0; y < 4; ++y) {
        REQUIRE(out.at(0, y, 0) == 0.5f);
        REQUIRE(out.at(1, y, 1) == -1.0f);
        REQUIRE(out.at(2, y, 2) == 2.0f);
    }
}

TEST_CASE("conv2d matches a hand-unrolled strided cross-correlation", "[tensor]") {
    // 4x4 ramp 0..15, kernel [[1,0],[0,1]], stride 2: each output cell is
    // the window's top-left plus bottom-right element.
    std::vector<float> ramp(16);
    for (int i = 0; i < 16; ++i) ramp[static_cast<std::size_t>(i)] = static_cast<float>(i);
    const Tensor input({1, 4, 4}, ramp);
    const Tensor kernel({1, 1, 2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    const Tensor out = conv2d_forward(input, kernel, {0.0f}, 2, 0);
    REQUIRE(out.shape == std::vector<int>{1, 2, 2});
    REQUIRE(out.at(0, 0, 0) == 5.0f);
    REQUIRE(out.at(0, 0, 1) == 9.0f);
    REQUIRE(out.at(0, 1, 0) == 21.0f);
    REQUIRE(out.at(0, 1, 1) == 25.0f);
}

TEST_CASE("conv2d rejects bad shapes with both shapes named", "[tensor]") {
    const Tensor input = Tensor::full({2, 4, 4}, 1.0f);
    const Tensor kernel = Tensor::full({1, 3, 2, 2}, 1.0f);
    REQUIRE_THROWS_WITH(conv2d_forward(input, kernel, {0.0f}, 1, 0),
                        Catch::Contains("2x4x4") && Catch::Contains("1x3x2x2"));
    // 4 + 0 - 2 = 2 does not divide by stride 3
    const Tensor k2 = Tensor::full({1, 2, 2, 2}, 1.0f);
    REQUIRE_THROWS_AS(conv2d_forward(input, k2, {0.0f}, 3, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(conv2d_forward(input, k2, {0.0f, 0.0f}, 1, 0), std::invalid_argument);
}

TEST_CASE("maxpool ties resolve to the window's first cell", "[tensor]") {
    const Tensor input = Tensor::full({1, 4, 4}, 0.25f);
    const PoolResult res = maxpool_forward(input, 2, 2);
    REQUIRE(res.output.shape == std::vector<int>{1, 2, 2});
    for (float v : res.output.data) REQUIRE(v == 0.25f);
    REQUIRE(res.argmax == std::vector<int>{0, 2, 8, 10});
}

TEST_CASE("maxpool reduces a single window", "[tensor]") {
    const Tensor input({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    const PoolResult res = maxpool_forward(input, 2, 2);
    REQUIRE(res.output.data == std::vector<float>{4.0f});
    REQUIRE(res.argmax == std::vector<int>{3});
}

TEST_CASE("maxpool matches brute force over random blocks", "[tensor]") {
    Rng rng(7);
    Tensor input = Tensor::zeros({1, 4, 4});
    for (float& v : input.data) v = rng.next_float();
    const PoolResult res = maxpool_forward(input, 2, 2);
    for (int oy = 0; oy < 2; ++oy) {
        for (int ox = 0; ox < 2; ++ox) {
            float best = -1.0f;
            for (int u = 0; u < 2; ++u)
                for (int v = 0; v < 2; ++v)
                    best = std::max(best, input.at(0, oy * 2 + u, ox * 2 + v));
            REQUIRE(res.output.at(0, oy, ox) == best);
        }
    }
}

TEST_CASE("maxpool rejects non-tiling extents", "[tensor]") {
    const Tensor input = Tensor::full({1, 5, 4}, 1.0f);
    REQUIRE_THROWS_AS(maxpool_forward(input, 2, 2), std::invalid_argument);
}

TEST_CASE("relu clamps negatives and keeps nonnegatives", "[tensor]") {
    const Tensor t({3}, {-1.0f, 0.0f, 2.0f});
    REQUIRE(relu(t).data == std::vector<float>{0.0f, 0.0f, 2.0f});

    const Tensor neg = Tensor::full({2, 2}, -3.5f);
    for (float v : relu(neg).data) REQUIRE(v == 0.0f);

    const Tensor pos({4}, {0.0f, 1.0f, 2.5f, 100.0f});
    REQUIRE(relu(pos).data == pos.data);
}

TEST_CASE("dense_forward basics", "[tensor]") {
    const Tensor identity({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    const std::vector<float> x = {3.0f, -4.0f};
    REQUIRE(dense_forward(x, identity, {0.0f, 0.0f}) == x);

    const Tensor zero = Tensor::zeros({2, 2});
    REQUIRE(dense_forward(x, zero, {7.0f, -2.0f}) == std::vector<float>{7.0f, -2.0f});

    const Tensor w({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    REQUIRE(dense_forward({1.0f, 1.0f}, w, {0.0f, 1.0f}) == std::vector<float>{3.0f, 8.0f});

    REQUIRE_THROWS_AS(dense_forward({1.0f}, w, {0.0f, 0.0f}), std::invalid_argument);
}
