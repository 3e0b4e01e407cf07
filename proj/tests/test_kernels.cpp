#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fastnn/elementwise.hpp"
#include "fastnn/fft.hpp"
#include "fastnn/gemm.hpp"
#include "oracles.hpp"

using namespace fastnn;

namespace {
struct LaneGuard {
    int old = vector_width();
    explicit LaneGuard(int lanes) { set_vector_width(lanes); }
    ~LaneGuard() { set_vector_width(old); }
};
}  // namespace

TEST_CASE("gemm identity and hand-checked products") {
    LaneGuard g(8);
    std::mt19937 rng(7);

    SECTION("identity times B returns B") {
        Tensor I = make_tensor({3, 3});
        for (int i = 0; i < 3; ++i) I.at(i, i) = 1.0f;
        Tensor B = oracle::random_tensor({3, 2}, rng);
        Tensor C = gemm(I, B);
        CHECK(oracle::max_rel_err(C, B) == 0.0);
    }

    SECTION("2x2 hand computation") {
        Tensor A = tensor_of({2, 2}, {1, 2, 3, 4});
        Tensor B = tensor_of({2, 2}, {5, 6, 7, 8});
        Tensor C = gemm(A, B);
        CHECK(C.at(0, 0) == 19.0f);
        CHECK(C.at(0, 1) == 22.0f);
        CHECK(C.at(1, 0) == 43.0f);
        CHECK(C.at(1, 1) == 50.0f);
    }

    SECTION("transpose_b equals multiplying by the materialized transpose") {
        Tensor A = oracle::random_tensor({4, 5}, rng);
        Tensor B = oracle::random_tensor({3, 5}, rng);
        Tensor Bt = make_tensor({5, 3});
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 5; ++j) Bt.at(j, i) = B.at(i, j);
        Tensor C1 = gemm(A, B, {.transpose_a = false, .transpose_b = true});
        Tensor C2 = gemm(A, Bt);
        REQUIRE(C1.dims() == std::vector<std::size_t>{4, 3});
        CHECK(oracle::max_rel_err(C1, C2) < 1e-6);
    }

    SECTION("inner-extent mismatch throws") {
        Tensor A = make_tensor({2, 3});
        Tensor B = make_tensor({4, 2});
        CHECK_THROWS_AS(gemm(A, B), ShapeError);
        CHECK_THROWS_AS(gemm(A, B, {.transpose_a = true, .transpose_b = false}), ShapeError);
    }
}

TEST_CASE("gemm matches the naive triple loop on random shapes") {
    LaneGuard g(8);
    std::mt19937 rng(11);
    const struct {
        int m, k, n;
    } shapes[] = {{1, 1, 1}, {2, 3, 4}, {5, 7, 3}, {8, 8, 8}, {13, 17, 9}, {32, 32, 32}, {31, 6, 25}};
    for (auto [m, k, n] : shapes) {
        for (bool ta : {false, true}) {
            for (bool tb : {false, true}) {
                Tensor A = oracle::random_tensor({ta ? k : m, ta ? m : k}, rng);
                Tensor B = oracle::random_tensor({tb ? n : k, tb ? k : n}, rng);
                Tensor C = gemm(A, B, {ta, tb});
                Tensor R = oracle::naive_gemm(A, B, ta, tb);
                INFO("m=" << m << " k=" << k << " n=" << n << " ta=" << ta << " tb=" << tb);
                CHECK(oracle::max_rel_err(C, R) < 1e-5);
            }
        }
    }
}

TEST_CASE("blocked path agrees with the naive loop above the small-matrix cutoff") {
    LaneGuard g(8);
    std::mt19937 rng(13);
    const struct {
        int m, k, n;
    } shapes[] = {{100, 70, 90}, {65, 65, 65}, {3, 200, 5}, {128, 17, 64}};
    for (auto [m, k, n] : shapes) {
        for (bool ta : {false, true}) {
            for (bool tb : {false, true}) {
                Tensor A = oracle::random_tensor({ta ? k : m, ta ? m : k}, rng);
                Tensor B = oracle::random_tensor({tb ? n : k, tb ? k : n}, rng);
                INFO("m=" << m << " k=" << k << " n=" << n << " ta=" << ta << " tb=" << tb);
                CHECK(oracle::max_rel_err(gemm(A, B, {ta, tb}), oracle::naive_gemm(A, B, ta, tb)) < 1e-4);
            }
        }
    }
}

TEST_CASE("small and blocked gemm paths agree on shared shapes") {
    LaneGuard g(8);
    std::mt19937 rng(17);
    const struct {
        int m, k, n;
    } shapes[] = {{2, 2, 2}, {7, 9, 5}, {16, 64, 8}, {64, 64, 64}, {33, 1, 64}};
    for (auto [m, k, n] : shapes) {
        for (bool ta : {false, true}) {
            for (bool tb : {false, true}) {
                Tensor A = oracle::random_tensor({ta ? k : m, ta ? m : k}, rng);
                Tensor B = oracle::random_tensor({tb ? n : k, tb ? k : n}, rng);
                Tensor Cs = detail::gemm_small(A, B, {ta, tb});
                Tensor Cb = detail::gemm_blocked(A, B, {ta, tb});
                INFO("m=" << m << " k=" << k << " n=" << n << " ta=" << ta << " tb=" << tb);
                CHECK(oracle::max_rel_err(Cs, Cb) < 1e-6);
            }
        }
    }
}

TEST_CASE("gemm results are bitwise identical with padding enabled vs disabled") {
    std::mt19937 rng(19);
    const struct {
        int m, k, n;
    } shapes[] = {{5, 7, 9}, {12, 3, 25}, {70, 65, 33}};
    for (auto [m, k, n] : shapes) {
        for (bool ta : {false, true}) {
            for (bool tb : {false, true}) {
                // same logical values under both lane configurations
                std::mt19937 r1(static_cast<unsigned>(m * 1000 + k * 10 + n + ta + 2 * tb));
                std::mt19937 r2 = r1;
                Tensor Cp, Cu;
                {
                    LaneGuard g(8);
                    Tensor A = oracle::random_tensor({ta ? k : m, ta ? m : k}, r1);
                    Tensor B = oracle::random_tensor({tb ? n : k, tb ? k : n}, r1);
                    Cp = gemm(A, B, {ta, tb});
                    REQUIRE(padding_is_zero(Cp));
                }
                {
                    LaneGuard g(1);
                    Tensor A = oracle::random_tensor({ta ? k : m, ta ? m : k}, r2);
                    Tensor B = oracle::random_tensor({tb ? n : k, tb ? k : n}, r2);
                    Cu = gemm(A, B, {ta, tb});
                }
                INFO("m=" << m << " k=" << k << " n=" << n << " ta=" << ta << " tb=" << tb);
                CHECK(oracle::bitwise_equal(Cp, Cu));
            }
        }
    }
}

TEST_CASE("fft2 basics") {
    LaneGuard g(8);

    SECTION("all zeros transforms to all zeros") {
        Complex2D f = fft2(make_tensor({4, 4}));
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                CHECK(f.re.at(r, c) == 0.0f);
                CHECK(f.im.at(r, c) == 0.0f);
            }
    }

    SECTION("delta at the origin gives an all-ones real spectrum") {
        Tensor x = make_tensor({4, 4});
        x.at(0, 0) = 1.0f;
        Complex2D f = fft2(x);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                CHECK(f.re.at(r, c) == Catch::Approx(1.0).margin(1e-6));
                CHECK(f.im.at(r, c) == Catch::Approx(0.0).margin(1e-6));
            }
    }

    SECTION("ifft2 inverts fft2 within 1e-5") {
        std::mt19937 rng(23);
        Tensor x = oracle::random_tensor({8, 8}, rng);
        Tensor back = ifft2(fft2(x));
        double worst = 0.0;
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) worst = std::max(worst, std::abs(double(back.at(r, c)) - double(x.at(r, c))));
        CHECK(worst < 1e-5);
    }

    SECTION("matches the O(n^4) direct DFT") {
        std::mt19937 rng(29);
        Tensor x = oracle::random_tensor({8, 8}, rng);
        Complex2D f = fft2(x);
        std::vector<double> re, im;
        oracle::naive_dft2(x, re, im);
        double worst = 0.0;
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                worst = std::max(worst, std::abs(double(f.re.at(r, c)) - re[r * 8 + c]));
                worst = std::max(worst, std::abs(double(f.im.at(r, c)) - im[r * 8 + c]));
            }
        CHECK(worst < 1e-4);
    }

    SECTION("Parseval: energy matches between domains within 1e-4 relative") {
        std::mt19937 rng(31);
        Tensor x = oracle::random_tensor({8, 8}, rng);
        Complex2D f = fft2(x);
        double space = 0.0, freq = 0.0;
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                space += double(x.at(r, c)) * x.at(r, c);
                freq += double(f.re.at(r, c)) * f.re.at(r, c) + double(f.im.at(r, c)) * f.im.at(r, c);
            }
        freq /= 64.0;
        CHECK(std::abs(space - freq) / space < 1e-4);
    }

    SECTION("non-power-of-two extents are rejected") {
        CHECK_THROWS_AS(fft2(make_tensor({6, 8})), ShapeError);
        CHECK_THROWS_AS(fft2(make_tensor({8, 12})), ShapeError);
    }
}

TEST_CASE("hadamard complex product") {
    LaneGuard g(8);
    Complex2D a{tensor_of({2, 2}, {1, 1, 1, 1}), tensor_of({2, 2}, {2, 2, 2, 2})};

    SECTION("multiplying by real ones is the identity") {
        Complex2D ones{tensor_of({2, 2}, {1, 1, 1, 1}), make_tensor({2, 2})};
        Complex2D r = hadamard(a, ones);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                CHECK(r.re.at(i, j) == 1.0f);
                CHECK(r.im.at(i, j) == 2.0f);
            }
    }

    SECTION("multiplying by zeros absorbs") {
        Complex2D zeros{make_tensor({2, 2}), make_tensor({2, 2})};
        Complex2D r = hadamard(a, zeros);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                CHECK(r.re.at(i, j) == 0.0f);
                CHECK(r.im.at(i, j) == 0.0f);
            }
    }

    SECTION("(1+2i)(3+4i) = -5+10i at every position") {
        Complex2D b{tensor_of({2, 2}, {3, 3, 3, 3}), tensor_of({2, 2}, {4, 4, 4, 4})};
        Complex2D r = hadamard(a, b);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                CHECK(r.re.at(i, j) == -5.0f);
                CHECK(r.im.at(i, j) == 10.0f);
            }
    }

    SECTION("dimension mismatch throws") {
        Complex2D b{make_tensor({2, 3}), make_tensor({2, 3})};
        CHECK_THROWS_AS(hadamard(a, b), ShapeError);
    }
}

TEST_CASE("elementwise_apply maps logical values and keeps padding zero") {
    LaneGuard g(4);

    SECTION("identity leaves the tensor unchanged") {
        Tensor x = tensor_of({1, 3}, {1, 2, 3});
        Tensor y = elementwise_apply(x, [](float v) { return v; });
        for (int j = 0; j < 3; ++j) CHECK(y.at(0, j) == x.at(0, j));
    }

    SECTION("doubling") {
        Tensor x = tensor_of({1, 3}, {1, 2, 3});
        Tensor y = elementwise_apply(x, [](float v) { return 2 * v; });
        CHECK(y.at(0, 0) == 2.0f);
        CHECK(y.at(0, 1) == 4.0f);
        CHECK(y.at(0, 2) == 6.0f);
    }

    SECTION("padding survives f(0) != 0") {
        Tensor x = tensor_of({1, 3}, {1, 2, 3});
        REQUIRE(x.stride_last() == 4);
        Tensor y = elementwise_apply(x, [](float v) { return v + 1.0f; });
        CHECK(y.at(0, 0) == 2.0f);
        CHECK(y.data()[3] == 0.0f);
        CHECK(padding_is_zero(y));
    }
}
