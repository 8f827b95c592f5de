#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "trifusion/grad_check.hpp"
#include "trifusion/ops.hpp"

using namespace trifusion;
using trifusion::testing::max_abs_diff;
using trifusion::testing::random_tensor;

namespace {

std::vector<double> as_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

template <typename T>
using Fn = std::function<BasicTensor<T>(const BasicTensor<T>&)>;

// Weighted sum with fixed random weights turns any op output into a scalar
// whose gradient exercises every output element.
template <typename T>
BasicTensor<T> probe(const BasicTensor<T>& y, std::uint64_t seed) {
    auto r = random_tensor<T>(y.shape(), seed, 0.5, 1.5);
    return sum(mul(y, r));
}

}  // namespace

TEST(Matmul, IdentityAndHandProduct) {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor m({2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(matmul(eye, m).values(), m.values());

    Tensor row({1, 2}, {1, 2});
    Tensor col({2, 1}, {3, 4});
    auto p = matmul(row, col);
    EXPECT_EQ(p.shape(), (Shape{1, 1}));
    EXPECT_FLOAT_EQ(p.item(), 11.0f);
}

TEST(Matmul, MatchesNaiveLoop) {
    auto a = random_tensor({4, 5}, 1);
    auto b = random_tensor({5, 3}, 2);
    auto ref = trifusion::testing::naive_matmul(as_double(a), as_double(b), 4, 5, 3);
    EXPECT_LT(max_abs_diff(matmul(a, b), ref), 1e-6);
}

TEST(Matmul, ShapeMismatch) {
    EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
    EXPECT_THROW(matmul(Tensor({6}), Tensor({6, 1})), DimensionError);
}

TEST(Conv2d, ScalarKernelAndOnes) {
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    Tensor k({1, 1, 1, 1}, {2});
    EXPECT_EQ(conv2d(x, k, 1, 0).values(), (std::vector<float>{2, 4, 6, 8}));

    auto ones = conv2d(Tensor::ones({1, 3, 3}), Tensor::ones({1, 1, 3, 3}), 1, 0);
    EXPECT_EQ(ones.shape(), (Shape{1, 1, 1}));
    EXPECT_FLOAT_EQ(ones.item(), 9.0f);
}

TEST(Conv2d, MatchesSlidingWindowOnAllSmallShapes) {
    std::uint64_t seed = 10;
    for (std::size_t cin = 1; cin <= 4; cin += 3)
        for (std::size_t cout = 1; cout <= 4; cout += 3)
            for (std::size_t hw = 3; hw <= 8; ++hw)
                for (std::size_t k = 1; k <= 3; ++k)
                    for (std::size_t stride = 1; stride <= 2; ++stride)
                        for (std::size_t pad = 0; pad <= 1; ++pad) {
                            auto x = random_tensor({cin, hw, hw + 1}, ++seed);
                            auto w = random_tensor({cout, cin, k, k}, ++seed);
                            auto y = conv2d(x, w, stride, pad);
                            auto ref = trifusion::testing::naive_conv2d(x, w, stride, pad);
                            ASSERT_EQ(y.size(), ref.size());
                            ASSERT_LT(max_abs_diff(y, ref), 1e-5);
                        }
}

TEST(Conv2d, OutputSizeFormulaAndErrors) {
    auto y = conv2d(Tensor({2, 9, 7}), Tensor({3, 2, 3, 3}), 2, 1);
    EXPECT_EQ(y.shape(), (Shape{3, 5, 4}));
    EXPECT_THROW(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), 1, 0), DimensionError);
    EXPECT_THROW(conv2d(Tensor({2, 4, 4}), Tensor({1, 1, 3, 3}), 1, 0), DimensionError);
    EXPECT_THROW(conv2d(Tensor({1, 4, 4}), Tensor({1, 1, 3, 3}), 0, 0), DimensionError);
}

TEST(Conv2dTranspose, SinglePixelBroadcast) {
    Tensor x({1, 1, 1}, {3.5f});
    auto y = conv2d_transpose(x, Tensor::ones({1, 1, 2, 2}), 2, 0);
    EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
    EXPECT_EQ(y.values(), (std::vector<float>{3.5f, 3.5f, 3.5f, 3.5f}));
}

TEST(Conv2dTranspose, RestoresShapeOfMatchingConv) {
    Tensor x({4, 32, 32});
    auto down = conv2d(x, Tensor({8, 4, 3, 3}), 2, 1);
    EXPECT_EQ(down.shape(), (Shape{8, 16, 16}));
    auto up = conv2d_transpose(down, Tensor({8, 4, 4, 4}), 2, 1);
    EXPECT_EQ(up.shape(), (Shape{4, 32, 32}));
}

TEST(Conv2dTranspose, MatchesScatterAdd) {
    auto x = random_tensor({1, 3, 3}, 5);
    auto w = random_tensor({1, 2, 3, 3}, 6);
    for (std::size_t stride = 1; stride <= 2; ++stride) {
        for (std::size_t pad = 0; pad <= 1; ++pad) {
            auto y = conv2d_transpose(x, w, stride, pad);
            auto ref = trifusion::testing::naive_conv2d_transpose(x, w, stride, pad);
            ASSERT_EQ(y.size(), ref.size());
            EXPECT_LT(max_abs_diff(y, ref), 1e-5);
        }
    }
    EXPECT_THROW(conv2d_transpose(x, Tensor({1, 1, 2, 2}), 1, 2), DimensionError);
}

TEST(Conv2dTranspose, IsAdjointOfConv2d) {
    // <conv(x), y> == <x, conv_T(y)> for matching geometry.
    auto x = random_tensor({2, 8, 8}, 21);
    auto w = random_tensor({3, 2, 4, 4}, 22);
    auto cx = conv2d(x, w, 2, 1);
    auto y = random_tensor(cx.shape(), 23);
    auto ty = conv2d_transpose(y, w, 2, 1);
    ASSERT_EQ(ty.shape(), x.shape());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.size(); ++i) lhs += double(cx[i]) * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += double(x[i]) * ty[i];
    EXPECT_NEAR(lhs, rhs, 1e-4);
}

TEST(Elementwise, Basics) {
    Tensor a({2}, {1, -1});
    Tensor b({2}, {2, 3});
    EXPECT_EQ(add(a, b).values(), (std::vector<float>{3, 2}));
    EXPECT_EQ(sub(a, b).values(), (std::vector<float>{-1, -4}));
    EXPECT_EQ(mul(a, b).values(), (std::vector<float>{2, -3}));
    EXPECT_EQ(relu(Tensor({3}, {-2, 0, 5})).values(), (std::vector<float>{0, 0, 5}));
    EXPECT_THROW(add(a, Tensor({3})), DimensionError);
}

TEST(Elementwise, ScaleByZeroAnnihilates) {
    Tape<float> tape;
    auto x = tape.watch(random_tensor({3, 2}, 3));
    auto y = scale(x, 0.0f);
    for (float v : y.data()) EXPECT_EQ(v, 0.0f);
    auto g = tape.backward(sum(y));
    for (float v : g.at(x).data()) EXPECT_EQ(v, 0.0f);
}

TEST(Elementwise, ReluSubgradientAtZeroIsZero) {
    Tape<float> tape;
    auto x = tape.watch(Tensor({3}, {-1, 0, 2}));
    auto g = tape.backward(sum(relu(x)));
    EXPECT_EQ(g.at(x).values(), (std::vector<float>{0, 0, 1}));
}

TEST(Softmax, ExactCases) {
    auto s = softmax_lastdim(Tensor({2}, {1, 1}));
    EXPECT_FLOAT_EQ(s[0], 0.5f);
    EXPECT_FLOAT_EQ(s[1], 0.5f);
    auto t = softmax_lastdim(Tensor({2}, {0.0f, std::log(3.0f)}));
    EXPECT_NEAR(t[0], 0.25f, 1e-7);
    EXPECT_NEAR(t[1], 0.75f, 1e-7);
    auto big = softmax_lastdim(Tensor({2}, {1000, 1000}));
    EXPECT_FLOAT_EQ(big[0], 0.5f);
    EXPECT_FLOAT_EQ(big[1], 0.5f);
}

TEST(Softmax, RowsAreDistributions) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto x = random_tensor({3, 4, 7}, seed, -50, 50);
        auto y = softmax_lastdim(x);
        for (std::size_t r = 0; r < 12; ++r) {
            double total = 0;
            for (std::size_t j = 0; j < 7; ++j) {
                ASSERT_GE(y[r * 7 + j], 0.0f);
                total += y[r * 7 + j];
            }
            ASSERT_NEAR(total, 1.0, 1e-6);
        }
    }
}

TEST(MseLoss, ValuesAndClosedFormGradient) {
    Tensor z({2}, {0, 0});
    EXPECT_EQ(mse_loss(z, z).item(), 0.0f);
    EXPECT_FLOAT_EQ(mse_loss(z, Tensor({2}, {3, 4})).item(), 12.5f);
    EXPECT_THROW(mse_loss(z, Tensor({3})), DimensionError);

    Tape<float> tape;
    auto a = tape.watch(random_tensor({2, 3}, 7));
    auto c = random_tensor({2, 3}, 8);
    auto g = tape.backward(mse_loss(a, c));
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(g.at(a)[i], 2.0f * (a[i] - c[i]) / 6.0f, 1e-7);
    }
}

TEST(MseLoss, GradientMatchesCentralDifferences) {
    auto c = random_tensor<double>({2, 3}, 9);
    Fn<double> f = [&](const BasicTensor<double>& a) { return mse_loss(a, c); };
    auto r = grad_check(f, random_tensor<double>({2, 3}, 10), 1e-3);
    EXPECT_EQ(r.checked.size(), 6u);
    EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(ReshapeTranspose, LayoutAndInverse) {
    Tensor x({2, 3}, {0, 1, 2, 3, 4, 5});
    auto r = reshape(x, {3, 2});
    EXPECT_EQ(r.shape(), (Shape{3, 2}));
    EXPECT_EQ(r.values(), x.values());
    EXPECT_THROW(reshape(x, {4, 2}), DimensionError);

    auto t = transpose(x, {1, 0});
    EXPECT_EQ(t.values(), (std::vector<float>{0, 3, 1, 4, 2, 5}));

    auto y = random_tensor({2, 3, 4, 5}, 11);
    std::vector<std::size_t> perm{2, 0, 3, 1}, inv(4);
    for (std::size_t i = 0; i < 4; ++i) inv[perm[i]] = i;
    auto back = transpose(transpose(y, perm), inv);
    EXPECT_TRUE(back.same_values(y));
    EXPECT_THROW(transpose(y, {0, 0, 1, 2}), DimensionError);
    EXPECT_THROW(transpose(y, {0, 1}), DimensionError);
}

TEST(ReshapeTranspose, ReshapeGradientMatchesDirect) {
    auto c = random_tensor<double>({6}, 12);
    Fn<double> through_reshape = [&](const BasicTensor<double>& a) {
        return mse_loss(reshape(reshape(a, {2, 3}), {6}), c);
    };
    auto x = random_tensor<double>({6}, 13);
    auto r = grad_check(through_reshape, x, 1e-3);
    EXPECT_LT(r.max_rel_error, 1e-4);

    Tape<double> t1, t2;
    auto a1 = t1.watch(x);
    auto a2 = t2.watch(x);
    auto g1 = t1.backward(through_reshape(a1));
    auto g2 = t2.backward(mse_loss(a2, c));
    EXPECT_EQ(g1.at(a1).values(), g2.at(a2).values());
}

TEST(ConcatSlice, RoundTrip) {
    auto a = random_tensor({2, 3}, 14);
    auto b = random_tensor({2, 5}, 15);
    auto c = concat<float>({a, b}, 1);
    EXPECT_EQ(c.shape(), (Shape{2, 8}));
    EXPECT_TRUE(slice(c, 1, 0, 3).same_values(a));
    EXPECT_TRUE(slice(c, 1, 3, 5).same_values(b));
    auto rows = concat<float>({a, a}, 0);
    EXPECT_EQ(rows.shape(), (Shape{4, 3}));
    EXPECT_THROW(concat<float>({a, random_tensor({3, 3}, 1)}, 1), DimensionError);
    EXPECT_THROW(slice(c, 1, 6, 3), DimensionError);
}

TEST(Backward, SumGivesOnes) {
    Tape<float> tape;
    auto x = tape.watch(random_tensor({3, 4}, 16));
    auto g = tape.backward(sum(x));
    for (float v : g.at(x).data()) EXPECT_EQ(v, 1.0f);
}

TEST(Backward, NonScalarLossIsRejected) {
    Tape<float> tape;
    auto x = tape.watch(Tensor({2}, {1, 2}));
    EXPECT_THROW(tape.backward(scale(x, 2.0f)), ContractError);
}

TEST(Backward, UntrackedLeavesReceiveNothing) {
    Tape<float> tape;
    auto x = tape.watch(Tensor({2}, {1, 2}));
    Tensor c({2}, {3, 4});
    auto g = tape.backward(mse_loss(x, c));
    EXPECT_NE(g.find(x), nullptr);
    EXPECT_EQ(g.find(c), nullptr);
    EXPECT_THROW(g.at(c), ContractError);
    EXPECT_EQ(g.leaf_count(), 1u);
}

TEST(Backward, UnreachedLeafGetsZeros) {
    Tape<float> tape;
    auto x = tape.watch(Tensor({2}, {1, 2}));
    auto unused = tape.watch(Tensor({3}, {1, 2, 3}));
    auto g = tape.backward(sum(x));
    EXPECT_EQ(g.at(unused).values(), (std::vector<float>{0, 0, 0}));
}

TEST(Backward, SharedInputAccumulatesBothConsumers) {
    // y = relu(x) * x feeds x through two paths; FD confirms the sum rule.
    Fn<double> f = [](const BasicTensor<double>& x) {
        auto a = scale(x, 3.0);
        auto b = mul(x, x);
        return sum(add(mul(a, b), x));
    };
    auto x = random_tensor<double>({5}, 17);
    auto r = grad_check(f, x, 1e-3);
    EXPECT_EQ(r.checked.size(), 5u);
    EXPECT_LT(r.max_rel_error, 1e-4);

    Tape<double> tape;
    auto xt = tape.watch(x);
    auto g = tape.backward(f(xt));
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(g.at(xt)[i], 9.0 * x[i] * x[i] + 1.0, 1e-12);
    }
}

TEST(Backward, VisitsEachReachableNodeOnce) {
    Tape<float> tape;
    auto x = tape.watch(Tensor({2}, {1, 2}));
    auto y = add(x, x);  // node 1
    auto z = mul(y, y);  // node 2
    auto s = sum(z);     // node 3
    auto dangling = scale(x, 2.0f);
    (void)dangling;
    auto g = tape.backward(s);
    EXPECT_EQ(g.nodes_visited(), 4u);
    EXPECT_EQ(tape.size(), 5u);
    // d/dx sum((2x)^2) = 8x
    EXPECT_FLOAT_EQ(g.at(x)[0], 8.0f);
    EXPECT_FLOAT_EQ(g.at(x)[1], 16.0f);
}

TEST(Backward, MixingTapesIsRejected) {
    Tape<float> t1, t2;
    auto a = t1.watch(Tensor({1}, {1}));
    auto b = t2.watch(Tensor({1}, {2}));
    EXPECT_THROW(add(a, b), ContractError);
    EXPECT_THROW(t2.backward(sum(a)), ContractError);
    EXPECT_THROW(t1.watch(a), ContractError);
    EXPECT_THROW(a.mutable_data(), ContractError);
}

TEST(GradCheck, LinearFunctionIsExact) {
    Fn<double> f = [](const BasicTensor<double>& x) { return sum(scale(x, 3.0)); };
    auto r = grad_check(f, random_tensor<double>({4, 4}, 18), 1e-3);
    EXPECT_LT(r.max_rel_error, 1e-7);
}

TEST(GradCheck, ExcludesReluKink) {
    Fn<double> f = [](const BasicTensor<double>& x) { return sum(relu(x)); };
    BasicTensor<double> x({4}, {0.0, 0.5, -0.25, 1.0});
    GradCheckOptions opt;
    opt.samples = 4;
    auto r = grad_check(f, x, 1e-3, opt);
    ASSERT_EQ(r.excluded.size(), 1u);
    EXPECT_EQ(r.excluded[0], 0u);
    EXPECT_EQ(r.checked.size(), 3u);
    EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, RejectsNonScalarAndBadEps) {
    Fn<double> f = [](const BasicTensor<double>& x) { return scale(x, 2.0); };
    EXPECT_THROW(grad_check(f, BasicTensor<double>({3}), 1e-3), ContractError);
    Fn<double> g = [](const BasicTensor<double>& x) { return sum(x); };
    EXPECT_THROW(grad_check(g, BasicTensor<double>({3}), 0.0), ContractError);
}

TEST(GradCheck, ConvReluMseComposite) {
    auto w = random_tensor<double>({3, 2, 3, 3}, 19);
    auto target = random_tensor<double>({3, 4, 4}, 20);
    Fn<double> f = [&](const BasicTensor<double>& x) { return mse_loss(relu(conv2d(x, w, 2, 1)), target); };
    GradCheckOptions opt;
    opt.samples = 64;
    auto r = grad_check(f, random_tensor<double>({2, 8, 8}, 21), 1e-3, opt);
    EXPECT_GE(r.checked.size(), 60u);
    EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GradCheck, SinglePrecisionAgreesLoosely) {
    // Same composite in f32 on a tiny input: round-off bounds the agreement.
    auto w = random_tensor<float>({2, 1, 2, 2}, 30);
    Fn<float> f = [&](const Tensor& x) { return probe(relu(conv2d(x, w, 1, 0)), 31); };
    GradCheckOptions opt;
    opt.kink_tolerance = 1e-2;
    auto r = grad_check(f, random_tensor<float>({1, 3, 3}, 32), 1e-3f, opt);
    EXPECT_FALSE(r.checked.empty());
    EXPECT_LT(r.max_rel_error, 1e-2);
}

// Every differentiable op, each input in turn, in double away from kinks.
class OpGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
    const std::uint64_t s = GetParam() * 100;
    using D = BasicTensor<double>;
    auto A = random_tensor<double>({3, 4}, s + 1);
    auto B = random_tensor<double>({4, 5}, s + 2);
    auto W = random_tensor<double>({2, 3, 3, 3}, s + 3);
    auto X = random_tensor<double>({3, 6, 5}, s + 4);
    auto WT = random_tensor<double>({3, 2, 4, 4}, s + 5);
    auto bias = random_tensor<double>({4}, s + 6);
    auto C = random_tensor<double>({3, 4}, s + 7);
    std::vector<std::pair<const char*, std::pair<Fn<double>, D>>> cases = {
        {"matmul_a", {[&](const D& a) { return probe(matmul(a, B), s); }, A}},
        {"matmul_b", {[&](const D& b) { return probe(matmul(A, b), s); }, B}},
        {"conv_x", {[&](const D& x) { return probe(conv2d(x, W, 2, 1), s); }, X}},
        {"conv_w", {[&](const D& w) { return probe(conv2d(X, w, 1, 1), s); }, W}},
        {"convT_x", {[&](const D& x) { return probe(conv2d_transpose(x, WT, 2, 1), s); }, X}},
        {"convT_w", {[&](const D& w) { return probe(conv2d_transpose(X, w, 2, 1), s); }, WT}},
        {"add", {[&](const D& a) { return probe(add(a, C), s); }, A}},
        {"sub", {[&](const D& a) { return probe(sub(C, a), s); }, A}},
        {"mul", {[&](const D& a) { return probe(mul(a, C), s); }, A}},
        {"scale", {[&](const D& a) { return probe(scale(a, -1.7), s); }, A}},
        {"relu", {[&](const D& a) { return probe(relu(a), s); }, A}},
        {"bias_x", {[&](const D& a) { return probe(add_bias(a, bias, 1), s); }, A}},
        {"bias_b", {[&](const D& b) { return probe(add_bias(A, b, 1), s); }, bias}},
        {"softmax", {[&](const D& a) { return probe(softmax_lastdim(scale(a, 3.0)), s); }, A}},
        {"mse_a", {[&](const D& a) { return mse_loss(a, C); }, A}},
        {"mse_b", {[&](const D& b) { return mse_loss(C, b); }, A}},
        {"reshape", {[&](const D& a) { return probe(reshape(a, {2, 6}), s); }, A}},
        {"transpose", {[&](const D& x) { return probe(transpose(x, {2, 0, 1}), s); }, X}},
        {"concat", {[&](const D& a) { return probe(concat<double>({a, C, a}, 1), s); }, A}},
        {"slice", {[&](const D& x) { return probe(slice(x, 1, 2, 3), s); }, X}},
    };
    for (auto& [name, c] : cases) {
        GradCheckOptions opt;
        opt.samples = 32;
        opt.seed = s;
        auto r = grad_check(c.first, c.second, 1e-3, opt);
        EXPECT_FALSE(r.checked.empty()) << name;
        EXPECT_LT(r.max_rel_error, 1e-4) << name;
    }
}

INSTANTIATE_TEST_SUITE_P(RandomInputs, OpGradient, ::testing::Range<std::uint64_t>(1, 6));
