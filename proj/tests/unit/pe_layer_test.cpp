#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gafnau/ops.hpp"
#include "gafnau/pe_layer.hpp"
#include "gradcheck.hpp"

using namespace gafnau;
using namespace gafnau::pe;

TEST(PeSpec, MaclaurinTerms) {
    const PeSpec at = make_spec(SeriesFunction::kArctan, 3);
    EXPECT_EQ(at.powers, (std::vector<int>{1, 3, 5}));
    EXPECT_DOUBLE_EQ(at.coefficients[0], 1.0);
    EXPECT_DOUBLE_EQ(at.coefficients[1], -1.0 / 3);
    EXPECT_DOUBLE_EQ(at.coefficients[2], 1.0 / 5);

    const PeSpec sn = make_spec(SeriesFunction::kSin, 3);
    EXPECT_DOUBLE_EQ(sn.coefficients[1], -1.0 / 6);
    EXPECT_DOUBLE_EQ(sn.coefficients[2], 1.0 / 120);

    const PeSpec th = make_spec(SeriesFunction::kTanh, 4);
    EXPECT_EQ(th.powers, (std::vector<int>{1, 3, 5, 7}));
    EXPECT_NEAR(th.coefficients[1], -1.0 / 3, 1e-15);
    EXPECT_NEAR(th.coefficients[2], 2.0 / 15, 1e-15);
    EXPECT_NEAR(th.coefficients[3], -17.0 / 315, 1e-15);

    EXPECT_THROW(make_spec(SeriesFunction::kArctan, 0), std::invalid_argument);
    EXPECT_EQ(series_function_from_string("tanh"), SeriesFunction::kTanh);
    EXPECT_THROW(series_function_from_string("cosh"), std::invalid_argument);
}

TEST(PeExpand, ArctanTwoTermsAtOne) {
    Tape tape;
    Tensor x(Shape{1, 1, 1, 1}, 1.0);
    Tensor y = pe_expand(tape, x, make_spec());
    ASSERT_EQ(y.shape(), (Shape{1, 2, 1, 1}));
    EXPECT_NEAR(y.values()[0], 1.0, 1e-12);
    EXPECT_NEAR(y.values()[1], 2.0 / 3.0, 1e-12);
}

TEST(PeExpand, ZeroInputGivesZeroMaps) {
    Tape tape;
    Tensor y = pe_expand(tape, Tensor(Shape{2, 3, 2, 2}, 0.0), make_spec(SeriesFunction::kArctan, 4));
    EXPECT_EQ(y.shape(), (Shape{2, 12, 2, 2}));
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(PeExpand, ThreeTermsAtHalfWithinRemainderBound) {
    const PeSpec spec = make_spec(SeriesFunction::kArctan, 3);
    const double s3 = partial_sum(spec, 3, 0.5);
    EXPECT_NEAR(s3, 0.5 - 0.125 / 3 + 0.03125 / 5, 1e-15);
    EXPECT_LE(std::abs(std::atan(0.5) - s3), std::pow(0.5, 7) / 7);

    Tape tape;
    Tensor y = pe_expand(tape, Tensor(Shape{1, 1, 1, 1}, 0.5), spec);
    EXPECT_NEAR(y.values()[2], s3, 1e-15);
}

TEST(PeExpand, ChannelLayoutIsAscendingK) {
    std::mt19937_64 rng(1);
    Tensor x = check::random_tensor({2, 3, 2, 2}, rng);
    const PeSpec spec = make_spec(SeriesFunction::kArctan, 2);
    Tape tape;
    Tensor y = pe_expand(tape, x, spec);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t q = 0; q < 4; ++q) {
                    const double xi = x.values()[(n * 3 + c) * 4 + q];
                    EXPECT_NEAR(y.values()[((n * 6) + k * 3 + c) * 4 + q], partial_sum(spec, k + 1, xi), 1e-15);
                }
    Tensor last = pe_series(tape, x, spec);
    EXPECT_EQ(last.shape(), x.shape());
    EXPECT_NEAR(last.values()[5], partial_sum(spec, 2, x.values()[5]), 1e-15);
}

TEST(PeExpand, OddSymmetry) {
    std::mt19937_64 rng(2);
    for (auto f : {SeriesFunction::kArctan, SeriesFunction::kSin, SeriesFunction::kTanh}) {
        Tensor x = check::random_tensor({1, 2, 3, 3}, rng, -1.5, 1.5);
        Tape tape;
        Tensor pos = pe_expand(tape, x, make_spec(f, 4));
        Tensor neg = pe_expand(tape, ops::scale(tape, x, -1.0), make_spec(f, 4));
        for (std::size_t i = 0; i < pos.size(); ++i) EXPECT_EQ(neg.values()[i], -pos.values()[i]);
    }
}

TEST(PeExpand, EightTermsConvergeToArctan) {
    const PeSpec spec = make_spec(SeriesFunction::kArctan, 9);
    for (int i = 0; i <= 100; ++i) {
        const double xi = -0.9 + 1.8 * i / 100.0;
        const double bound = std::abs(spec.coefficients[8] * std::pow(xi, spec.powers[8]));
        EXPECT_LE(std::abs(std::atan(xi) - partial_sum(spec, 8, xi)), bound + 1e-15) << xi;
    }
}

TEST(PeExpand, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    Tensor x = check::random_tensor({2, 2, 3, 3}, rng, -1.0, 1.0, true);
    Tensor w = check::random_tensor({2, 6, 3, 3}, rng);
    const PeSpec spec = make_spec(SeriesFunction::kArctan, 3);
    auto report = check::check_gradients(
        [&](Tape& t) { return ops::sum(t, ops::mul(t, pe_expand(t, x, spec), w)); }, {x},
        {.step = 1e-5, .rel_tol = 1e-6, .abs_floor = 1e-6, .samples = 0});
    EXPECT_TRUE(report.ok()) << report.max_rel_error;

    // Analytic derivative of S_K: sum_m c_m p_m xi^(p_m - 1).
    Tensor single = Tensor::scalar(0.7, true);
    Tape tape;
    tape.backward(ops::sum(tape, pe_series(tape, single, spec)));
    EXPECT_NEAR(single.grad()[0], 1 - 0.49 + 0.7 * 0.7 * 0.7 * 0.7, 1e-14);
}

TEST(PeExpand, HasNoParameters) {
    EXPECT_EQ(pe_param_count(make_spec()), 0u);
    EXPECT_EQ(pe_param_count(make_spec(SeriesFunction::kTanh, 7)), 0u);
}
