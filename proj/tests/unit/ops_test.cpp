#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "dape/error.hpp"
#include "dape/ops.hpp"
#include "oracles.hpp"

using namespace dape;
using dape::testing::random_tensor;

namespace {

// Checks d/dx sum(w * fn(inputs)) for every element of every input that requires grad.
void expect_gradients_match(std::vector<Var> inputs, const std::function<Var(const std::vector<Var>&)>& fn,
                            std::uint64_t seed = 1, double tol = 1e-6) {
  std::mt19937_64 rng(seed);
  for (auto& v : inputs) {
    v.set_requires_grad(true);
    v.zero_grad();
  }
  Var out = fn(inputs);
  const Tensor weights = random_tensor(out.shape(), rng);
  auto loss_of = [&](const Var& o) { return ops::sum(ops::mul(o, Var(weights))); };
  backward(loss_of(out));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = inputs[k].grad();
    auto& values = inputs[k].mutable_value();
    for (std::size_t i = 0; i < values.numel(); ++i) {
      auto eval = [&] { return loss_of(fn(inputs)).value()[0]; };
      const double numeric = dape::testing::central_difference(eval, values.data()[i], 1e-5);
      EXPECT_NEAR(analytic[i], numeric, tol * std::max(1.0, std::abs(numeric))) << "input " << k << " element " << i;
    }
  }
}

}  // namespace

TEST(Ops, ElementwiseGradients) {
  std::mt19937_64 rng(3);
  Var a(random_tensor({2, 3}, rng)), b(random_tensor({2, 3}, rng));
  expect_gradients_match({a, b}, [](const auto& v) { return ops::mul(ops::add(v[0], v[1]), ops::sub(v[0], v[1])); });
  expect_gradients_match({Var(random_tensor({7}, rng, -3, 3))}, [](const auto& v) { return ops::gelu(v[0]); });
  expect_gradients_match({Var(random_tensor({7}, rng, -3, 3))}, [](const auto& v) { return ops::silu(v[0]); });
}

TEST(Ops, ChannelAffineAndScaleGradients) {
  std::mt19937_64 rng(4);
  for (auto order : {ChannelOrder::kChannelsFirst, ChannelOrder::kChannelsLast}) {
    const Shape shape = order == ChannelOrder::kChannelsFirst ? Shape{2, 3, 2, 2} : Shape{2, 4, 3};
    Var x(random_tensor(shape, rng)), g(random_tensor({3}, rng)), b(random_tensor({3}, rng)), s(random_tensor({1}, rng));
    expect_gradients_match({x, g, b}, [order](const auto& v) { return ops::channel_affine(v[0], v[1], v[2], order); });
    expect_gradients_match({x, s}, [order](const auto& v) { return ops::scale_channels(v[0], v[1], order); });
    Var per_channel(random_tensor({3}, rng));
    expect_gradients_match({x, per_channel}, [order](const auto& v) { return ops::scale_channels(v[0], v[1], order); });
  }
}

TEST(Ops, NormalizeGradients) {
  std::mt19937_64 rng(5);
  Var x(random_tensor({2, 4, 3, 2}, rng));
  expect_gradients_match({x}, [](const auto& v) {
    return ops::normalize(v[0], NormKind::kGroup, 2, 1e-5, ChannelOrder::kChannelsFirst);
  });
  expect_gradients_match({x}, [](const auto& v) {
    return ops::normalize(v[0], NormKind::kLayer, 1, 1e-5, ChannelOrder::kChannelsFirst);
  });
  Var tokens(random_tensor({2, 3, 4}, rng));
  expect_gradients_match({tokens}, [](const auto& v) {
    return ops::normalize(v[0], NormKind::kLayer, 1, 1e-5, ChannelOrder::kChannelsLast);
  });
}

TEST(Ops, ConvolutionGradients) {
  std::mt19937_64 rng(6);
  Var x(random_tensor({2, 4, 3, 3}, rng)), w(random_tensor({2, 4, 3, 3}, rng)), b(random_tensor({2}, rng));
  expect_gradients_match({x, w, b}, [](const auto& v) { return ops::conv2d(v[0], v[1], v[2], 1); });
  Var dw(random_tensor({4, 1, 5, 5}, rng));
  expect_gradients_match({x, dw}, [](const auto& v) { return ops::conv2d(v[0], v[1], Var(), 2, 4); });
}

TEST(Ops, ConvolutionMatchesLoopReference) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({1, 2, 4, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor y = ops::conv2d(Var(x), Var(w), Var(), 1).value();
  ASSERT_EQ(y.shape(), (Shape{1, 3, 4, 5}));
  for (long co = 0; co < 3; ++co)
    for (long oy = 0; oy < 4; ++oy)
      for (long ox = 0; ox < 5; ++ox) {
        double acc = 0.0;
        for (long ci = 0; ci < 2; ++ci)
          for (long ky = 0; ky < 3; ++ky)
            for (long kx = 0; kx < 3; ++kx) {
              const long iy = oy + ky - 1, ix = ox + kx - 1;
              if (iy < 0 || ix < 0 || iy >= 4 || ix >= 5) continue;
              acc += x.at({0, std::size_t(ci), std::size_t(iy), std::size_t(ix)}) *
                     w.at({std::size_t(co), std::size_t(ci), std::size_t(ky), std::size_t(kx)});
            }
        EXPECT_NEAR(y.at({0, std::size_t(co), std::size_t(oy), std::size_t(ox)}), acc, 1e-12);
      }
}

TEST(Ops, AttentionBuildingBlockGradients) {
  std::mt19937_64 rng(8);
  Var a(random_tensor({2, 3, 4}, rng)), b(random_tensor({2, 5, 4}, rng));
  expect_gradients_match({a, b}, [](const auto& v) { return ops::softmax_lastdim(ops::bmm(v[0], v[1], true)); });
  Var x(random_tensor({2, 3, 4}, rng)), w(random_tensor({5, 4}, rng)), bias(random_tensor({5}, rng));
  expect_gradients_match({x, w, bias}, [](const auto& v) { return ops::linear(v[0], v[1], v[2]); });
  expect_gradients_match({x}, [](const auto& v) { return ops::permute(v[0], {2, 0, 1}); });
  Var c(random_tensor({3, 4}, rng));
  expect_gradients_match({c}, [](const auto& v) { return ops::repeat_batch(v[0], 3); });
  Var p(random_tensor({2, 2, 2, 2}, rng)), q(random_tensor({2, 3, 2, 2}, rng));
  expect_gradients_match({p, q}, [](const auto& v) { return ops::concat_channels(v[0], v[1]); });
}

TEST(Ops, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(9);
  const Tensor s = ops::softmax_lastdim(Var(random_tensor({3, 7}, rng, -50, 50))).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) total += s.at({r, c});
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Ops, HuberMeanGradientAndValue) {
  std::mt19937_64 rng(10);
  Var r(random_tensor({9}, rng, -3, 3));
  expect_gradients_match({r}, [](const auto& v) { return ops::huber_mean(v[0], 1.0); });
  double expected = 0.0;
  for (double x : r.value().data()) expected += dape::testing::huber_oracle(x, 1.0);
  EXPECT_NEAR(ops::huber_mean(r, 1.0).value()[0], expected / 9.0, 1e-15);
  EXPECT_THROW(ops::huber_mean(r, 0.0), ValidationError);
}

TEST(Ops, ShapeErrors) {
  Var a(Tensor::zeros({2, 3})), b(Tensor::zeros({3, 2}));
  EXPECT_THROW(ops::add(a, b), ShapeError);
  EXPECT_THROW(ops::conv2d(Var(Tensor::zeros({1, 3, 4, 4})), Var(Tensor::zeros({2, 2, 3, 3})), Var(), 1), ShapeError);
  EXPECT_THROW(ops::normalize(Var(Tensor::zeros({1, 3, 2, 2})), NormKind::kGroup, 2, 1e-5,
                              ChannelOrder::kChannelsFirst),
               ShapeError);
}

TEST(Autograd, LeavesWithoutGradKeepNoTape) {
  Var x(Tensor::ones({3}));
  Var y = ops::mul(x, x);
  EXPECT_TRUE(y.node()->parents.empty());
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  Var x(Tensor::scalar(3.0), true);
  Var y = ops::add(ops::mul(x, x), x);  // x^2 + x
  backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}
