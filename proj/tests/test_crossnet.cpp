#include <gtest/gtest.h>

#include <vector>

#include "mmctr/crossnet.hpp"
#include "test_support.hpp"

namespace mmctr {
namespace {

using testutil::project;
using testutil::random_tensor;

template <typename T>
void zero(CrossNet<T>& net) {
  for (auto& l : net.layers) {
    std::fill(l.w.data().begin(), l.w.data().end(), T{0});
    std::fill(l.b.data().begin(), l.b.data().end(), T{0});
  }
}

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor row(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

TEST(BuildFiTest, LengthIsSumOfSegments) {
  Graph g;
  auto fi = build_fi(g, Tensor({2, 11}), Tensor({2, 8}), Tensor({2, 66}));
  EXPECT_EQ(fi.shape(), (Shape{2, 85}));
}

TEST(BuildFiTest, MeanReadoutVariantLength) {
  Graph g;
  EXPECT_EQ(build_fi(g, Tensor({1, 11}), Tensor({1, 8}), Tensor({1, 11})).shape(), (Shape{1, 30}));
}

TEST(BuildFiTest, OrderIsTargetSideSequence) {
  Graph g;
  auto fi = build_fi(g, row({1}), row({2, 3}), row({4}));
  EXPECT_EQ(values(fi), (std::vector<float>{1, 2, 3, 4}));
  auto no_side = build_fi(g, row({1}), Tensor(), row({4}));
  EXPECT_EQ(values(no_side), (std::vector<float>{1, 4}));
}

TEST(BuildFiTest, BatchMismatchIsDimensionError) {
  Graph g;
  EXPECT_THROW(build_fi(g, Tensor({2, 3}), Tensor({1, 3}), Tensor({2, 3})), DimensionError);
}

TEST(CrossTest, ZeroParametersAreIdentity) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + rng.below(9);
    ParamStore<float> store(t);
    auto net = make_cross_net(store, "cross", d, 1 + rng.below(4), 0.0);
    zero(net);
    auto fi = random_tensor<float>(rng, {3, d}, false, 10.0);
    Graph g;
    EXPECT_EQ(values(cross_forward(g, fi, net, false, rng)), values(fi));
  }
}

TEST(CrossTest, NoLayersIsIdentity) {
  ParamStore<float> store(1);
  auto net = make_cross_net(store, "cross", 3, 0, 0.2);
  Tensor fi({1, 3}, {1, -2, 3});
  Graph g;
  Rng rng(1);
  EXPECT_EQ(values(cross_forward(g, fi, net, true, rng)), values(fi));
}

TEST(CrossTest, IdentityWeightHandExample) {
  ParamStore<float> store(1);
  auto net = make_cross_net(store, "cross", 2, 1, 0.0);
  zero(net);
  net.layers[0].w[0] = 1.0f;
  net.layers[0].w[3] = 1.0f;
  Graph g;
  Rng rng(1);
  EXPECT_EQ(values(cross_forward(g, Tensor({1, 2}, {1, 2}), net, false, rng)), (std::vector<float>{2, 6}));
}

TEST(CrossProperty, UnitBiasDoublesInput) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + rng.below(9);
    ParamStore<float> store(t);
    auto net = make_cross_net(store, "cross", d, 1, 0.0);
    zero(net);
    std::fill(net.layers[0].b.data().begin(), net.layers[0].b.data().end(), 1.0f);
    auto fi = random_tensor<float>(rng, {2, d}, false);
    Graph g;
    auto c = cross_forward(g, fi, net, false, rng);
    for (std::size_t i = 0; i < fi.numel(); ++i) EXPECT_EQ(c[i], 2.0f * fi[i]);
  }
}

TEST(CrossTest, DropoutActsOnlyInTraining) {
  ParamStore<float> store(3);
  auto net = make_cross_net(store, "cross", 6, 2, 0.5);
  Rng rng(3);
  auto fi = random_tensor<float>(rng, {4, 6}, false);
  Graph g;
  Rng a(1), b(2);
  auto e1 = cross_forward(g, fi, net, false, a);
  auto e2 = cross_forward(g, fi, net, false, b);
  auto tr = cross_forward(g, fi, net, true, a);
  EXPECT_EQ(values(e1), values(e2));
  EXPECT_NE(values(e1), values(tr));
}

TEST(DeepTest, ZeroWeightsGiveZeros) {
  ParamStore<float> store(1);
  auto deep = make_mlp(store, "deep", 5, {4, 3});
  for (auto& l : deep) {
    std::fill(l.w.data().begin(), l.w.data().end(), 0.0f);
    std::fill(l.b.data().begin(), l.b.data().end(), 0.0f);
  }
  Graph g;
  Rng rng(1);
  auto out = deep_forward(g, random_tensor<float>(rng, {2, 5}, false), deep);
  EXPECT_EQ(values(out), std::vector<float>(6, 0.0f));
}

TEST(DeepTest, SingleReluLayerExample) {
  ParamStore<float> store(1);
  auto deep = make_mlp(store, "deep", 4, {4});
  auto& w = deep[0].w;
  std::fill(w.data().begin(), w.data().end(), 0.0f);
  for (std::size_t i = 0; i < 4; ++i) w[i * 4 + i] = 1.0f;
  std::fill(deep[0].b.data().begin(), deep[0].b.data().end(), 0.0f);
  Graph g;
  EXPECT_EQ(values(deep_forward(g, Tensor({1, 4}, {1, -1, 0, 0}), deep)), (std::vector<float>{1, 0, 0, 0}));
}

TEST(DeepTest, OutputIsLastHiddenWidth) {
  ParamStore<float> store(1);
  auto deep = make_mlp(store, "deep", 85, {1024, 512, 256});
  Graph g;
  EXPECT_EQ(deep_forward(g, Tensor({1, 85}), deep).shape(), (Shape{1, 256}));
}

TEST(CombineTest, ConcatenatesBranches) {
  Graph g;
  EXPECT_EQ(combine(g, Tensor({1, 85}), Tensor({1, 256})).shape(), (Shape{1, 341}));
  auto z = combine(g, Tensor({1, 2}), Tensor({1, 3}));
  EXPECT_EQ(values(z), std::vector<float>(5, 0.0f));
}

TEST(CrossProperty, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(4);
  for (int t = 0; t < 6; ++t) {
    const std::size_t d = 2 + rng.below(7);
    ParamStore<double> store(t);
    auto net = make_cross_net(store, "cross", d, 2, 0.0);
    auto deep = make_mlp(store, "deep", d, {5, 3});
    auto fi = random_tensor<double>(rng, {3, d});
    Rng unused(0);
    ScalarFn<double> f = [&](BasicGraph<double>& g) {
      return project(g, combine(g, cross_forward(g, fi, net, true, unused), deep_forward(g, fi, deep)), 5);
    };
    for (const auto& p : store.entries()) EXPECT_LT(grad_check(f, p.tensor), 1e-3) << p.name;
    EXPECT_LT(grad_check(f, fi), 1e-3);
  }
}

}  // namespace
}  // namespace mmctr
