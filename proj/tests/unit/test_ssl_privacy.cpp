#include <cmath>
#include <set>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "oracles.hpp"
#include "vidpriv/augment.hpp"
#include "vidpriv/ssl_privacy.hpp"
#include "vidpriv/substrate.hpp"

using namespace vidpriv;

namespace {

SslBranchSpec small_spec(SslObjective objective = SslObjective::ntxent) {
  SslBranchSpec s;
  s.encoder = Encoder2dSpec::preset("tiny");
  s.projection_dim = 16;
  s.objective = objective;
  return s;
}

oracle::Mat rows(const torch::Tensor& t) { return oracle::to_mat(t.to(torch::kDouble)); }

}  // namespace

// --- frame pair sampler ----------------------------------------------------

TEST(Sampler, MinGapAlwaysExceedsGap) {
  auto rng = make_rng(0);
  for (int i = 0; i < 2000; ++i) {
    const auto [a, b] = sample_frame_pair(128, SamplerStrategy::min_gap(64), rng);
    ASSERT_GT(std::abs(a - b), 64);
    ASSERT_TRUE(a >= 0 && a < 128 && b >= 0 && b < 128);
  }
}

TEST(Sampler, MaxGapAlwaysBelowGap) {
  auto rng = make_rng(1);
  for (int i = 0; i < 2000; ++i) {
    const auto [a, b] = sample_frame_pair(16, SamplerStrategy::max_gap(8), rng);
    ASSERT_LT(std::abs(a - b), 8);
    ASSERT_NE(a, b);
  }
}

TEST(Sampler, TwoFramesGiveTheOnlyPair) {
  auto rng = make_rng(2);
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < 100; ++i) seen.insert(sample_frame_pair(2, SamplerStrategy::unconstrained(), rng));
  for (const auto& [a, b] : seen) EXPECT_EQ(std::min(a, b) * 10 + std::max(a, b), 1);
}

TEST(Sampler, UnconstrainedCoversAllPairs) {
  auto rng = make_rng(3);
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < 3000; ++i) {
    auto [a, b] = sample_frame_pair(5, SamplerStrategy::unconstrained(), rng);
    seen.insert({std::min(a, b), std::max(a, b)});
  }
  EXPECT_EQ(seen.size(), 10u);
}

TEST(Sampler, InfeasibleConstraintThrows) {
  auto rng = make_rng(4);
  EXPECT_THROW(sample_frame_pair(64, SamplerStrategy::min_gap(64), rng), Error);
  EXPECT_THROW(sample_frame_pair(1, SamplerStrategy::unconstrained(), rng), Error);
}

// --- augmentation ------------------------------------------------------------

TEST(Augment, IdenticalFramesStayIdentical) {
  const auto frame = torch::rand({1, 3, 24, 24});
  const auto clip = VideoClip(frame.expand({6, 3, 24, 24}).contiguous());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rng = make_rng(seed);
    const auto out = augment(clip, AugmentMode::ssl, rng).frames();
    for (int t = 1; t < 6; ++t) ASSERT_TRUE(torch::equal(out[t], out[0]));
  }
}

TEST(Augment, SameSeedSameOutput) {
  const auto clip = VideoClip(torch::rand({4, 3, 24, 24}));
  for (auto mode : {AugmentMode::supervised, AugmentMode::ssl}) {
    auto r1 = make_rng(9), r2 = make_rng(9);
    EXPECT_TRUE(torch::equal(augment(clip, mode, r1).frames(), augment(clip, mode, r2).frames()));
  }
}

TEST(Augment, OutputStaysInUnitRange) {
  const auto clip = VideoClip(torch::rand({3, 3, 20, 20}));
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto rng = make_rng(seed);
    const auto out = augment(clip, AugmentMode::ssl, rng).frames();
    ASSERT_GE(out.min().item<float>(), 0.0f);
    ASSERT_LE(out.max().item<float>(), 1.0f);
    ASSERT_EQ(out.sizes(), clip.frames().sizes());
  }
}

TEST(Augment, SslColorDropOccurs) {
  const auto clip = VideoClip(torch::rand({2, 3, 16, 16}));
  int gray = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto rng = make_rng(seed);
    const auto f = augment(clip, AugmentMode::ssl, rng).frames();
    gray += torch::equal(f.select(1, 0), f.select(1, 1)) && torch::equal(f.select(1, 1), f.select(1, 2));
  }
  EXPECT_GE(gray, 1);
}

TEST(Augment, GradientsReachInput) {
  auto x = torch::rand({2, 3, 16, 16}, torch::requires_grad());
  auto rng = make_rng(5);
  augment_frames(x, AugmentConfig{}.ssl, rng).sum().backward();
  ASSERT_TRUE(x.grad().defined());
}

TEST(Augment, GrayscaleUsesLuma) {
  auto x = torch::zeros({1, 3, 1, 1});
  x[0][0][0][0] = 1.0;
  const auto g = to_grayscale(x);
  EXPECT_NEAR(g[0][1][0][0].item<float>(), 0.299f, 1e-6);
}

// --- NT-Xent -----------------------------------------------------------------

TEST(NtXent, AllIdenticalGivesLn3) {
  auto z = torch::nn::functional::normalize(torch::randn({1, 5}, torch::kDouble),
                                            torch::nn::functional::NormalizeFuncOptions().dim(1))
               .expand({2, 5});
  EXPECT_NEAR(nt_xent(z, z, 0.1).item<double>(), std::log(3.0), 1e-12);
}

TEST(NtXent, OrthogonalNegativesGiveTinyLoss) {
  auto z = torch::eye(2, torch::kDouble);
  const double want = std::log1p(2.0 * std::exp(-10.0));
  EXPECT_NEAR(nt_xent(z, z, 0.1).item<double>(), want, 1e-15);
  EXPECT_NEAR(want / (2.0 * std::exp(-10.0)), 1.0, 1e-4);
}

TEST(NtXent, ScaleInvariant) {
  torch::manual_seed(0);
  auto z = torch::randn({4, 6}, torch::kDouble), zp = torch::randn({4, 6}, torch::kDouble);
  EXPECT_NEAR(nt_xent(z, zp, 0.5).item<double>(), nt_xent(3.7 * z, 0.2 * zp, 0.5).item<double>(), 1e-12);
}

TEST(NtXent, NonNegativeAndPermutationInvariant) {
  auto rng = make_rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = uniform_int(rng, 2, 6), d = uniform_int(rng, 1, 8);
    torch::manual_seed(trial);
    auto z = torch::randn({n, d}, torch::kDouble), zp = torch::randn({n, d}, torch::kDouble);
    const double tau = uniform(rng, 0.05, 2.0);
    const double loss = nt_xent(z, zp, tau).item<double>();
    EXPECT_GE(loss, 0.0);
    auto perm = torch::randperm(n, torch::kLong);
    EXPECT_NEAR(nt_xent(z.index_select(0, perm), zp.index_select(0, perm), tau).item<double>(), loss, 1e-10);
    EXPECT_NEAR(loss, oracle::nt_xent(rows(z), rows(zp), tau, true), 1e-9);
  }
}

TEST(NtXent, SingleViewVariant) {
  torch::manual_seed(2);
  auto z = torch::randn({3, 4}, torch::kDouble), zp = torch::randn({3, 4}, torch::kDouble);
  EXPECT_NEAR(nt_xent(z, zp, 0.3, false).item<double>(), oracle::nt_xent(rows(z), rows(zp), 0.3, false), 1e-12);
}

TEST(NtXent, NeedsTwoPairs) {
  EXPECT_THROW(nt_xent(torch::randn({1, 4}), torch::randn({1, 4}), 0.1), Error);
  EXPECT_THROW(nt_xent(torch::randn({2, 4}), torch::randn({2, 4}), 0.0), Error);
}

TEST(NtXent, GradientMatchesFiniteDifferences) {
  for (int trial = 0; trial < 5; ++trial) {
    torch::manual_seed(trial);
    auto z = torch::randn({3, 5}, torch::kDouble).requires_grad_(true);
    auto zp = torch::randn({3, 5}, torch::kDouble).requires_grad_(true);
    EXPECT_LT(finite_diff_check([&] { return nt_xent(z, zp, 0.2); }, {z, zp}), 1e-4);
  }
}

// --- projection head ---------------------------------------------------------

TEST(SslBranch, ProjectionsAreUnitNorm) {
  torch::manual_seed(0);
  SslBranch branch(small_spec());
  const auto z = branch->project(torch::rand({5, 3, 16, 16}));
  EXPECT_EQ(z.sizes(), (torch::IntArrayRef{5, 16}));
  EXPECT_TRUE(torch::allclose(z.norm(2, 1), torch::ones({5}), 0, 1e-6));
}

TEST(SslBranch, DefaultsFollowHeadSizes) {
  SslBranchSpec s;
  EXPECT_EQ(s.projection_dim, 128);
  EXPECT_DOUBLE_EQ(s.tau, 0.1);
  EXPECT_EQ(s.objective, SslObjective::ntxent);
  MinimaxConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.moco_momentum, 0.999);
  EXPECT_EQ(cfg.moco_queue, 4096);
}

// --- momentum contrast -------------------------------------------------------

TEST(MomentumContrast, OnlyPositiveGivesZeroLoss) {
  auto q = torch::randn({3, 8}, torch::kDouble);
  EXPECT_NEAR(info_nce(q, q, torch::zeros({0, 8}, torch::kDouble), 0.1).item<double>(), 0.0, 1e-12);
}

TEST(MomentumContrast, UnitMomentumFreezesKeyEncoder) {
  torch::manual_seed(0);
  SslBranch branch(small_spec(SslObjective::momentum_contrast));
  MomentumContrast state(branch, 32, 1.0);
  const auto before = parameter_checksum(*state.encoder());
  {
    torch::NoGradGuard no_grad;
    for (auto& p : branch->parameters()) p.add_(0.5);
  }
  state.update_encoder(branch);
  EXPECT_EQ(parameter_checksum(*state.encoder()), before);
}

TEST(MomentumContrast, EmaUpdate) {
  torch::manual_seed(1);
  SslBranch branch(small_spec(SslObjective::momentum_contrast));
  MomentumContrast state(branch, 32, 0.9);
  const auto key0 = state.encoder()->parameters()[0].clone();
  {
    torch::NoGradGuard no_grad;
    for (auto& p : branch->parameters()) p.add_(1.0);
  }
  state.update_encoder(branch);
  const auto want = 0.9 * key0 + 0.1 * branch->parameters()[0];
  EXPECT_TRUE(torch::allclose(state.encoder()->parameters()[0], want, 1e-6, 1e-6));
}

TEST(MomentumContrast, QueueIsFifo) {
  torch::manual_seed(2);
  SslBranch branch(small_spec(SslObjective::momentum_contrast));
  MomentumContrast state(branch, 4, 0.999);
  EXPECT_EQ(state.queue().size(0), 0);
  auto k = torch::arange(6 * 16, torch::kFloat).reshape({6, 16});
  state.enqueue(k.slice(0, 0, 3));
  EXPECT_EQ(state.queue().size(0), 3);
  state.enqueue(k.slice(0, 3, 6));
  EXPECT_TRUE(torch::equal(state.queue(), k.slice(0, 2, 6)));
}

TEST(MomentumContrast, MatchesScalarOracleOnTwoQueries) {
  torch::manual_seed(3);
  SslBranch branch(small_spec(SslObjective::momentum_contrast));
  MomentumContrast state(branch, 4096, 0.999);
  state.enqueue(torch::nn::functional::normalize(torch::randn({10, 16}),
                                                 torch::nn::functional::NormalizeFuncOptions().dim(1)));
  const auto fq = torch::rand({2, 3, 16, 16}), fk = torch::rand({2, 3, 16, 16});
  const auto negatives = state.queue().clone();
  const auto r = momentum_contrast_loss(branch, fq, fk, state, 0.1);
  const auto q = branch->project(fq).detach();
  const double want = oracle::info_nce(rows(q), rows(r.keys), rows(negatives), 0.1);
  EXPECT_NEAR(r.loss.item<double>(), want, 1e-6);
}

TEST(MomentumContrast, DimensionMismatchThrows) {
  EXPECT_THROW(info_nce(torch::randn({2, 8}), torch::randn({2, 8}), torch::randn({3, 6}), 0.1), Error);
}

// --- rotation prediction -----------------------------------------------------

TEST(Rotation, GroupProperties) {
  const auto x = torch::rand({2, 3, 5, 5});
  EXPECT_TRUE(torch::equal(rotate_quarter_turns(x, 0), x));
  EXPECT_TRUE(torch::equal(rotate_quarter_turns(rotate_quarter_turns(x, 2), 2), x));
  auto y = x;
  for (int i = 0; i < 4; ++i) y = rotate_quarter_turns(y, 1);
  EXPECT_TRUE(torch::equal(y, x));
  EXPECT_TRUE(torch::equal(rotate_quarter_turns(x, 3), rotate_quarter_turns(rotate_quarter_turns(x, 1), 2)));
}

TEST(Rotation, CounterClockwiseQuarterTurn) {
  auto x = torch::arange(4, torch::kFloat).reshape({1, 1, 2, 2});  // [[0,1],[2,3]]
  const auto r = rotate_quarter_turns(x, 1);
  EXPECT_TRUE(torch::equal(r.reshape({4}), torch::tensor({1.0f, 3.0f, 0.0f, 2.0f})));
}

TEST(Rotation, NonSquareThrows) { EXPECT_THROW(rotate_quarter_turns(torch::rand({1, 3, 4, 5}), 1), ShapeError); }

TEST(Rotation, UniformLogitsGiveLn4) {
  const auto labels = torch::tensor({0, 1, 2, 3, 1}, torch::kLong);
  EXPECT_NEAR(rotation_cross_entropy(torch::zeros({5, 4}, torch::kDouble), labels).item<double>(), std::log(4.0),
              1e-12);
}

TEST(Rotation, ConfidentCorrectLogitsApproachZero) {
  const auto labels = torch::tensor({0, 3, 2}, torch::kLong);
  const auto logits = 50.0 * torch::nn::functional::one_hot(labels, 4).to(torch::kDouble);
  EXPECT_LT(rotation_cross_entropy(logits, labels).item<double>(), 1e-15);
}

TEST(Rotation, LossIsFiniteOnBranch) {
  torch::manual_seed(4);
  SslBranch branch(small_spec(SslObjective::rotnet));
  auto rng = make_rng(4);
  const double loss = rotnet_loss(branch, torch::rand({4, 3, 16, 16}), rng).item<double>();
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 0.0);
}

// --- ssl loss on clips -------------------------------------------------------

TEST(SslLoss, IdenticalClipsAreHardNegatives) {
  torch::manual_seed(5);
  SslBranch branch(small_spec());
  branch->eval();
  torch::NoGradGuard no_grad;
  const auto a = torch::rand({3, 16, 16}), a2 = torch::rand({3, 16, 16});
  const auto b = torch::rand({3, 16, 16}), b2 = torch::rand({3, 16, 16});
  auto proj = [&](std::vector<torch::Tensor> f) { return branch->project(torch::stack(f)); };
  const double same = nt_xent(proj({a, a}), proj({a2, a2}), 0.1).item<double>();
  const double different = nt_xent(proj({a, b}), proj({a2, b2}), 0.1).item<double>();
  EXPECT_GT(same, different);
  EXPECT_GE(same, std::log(3.0) - 1e-9);
}

TEST(SslLoss, GradientReachesParametersAndInput) {
  torch::manual_seed(6);
  SslBranch branch(small_spec());
  auto clips = torch::rand({3, 4, 3, 16, 16}, torch::requires_grad());
  auto rng = make_rng(6);
  ssl_loss(branch, clips, SamplerStrategy::unconstrained(), rng, AugmentConfig::toy().ssl).backward();
  ASSERT_TRUE(clips.grad().defined());
  EXPECT_GT(clips.grad().abs().sum().item<double>(), 0.0);
  for (const auto& p : branch->parameters()) ASSERT_TRUE(p.grad().defined());
}

TEST(SslLoss, AscentOnInputIncreasesLoss) {
  torch::manual_seed(7);
  SslBranch branch(small_spec());
  branch->eval();
  set_frozen(*branch, true);
  auto clips = torch::rand({4, 4, 3, 16, 16}).mul(0.6).add(0.2).requires_grad_(true);
  const AugmentStrength none;
  std::vector<double> curve;
  for (int step = 0; step < 50; ++step) {
    auto rng = make_rng(123);  // same pairs every step
    auto loss = ssl_loss(branch, clips, SamplerStrategy::unconstrained(), rng, none);
    curve.push_back(loss.item<double>());
    auto grad = torch::autograd::grad({loss}, {clips})[0];
    torch::NoGradGuard no_grad;
    clips.add_(0.05 * grad.sign()).clamp_(0.0, 1.0);
  }
  int decreases = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) decreases += curve[i] < curve[i - 1];
  EXPECT_GT(curve.back(), curve.front());
  EXPECT_LE(decreases, 5);
}

TEST(SslLoss, DetailExposesMomentumKeys) {
  torch::manual_seed(8);
  SslBranch branch(small_spec(SslObjective::momentum_contrast));
  MomentumContrast state(branch, 16, 0.99);
  auto rng = make_rng(8);
  const auto r = ssl_loss_detail(branch, torch::rand({3, 4, 3, 16, 16}), SamplerStrategy::unconstrained(), rng,
                                 AugmentStrength{}, &state);
  ASSERT_TRUE(r.moco_keys.defined());
  EXPECT_EQ(r.moco_keys.size(0), 3);
}
