#include <filesystem>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "vidpriv/minimax.hpp"
#include "vidpriv/networks.hpp"
#include "vidpriv/ssl_privacy.hpp"
#include "vidpriv/substrate.hpp"

namespace fs = std::filesystem;
using namespace vidpriv;

TEST(FiniteDiff, LinearFunctionIsExact) {
  auto w = torch::randn({5}, torch::kDouble).requires_grad_(true);
  const auto a = torch::randn({5}, torch::kDouble);
  EXPECT_LT(finite_diff_check([&] { return (a * w).sum(); }, {w}), 1e-8);
}

TEST(FiniteDiff, NtXentSmallBatch) {
  torch::manual_seed(0);
  auto z = torch::randn({2, 4}, torch::kDouble).requires_grad_(true);
  auto zp = torch::randn({2, 4}, torch::kDouble).requires_grad_(true);
  EXPECT_LT(finite_diff_check([&] { return nt_xent(z, zp, 0.5); }, {z, zp}, 1e-4), 1e-4);
}

TEST(FiniteDiff, ReversalLeavesForwardValueUnchanged) {
  auto x = torch::randn({6}, torch::kDouble).requires_grad_(true);
  auto f = [&] { return (x * x).sum(); };
  auto g = [&] { return (grad_reverse(x, 0.3) * grad_reverse(x, 0.3)).sum(); };
  EXPECT_EQ(f().item<double>(), g().item<double>());
}

TEST(FiniteDiff, RejectsNonScalar) {
  auto x = torch::randn({3}, torch::kDouble).requires_grad_(true);
  EXPECT_THROW(finite_diff_check([&] { return x * 2; }, {x}), Error);
}

TEST(Gradients, LinearityOfSum) {
  torch::manual_seed(1);
  torch::nn::Linear lin(4, 3);
  auto x = torch::randn({2, 4});
  auto grads = [&](const std::function<torch::Tensor(torch::Tensor)>& f) {
    lin->zero_grad();
    f(lin(x)).backward();
    return lin->weight.grad().clone();
  };
  const auto g1 = grads([](torch::Tensor y) { return y.pow(2).sum(); });
  const auto g2 = grads([](torch::Tensor y) { return y.sin().sum(); });
  const auto g12 = grads([](torch::Tensor y) { return y.pow(2).sum() + y.sin().sum(); });
  EXPECT_TRUE(torch::allclose(g12, g1 + g2, 1e-5, 1e-6));
}

TEST(Freeze, FrozenModuleGetsNoUpdate) {
  torch::manual_seed(2);
  torch::nn::Linear lin(3, 2);
  set_frozen(*lin, true);
  EXPECT_TRUE(is_frozen(*lin));
  const auto before = parameter_checksum(*lin);
  torch::optim::Adam opt(lin->parameters(), 0.1);
  auto x = torch::randn({4, 3}, torch::requires_grad());
  opt.zero_grad();
  lin(x).sum().backward();
  opt.step();
  EXPECT_EQ(parameter_checksum(*lin), before);
  ASSERT_TRUE(x.grad().defined());
}

TEST(Freeze, GuardRestoresState) {
  torch::nn::Linear lin(3, 2);
  {
    FreezeGuard guard(*lin);
    EXPECT_TRUE(is_frozen(*lin));
  }
  EXPECT_FALSE(is_frozen(*lin));
}

TEST(Checksum, ChangesWithParameters) {
  torch::manual_seed(3);
  torch::nn::Linear lin(3, 2);
  const auto a = parameter_checksum(*lin);
  EXPECT_EQ(a, parameter_checksum(*lin));
  {
    torch::NoGradGuard no_grad;
    lin->bias[0] += 1e-3;
  }
  EXPECT_NE(a, parameter_checksum(*lin));
}

TEST(Checksum, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc", 3), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Checkpoint, RoundTripRestoresParameters) {
  torch::manual_seed(4);
  const auto dir = fs::temp_directory_path() / "vidpriv_substrate_ckpt";
  fs::create_directories(dir);
  Encoder2dSpec spec{4, 2, 1, false, true};
  Encoder2d a(spec), b(spec);
  write_checkpoint(capture_checkpoint(Role::ssl_privacy, spec.to_json(), *a, {{"note", "x"}}), dir / "e.ckpt");
  const auto ckpt = read_checkpoint(dir / "e.ckpt");
  EXPECT_EQ(ckpt.role, Role::ssl_privacy);
  EXPECT_EQ(ckpt.extra["note"], "x");
  EXPECT_EQ(Encoder2dSpec::from_json(ckpt.arch).width, 4);
  EXPECT_NE(parameter_checksum(*a), parameter_checksum(*b));
  load_state(ckpt, *b);
  EXPECT_EQ(parameter_checksum(*a), parameter_checksum(*b));
}

TEST(Checkpoint, ShapeMismatchThrows) {
  const auto dir = fs::temp_directory_path() / "vidpriv_substrate_ckpt";
  fs::create_directories(dir);
  torch::nn::Linear a(3, 2), b(4, 2);
  write_checkpoint(capture_checkpoint(Role::target, {}, *a), dir / "l.ckpt");
  EXPECT_THROW(load_state(read_checkpoint(dir / "l.ckpt"), *b), Error);
}

TEST(Checkpoint, OrderedStateIsStable) {
  Encoder2dSpec spec{4, 2, 1, false, true};
  Encoder2d a(spec), b(spec);
  const auto sa = ordered_state(*a), sb = ordered_state(*b);
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i].first, sb[i].first);
}

TEST(Roles, StringRoundTrip) {
  for (auto r : {Role::anonymizer, Role::utility, Role::ssl_privacy, Role::target}) {
    EXPECT_EQ(role_from_string(to_string(r)), r);
  }
  EXPECT_THROW(role_from_string("nope"), Error);
}
