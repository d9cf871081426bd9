#include "criteria.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "toy_trend.hpp"
#include "vidpriv/anonymizer.hpp"
#include "vidpriv/cli.hpp"
#include "vidpriv/metrics.hpp"
#include "vidpriv/protocols.hpp"
#include "vidpriv/ssl_privacy.hpp"
#include "vidpriv/substrate.hpp"
#include "vidpriv/synthetic.hpp"
#include "vidpriv/utility.hpp"

namespace vidpriv::testing {

namespace fs = std::filesystem;
namespace o = vidpriv::oracle;

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

torch::Tensor randn(std::initializer_list<std::int64_t> shape, torch::Generator& g) {
  return torch::randn(shape, g, torch::kFloat64);
}

// Tracks the largest deviation seen in one family.
struct Worst {
  double err = 0.0;
  int count = 0;
  void add(double a, double b) {
    err = std::max(err, std::fabs(a - b));
    ++count;
  }
};

std::vector<std::size_t> all_of(const DatasetManifest& d) {
  std::vector<std::size_t> v(d.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Quarter turn counter-clockwise, by index arithmetic: out[i][j] = in[j][W-1-i].
torch::Tensor rotate_by_loops(const torch::Tensor& frame, int k) {
  auto cur = frame.contiguous().clone();
  for (int r = 0; r < k; ++r) {
    const auto c = cur.size(0), n = cur.size(1);
    auto next = torch::empty_like(cur);
    auto a = cur.accessor<double, 3>();
    auto b = next.accessor<double, 3>();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) b[ch][i][j] = a[ch][j][n - 1 - i];
      }
    }
    cur = next;
  }
  return cur;
}

}  // namespace

// ---------------------------------------------------------------------------

CheckResult check_loss_oracles(int instances, std::uint64_t seed) {
  torch::manual_seed(seed);
  auto g = torch::make_generator<at::CPUGeneratorImpl>(seed);
  Rng rng = make_rng(seed, 0x10A5);
  Worst ntx, ce, bce, l1, moco, rot;

  for (int it = 0; it < instances; ++it) {
    const int n = uniform_int(rng, 2, 4);
    const int d = uniform_int(rng, 1, 8);
    const double tau = uniform(rng, 0.05, 1.0);

    // Contrastive loss, both anchor conventions.
    auto z = randn({n, d}, g), zp = randn({n, d}, g);
    for (bool sym : {true, false}) {
      ntx.add(nt_xent(z, zp, tau, sym).item<double>(), o::nt_xent(o::to_mat(z), o::to_mat(zp), tau, sym));
    }

    // Utility losses.
    const int k = uniform_int(rng, 2, 8);
    auto logits = randn({n, k}, g) * 3.0;
    std::vector<std::int64_t> tv;
    for (int i = 0; i < n; ++i) tv.push_back(uniform_int(rng, 0, k - 1));
    auto targets = torch::tensor(tv, torch::kInt64);
    ce.add(utility_loss(logits, targets, false).item<double>(), o::cross_entropy(o::to_mat(logits), tv));
    auto multi = torch::randint(0, 2, {n, k}, g, torch::kInt64).to(torch::kFloat64);
    bce.add(utility_loss(logits, multi, true).item<double>(), o::bce_with_logits(o::to_mat(logits), o::to_mat(multi)));

    // Reconstruction loss on a single frame and a batch.
    const int h = uniform_int(rng, 1, 8), w = uniform_int(rng, 1, 8);
    auto x = torch::rand({3, h, w}, g, torch::kFloat64), y = torch::rand({3, h, w}, g, torch::kFloat64);
    l1.add(vidpriv::l1_loss(x, y).item<double>(), o::l1_sum(o::to_vec(x), o::to_vec(y)));
    auto xb = torch::rand({n, 3, h, w}, g, torch::kFloat64), yb = torch::rand({n, 3, h, w}, g, torch::kFloat64);
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += o::l1_sum(o::to_vec(xb[i]), o::to_vec(yb[i])) / n;
    l1.add(vidpriv::l1_loss(xb, yb).item<double>(), mean);
  }

  // Momentum contrast: warm-up batch (in-batch negatives), then queued keys.
  for (int it = 0; it < instances; ++it) {
    const int n = uniform_int(rng, 2, 4);
    const int d = uniform_int(rng, 2, 8);
    const double tau = uniform(rng, 0.05, 1.0);
    SslBranchSpec spec;
    spec.encoder = Encoder2dSpec{4, 1, 1, false, false};
    spec.projection_dim = d;
    spec.objective = SslObjective::momentum_contrast;
    SslBranch branch(spec);
    branch->to(torch::kFloat64);
    MomentumContrast state(branch, uniform_int(rng, 1, 6), 0.9);

    for (int round = 0; round < 3; ++round) {
      auto fq = torch::rand({n, 3, 8, 8}, g, torch::kFloat64), fk = torch::rand({n, 3, 8, 8}, g, torch::kFloat64);
      const auto negatives = o::to_mat(state.queue().defined() && state.queue().size(0) > 0
                                           ? state.queue()
                                           : torch::zeros({0, d}, torch::kFloat64));
      const bool warmup = state.queue().size(0) == 0;
      auto out = momentum_contrast_loss(branch, fq, fk, state, tau);
      const auto q = o::to_mat(branch->project(fq));
      const auto keys = o::to_mat(out.keys);
      double expect = 0.0;
      if (warmup) {
        for (int i = 0; i < n; ++i) {
          o::Mat others;
          for (int j = 0; j < n; ++j) {
            if (j != i) others.push_back(keys[static_cast<std::size_t>(j)]);
          }
          expect += o::info_nce({q[static_cast<std::size_t>(i)]}, {keys[static_cast<std::size_t>(i)]}, others, tau) / n;
        }
      } else {
        expect = o::info_nce(q, keys, negatives, tau);
      }
      moco.add(out.loss.item<double>(), expect);
      state.update_encoder(branch);
      state.enqueue(out.keys);
    }
  }

  // Rotation prediction with the draws replayed on a copy of the generator.
  for (int it = 0; it < instances; ++it) {
    const int n = uniform_int(rng, 1, 4);
    SslBranchSpec spec;
    spec.encoder = Encoder2dSpec{4, 1, 1, false, false};
    spec.objective = SslObjective::rotnet;
    SslBranch branch(spec);
    branch->to(torch::kFloat64);
    auto frames = torch::rand({n, 3, 8, 8}, g, torch::kFloat64);
    Rng replay = rng;
    const double got = rotnet_loss(branch, frames, rng).item<double>();
    std::vector<torch::Tensor> rotated;
    std::vector<std::int64_t> labels;
    for (int i = 0; i < n; ++i) {
      const int k = uniform_int(replay, 0, 3);
      labels.push_back(k);
      rotated.push_back(rotate_by_loops(frames[i], k));
    }
    torch::NoGradGuard no_grad;
    rot.add(got, o::cross_entropy(o::to_mat(branch->rotation_logits(torch::stack(rotated))), labels));
  }

  // Forced values.
  auto same = torch::ones({2, 5}, torch::kFloat64);
  const double ln3 = nt_xent(same, same, 0.1).item<double>();
  const double lnk = utility_loss(torch::zeros({3, 7}, torch::kFloat64), torch::tensor({0, 3, 6}, torch::kInt64), false)
                         .item<double>();
  const double ln4 = rotation_cross_entropy(torch::zeros({5, 4}, torch::kFloat64), torch::tensor({0, 1, 2, 3, 1}, torch::kInt64))
                         .item<double>();
  const double forced = std::max({std::fabs(ln3 - std::log(3.0)), std::fabs(lnk - std::log(7.0)),
                                  std::fabs(ln4 - std::log(4.0))});

  const double worst = std::max({ntx.err, ce.err, bce.err, l1.err, moco.err, rot.err, forced});
  const bool enough = ntx.count >= 2 * instances && ce.count >= instances && moco.count >= instances &&
                      rot.count >= instances && l1.count >= instances;
  std::ostringstream os;
  os << "max |lib - oracle|: nt_xent " << ntx.err << ", ce " << ce.err << ", bce " << bce.err << ", l1 " << l1.err
     << ", moco " << moco.err << ", rotnet " << rot.err << ", forced ln3/lnK/ln4 " << forced;
  return {enough && worst <= 1e-6, os.str()};
}

// ---------------------------------------------------------------------------

namespace {

// Every single-column score pattern that matters on the 0.1 grid: AP depends
// only on the weak ordering of the scores, F1 on which side of 0.5 each score
// falls. Enumerates weak orderings of n items (levels 0..L-1, every level
// used) with a cut c: levels below c map to 0.4, 0.3, ... and the rest to
// 0.5, 0.6, ...
std::vector<std::vector<double>> grid_columns(int n) {
  std::vector<std::vector<double>> out;
  std::vector<int> level(static_cast<std::size_t>(n), 0);
  std::function<void(int)> rec = [&](int i) {
    if (i == n) {
      const int levels = *std::max_element(level.begin(), level.end()) + 1;
      for (int l = 0; l < levels; ++l) {
        if (std::find(level.begin(), level.end(), l) == level.end()) return;
      }
      for (int cut = 0; cut <= levels; ++cut) {
        if (cut > 5 || levels - cut > 6) continue;
        std::vector<double> col;
        for (int l : level) col.push_back(l < cut ? (4 - (cut - 1 - l)) / 10.0 : (5 + (l - cut)) / 10.0);
        out.push_back(col);
      }
      return;
    }
    for (int l = 0; l < n; ++l) {
      level[static_cast<std::size_t>(i)] = l;
      rec(i + 1);
    }
  };
  rec(0);
  return out;
}

}  // namespace

CheckResult check_metric_oracles() {
  std::size_t compared = 0, mismatches = 0, columns = 0;
  double worst = 0.0;
  auto note = [&](double a, double b) {
    ++compared;
    const double e = std::fabs(a - b);
    worst = std::max(worst, e);
    if (e > 1e-12) ++mismatches;
  };

  // Single columns: every ordering pattern x every label vector, n = 1..6.
  std::vector<std::vector<std::vector<double>>> by_n(7);
  for (int n = 1; n <= 6; ++n) {
    by_n[static_cast<std::size_t>(n)] = grid_columns(n);
    for (const auto& col : by_n[static_cast<std::size_t>(n)]) {
      ++columns;
      for (int mask = 0; mask < (1 << n); ++mask) {
        std::vector<int> labels;
        for (int r = 0; r < n; ++r) labels.push_back((mask >> r) & 1);
        const auto lib = average_precision(col, labels);
        const auto ref = o::average_precision(col, labels);
        if (lib.has_value() != ref.has_value()) {
          ++mismatches;
          continue;
        }
        if (lib) note(*lib, *ref);
        Matrix s(static_cast<std::size_t>(n), 1), l(static_cast<std::size_t>(n), 1);
        o::Mat os(static_cast<std::size_t>(n), o::Vec(1)), ol(static_cast<std::size_t>(n), o::Vec(1));
        for (int r = 0; r < n; ++r) {
          s(static_cast<std::size_t>(r), 0) = os[static_cast<std::size_t>(r)][0] = col[static_cast<std::size_t>(r)];
          l(static_cast<std::size_t>(r), 0) = ol[static_cast<std::size_t>(r)][0] = labels[static_cast<std::size_t>(r)];
        }
        note(f1_mean(s, l), o::f1_mean(os, ol));
      }
    }
  }

  // Matrices up to 6 x 3: every label matrix, score columns drawn in turn
  // from the pattern list so that each pattern appears in every position.
  for (int n = 1; n <= 6; ++n) {
    const auto& cols = by_n[static_cast<std::size_t>(n)];
    for (int c = 1; c <= 3; ++c) {
      const int cells = n * c;
      std::size_t cursor = static_cast<std::size_t>(n * 7 + c);
      for (long mask = 0; mask < (1L << cells); ++mask) {
        Matrix s(static_cast<std::size_t>(n), static_cast<std::size_t>(c));
        Matrix l(static_cast<std::size_t>(n), static_cast<std::size_t>(c));
        o::Mat os(static_cast<std::size_t>(n), o::Vec(static_cast<std::size_t>(c)));
        o::Mat ol = os;
        for (int j = 0; j < c; ++j) {
          const auto& col = cols[(cursor += 7919) % cols.size()];
          for (int r = 0; r < n; ++r) {
            const auto R = static_cast<std::size_t>(r), J = static_cast<std::size_t>(j);
            s(R, J) = os[R][J] = col[R];
            l(R, J) = ol[R][J] = static_cast<double>((mask >> (r * c + j)) & 1);
          }
        }
        const auto ref = o::cmap(os, ol);
        if (ref) {
          note(cmap(s, l), *ref);
        } else {
          bool threw = false;
          try {
            (void)cmap(s, l);
          } catch (const Error&) {
            threw = true;
          }
          ++compared;
          if (!threw) ++mismatches;
        }
        note(f1_mean(s, l), o::f1_mean(os, ol));
      }
    }
  }

  std::ostringstream os;
  os << compared << " comparisons over " << columns << " score patterns, " << mismatches << " mismatches, max error "
     << worst;
  return {mismatches == 0 && compared > 0, os.str()};
}

// ---------------------------------------------------------------------------

double reversal_gradient_error(double omega, std::uint64_t seed) {
  torch::manual_seed(seed);
  MinimaxConfig cfg = MinimaxConfig::toy();
  cfg.geometry = {4, 1, 8};
  cfg.anonymizer = {1, 2};
  cfg.utility_encoder = Encoder3dSpec{"c3d", 2, 1, 1, false, "avg"};
  cfg.ssl_encoder = Encoder2dSpec{2, 1, 1, false, false};
  cfg.projection_dim = 4;
  cfg.augment.ssl = AugmentStrength{};
  cfg.omega = omega;
  LabelSpace labels{{"a0", "a1", "a2"}, {"p0"}, false};
  MinimaxState state(cfg, labels);
  state.anonymizer->to(torch::kFloat64);
  state.utility.net->to(torch::kFloat64);
  state.ssl->to(torch::kFloat64);
  state.utility.net->eval();
  state.ssl->eval();

  auto g = torch::make_generator<at::CPUGeneratorImpl>(seed + 17);
  auto clips = torch::rand({3, 4, 3, 8, 8}, g, torch::kFloat64);
  auto targets = torch::tensor({0, 2, 1}, torch::kInt64);
  const Rng base = make_rng(seed, 0xF1D);

  auto params = state.anonymizer->parameters();
  {
    Rng r = base;
    auto terms = step_one_terms(state, clips, targets, cfg, r, /*augment=*/false);
    terms.total.backward();
  }
  std::vector<double> analytic, numeric;
  for (auto& p : params) {
    auto grad = p.grad().contiguous();
    auto flat = p.data().view({-1});
    auto gflat = grad.view({-1});
    for (std::int64_t i = 0; i < flat.numel(); ++i) {
      analytic.push_back(gflat[i].item<double>());
      const double orig = flat[i].item<double>();
      const double eps = 1e-6;
      auto eval = [&](double v) {
        torch::NoGradGuard no_grad;
        flat[i] = v;
        Rng r = base;
        auto terms = step_one_terms(state, clips, targets, cfg, r, false);
        return terms.l_t.item<double>() - omega * terms.l_b.item<double>();
      };
      const double up = eval(orig + eps), down = eval(orig - eps);
      flat[i] = orig;
      numeric.push_back((up - down) / (2 * eps));
    }
  }
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::fabs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::fabs(numeric[i]));
  }
  return diff / std::max(scale, 1e-12);
}

CheckResult check_gradients(const std::vector<double>& omegas) {
  // Forward identity, bit for bit, including non-finite and signed zeros.
  auto x = torch::randn({64}, torch::kFloat64);
  x[0] = std::numeric_limits<double>::infinity();
  x[1] = -0.0;
  x[2] = std::numeric_limits<double>::denorm_min();
  x[3] = std::nextafter(1.0, 2.0);
  auto y = grad_reverse(x, 0.7);
  const bool identity = std::memcmp(x.data_ptr<double>(), y.contiguous().data_ptr<double>(), 64 * sizeof(double)) == 0;

  // Backward scaling.
  auto leaf = torch::randn({16}, torch::requires_grad());
  auto up = torch::randn({16});
  grad_reverse(leaf, 0.3).backward(up);
  const bool scaled = torch::allclose(leaf.grad(), -0.3 * up, 0.0, 1e-7);

  std::ostringstream os;
  os << "forward identity " << (identity ? "exact" : "BROKEN") << ", backward -w*g " << (scaled ? "ok" : "BROKEN");
  bool pass = identity && scaled;
  {
    MinimaxConfig cfg = MinimaxConfig::toy();
    cfg.anonymizer = {1, 2};
    AnonymizerNet probe(cfg.anonymizer);
    os << ", theta_A size " << parameter_count(*probe);
    pass = pass && parameter_count(*probe) <= 1000;
  }
  for (double w : omegas) {
    const double err = reversal_gradient_error(w);
    os << ", rel err (w=" << w << ") " << err;
    pass = pass && err <= 1e-4;
  }
  return {pass, os.str()};
}

// ---------------------------------------------------------------------------

constexpr double kTrendBudgetSeconds = 600.0;

CheckResult check_minimax_trend(const std::vector<std::uint64_t>& seeds, int required) {
  int passed = 0;
  bool audit_clean = true;
  std::ostringstream os;
  for (auto s : seeds) {
    TrendOptions opt;
    opt.seed = s;
    const auto r = run_trend(opt);
    // A seed only counts when its whole run fits the CPU budget.
    const bool ok = r.pass() && r.seconds <= kTrendBudgetSeconds;
    passed += ok;
    audit_clean = audit_clean && r.privacy_reads_during_minimax == 0;
    os << fmt("[seed %.0f: privacy %.1f (chance %.1f), ", static_cast<double>(s), 100 * r.learned_privacy, 100 * r.chance)
       << fmt("utility %.1f (raw %.1f), ", 100 * r.learned_utility, 100 * r.raw_utility)
       << fmt("%.0fs, ", r.seconds) << (ok ? "pass" : "fail") << "] ";
  }
  os << passed << "/" << seeds.size() << " seeds pass";
  return {passed >= required && audit_clean, os.str()};
}

// ---------------------------------------------------------------------------

BaselineProbe baseline_privacy_probe(std::uint64_t seed) {
  const auto train = gen_synthetic_factors(SyntheticSpec{4, 4, 400, 32, 8, seed, "train"});
  const auto test = gen_synthetic_factors(SyntheticSpec{4, 4, 100, 32, 8, seed, "test"});
  auto cfg = TargetConfig::toy();
  cfg.seed = seed;
  auto probe = [&](const std::string& name) {
    const auto method = Method::parse(name);
    MethodView tr(method, train, cfg.geometry), te(method, test, cfg.geometry);
    auto model = train_target_privacy(tr, all_of(train), Encoder2dSpec::preset(cfg.privacy_presets.front()), cfg);
    return evaluate_privacy(model, te, cfg).top1.value_or(0.0);
  };
  return {probe("raw"), probe("downsample-2x"), probe("downsample-4x"), probe("obf-blacken")};
}

CheckResult check_baseline_ordering(std::uint64_t seed, double margin) {
  const auto p = baseline_privacy_probe(seed);
  const bool pass = p.raw - p.ds2x >= margin && p.ds2x - p.ds4x >= margin && p.raw - p.blacken >= margin;
  return {pass, fmt("privacy top-1: raw %.1f, ds2x %.1f, ds4x %.1f, blacken %.1f", 100 * p.raw, 100 * p.ds2x,
                    100 * p.ds4x, 100 * p.blacken)};
}

// ---------------------------------------------------------------------------

MinimaxConfig tiny_minimax_config() {
  auto c = MinimaxConfig::toy();
  c.geometry = {4, 1, 16};
  c.anonymizer = {1, 4};
  c.ssl_encoder = Encoder2dSpec::preset("tiny");
  c.projection_dim = 16;
  c.batch_size = 8;
  c.epochs_pretrain = 2;
  c.epochs_init_utility = 2;
  c.epochs_init_ssl = 2;
  c.epochs_adversarial = 2;
  c.val_fraction = 0.2;
  c.moco_queue = 32;
  return c;
}

CheckResult check_protocol_integrity(const fs::path& scratch) {
  std::ostringstream os;
  bool pass = true;

  // Overlapping label spaces are refused; disjoint ones are accepted.
  const auto seen = gen_synthetic_factors(SyntheticSpec{2, 2, 16, 16, 4, 1, "train", 0, 0});
  const auto novel = gen_synthetic_factors(SyntheticSpec{2, 2, 16, 16, 4, 2, "train", 2, 2});
  const auto overlap = gen_synthetic_factors(SyntheticSpec{2, 2, 16, 16, 4, 3, "train", 1, 1});
  ProtocolSpec spec;
  spec.kind = ProtocolKind::novel_attribute;
  const std::vector<Method> raw{Method::identity()};
  bool rejected = false;
  try {
    check_protocol(spec, ProtocolData{overlap, overlap, overlap, overlap, seen.labels}, raw);
  } catch (const ConfigError&) {
    rejected = true;
  }
  bool accepted = true;
  try {
    check_protocol(spec, ProtocolData{novel, novel, novel, novel, seen.labels}, raw);
  } catch (const ConfigError&) {
    accepted = false;
  }
  os << "novel_attribute overlap " << (rejected ? "rejected" : "ACCEPTED") << ", disjoint "
     << (accepted ? "accepted" : "REJECTED");
  pass = pass && rejected && accepted;

  // Frozen raw privacy model under the identity method.
  const auto train = gen_synthetic_factors(SyntheticSpec{2, 3, 24, 16, 4, 5, "train"});
  const auto test = gen_synthetic_factors(SyntheticSpec{2, 3, 12, 16, 4, 5, "test"});
  auto target = TargetConfig::toy();
  target.geometry = {4, 1, 16};
  target.epochs_privacy = 3;
  target.epochs_utility = 1;
  const auto identity = Method::identity("raw");
  MethodView raw_train(identity, train, target.geometry), raw_test(identity, test, target.geometry);
  auto pretrained = train_target_privacy(raw_train, all_of(train), Encoder2dSpec::preset("tiny"), target);
  const auto direct = evaluate_privacy(pretrained, raw_test, target);
  fs::create_directories(scratch);
  const auto ckpt = scratch / "raw_privacy.ckpt";
  save_privacy(pretrained, ckpt);
  ProtocolSpec frozen;
  frozen.kind = ProtocolKind::frozen_privacy;
  frozen.privacy_checkpoint = ckpt;
  frozen.target = target;
  const auto rows = run_protocol(frozen, ProtocolData{train, test, train, test, std::nullopt}, {identity});
  const bool exact = rows.size() == 1 && rows[0].privacy_cmap == direct.cmap && rows[0].privacy_f1 == direct.f1 &&
                     rows[0].privacy_top1 == direct.top1;
  os << fmt("; frozen_privacy cmap %.17g vs %.17g", rows.empty() ? -1.0 : rows[0].privacy_cmap, direct.cmap)
     << (exact ? " (bit-exact)" : " (DIFFER)");
  pass = pass && exact;

  // Privacy-label audit across a full minimax run.
  const auto data = gen_synthetic_factors(SyntheticSpec{2, 2, 24, 16, 4, 7, "train"});
  audit::reset_privacy_label_reads();
  (void)data.samples.front().privacy_labels();
  const bool counter_live = audit::privacy_label_reads() == 1;
  audit::reset_privacy_label_reads();
  auto cfg = tiny_minimax_config();
  (void)run_minimax(data, cfg);
  const auto reads = audit::privacy_label_reads();
  os << "; privacy-label reads during run_minimax: " << reads << (counter_live ? "" : " (AUDIT DEAD)");
  pass = pass && reads == 0 && counter_live;
  return {pass, os.str()};
}

// ---------------------------------------------------------------------------

CheckResult check_determinism(const fs::path& scratch) {
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const auto data = gen_synthetic_factors(SyntheticSpec{2, 2, 24, 16, 4, 11, "train"});
  const auto manifest = write_dataset(data, scratch / "data");
  nlohmann::json config{{"data", manifest.string()}, {"minimax", tiny_minimax_config().to_json()}};
  const auto cfg_path = scratch / "train.json";
  std::ofstream(cfg_path) << config.dump(2);

  std::vector<std::string> hashes;
  for (const char* run : {"run_a", "run_b"}) {
    const auto out = scratch / run;
    const int code = cli::run({"vidpriv", "train", "--config", cfg_path.string(), "--seed", "3", "--out", out.string(),
                               "--quiet"});
    if (code != 0) return {false, std::string("train exited with ") + std::to_string(code)};
    hashes.push_back(file_sha256(out / "anonymizer.ckpt"));
  }
  return {hashes[0] == hashes[1], "checkpoint sha256 " + hashes[0].substr(0, 16) + " vs " + hashes[1].substr(0, 16)};
}

// ---------------------------------------------------------------------------

CheckResult check_report_arithmetic() {
  const auto label = format_drop(64.40, 22.81);
  MethodMetrics raw{"raw", "top1", 0.5, 0.6440, 0.5, std::nullopt, {}};
  MethodMetrics sup{"supervised", "top1", 0.5, 0.2281, 0.5, std::nullopt, {}};
  const auto rows = build_report({raw, sup}, "raw");
  const auto csv = report_csv(rows);
  const bool in_table = csv.find("supervised,top1,50.00,0,22.81,65,") != std::string::npos;
  return {label == "65%" && in_table, "64.40 -> 22.81 gives " + label + (in_table ? ", table row agrees" : ", table row DIFFERS")};
}

}  // namespace vidpriv::testing
