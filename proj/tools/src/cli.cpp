#include "vidpriv/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "plots.hpp"
#include "vidpriv/anonymizer.hpp"
#include "vidpriv/baselines.hpp"
#include "vidpriv/metrics.hpp"
#include "vidpriv/minimax.hpp"
#include "vidpriv/protocols.hpp"
#include "vidpriv/substrate.hpp"
#include "vidpriv/synthetic.hpp"

namespace vidpriv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  bool quiet = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config, "JSON config file");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--out", c.out, std::string("Output directory (default: $") + kOutputRootEnv + "/<command>-<config hash>)");
  cmd->add_flag("--force", c.force, "Write into an existing output directory");
  cmd->add_flag("--quiet", c.quiet, "No progress output");
  cmd->add_option("--threads", c.threads, "Intra-op threads")->check(CLI::PositiveNumber);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("could not write " + path.string());
}

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() || base.empty() ? p : base / p; }

/// Picks and prepares the run directory. Refuses a non-empty existing
/// directory unless --force.
fs::path prepare_out(const Common& c, const std::string& command, const json& resolved) {
  fs::path dir;
  if (!c.out.empty()) {
    dir = c.out;
  } else {
    const char* root = std::getenv(kOutputRootEnv);
    const auto text = resolved.dump();
    dir = fs::path(root && *root ? root : "runs") / (command + "-" + sha256_hex(text.data(), text.size()).substr(0, 12));
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !c.force) {
    throw ConfigError("output directory " + dir.string() + " already exists; pass --force to write into it");
  }
  fs::create_directories(dir);
  write_json(resolved, dir / "config.json");
  return dir;
}

DatasetManifest load_data(const json& cfg, const fs::path& base) {
  if (!cfg.contains("data")) throw ConfigError("config needs a \"data\" manifest path");
  auto m = load_manifest(resolve(cfg["data"].get<std::string>(), base));
  preload(m);
  return m;
}

MinimaxConfig minimax_from(const json& cfg, const Common& c) {
  auto m = cfg.contains("minimax") ? MinimaxConfig::from_json(cfg["minimax"]) : MinimaxConfig{};
  if (c.seed) m.seed = *c.seed;
  return m;
}

EpochHook progress(bool quiet) {
  if (quiet) return {};
  return [](const char* phase, int epoch, double tr, double val) {
    std::fprintf(stderr, "%-12s epoch %4d  train %.4f  val %.4f\n", phase, epoch, tr, val);
  };
}

json label_extra(const LabelSpace& l) {
  return {{"action_names", l.action_names},
          {"privacy_names", l.privacy_names},
          {"action_multilabel", l.action_is_multilabel}};
}

// --------------------------------------------------------------------------

int cmd_pretrain(const Common& c) {
  const fs::path cfg_path = c.config;
  const auto cfg = read_json(cfg_path);
  const auto base = cfg_path.parent_path();
  auto data = load_data(cfg, base);
  auto mm = minimax_from(cfg, c);
  mm.validate();
  json resolved{{"command", "pretrain"},
                {"data", resolve(cfg["data"].get<std::string>(), base).string()},
                {"minimax", mm.to_json()}};
  const auto out = prepare_out(c, "pretrain", resolved);

  torch::manual_seed(mm.seed);
  AnonymizerNet net(mm.anonymizer);
  const auto r = reconstruct_pretrain(net, data, mm, progress(c.quiet));
  std::ofstream curve(out / "pretrain_curve.csv");
  curve << "epoch,train_l1,val_l1\n";
  for (std::size_t e = 0; e < r.val_curve.size(); ++e) {
    curve << e << ',' << (e == 0 ? std::string() : std::to_string(r.train_curve[e - 1])) << ',' << r.val_curve[e]
          << '\n';
  }
  auto extra = label_extra(data.labels);
  extra["phase"] = "pretrain";
  save_anonymizer(net, out / "anonymizer.ckpt", extra);
  write_json({{"epochs", r.epochs_run},
              {"steps", r.steps},
              {"val_l1", r.val_curve.back()},
              {"threshold_met", r.threshold_met},
              {"checkpoint_sha256", file_sha256(out / "anonymizer.ckpt")}},
             out / "summary.json");
  if (!c.quiet) std::fprintf(stderr, "wrote %s\n", (out / "anonymizer.ckpt").c_str());
  return 0;
}

// --------------------------------------------------------------------------

int cmd_train(const Common& c, std::optional<double> omega, std::vector<int> dump_epochs) {
  const fs::path cfg_path = c.config;
  const auto cfg = read_json(cfg_path);
  const auto base = cfg_path.parent_path();
  auto data = load_data(cfg, base);
  auto mm = minimax_from(cfg, c);
  if (omega) mm.omega = *omega;
  mm.validate();
  if (dump_epochs.empty()) dump_epochs = cfg.value("dump_epochs", std::vector<int>{1, 3, 6, 9, 30});
  const auto dump_sample = cfg.value("dump_sample", std::size_t{0});
  if (dump_sample >= data.size()) throw ConfigError("dump_sample is out of range");

  std::optional<fs::path> pretrained;
  if (cfg.contains("pretrained")) pretrained = resolve(cfg["pretrained"].get<std::string>(), base);
  json resolved{{"command", "train"},
                {"data", resolve(cfg["data"].get<std::string>(), base).string()},
                {"minimax", mm.to_json()},
                {"dump_epochs", dump_epochs},
                {"dump_sample", dump_sample}};
  if (pretrained) resolved["pretrained"] = pretrained->string();
  const auto out = prepare_out(c, "train", resolved);
  fs::create_directories(out / "dumps");

  std::ofstream log(out / "log.jsonl");
  const auto original = load_clip_tensor(data.samples[dump_sample], 0, mm.geometry);
  std::vector<std::pair<std::string, torch::Tensor>> grid{{"original", original}};
  const std::set<int> dumps(dump_epochs.begin(), dump_epochs.end());

  MinimaxHooks hooks;
  hooks.on_epoch = progress(c.quiet);
  hooks.on_record = [&](const StepRecord& r) { log << r.to_json().dump() << '\n'; };
  hooks.on_adversarial_epoch = [&](int epoch, AnonymizerNet& net) {
    if (!dumps.count(epoch)) return;
    torch::NoGradGuard no_grad;
    const bool was_training = net->is_training();
    net->eval();
    auto frames = net->forward(original);
    if (was_training) net->train();
    char name[32];
    std::snprintf(name, sizeof name, "epoch %d", epoch);
    grid.emplace_back(name, frames);
    char file[32];
    std::snprintf(file, sizeof file, "epoch_%03d.png", epoch);
    write_frame_grid({grid.front(), grid.back()}, out / "dumps" / file);
  };

  std::optional<AnonymizerNet> start;
  if (pretrained) start = load_anonymizer(*pretrained);
  auto result = run_minimax(data, mm, hooks, start);
  log.flush();
  write_frame_grid(grid, out / "dumps" / "grid.png");

  auto extra = label_extra(data.labels);
  extra["phase"] = "minimax";
  extra["omega"] = mm.omega;
  extra["seed"] = mm.seed;
  save_anonymizer(result.anonymizer, out / "anonymizer.ckpt", extra);
  write_json({{"post_init_l_b", result.post_init_l_b},
              {"final_l_b", result.final_l_b},
              {"adversarial_epochs", result.adversarial_epochs},
              {"stopped_by", result.stopped_by},
              {"pretrain_epochs", result.pretrain.epochs_run},
              {"checkpoint_sha256", file_sha256(out / "anonymizer.ckpt")}},
             out / "summary.json");
  if (!c.quiet) std::fprintf(stderr, "wrote %s (stopped by %s)\n", (out / "anonymizer.ckpt").c_str(), result.stopped_by.c_str());
  return 0;
}

// --------------------------------------------------------------------------

void emit_report(const std::vector<MethodMetrics>& rows, const std::string& raw, const fs::path& out) {
  std::string reference = raw;
  bool found = false;
  for (const auto& r : rows) found = found || r.method == reference;
  if (!found) {
    if (rows.empty()) throw Error("nothing to report");
    reference = rows.front().method;
  }
  const auto report = build_report(rows, reference);
  std::ofstream(out / "report.csv") << report_csv(report);
  write_json(report_json(report), out / "report.json");
  write_tradeoff_plot(report, out / "tradeoff.png");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_evaluate(const Common& c, const std::string& methods, const std::string& anonymizer, const std::string& raw) {
  const fs::path cfg_path = c.config;
  const auto cfg = read_json(cfg_path);
  auto spec = ProtocolSpec::from_json(cfg, cfg_path.parent_path());
  if (!methods.empty()) spec.methods = split_list(methods);
  if (!anonymizer.empty()) spec.anonymizer = fs::path(anonymizer);
  if (c.seed) spec.target.seed = *c.seed;
  for (const auto& m : spec.methods) {
    if (m == "learned" && (!spec.anonymizer || !fs::exists(*spec.anonymizer))) {
      throw ConfigError("method 'learned' needs an existing anonymizer checkpoint (--anonymizer)");
    }
  }
  auto resolved = spec.to_json();
  resolved["command"] = "evaluate";
  if (spec.anonymizer) resolved["anonymizer_sha256"] = file_sha256(*spec.anonymizer);
  const auto out = prepare_out(c, "evaluate", resolved);
  torch::manual_seed(spec.target.seed);
  const auto rows = run_protocol(spec);
  emit_report(rows, raw, out);
  if (!c.quiet) std::cout << std::ifstream(out / "report.csv").rdbuf();
  return 0;
}

// --------------------------------------------------------------------------

std::vector<FrameBoxes> scale_boxes(const std::vector<FrameBoxes>& boxes, int factor) {
  std::vector<FrameBoxes> out;
  for (const auto& frame : boxes) {
    FrameBoxes f;
    for (const auto& b : frame) {
      f.push_back({b.x0 / factor, b.y0 / factor, (b.x1 + factor - 1) / factor, (b.y1 + factor - 1) / factor});
    }
    out.push_back(std::move(f));
  }
  return out;
}

int cmd_baseline(const Common& c, const std::string& manifest_path, const std::string& method,
                 const std::string& anonymizer) {
  json resolved{{"command", "baseline"}, {"manifest", manifest_path}, {"method", method}};
  if (!anonymizer.empty()) resolved["anonymizer"] = anonymizer;
  auto data = load_manifest(manifest_path);
  preload(data);
  const auto out = prepare_out(c, "baseline", resolved);

  DatasetManifest derived;
  derived.split = data.split;
  derived.labels = data.labels;
  std::optional<Method> learned;
  if (method == "learned") {
    learned = Method::parse(method, anonymizer.empty() ? std::nullopt : std::optional<fs::path>(anonymizer));
  } else if (method != "downsample-2x" && method != "downsample-4x" && method.rfind("obf-", 0) != 0) {
    throw ConfigError("unknown baseline method '" + method + "'");
  }
  for (const auto& s : data.samples) {
    const auto video = s.decode();
    std::vector<int> all(static_cast<std::size_t>(video->frames()));
    std::iota(all.begin(), all.end(), 0);
    auto frames = video->frames_tensor(all);
    auto boxes = s.person_boxes();
    torch::Tensor result;
    if (method == "downsample-2x" || method == "downsample-4x") {
      const int f = method == "downsample-2x" ? 2 : 4;
      result = downsample(frames, f);
      if (boxes) boxes = scale_boxes(*boxes, f);
    } else if (method.rfind("obf-", 0) == 0) {
      const auto spec = ObfuscationSpec::preset(obfuscation_mode_from_string(method.substr(4)));
      result = boxes ? obfuscate(frames, *boxes, spec) : frames;
    } else {
      result = learned->apply(frames, s, all, video->width(), video->height());
    }
    Sample copy(s.id(), s.path(), s.action(), s.privacy_labels(), boxes);
    copy.attach_video(std::make_shared<Video>(video_from_clip(VideoClip(result, video->fps()))));
    derived.samples.push_back(std::move(copy));
  }
  const auto path = write_dataset(derived, out);
  if (!c.quiet) std::fprintf(stderr, "wrote %s (%zu samples)\n", path.c_str(), derived.size());
  return 0;
}

// --------------------------------------------------------------------------

int cmd_report(const Common& c, const std::string& input, const std::string& raw) {
  const fs::path in = input;
  json resolved{{"command", "report"}, {"input", fs::absolute(in).string()}, {"raw", raw}};
  const auto out = prepare_out(c, "report", resolved);
  if (in.extension() == ".jsonl") {
    std::ifstream f(in);
    std::map<std::string, Series> series;
    for (std::string line; std::getline(f, line);) {
      if (line.empty()) continue;
      const auto r = json::parse(line);
      if (r.value("kind", "") != "val") continue;
      const auto phase = r.value("phase", "");
      for (const char* key : {"l_t", "l_b", "l_a"}) {
        if (!r.contains(key) || r[key].is_null()) continue;
        auto& s = series[phase + " " + key];
        s.name = phase + " " + key;
        s.x.push_back(static_cast<double>(s.x.size()));
        s.y.push_back(r[key].get<double>());
      }
    }
    std::vector<Series> list;
    for (auto& [_, s] : series) list.push_back(std::move(s));
    write_curve_plot(list, "validation loss", out / "curves.png");
    return 0;
  }
  const auto rows = report_from_json(read_json(in));
  std::vector<MethodMetrics> metrics;
  for (const auto& r : rows) metrics.push_back(r.metrics);
  emit_report(metrics, raw, out);
  if (!c.quiet) std::cout << std::ifstream(out / "report.csv").rdbuf();
  return 0;
}

// --------------------------------------------------------------------------

int cmd_synth(const Common& c, SyntheticSpec spec) {
  if (c.seed) spec.seed = *c.seed;
  json resolved{{"command", "synth"}, {"n_action", spec.n_action}, {"n_privacy", spec.n_privacy},
                {"n_samples", spec.n_samples}, {"side", spec.side}, {"frames", spec.frames},
                {"seed", spec.seed}, {"split", spec.split}, {"action_offset", spec.action_offset},
                {"privacy_offset", spec.privacy_offset}};
  const auto out = prepare_out(c, "synth", resolved);
  const auto path = write_dataset(gen_synthetic_factors(spec), out);
  if (!c.quiet) std::fprintf(stderr, "wrote %s\n", path.c_str());
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Learned video anonymization: training, baselines and evaluation", "vidpriv"};
  app.require_subcommand(1);
  Common common;

  auto* pretrain = app.add_subcommand("pretrain", "Identity-initialize the anonymizer by L1 reconstruction");
  add_common(pretrain, common, true);

  auto* train = app.add_subcommand("train", "Run the minimax procedure");
  add_common(train, common, true);
  std::optional<double> omega;
  std::vector<int> dump_epochs;
  train->add_option("--omega", omega, "Weight of the privacy term");
  train->add_option("--dump-epochs", dump_epochs, "Adversarial epochs whose anonymized frames are saved")->delimiter(',');

  auto* evaluate = app.add_subcommand("evaluate", "Train and score target models on transformed data");
  add_common(evaluate, common, true);
  std::string methods, anonymizer, raw = "raw";
  evaluate->add_option("--methods", methods, "Comma-separated method list");
  evaluate->add_option("--anonymizer", anonymizer, "Anonymizer checkpoint for the learned method");
  evaluate->add_option("--raw", raw, "Reference row for relative drops");

  auto* baseline = app.add_subcommand("baseline", "Apply a baseline transform to a manifest");
  add_common(baseline, common, false);
  std::string manifest, method;
  baseline->add_option("--manifest", manifest, "Input manifest")->required()->check(CLI::ExistingFile);
  baseline->add_option("--method", method, "downsample-2x, downsample-4x, obf-blacken, obf-strongblur, obf-weakblur, learned")
      ->required();
  baseline->add_option("--anonymizer", anonymizer, "Anonymizer checkpoint for the learned method");

  auto* report = app.add_subcommand("report", "Re-render tables and plots from a report or a training log");
  add_common(report, common, false);
  std::string input;
  report->add_option("--input", input, "report.json or log.jsonl")->required()->check(CLI::ExistingFile);
  report->add_option("--raw", raw, "Reference row for relative drops");

  auto* synth = app.add_subcommand("synth", "Write a synthetic factor dataset");
  add_common(synth, common, false);
  SyntheticSpec spec;
  synth->add_option("--n-action", spec.n_action)->check(CLI::PositiveNumber);
  synth->add_option("--n-privacy", spec.n_privacy)->check(CLI::PositiveNumber);
  synth->add_option("--samples", spec.n_samples)->check(CLI::PositiveNumber);
  synth->add_option("--side", spec.side)->check(CLI::PositiveNumber);
  synth->add_option("--frames", spec.frames)->check(CLI::PositiveNumber);
  synth->add_option("--split", spec.split);
  synth->add_option("--action-offset", spec.action_offset)->check(CLI::NonNegativeNumber);
  synth->add_option("--privacy-offset", spec.privacy_offset)->check(CLI::NonNegativeNumber);

  std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  torch::set_num_threads(common.threads);
  try {
    if (*pretrain) return cmd_pretrain(common);
    if (*train) return cmd_train(common, omega, dump_epochs);
    if (*evaluate) return cmd_evaluate(common, methods, anonymizer, raw);
    if (*baseline) return cmd_baseline(common, manifest, method, anonymizer);
    if (*report) return cmd_report(common, input, raw);
    if (*synth) return cmd_synth(common, spec);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace vidpriv::cli
