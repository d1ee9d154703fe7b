// Copyright 2026 The edistill Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "checks.hpp"
#include "edistill/dumps.hpp"
#include "edistill/error.hpp"
#include "edistill/flowsim.hpp"
#include "edistill/initlab.hpp"
#include "edistill/proxytrain.hpp"
#include "edistill/spectral.hpp"
#include "edistill/widthnet.hpp"

namespace edistill::tools {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const std::vector<std::string> kSubcommands = {
    "synth", "analyze", "flow", "proxy-train", "importance", "width-merge",
    "check"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Every option of `app` with its resolved value (explicit or default).
json resolved_config(const CLI::App* app) {
  json j = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->get_expected_max() == 0) {
      j[name] = opt->count() > 0;
      continue;
    }
    const std::string v =
        opt->count() ? opt->reduced_results().front() : opt->get_default_str();
    char* end = nullptr;
    const double num = std::strtod(v.c_str(), &end);
    if (!v.empty() && end && *end == '\0') {
      if (num == std::floor(num) && std::abs(num) < 9e15 &&
          v.find_first_of(".eE") == std::string::npos) {
        j[name] = static_cast<std::int64_t>(num);
      } else {
        j[name] = num;
      }
    } else {
      j[name] = v;
    }
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

json envelope(const std::string& command, const CLI::App* app,
              std::uint64_t seed) {
  json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = resolved_config(app);
  return j;
}

std::string with_comment_header(const json& config, const std::string& csv) {
  return "# config: " + config.dump() + "\n" + csv;
}

json vec_json(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

// Layer `layer` of every sequence stacked into one matrix.
Matrix stacked_layer(const dumps::ActivationDump& dump, std::size_t layer) {
  require(layer <= dump.manifest.num_layers, ErrorKind::kDomain,
          "layer " + std::to_string(layer) + " out of range");
  Index rows = 0;
  for (const auto& r : dump.records) rows += r.seq_len();
  Matrix x(rows, dump.manifest.hidden_dim);
  Index at = 0;
  for (std::size_t k = 0; k < dump.records.size(); ++k) {
    const Matrix m = dump.layer(k, layer);
    x.middleRows(at, m.rows()) = m;
    at += m.rows();
  }
  return x;
}

dumps::ActivationDump wrap_matrix(const Matrix& x) {
  dumps::ActivationDump d;
  d.manifest.hidden_dim = std::uint32_t(x.cols());
  d.manifest.num_sequences = 1;
  dumps::SequenceRecord r;
  r.layers.push_back(x.cast<float>());
  d.records.push_back(std::move(r));
  return d;
}

// Power-law spectrum lambda_j = (j+1)^-decay.
std::vector<double> power_law(Index dim, double decay) {
  std::vector<double> s(static_cast<std::size_t>(dim));
  for (Index j = 0; j < dim; ++j) s[std::size_t(j)] = std::pow(j + 1.0, -decay);
  return s;
}

// ---------------------------------------------------------------------------
// Option records.

struct SynthOpts {
  std::string out;
  std::string profile = "anisotropic";
  std::uint32_t dim = 32, layers = 4, sequences = 8, seq_len = 64, vocab = 64;
  bool postnorm = false, unembedding = false, cone = false;
  double decay = 1.0, gain_spread = 1.5;
  std::uint64_t seed = 0;
  std::string label = "synthetic";
};

struct AnalyzeOpts {
  std::string dump, out = ".", final_norm = "unit_l2", format = "both";
  bool tv = false;
  std::uint64_t seed = 0;
};

// Source of the activation matrix X for flow / proxy-train.
struct MatrixSource {
  std::string dump;
  int layer = -1;  // -1: last layer
  Index tokens = 256, dim = 32;
  double cond = 100.0;
  std::string strategy = "mean_abs";
};

struct FlowOpts {
  MatrixSource src;
  Index dprime = 8;
  std::string init = "all", integrator = "euler", out = ".";
  double eta = 1e-2, stddev = 0.02;
  std::int64_t steps = 1000, record_every = 10;
  bool checks = true;
  std::uint64_t seed = 0;
};

struct ProxyOpts {
  MatrixSource src;
  Index dprime = 64;
  std::string init = "all", out = ".";
  double lr = 1e-4, ortho = 0.0, stddev = 0.02;
  std::int64_t epochs = 100;
  bool reprep = false;
  std::uint64_t seed = 0;
};

struct ImportanceOpts {
  std::string dump, strategy = "mean_abs", out = ".";
  Index dprime = 0;
  bool split_check = false;
  std::uint64_t seed = 0;
};

struct MergeOpts {
  std::string weights, save_weights, out = ".";
  Index dim = 16, dprime = 8, layers = 2, heads = 2, head_dim = 4,
        ffn_dim = 32, tokens = 8;
  std::uint64_t seed = 0;
};

struct CheckOpts {
  std::string out = ".";
  std::uint64_t seed = 0;
};

void add_source(CLI::App* sub, MatrixSource& s, Index default_tokens,
                Index default_dim) {
  s.tokens = default_tokens;
  s.dim = default_dim;
  sub->add_option("--dump", s.dump, "Activation dump; X is one layer stacked")
      ->check(CLI::ExistingFile);
  sub->add_option("--layer", s.layer, "Dump layer for X (-1 = last)");
  sub->add_option("--tokens", s.tokens, "Synthetic X rows")
      ->check(CLI::Range(2, 1 << 20));
  sub->add_option("--dim", s.dim, "Synthetic X width")
      ->check(CLI::Range(2, 1 << 14));
  sub->add_option("--cond", s.cond, "Synthetic covariance condition number")
      ->check(CLI::Range(1.0, 1e12));
  sub->add_option("--strategy", s.strategy, "Importance strategy for selection")
      ->check(CLI::IsMember({"mean_abs", "postnorm", "qr_pivot"}));
}

struct Source {
  Matrix x;
  dumps::ActivationDump dump;  // importance input
};

Source load_source(const MatrixSource& s, std::uint64_t seed) {
  Source out;
  if (!s.dump.empty()) {
    out.dump = dumps::read_dump_file(s.dump);
    const std::size_t layer = s.layer < 0 ? out.dump.manifest.num_layers
                                          : std::size_t(s.layer);
    out.x = stacked_layer(out.dump, layer);
  } else {
    const double decay = std::log(s.cond) / std::log(double(s.dim));
    out.x = dumps::synth_matrix(s.tokens, s.dim, power_law(s.dim, decay),
                                std::nullopt, seed);
    out.dump = wrap_matrix(out.x);
  }
  return out;
}

std::vector<std::string> init_list(const std::string& init) {
  if (init == "all") return {"channel_select", "orthogonal", "gaussian"};
  return {init};
}

initlab::InitSpec make_spec(const std::string& kind, const Source& src,
                            const std::string& strategy, Index dprime,
                            double stddev, std::uint64_t seed) {
  initlab::InitSpec spec;
  spec.seed = seed;
  if (kind == "channel_select") {
    const auto report =
        initlab::importance(src.dump, initlab::parse_strategy(strategy));
    spec.kind = initlab::ChannelSelect{initlab::select_topk(report, dprime)};
  } else if (kind == "orthogonal") {
    spec.kind = initlab::Orthogonal{};
  } else {
    spec.kind = initlab::Gaussian{stddev};
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_synth(const SynthOpts& o, const CLI::App* app) {
  dumps::SynthDumpConfig cfg;
  cfg.profile = o.profile == "isotropic" ? dumps::SynthProfile::kIsotropic
                : o.profile == "collapse" ? dumps::SynthProfile::kCollapse
                                          : dumps::SynthProfile::kAnisotropic;
  cfg.hidden_dim = o.dim;
  cfg.num_layers = o.layers;
  cfg.num_sequences = o.sequences;
  cfg.seq_len = o.seq_len;
  cfg.postnorm = o.postnorm;
  cfg.unembedding = o.unembedding;
  cfg.vocab_size = o.vocab;
  cfg.spectrum_decay = o.decay;
  cfg.channel_gain_spread = o.gain_spread;
  cfg.cone = o.cone;
  cfg.seed = o.seed;
  cfg.label = o.label;
  dumps::ActivationDump dump = dumps::synth_dump(cfg);
  dump.manifest.creation_metadata = envelope("synth", app, o.seed).dump();
  dumps::write_dump_file(dump, o.out);
  std::cout << dumps::manifest_json(dump.manifest);
  return kExitOk;
}

int cmd_analyze(const AnalyzeOpts& o, const CLI::App* app) {
  const dumps::ActivationDump dump = dumps::read_dump_file(o.dump);
  spectral::AnalyzeOptions opts;
  opts.require_tv = o.tv;
  opts.final_norm = o.final_norm == "rms" ? spectral::FinalNorm::kRms
                                          : spectral::FinalNorm::kUnitL2;
  const spectral::DumpAnalysis a = spectral::analyze_dump(dump, opts);

  json j = envelope("analyze", app, o.seed);
  j["model_label"] = dump.manifest.model_label;
  json layers = json::array();
  for (const spectral::LayerAnalysis& l : a.layers) {
    json r;
    r["layer"] = l.layer;
    r["erank"] = l.erank;
    r["min_tv"] = a.has_tv ? json(l.min_tv) : json(nullptr);
    r["mean_entropy"] = a.has_tv ? json(l.mean_entropy) : json(nullptr);
    r["max_cos"] = l.max_cos;
    r["bounds"] = {{"rep_bound", l.rep_bound},
                   {"prob_bound", a.has_tv ? json(l.prob_bound) : json(nullptr)}};
    layers.push_back(r);
  }
  j["layers"] = layers;
  j["erank_min_tv_correlation"] =
      std::isfinite(a.erank_min_tv_correlation)
          ? json(a.erank_min_tv_correlation)
          : json(nullptr);

  const fs::path dir(o.out);
  if (o.format != "csv") write_text(dir / "analyze.json", j.dump(2) + "\n");
  if (o.format != "json") {
    write_text(dir / "analyze.csv",
               with_comment_header(j["config"], spectral::analysis_csv(a)));
  }
  std::cout << spectral::analysis_csv(a);
  if (a.has_tv) {
    std::cout << "erank_min_tv_correlation," << a.erank_min_tv_correlation
              << "\n";
  }
  return kExitOk;
}

json trace_json(const flowsim::FlowTrace& trace) {
  json snaps = json::array();
  for (const flowsim::SpectralSnapshot& s : trace.snapshots) {
    json r;
    r["step"] = s.step;
    r["loss"] = s.loss;
    r["balancedness_drift"] = s.balancedness_drift;
    r["hidden_erank"] =
        std::isfinite(s.hidden_erank) ? json(s.hidden_erank) : json(nullptr);
    r["sigma_m"] = vec_json(s.sigma_m);
    r["sigma_q"] = vec_json(s.sigma_q);
    r["sigma_o"] = vec_json(s.sigma_o);
    snaps.push_back(r);
  }
  return snaps;
}

std::vector<CheckResult> flow_checks(const Matrix& x, const Source& src,
                                        const std::string& strategy,
                                        Index dprime, double eta,
                                        std::int64_t steps,
                                        std::uint64_t seed) {
  const Matrix sigma = flowsim::covariance(x);
  Rng rng(seed);
  flowsim::ProjectionPair probe;
  probe.q = gaussian_matrix(x.cols(), dprime, 0.3, rng);
  probe.o = probe.q.transpose();

  std::vector<CheckResult> out;
  Rng grad_rng(seed + 1);
  out.push_back(check_gradients(x.topRows(std::min<Index>(x.rows(), 64)),
                                dprime, 3, grad_rng));
  out.push_back(check_balancedness(sigma, probe, eta, 1.0));
  flowsim::FlowConfig cfg;
  cfg.step_size = eta;
  cfg.num_steps = steps;
  cfg.integrator = flowsim::Integrator::kRk4;
  cfg.record_every = std::max<std::int64_t>(1, steps / 100);
  out.push_back(check_coupling(flowsim::simulate(x, probe, cfg)));
  out.push_back(check_sigma_dot(sigma, probe, 1000));
  const auto sel = initlab::select_topk(
      initlab::importance(src.dump, initlab::parse_strategy(strategy)), dprime);
  out.push_back(
      check_vanishing(sigma, initlab::build_selection_pair(sel, x.cols()), eta));
  return out;
}

int cmd_flow(const FlowOpts& o, const CLI::App* app) {
  const Source src = load_source(o.src, o.seed);
  require(o.dprime >= 1 && o.dprime < src.x.cols(), ErrorKind::kDomain,
          "--dprime must lie in [1, D)");
  flowsim::FlowConfig cfg;
  cfg.step_size = o.eta;
  cfg.num_steps = o.steps;
  cfg.integrator = flowsim::parse_integrator(o.integrator);
  cfg.record_every = o.record_every;
  cfg.seed = o.seed;

  json summary = envelope("flow", app, o.seed);
  json runs = json::object();
  const fs::path dir(o.out);
  for (const std::string& kind : init_list(o.init)) {
    const initlab::InitSpec spec =
        make_spec(kind, src, o.src.strategy, o.dprime, o.stddev, o.seed);
    const flowsim::FlowTrace trace = flowsim::simulate(
        src.x, initlab::build_pair(spec, src.x.cols(), o.dprime), cfg);
    json tj = envelope("flow", app, o.seed);
    tj["init"] = kind;
    tj["snapshots"] = trace_json(trace);
    write_text(dir / ("flow_" + kind + ".json"), tj.dump(2) + "\n");
    write_text(dir / ("flow_" + kind + ".csv"),
               with_comment_header(tj["config"], flowsim::trace_csv(trace)));
    const flowsim::SpectralSnapshot& last = trace.snapshots.back();
    runs[kind] = {{"final_loss", last.loss},
                  {"final_balancedness_drift", last.balancedness_drift},
                  {"min_relative_sigma", min_relative_sigma(trace)}};
  }
  summary["runs"] = runs;
  bool ok = true;
  if (o.checks) {
    const auto checks = flow_checks(src.x, src, o.src.strategy, o.dprime,
                                       o.eta, o.steps, o.seed);
    summary["checks"] = to_json(checks);
    ok = all_pass(checks);
    for (const CheckResult& c : checks) {
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " value="
                << c.value << " threshold=" << c.threshold << "\n";
    }
  }
  summary["all_checks_pass"] = ok;
  write_text(dir / "flow_summary.json", summary.dump(2) + "\n");
  for (const auto& [kind, r] : runs.items()) {
    std::cout << kind << " final_loss=" << r["final_loss"].get<double>()
              << " min_relative_sigma="
              << r["min_relative_sigma"].get<double>() << "\n";
  }
  return kExitOk;
}

int cmd_proxy(const ProxyOpts& o, const CLI::App* app) {
  const Source src = load_source(o.src, o.seed);
  proxytrain::TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.epochs = o.epochs;
  cfg.orthogonal_penalty_weight = o.ortho;
  cfg.seed = o.seed;
  cfg.reprep_erank = o.reprep;
  const fs::path dir(o.out);
  for (const std::string& kind : init_list(o.init)) {
    const initlab::InitSpec spec =
        make_spec(kind, src, o.src.strategy, o.dprime, o.stddev, o.seed);
    const proxytrain::TrainReport r =
        proxytrain::train_autoencoder(src.x, spec, o.dprime, cfg);
    json j = envelope("proxy-train", app, o.seed);
    j["report"] = json::parse(proxytrain::report_json(r));
    write_text(dir / ("proxy_" + kind + ".json"), j.dump(2) + "\n");
    write_text(dir / ("proxy_" + kind + "_loss.csv"),
               with_comment_header(j["config"], proxytrain::loss_curve_csv(r)));
    std::cout << kind << " recon_loss=" << r.final_loss
              << " hidden_erank=" << r.hidden_erank
              << " recon_erank=" << r.recon_erank << "\n";
  }
  return kExitOk;
}

int cmd_importance(const ImportanceOpts& o, const CLI::App* app) {
  const dumps::ActivationDump dump = dumps::read_dump_file(o.dump);
  const initlab::Strategy s = initlab::parse_strategy(o.strategy);
  const initlab::ImportanceReport report = initlab::importance(dump, s);
  const initlab::ChannelSelection sel = initlab::select_topk(report, o.dprime);
  json j = envelope("importance", app, o.seed);
  j["result"] = json::parse(initlab::report_json(report, &sel));
  if (o.split_check) {
    const initlab::SplitCheck sc = initlab::split_half_overlap(dump, s, o.dprime);
    j["split_check"] = {{"overlap_ratio", sc.overlap},
                        {"first", sc.first.indices},
                        {"second", sc.second.indices}};
    std::cout << "split_half_overlap=" << sc.overlap << "\n";
  }
  write_text(fs::path(o.out) / "importance.json", j.dump(2) + "\n");
  std::cout << "indices=";
  for (std::size_t i = 0; i < sel.indices.size(); ++i)
    std::cout << (i ? "," : "") << sel.indices[i];
  std::cout << "\n";
  return kExitOk;
}

int cmd_merge(const MergeOpts& o, const CLI::App* app) {
  Rng rng(o.seed);
  widthnet::WeightsFile wf;
  if (!o.weights.empty()) {
    wf = widthnet::read_weights_file(o.weights);
  } else {
    require(o.dprime >= 1 && o.dprime <= o.dim, ErrorKind::kDomain,
            "--dprime must lie in [1, dim]");
    for (Index i = 0; i < o.layers; ++i) {
      wf.teacher.push_back(widthnet::random_teacher_layer(
          o.dim, o.heads, o.head_dim, o.ffn_dim, rng));
    }
  }
  if (!wf.wrapped) {
    std::vector<widthnet::WrappedLayer> wl;
    for (const auto& t : wf.teacher)
      wl.push_back(widthnet::random_wrapped_layer(t, o.dprime, rng));
    wf.wrapped = std::move(wl);
  }
  if (!o.save_weights.empty()) widthnet::write_weights_file(wf, o.save_weights);

  std::vector<widthnet::MergedLayer> merged;
  for (const auto& w : *wf.wrapped) merged.push_back(widthnet::merge(w));
  const Index dp = wf.wrapped->front().reduced_dim();
  const Matrix x = gaussian_matrix(o.tokens, dp, 1.0, rng);
  const auto a = widthnet::wrapped_forward(x, *wf.wrapped);
  const auto b = widthnet::merged_forward(x, merged);

  json j = envelope("width-merge", app, o.seed);
  json errs = json::array();
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double e = (a[k] - b[k]).norm() / std::max(a[k].norm(), 1e-300);
    worst = std::max(worst, e);
    errs.push_back(e);
  }
  j["layer_relative_error"] = errs;
  j["max_relative_error"] = worst;
  j["pass"] = worst < 1e-5;
  write_text(fs::path(o.out) / "merge.json", j.dump(2) + "\n");
  std::cout << "max_relative_error=" << worst << (worst < 1e-5 ? " PASS" : " FAIL")
            << "\n";
  return worst < 1e-5 ? kExitOk : kExitRuntime;
}

int cmd_check(const CheckOpts& o, const CLI::App* app) {
  const Index d = 16, dp = 6;
  const Matrix x = dumps::synth_matrix(128, d, power_law(d, 1.0), std::nullopt,
                                       o.seed);
  Source src{x, wrap_matrix(x)};
  std::vector<CheckResult> checks =
      flow_checks(x, src, "mean_abs", dp, 1e-2, 1000, o.seed);
  Rng rng(o.seed + 7);
  for (CheckResult& c : check_bounds(200, rng)) checks.push_back(std::move(c));
  checks.push_back(check_merge(50, rng));

  json j = envelope("check", app, o.seed);
  j["checks"] = to_json(checks);
  j["all_pass"] = all_pass(checks);
  write_text(fs::path(o.out) / "check.json", j.dump(2) + "\n");
  for (const CheckResult& c : checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << c.value
              << " threshold=" << c.threshold << "\n";
  }
  return all_pass(checks) ? kExitOk : kExitRuntime;
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config", 1, 0);
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return rest;

  std::ifstream in(config_path);
  if (!in) throw CLI::FileError::Missing(config_path);
  std::vector<std::string> injected;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CLI::ConversionError(config_path + ":" + std::to_string(lineno) +
                                 ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (value == "true") {
      injected.push_back("--" + key);
    } else if (value != "false") {
      injected.push_back("--" + key);
      injected.push_back(value);
    }
  }
  auto pos = std::find_if(rest.begin(), rest.end(), [](const std::string& a) {
    return std::find(kSubcommands.begin(), kSubcommands.end(), a) !=
           kSubcommands.end();
  });
  if (pos != rest.end()) ++pos;
  rest.insert(pos, injected.begin(), injected.end());
  return rest;
}

int run(int argc, char** argv) {
  CLI::App app{"edistill: representation-collapse diagnostics and width "
               "distillation experiments"};
  app.name("edistill");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--config", "Flat key = value file mirroring the flags");

  SynthOpts so;
  auto* synth = app.add_subcommand("synth", "Write a synthetic activation dump");
  synth->add_option("--out", so.out, "Output dump path")->required();
  synth->add_option("--profile", so.profile, "Spectrum profile")
      ->check(CLI::IsMember({"isotropic", "anisotropic", "collapse"}));
  synth->add_option("--dim", so.dim)->check(CLI::Range(1, 1 << 14));
  synth->add_option("--layers", so.layers)->check(CLI::Range(0, 4096));
  synth->add_option("--sequences", so.sequences)->check(CLI::Range(1, 1 << 16));
  synth->add_option("--seq-len", so.seq_len)->check(CLI::Range(2, 1 << 16));
  synth->add_flag("--postnorm", so.postnorm, "Include post-norm streams");
  synth->add_flag("--unembedding", so.unembedding, "Include unembedding block");
  synth->add_option("--vocab", so.vocab)->check(CLI::Range(1, 1 << 20));
  synth->add_option("--decay", so.decay, "Anisotropic power-law exponent");
  synth->add_option("--gain-spread", so.gain_spread,
                    "Log-scale spread of channel gains");
  synth->add_flag("--cone", so.cone, "Constrain rows to a common half-space");
  synth->add_option("--seed", so.seed);
  synth->add_option("--label", so.label);

  AnalyzeOpts ao;
  auto* analyze =
      app.add_subcommand("analyze", "Layer-wise eRank / TV / entropy report");
  analyze->add_option("--dump", ao.dump)->required()->check(CLI::ExistingFile);
  analyze->add_option("--out", ao.out, "Output directory");
  analyze->add_flag("--tv", ao.tv, "Require the unembedding block");
  analyze->add_option("--final-norm", ao.final_norm)
      ->check(CLI::IsMember({"unit_l2", "rms"}));
  analyze->add_option("--format", ao.format)
      ->check(CLI::IsMember({"json", "csv", "both"}));
  analyze->add_option("--seed", ao.seed, "Echoed into outputs");

  FlowOpts fo;
  auto* flow = app.add_subcommand("flow", "Simulate the projection gradient flow");
  add_source(flow, fo.src, 256, 32);
  flow->add_option("--dprime", fo.dprime)->check(CLI::PositiveNumber);
  flow->add_option("--init", fo.init)
      ->check(CLI::IsMember(
          {"all", "channel_select", "gaussian", "orthogonal"}));
  flow->add_option("--std", fo.stddev, "Gaussian init std")
      ->check(CLI::PositiveNumber);
  flow->add_option("--eta", fo.eta)->check(CLI::PositiveNumber);
  flow->add_option("--steps", fo.steps)->check(CLI::Range(1, 100000000));
  flow->add_option("--integrator", fo.integrator)
      ->check(CLI::IsMember({"euler", "rk4"}));
  flow->add_option("--record-every", fo.record_every)
      ->check(CLI::PositiveNumber);
  flow->add_option("--out", fo.out, "Output directory");
  flow->add_flag("!--no-checks", fo.checks, "Skip the flow property checks");
  flow->add_option("--seed", fo.seed);

  ProxyOpts po;
  auto* proxy = app.add_subcommand("proxy-train",
                                   "Train the linear autoencoder proxy");
  add_source(proxy, po.src, 512, 128);
  proxy->add_option("--dprime", po.dprime)->check(CLI::PositiveNumber);
  proxy->add_option("--init", po.init)
      ->check(CLI::IsMember(
          {"all", "channel_select", "gaussian", "orthogonal"}));
  proxy->add_option("--std", po.stddev)->check(CLI::PositiveNumber);
  proxy->add_option("--lr", po.lr)->check(CLI::PositiveNumber);
  proxy->add_option("--epochs", po.epochs)->check(CLI::Range(0, 100000000));
  proxy->add_option("--ortho-weight", po.ortho, "Orthogonal penalty weight")
      ->check(CLI::NonNegativeNumber);
  proxy->add_flag("--reprep", po.reprep,
                  "Re-preprocess XQ / XQO before measuring eRank");
  proxy->add_option("--out", po.out, "Output directory");
  proxy->add_option("--seed", po.seed);

  ImportanceOpts io;
  auto* imp = app.add_subcommand("importance", "Channel importance and top-D'");
  imp->add_option("--dump", io.dump)->required()->check(CLI::ExistingFile);
  imp->add_option("--strategy", io.strategy)
      ->check(CLI::IsMember({"mean_abs", "postnorm", "qr_pivot"}));
  imp->add_option("--dprime", io.dprime)->required()->check(CLI::PositiveNumber);
  imp->add_flag("--split-check", io.split_check,
                "Compare selections from the two halves of the sequences");
  imp->add_option("--out", io.out, "Output directory");
  imp->add_option("--seed", io.seed, "Echoed into outputs");

  MergeOpts mo;
  auto* merge = app.add_subcommand("width-merge",
                                   "Verify wrapped vs merged student blocks");
  merge->add_option("--weights", mo.weights, "EDAW weights file")
      ->check(CLI::ExistingFile);
  merge->add_option("--save-weights", mo.save_weights,
                    "Write the weights used to this path");
  merge->add_option("--dim", mo.dim)->check(CLI::Range(1, 4096));
  merge->add_option("--dprime", mo.dprime)->check(CLI::PositiveNumber);
  merge->add_option("--layers", mo.layers)->check(CLI::Range(1, 256));
  merge->add_option("--heads", mo.heads)->check(CLI::Range(1, 64));
  merge->add_option("--head-dim", mo.head_dim)->check(CLI::Range(1, 512));
  merge->add_option("--ffn-dim", mo.ffn_dim)->check(CLI::Range(1, 16384));
  merge->add_option("--tokens", mo.tokens)->check(CLI::Range(1, 4096));
  merge->add_option("--out", mo.out, "Output directory");
  merge->add_option("--seed", mo.seed);

  CheckOpts co;
  auto* check = app.add_subcommand("check", "Run the full self-check suite");
  check->add_option("--out", co.out, "Output directory");
  check->add_option("--seed", co.seed);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(so, synth);
    if (analyze->parsed()) return cmd_analyze(ao, analyze);
    if (flow->parsed()) return cmd_flow(fo, flow);
    if (proxy->parsed()) return cmd_proxy(po, proxy);
    if (imp->parsed()) return cmd_importance(io, imp);
    if (merge->parsed()) return cmd_merge(mo, merge);
    if (check->parsed()) return cmd_check(co, check);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace edistill::tools
