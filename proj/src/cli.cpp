#include "uml/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "uml/estimation.hpp"
#include "uml/io.hpp"
#include "uml/rng.hpp"

namespace uml::cli {

namespace fs = std::filesystem;

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---- small helpers --------------------------------------------------------------

template <typename F>
void parallel_for(std::size_t n, unsigned workers, F&& f) {
  workers = static_cast<unsigned>(std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i; (i = next++) < n;) f(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

const char* type_name(const Json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

bool type_compatible(const Json& def, const Json& val) {
  if (def.is_null()) return true;  // optional field, checked when read
  if (def.is_boolean()) return val.is_boolean();
  if (def.is_number_integer()) return val.is_number_integer();
  if (def.is_number()) return val.is_number();
  if (def.is_string()) return val.is_string();
  if (def.is_array()) return val.is_array();
  if (def.is_object()) return val.is_object();
  return false;
}

void overlay(Json& target, const Json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!target.contains(key)) {
      std::string allowed;
      for (const auto& [k, v] : target.items()) allowed += (allowed.empty() ? "" : ", ") + k;
      throw ConfigError("unknown config key '" + path + "' (allowed: " + allowed + ")");
    }
    Json& slot = target[key];
    if (!type_compatible(slot, value)) {
      throw ConfigError("config key '" + path + "' must be " + type_name(slot) + ", got " + type_name(value));
    }
    if (slot.is_object() && !slot.empty()) {
      overlay(slot, value, path);
    } else {
      slot = value;
    }
  }
}

template <typename T>
T get(const Json& cfg, const char* key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::optional<std::string> get_path(const Json& cfg, const char* key) {
  const Json& v = cfg.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string() || v.get<std::string>().empty()) throw ConfigError(std::string("config key '") + key + "' must be a path");
  return v.get<std::string>();
}

std::string digest_input(Outcome& out, const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("input file '" + path + "' does not exist");
  const std::string digest = sha256_file(path);
  out.input_digests[path] = digest;
  return digest;
}

std::string fmt(double v) { return format_double(v); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

AdamConfig adam_with_lr(double lr) {
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and > 0");
  AdamConfig a;
  a.lr = lr;
  return a;
}

// ---- defaults -----------------------------------------------------------------------

Json design_defaults() {
  return {{"d_c", 3}, {"d_x", 2}, {"d_y", 2}, {"x_rows", 8}, {"y_rows", 8}, {"x_slots", 1},
          {"y_slots", 1}, {"sigma_x", 0.3}, {"sigma_y", 0.3}};
}

Json supervised_task_defaults() {
  const SupervisedTaskOptions o;
  return {{"classes", o.classes},   {"latent_dim", o.latent_dim},       {"embed_x", o.embed_x},
          {"embed_y", o.embed_y},   {"shots_x", o.shots_x},             {"aux_per_class", o.aux_per_class},
          {"test_per_class", o.test_per_class}, {"share", o.share},     {"jitter_x", o.jitter_x},
          {"jitter_y", o.jitter_y}, {"noise", o.noise}};
}

Json ssl_task_defaults() {
  const SslTaskOptions o;
  return {{"classes", o.classes},
          {"latent_dim", o.latent_dim},
          {"embed_x", o.embed_x},
          {"embed_y", o.embed_y},
          {"length", o.length},
          {"train_x_per_class", o.train_x_per_class},
          {"train_y_per_class", o.train_y_per_class},
          {"test_x_per_class", o.test_x_per_class},
          {"rho", o.rho},
          {"drive", o.drive},
          {"noise", o.noise},
          {"share", o.share}};
}

// ---- typed readers --------------------------------------------------------------------

LinearDgpSpec design_spec(const Json& cfg, std::uint64_t seed) {
  LatentPartition p;
  p.d_c = get<Index>(cfg, "d_c");
  p.d_x = get<Index>(cfg, "d_x");
  p.d_y = get<Index>(cfg, "d_y");
  const Index xr = get<Index>(cfg, "x_rows");
  const Index yr = get<Index>(cfg, "y_rows");
  const Index xs = get<Index>(cfg, "x_slots");
  const Index ys = get<Index>(cfg, "y_slots");
  if (p.d_c < 1 || p.d_x < 0 || p.d_y < 0) throw ConfigError("latent dims must be d_c >= 1, d_x >= 0, d_y >= 0");
  if (xr < 1 || yr < 1 || xs < 1 || ys < 1) throw ConfigError("rows and slots must be >= 1");
  if (xr < p.d_c + p.d_x || yr < p.d_c + p.d_y) {
    throw ConfigError("orthogonal designs need x_rows >= d_c + d_x and y_rows >= d_c + d_y");
  }
  return make_orthogonal_spec(p, xr, yr, xs, ys, get<double>(cfg, "sigma_x"), get<double>(cfg, "sigma_y"),
                              derive_seed(seed, {stream::kSpec}));
}

SupervisedTaskOptions supervised_task_options(const Json& t) {
  SupervisedTaskOptions o;
  o.classes = get<Index>(t, "classes");
  o.latent_dim = get<Index>(t, "latent_dim");
  o.embed_x = get<Index>(t, "embed_x");
  o.embed_y = get<Index>(t, "embed_y");
  o.shots_x = get<Index>(t, "shots_x");
  o.aux_per_class = get<Index>(t, "aux_per_class");
  o.test_per_class = get<Index>(t, "test_per_class");
  o.share = get<double>(t, "share");
  o.jitter_x = get<double>(t, "jitter_x");
  o.jitter_y = get<double>(t, "jitter_y");
  o.noise = get<double>(t, "noise");
  return o;
}

SslTaskOptions ssl_task_options(const Json& t) {
  SslTaskOptions o;
  o.classes = get<Index>(t, "classes");
  o.latent_dim = get<Index>(t, "latent_dim");
  o.embed_x = get<Index>(t, "embed_x");
  o.embed_y = get<Index>(t, "embed_y");
  o.length = get<Index>(t, "length");
  o.train_x_per_class = get<Index>(t, "train_x_per_class");
  o.train_y_per_class = get<Index>(t, "train_y_per_class");
  o.test_x_per_class = get<Index>(t, "test_x_per_class");
  o.rho = get<double>(t, "rho");
  o.drive = get<double>(t, "drive");
  o.noise = get<double>(t, "noise");
  o.share = get<double>(t, "share");
  return o;
}

Index seed_count(const Json& cfg) {
  const Index n = get<Index>(cfg, "seeds");
  if (n < 1) throw ConfigError("seeds must be >= 1");
  return n;
}

// ---- subcommands -------------------------------------------------------------------

Outcome run_verify_theorems(const Json& cfg, std::uint64_t seed, unsigned workers) {
  EnsembleOptions opts;
  opts.configs = get<Index>(cfg, "configs");
  opts.orthogonal = get<bool>(cfg, "orthogonal");
  opts.seed = seed;
  opts.workers = workers;
  if (opts.configs < 1) throw ConfigError("configs must be >= 1");
  auto ids = get<std::vector<std::string>>(cfg, "theorems");
  const auto& known = theorem_ids();
  for (const auto& id : ids) {
    if (std::find(known.begin(), known.end(), id) == known.end()) throw ConfigError("unknown theorem id '" + id + "'");
  }
  if (ids.empty()) ids = known;

  Outcome out;
  CsvTable csv({"theorem_id", "configs", "passed", "precondition_unmet", "failures", "ok"});
  Json reports = Json::array();
  std::ostringstream table;
  table << std::left << std::setw(28) << "theorem" << std::right << std::setw(8) << "tested" << std::setw(8) << "passed"
        << std::setw(8) << "unmet" << std::setw(8) << "failed" << "\n";
  std::size_t total_failures = 0;
  for (const auto& id : ids) {
    const TheoremReport r = run_ensemble(id, opts);
    total_failures += r.failures.size();
    out.theorem_failure |= !r.ok();
    reports.push_back(to_json(r));
    csv.add_row({id, std::to_string(r.n_configs_tested), std::to_string(r.n_passed),
                  std::to_string(r.n_precondition_unmet), std::to_string(r.failures.size()), r.ok() ? "1" : "0"});
    table << std::left << std::setw(28) << id << std::right << std::setw(8) << r.n_configs_tested << std::setw(8)
          << r.n_passed << std::setw(8) << r.n_precondition_unmet << std::setw(8) << r.failures.size() << "\n";
  }
  out.metrics = {{"theorems", reports}, {"total_failures", total_failures}};
  out.files["theorems.csv"] = csv.str();
  out.summary = table.str();
  return out;
}

Outcome run_budget_sweep(const Json& cfg, std::uint64_t seed, unsigned workers) {
  const LinearDgpSpec spec = design_spec(cfg, seed);
  const Index total = get<Index>(cfg, "total_budget");
  const Index trials = get<Index>(cfg, "trials");
  const auto grid = get<std::vector<double>>(cfg, "grid");
  if (total < 1) throw ConfigError("total_budget must be >= 1");
  if (trials < 0 || trials == 1) throw ConfigError("trials must be 0 (no Monte-Carlo) or >= 2");
  const BudgetCurve curve = budget_sweep(spec, total, grid, derive_seed(seed, {stream::kTrial}), trials, workers);
  Outcome out;
  out.metrics = to_json(curve);
  out.metrics["spec_digest"] = spec_digest(spec);
  CsvTable csv({"fraction", "n_x", "n_y", "crlb_trace", "mc_trace", "flag"});
  std::ostringstream s;
  for (const auto& p : curve.points) {
    csv.add_row({fmt(p.fraction), std::to_string(p.n_x), std::to_string(p.n_y), fmt(p.crlb_trace),
                  p.mc_trace ? fmt(*p.mc_trace) : "", p.identifiable ? "ok" : "unidentifiable"});
    s << "f=" << fmt(p.fraction) << " n_x=" << p.n_x << " n_y=" << p.n_y << " crlb_trace=" << fmt(p.crlb_trace)
      << (p.identifiable ? "" : " (unidentifiable)") << "\n";
  }
  out.files["budget_sweep.csv"] = csv.str();
  out.summary = s.str();
  return out;
}

EstimatorMode mode_from_string(const std::string& s) {
  if (s == "x_only") return EstimatorMode::XOnly;
  if (s == "y_only") return EstimatorMode::YOnly;
  if (s == "joint") return EstimatorMode::Joint;
  throw ConfigError("mode must be x_only, y_only or joint, got '" + s + "'");
}

Outcome run_monte_carlo(const Json& cfg, std::uint64_t seed, unsigned workers) {
  const LinearDgpSpec spec = design_spec(cfg, seed);
  const EstimatorMode mode = mode_from_string(get<std::string>(cfg, "mode"));
  const Index n_x = get<Index>(cfg, "n_x");
  const Index n_y = get<Index>(cfg, "n_y");
  const Index trials = get<Index>(cfg, "trials");
  if (trials < 2) throw ConfigError("trials must be >= 2");
  if (n_x < 0 || n_y < 0) throw ConfigError("sample counts must be >= 0");
  const FisherBlocks info = fisher_info(spec, mode, n_x, n_y, true);
  const MatrixXd crlb = crlb_common(info, true);
  const MonteCarloResult mc = monte_carlo_cov(spec, mode, n_x, n_y, trials, derive_seed(seed, {stream::kTrial}), workers);
  const double rel = (mc.cov - crlb).norm() / crlb.norm();
  Outcome out;
  out.metrics = {{"mode", to_string(mode)},
                 {"n_x", n_x},
                 {"n_y", n_y},
                 {"trials", trials},
                 {"spec_digest", spec_digest(spec)},
                 {"frobenius_rel_error", rel},
                 {"mc_mean", vector_json(mc.mean)},
                 {"theta_c", vector_json(spec.theta_c())},
                 {"mc_cov", matrix_json(mc.cov)},
                 {"crlb", matrix_json(crlb)}};
  CsvTable csv({"i", "j", "mc_cov", "crlb"});
  for (Index i = 0; i < crlb.rows(); ++i) {
    for (Index j = 0; j < crlb.cols(); ++j) {
      csv.add_row({std::to_string(i), std::to_string(j), fmt(mc.cov(i, j)), fmt(crlb(i, j))});
    }
  }
  out.files["monte_carlo.csv"] = csv.str();
  out.summary = "Monte-Carlo vs CRLB Frobenius relative error: " + fmt(rel) + "\n";
  return out;
}

Outcome run_gaussian_exp(const Json& cfg, std::uint64_t seed, unsigned workers) {
  GaussianExpConfig g;
  const Json& s = cfg.at("spec");
  g.spec.d_c = get<Index>(s, "d_c");
  g.spec.d_x = get<Index>(s, "d_x");
  g.spec.d_y = get<Index>(s, "d_y");
  g.spec.obs_dim = get<Index>(s, "obs_dim");
  g.spec.noise_variance = get<double>(s, "noise_variance");
  g.spec.full_strength_fraction = get<double>(s, "full_strength_fraction");
  g.spec.attenuation = get<double>(s, "attenuation");
  g.spec.entry_scale = get<double>(s, "entry_scale");
  g.spec.shared_projection = get<bool>(s, "shared_projection");
  g.n_unimodal = get<Index>(cfg, "n_unimodal");
  g.n_joint_x = get<Index>(cfg, "n_joint_x");
  g.n_joint_y = get<Index>(cfg, "n_joint_y");
  g.n_validation = get<Index>(cfg, "n_validation");
  g.common_dim = get<Index>(cfg, "common_dim");
  g.hidden_dim = get<Index>(cfg, "hidden_dim");
  g.latent_dim = get<Index>(cfg, "latent_dim");
  g.epochs = get<Index>(cfg, "epochs");
  g.batch_size = get<Index>(cfg, "batch_size");
  g.adam = adam_with_lr(get<double>(cfg, "lr"));
  g.validate();
  const Index n = seed_count(cfg);

  std::vector<GaussianSeedResult> results(static_cast<std::size_t>(n));
  parallel_for(results.size(), workers, [&](std::size_t i) {
    results[i] = train_shared_autoencoder(g, seed + i);
    spdlog::info("gaussian-exp seed {}: unimodal {} joint {}", seed + i, results[i].unimodal.x_val_mse,
                 results[i].joint.x_val_mse);
  });

  Outcome out;
  CsvTable csv({"seed", "unimodal_x_val_mse", "joint_x_val_mse", "joint_lower"});
  Json per_seed = Json::array();
  std::vector<double> uni, joint;
  Index wins = 0;
  for (const auto& r : results) {
    uni.push_back(r.unimodal.x_val_mse);
    joint.push_back(r.joint.x_val_mse);
    const bool lower = r.joint.x_val_mse < r.unimodal.x_val_mse;
    wins += lower;
    per_seed.push_back({{"seed", r.seed},
                        {"unimodal_x_val_mse", r.unimodal.x_val_mse},
                        {"joint_x_val_mse", r.joint.x_val_mse},
                        {"joint_lower", lower},
                        {"unimodal", to_json(r.unimodal.report, true)},
                        {"joint", to_json(r.joint.report, true)}});
    csv.add_row({std::to_string(r.seed), fmt(r.unimodal.x_val_mse), fmt(r.joint.x_val_mse), lower ? "1" : "0"});
  }
  out.metrics = {{"seeds", per_seed},
                 {"mean_unimodal_x_val_mse", mean_of(uni)},
                 {"mean_joint_x_val_mse", mean_of(joint)},
                 {"joint_lower_count", wins}};
  out.files["gaussian_exp.csv"] = csv.str();
  out.summary = "joint lower on " + std::to_string(wins) + "/" + std::to_string(n) + " seeds; mean MSE unimodal " +
                fmt(mean_of(uni)) + ", joint " + fmt(mean_of(joint)) + "\n";
  return out;
}

LabeledData labeled_from_file(Outcome& out, const std::string& path) {
  digest_input(out, path);
  EmbeddingTable t = read_embeddings(path);
  if (!t.labels) throw ConfigError("embedding file '" + path + "' has no labels");
  return {std::move(t.rows), std::move(*t.labels)};
}

Outcome run_train_sup(const Json& cfg, std::uint64_t seed, unsigned workers) {
  TrainConfig tc;
  tc.lambda = get<double>(cfg, "lambda");
  tc.batch_ratio = get<double>(cfg, "batch_ratio");
  tc.epochs = get<Index>(cfg, "epochs");
  tc.batch_size = get<Index>(cfg, "batch_size");
  tc.curriculum_step = get<Index>(cfg, "curriculum_step");
  tc.head_init = head_init_from_string(get<std::string>(cfg, "head_init"));
  tc.freeze_adapter_x = get<bool>(cfg, "freeze_adapter_x");
  tc.freeze_adapter_y = get<bool>(cfg, "freeze_adapter_y");
  tc.adam = adam_with_lr(get<double>(cfg, "lr"));
  tc.validate();
  SupervisedArchitecture arch;
  arch.embed = get<Index>(cfg, "embed");
  arch.trunk_hidden = get<std::vector<Index>>(cfg, "trunk_hidden");
  const auto arms = get<std::vector<std::string>>(cfg, "arms");
  if (arms.empty()) throw ConfigError("arms must name at least one of unimodal, joint, shuffled");
  for (const auto& a : arms) {
    if (a != "unimodal" && a != "joint" && a != "shuffled") throw ConfigError("unknown arm '" + a + "'");
  }
  const Index n = seed_count(cfg);

  Outcome out;
  const Json& inputs = cfg.at("inputs");
  const auto train_x_path = get_path(inputs, "train_x");
  const auto test_x_path = get_path(inputs, "test_x");
  const auto train_y_path = get_path(inputs, "train_y");
  std::optional<SupervisedTask> from_files;
  if (train_x_path || test_x_path || train_y_path) {
    if (!train_x_path || !test_x_path) throw ConfigError("inputs need both train_x and test_x");
    SupervisedTask t;
    t.train_x = labeled_from_file(out, *train_x_path);
    t.test_x = labeled_from_file(out, *test_x_path);
    if (train_y_path) t.train_y = labeled_from_file(out, *train_y_path);
    if (t.test_x.x.cols() != t.train_x.x.cols()) throw ConfigError("train_x and test_x dims differ");
    int max_label = 0;
    for (const auto* d : {&t.train_x, &t.test_x, &t.train_y}) {
      for (int y : d->labels) max_label = std::max(max_label, y);
    }
    t.options.classes = max_label + 1;
    t.options.embed_x = t.train_x.x.cols();
    t.options.embed_y = train_y_path ? t.train_y.x.cols() : t.train_x.x.cols();
    from_files = std::move(t);
  }
  const SupervisedTaskOptions task_opts = supervised_task_options(cfg.at("task"));
  for (const auto& a : arms) {
    if (a != "unimodal" && from_files && !train_y_path) throw ConfigError("arm '" + a + "' needs inputs.train_y");
  }

  struct Job {
    Index seed_index;
    std::string arm;
    TrainReport report;
    SharedNet net;
    SupervisedTask task;
  };
  std::vector<Job> jobs;
  for (Index i = 0; i < n; ++i) {
    for (const auto& a : arms) jobs.push_back({i, a, {}, {}, {}});
  }
  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    Job& job = jobs[j];
    const std::uint64_t s = seed + static_cast<std::uint64_t>(job.seed_index);
    if (from_files) {
      job.task = *from_files;
      if (job.arm == "shuffled") {
        relabel_derangement(job.task.train_y.labels, job.task.options.classes, derive_seed(s, {stream::kData, 2}));
      }
    } else {
      job.task = make_supervised_task(s, task_opts, job.arm == "shuffled");
    }
    job.net = make_shared_net(supervised_shape(job.task, arch), s);
    TrainConfig c = tc;
    c.seed = s;
    job.report = train_supervised(job.net, job.task.train_x, job.arm == "unimodal" ? nullptr : &job.task.train_y,
                                  job.task.test_x, c);
    spdlog::info("train-sup seed {} arm {}: accuracy {}", s, job.arm, job.report.x_test_accuracy);
  });

  CsvTable csv({"seed", "arm", "x_test_accuracy", "final_x_loss", "parameter_digest"});
  Json runs = Json::array();
  std::map<std::string, std::vector<double>> acc;
  for (const auto& job : jobs) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(job.seed_index);
    Json r = to_json(job.report, true);
    r["seed"] = s;
    r["arm"] = job.arm;
    runs.push_back(r);
    acc[job.arm].push_back(job.report.x_test_accuracy);
    csv.add_row({std::to_string(s), job.arm, fmt(job.report.x_test_accuracy),
                 fmt(job.report.epochs.back().x), job.report.parameter_digest});
    if (job.seed_index == 0) {
      out.files[job.arm + "_head.umlw"] = weights_bytes(job.net.head_x);
      out.files[job.arm + "_head.umlw.json"] = architecture_json(job.net.head_x);
      out.files[job.arm + "_test_embeddings.emb"] =
          format_embeddings({embed(job.net, Modality::X, job.task.test_x.x), job.task.test_x.labels});
      if (job.arm != "unimodal") {
        out.files[job.arm + "_aux_embeddings.emb"] =
            format_embeddings({embed(job.net, Modality::Y, job.task.train_y.x), job.task.train_y.labels});
      }
    }
  }
  Json means = Json::object();
  std::ostringstream summary;
  for (const auto& a : arms) {
    means[a] = mean_of(acc[a]);
    summary << a << ": mean X test accuracy " << fmt(mean_of(acc[a])) << "\n";
  }
  out.metrics = {{"runs", runs}, {"mean_x_test_accuracy", means}};
  if (acc.count("unimodal") && acc.count("joint")) {
    out.metrics["joint_gain"] = mean_of(acc["joint"]) - mean_of(acc["unimodal"]);
  }
  if (acc.count("unimodal") && acc.count("shuffled")) {
    out.metrics["shuffled_gain"] = mean_of(acc["shuffled"]) - mean_of(acc["unimodal"]);
  }
  out.files["train_sup.csv"] = csv.str();
  out.summary = summary.str();
  return out;
}

Outcome run_train_ssl(const Json& cfg, std::uint64_t seed, unsigned workers) {
  SslConfig sc;
  sc.window = get<Index>(cfg, "window");
  sc.embed = get<Index>(cfg, "embed");
  sc.trunk_hidden = get<Index>(cfg, "trunk_hidden");
  sc.epochs = get<Index>(cfg, "epochs");
  sc.batch_size = get<Index>(cfg, "batch_size");
  sc.lambda = get<double>(cfg, "lambda");
  sc.adam = adam_with_lr(get<double>(cfg, "lr"));
  sc.validate();
  const Index probe_steps = get<Index>(cfg, "probe_steps");
  const double probe_lr = get<double>(cfg, "probe_lr");
  if (probe_steps < 1 || !(probe_lr > 0)) throw ConfigError("probe_steps must be >= 1 and probe_lr > 0");
  const SslTaskOptions task_opts = ssl_task_options(cfg.at("task"));
  const Index n = seed_count(cfg);

  struct Result {
    std::uint64_t seed = 0;
    SslReport uni, joint;
    double uni_probe = 0.0, joint_probe = 0.0;
  };
  std::vector<Result> results(static_cast<std::size_t>(n));
  parallel_for(results.size(), workers, [&](std::size_t i) {
    Result& r = results[i];
    r.seed = seed + i;
    const SslTask task = make_ssl_task(r.seed, task_opts);
    SslConfig c = sc;
    c.seed = r.seed;
    auto probe = [&](const SslModel& m) {
      return linear_probe_accuracy(ssl_representation(m, Modality::X, task.train_x.sequences), task.train_x.labels,
                                   ssl_representation(m, Modality::X, task.test_x.sequences), task.test_x.labels,
                                   r.seed, probe_steps, probe_lr);
    };
    SslModel mu = make_ssl_model(task_opts.embed_x, task_opts.embed_y, c);
    r.uni = train_ssl_shared_trunk(mu, task.train_x, nullptr, c);
    r.uni_probe = probe(mu);
    SslModel mj = make_ssl_model(task_opts.embed_x, task_opts.embed_y, c);
    r.joint = train_ssl_shared_trunk(mj, task.train_x, &task.train_y, c);
    r.joint_probe = probe(mj);
  });

  Outcome out;
  CsvTable csv({"seed", "arm", "probe_accuracy", "final_x_loss"});
  Json per_seed = Json::array();
  std::vector<double> uni, joint;
  for (const auto& r : results) {
    uni.push_back(r.uni_probe);
    joint.push_back(r.joint_probe);
    per_seed.push_back({{"seed", r.seed},
                        {"unimodal_probe_accuracy", r.uni_probe},
                        {"joint_probe_accuracy", r.joint_probe},
                        {"unimodal", to_json(r.uni, true)},
                        {"joint", to_json(r.joint, true)}});
    csv.add_row({std::to_string(r.seed), "unimodal", fmt(r.uni_probe), fmt(r.uni.epochs.back().x)});
    csv.add_row({std::to_string(r.seed), "joint", fmt(r.joint_probe), fmt(r.joint.epochs.back().x)});
  }
  out.metrics = {{"seeds", per_seed},
                 {"mean_unimodal_probe_accuracy", mean_of(uni)},
                 {"mean_joint_probe_accuracy", mean_of(joint)}};
  out.files["train_ssl.csv"] = csv.str();
  out.summary = "mean probe accuracy: unimodal " + fmt(mean_of(uni)) + ", joint " + fmt(mean_of(joint)) + "\n";
  return out;
}

Outcome run_analyze(const Json& cfg, std::uint64_t, unsigned) {
  const auto emb_path = get_path(cfg, "embeddings");
  const auto head_path = get_path(cfg, "head");
  if (!emb_path || !head_path) throw ConfigError("analyze needs 'embeddings' and 'head' paths");
  Outcome out;
  digest_input(out, *emb_path);
  digest_input(out, *head_path);
  const EmbeddingTable emb = read_embeddings(*emb_path);
  if (!emb.labels) throw ConfigError("embedding file '" + *emb_path + "' has no labels");
  const DenseNet net = load_weights(*head_path);
  if (net.layers.size() != 1) throw ConfigError("head file must hold a single linear layer");
  const ClassifierHead head{net.layers[0].weight, net.layers[0].bias};
  head.validate();
  if (head.dim() != emb.rows.cols()) throw ConfigError("embedding dim does not match the head input dim");
  const bool include_bias = get<bool>(cfg, "include_bias");
  const auto& labels = *emb.labels;

  CsvTable margins({"index", "label", "competitor", "margin"});
  std::vector<double> m;
  for (Index i = 0; i < emb.rows.rows(); ++i) {
    const auto r = functional_margin(head, emb.rows.row(i).transpose(), labels[static_cast<std::size_t>(i)], include_bias);
    m.push_back(r.margin);
    margins.add_row({std::to_string(i), std::to_string(labels[static_cast<std::size_t>(i)]),
                     std::to_string(r.competitor), fmt(r.margin)});
  }
  out.files["margins.csv"] = margins.str();
  const double sil = silhouette(emb.rows, labels);
  const DaviesBouldin db = davies_bouldin(emb.rows, labels);
  CsvTable cluster({"metric", "value", "flag"});
  cluster.add_row({"silhouette", fmt(sil), ""});
  cluster.add_row({"davies_bouldin", fmt(db.value), db.degenerate ? "degenerate" : ""});
  out.files["cluster.csv"] = cluster.str();
  out.metrics = {{"samples", emb.rows.rows()},
                 {"classes", head.classes()},
                 {"bias_included", include_bias},
                 {"mean_margin", mean_of(m)},
                 {"min_margin", *std::min_element(m.begin(), m.end())},
                 {"silhouette", sil},
                 {"davies_bouldin", to_json(db)}};

  if (const auto aux_path = get_path(cfg, "aux_embeddings")) {
    digest_input(out, *aux_path);
    const EmbeddingTable aux = read_embeddings(*aux_path);
    if (!aux.labels) throw ConfigError("aux embedding file '" + *aux_path + "' has no labels");
    if (aux.rows.cols() != head.dim()) throw ConfigError("aux embedding dim does not match the head");
    MatrixXd means = MatrixXd::Zero(head.classes(), head.dim());
    std::vector<Index> counts(static_cast<std::size_t>(head.classes()), 0);
    for (std::size_t i = 0; i < aux.labels->size(); ++i) {
      const int y = (*aux.labels)[i];
      if (y < 0 || y >= head.classes()) throw ConfigError("aux label " + std::to_string(y) + " out of range");
      means.row(y) += aux.rows.row(static_cast<Index>(i));
      ++counts[static_cast<std::size_t>(y)];
    }
    for (Index k = 0; k < head.classes(); ++k) {
      if (!counts[static_cast<std::size_t>(k)]) throw ConfigError("aux embeddings miss class " + std::to_string(k));
      means.row(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
    }
    const PrototypeAlignment pa = prototype_alignment(head, means);
    CsvTable proto({"class", "aux_class", "inner"});
    for (Index k = 0; k < pa.inner.rows(); ++k) {
      for (Index l = 0; l < pa.inner.cols(); ++l) proto.add_row({std::to_string(k), std::to_string(l), fmt(pa.inner(k, l))});
    }
    out.files["prototypes.csv"] = proto.str();
    out.metrics["prototype_dominance"] = pa.dominance;
  }

  const Json& pair = cfg.at("boundary_pair");
  if (!pair.is_null()) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() || !pair[1].is_number_integer()) {
      throw ConfigError("boundary_pair must be two class indices");
    }
    const BoundaryProjection bp = boundary_projection(head, emb.rows, labels, pair[0].get<int>(), pair[1].get<int>());
    CsvTable b({"index", "label", "axis1", "axis2"});
    for (Index i = 0; i < bp.coords.rows(); ++i) {
      b.add_row({std::to_string(i), std::to_string(labels[static_cast<std::size_t>(i)]), fmt(bp.coords(i, 0)),
                 fmt(bp.coords(i, 1))});
    }
    out.files["boundary.csv"] = b.str();
    out.metrics["boundary_axes_dot"] = bp.axis1.dot(bp.axis2);
  }

  const auto av = get_path(cfg, "activations_v");
  const auto at = get_path(cfg, "activations_t");
  if (av.has_value() != at.has_value()) throw ConfigError("activations_v and activations_t go together");
  if (av) {
    digest_input(out, *av);
    digest_input(out, *at);
    const EmbeddingTable v = read_embeddings(*av);
    const EmbeddingTable t = read_embeddings(*at);
    if (!v.labels) throw ConfigError("activation file '" + *av + "' has no labels");
    const auto nc = neuron_correlations(v.rows, t.rows, *v.labels);
    CsvTable csv({"neuron", "label", "r", "undefined", "count"});
    Index undefined = 0;
    std::vector<double> rs;
    for (const auto& c : nc) {
      csv.add_row({std::to_string(c.neuron), "all", fmt(c.overall), c.overall_undefined ? "1" : "0",
                   std::to_string(v.rows.rows())});
      for (const auto& [label, r] : c.per_label) {
        csv.add_row({std::to_string(c.neuron), std::to_string(label), fmt(r), c.per_label_undefined.at(label) ? "1" : "0",
                     std::to_string(c.counts.at(label))});
      }
      undefined += c.overall_undefined;
      rs.push_back(c.overall);
    }
    out.files["neurons.csv"] = csv.str();
    out.metrics["neurons"] = {{"count", nc.size()}, {"mean_r", mean_of(rs)}, {"undefined", undefined},
                              {"pairing", "index-matched rows"}};
  }
  out.summary = "mean margin " + fmt(mean_of(m)) + ", silhouette " + fmt(sil) + ", Davies-Bouldin " + fmt(db.value) +
                (db.degenerate ? " (degenerate)" : "") + "\n";
  return out;
}

Outcome run_mrs_fit(const Json& cfg, std::uint64_t, unsigned) {
  const auto input = get_path(cfg, "input");
  if (!input) throw ConfigError("mrs-fit needs an 'input' CSV path");
  const Json& words = cfg.at("mean_words_per_text");
  std::optional<double> mean_words;
  if (!words.is_null()) {
    if (!words.is_number()) throw ConfigError("mean_words_per_text must be a number");
    mean_words = words.get<double>();
  }
  Outcome out;
  digest_input(out, *input);
  const NumericCsv csv = parse_numeric_csv(read_text_file(*input));
  auto column = [&](const std::string& name) {
    const auto it = std::find(csv.header.begin(), csv.header.end(), name);
    if (it == csv.header.end()) throw ConfigError("CSV '" + *input + "' lacks a '" + name + "' column");
    return static_cast<std::size_t>(it - csv.header.begin());
  };
  const std::size_t ci = column("img_shots"), ct = column("txt_shots"), ca = column("accuracy");
  std::vector<ShotPoint> points;
  for (const auto& row : csv.rows) points.push_back({row[ci], row[ct], row[ca]});
  const MrsFit fit = mrs_plane_fit(points, mean_words);
  out.metrics = to_json(fit);
  out.metrics["points"] = points.size();
  out.files["mrs_fit.json"] = to_json(fit).dump(2) + "\n";
  out.summary = fit.texts_per_image ? "texts per image: " + fmt(*fit.texts_per_image) + "\n"
                                    : std::string("texts per image: unbounded (alpha_txt indistinguishable from 0)\n");
  return out;
}

// ---- report + driver ------------------------------------------------------------------

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string outdir = "uml_out";
  std::string config_path;
  unsigned workers = 1;
  std::string replay_path;
};

void write_outputs(const fs::path& outdir, const Outcome& outcome, const Json& report) {
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec) throw Error("cannot create output directory '" + outdir.string() + "': " + ec.message());
  for (const auto& [name, bytes] : outcome.files) write_text_file(outdir / name, bytes);
  write_text_file(outdir / "report.json", report.dump(2) + "\n");
}

Json make_report(const std::string& sub, const Json& config, const GlobalOptions& g, const Outcome& outcome,
                 const std::string& started) {
  Json files = Json::array();
  for (const auto& [name, bytes] : outcome.files) files.push_back(name);
  return {{"tool", "uml_lab"},
          {"version", kVersion},
          {"subcommand", sub},
          {"seed", g.seed},
          {"workers", g.workers},
          {"config", config},
          {"input_digests", outcome.input_digests},
          {"started_at", started},
          {"finished_at", utc_now()},
          {"files", files},
          {"metrics", outcome.metrics}};
}

int finish(const std::string& sub, const Json& config, const GlobalOptions& g, const Outcome& outcome,
           const std::string& started) {
  const Json report = make_report(sub, config, g, outcome, started);
  write_outputs(g.outdir, outcome, report);
  std::cout << outcome.summary;
  spdlog::info("wrote {}", (fs::path(g.outdir) / "report.json").string());
  return outcome.theorem_failure ? kTheoremFailure : kOk;
}

int replay(const GlobalOptions& g) {
  if (!fs::is_regular_file(g.replay_path)) throw ConfigError("cannot read replay file '" + g.replay_path + "'");
  const Json stored = Json::parse(read_text_file(g.replay_path), nullptr, false);
  if (stored.is_discarded() || !stored.is_object()) throw ConfigError("replay file '" + g.replay_path + "' is not JSON");
  for (const char* key : {"subcommand", "config", "seed", "metrics", "input_digests"}) {
    if (!stored.contains(key)) throw ConfigError(std::string("replay file lacks '") + key + "'");
  }
  const std::string sub = stored["subcommand"].get<std::string>();
  const Json config = resolve_config(sub, stored["config"]);
  GlobalOptions run = g;
  run.seed = stored["seed"].get<std::uint64_t>();
  const std::string started = utc_now();
  const Outcome outcome = execute(sub, config, run.seed, run.workers);
  if (outcome.input_digests != stored["input_digests"]) {
    throw ConfigError("inputs changed since the report was written; digests differ");
  }
  const bool same = Json::parse(outcome.metrics.dump()) == stored["metrics"];
  finish(sub, config, run, outcome, started);
  if (!same) {
    std::cerr << "replay: metrics differ from " << g.replay_path << "\n";
    return kInternalError;
  }
  std::cout << "replay: metrics identical to " << g.replay_path << "\n";
  return outcome.theorem_failure ? kTheoremFailure : kOk;
}

void setup_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_color_mt("uml_lab");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("UML_LAB_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      spdlog::warn("UML_LAB_LOG='{}' is not a log level; keeping warn", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"verify-theorems", "budget-sweep", "monte-carlo", "gaussian-exp",
                                                 "train-sup",       "train-ssl",    "analyze",     "mrs-fit"};
  return names;
}

Json default_config(const std::string& sub) {
  Json c = {{"schema_version", kSchemaVersion}};
  if (sub == "verify-theorems") {
    c.update(Json{{"configs", 500}, {"orthogonal", true}, {"theorems", Json::array()}});
  } else if (sub == "budget-sweep") {
    c.update(design_defaults());
    c.update(Json{{"total_budget", 100},
                  {"grid", {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}},
                  {"trials", 0}});
  } else if (sub == "monte-carlo") {
    c.update(design_defaults());
    c.update(Json{{"mode", "joint"}, {"n_x", 4}, {"n_y", 4}, {"trials", 20000}});
  } else if (sub == "gaussian-exp") {
    const GaussianExpConfig g;
    c.update(Json{{"seeds", 5},
                  {"epochs", g.epochs},
                  {"batch_size", g.batch_size},
                  {"n_unimodal", g.n_unimodal},
                  {"n_joint_x", g.n_joint_x},
                  {"n_joint_y", g.n_joint_y},
                  {"n_validation", g.n_validation},
                  {"common_dim", g.common_dim},
                  {"hidden_dim", g.hidden_dim},
                  {"latent_dim", g.latent_dim},
                  {"lr", g.adam.lr},
                  {"spec",
                   {{"d_c", g.spec.d_c},
                    {"d_x", g.spec.d_x},
                    {"d_y", g.spec.d_y},
                    {"obs_dim", g.spec.obs_dim},
                    {"noise_variance", g.spec.noise_variance},
                    {"full_strength_fraction", g.spec.full_strength_fraction},
                    {"attenuation", g.spec.attenuation},
                    {"entry_scale", g.spec.entry_scale},
                    {"shared_projection", g.spec.shared_projection}}}});
  } else if (sub == "train-sup") {
    const TrainConfig t;
    const SupervisedArchitecture a;
    c.update(Json{{"seeds", 5},
                  {"arms", {"unimodal", "joint", "shuffled"}},
                  {"lambda", t.lambda},
                  {"batch_ratio", t.batch_ratio},
                  {"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"curriculum_step", t.curriculum_step},
                  {"head_init", to_string(t.head_init)},
                  {"freeze_adapter_x", t.freeze_adapter_x},
                  {"freeze_adapter_y", t.freeze_adapter_y},
                  {"lr", t.adam.lr},
                  {"embed", a.embed},
                  {"trunk_hidden", Json::array()},
                  {"task", supervised_task_defaults()},
                  {"inputs", {{"train_x", nullptr}, {"test_x", nullptr}, {"train_y", nullptr}}}});
  } else if (sub == "train-ssl") {
    const SslConfig s;
    c.update(Json{{"seeds", 5},
                  {"window", s.window},
                  {"embed", s.embed},
                  {"trunk_hidden", s.trunk_hidden},
                  {"epochs", s.epochs},
                  {"batch_size", s.batch_size},
                  {"lambda", s.lambda},
                  {"lr", s.adam.lr},
                  {"probe_steps", 500},
                  {"probe_lr", 0.05},
                  {"task", ssl_task_defaults()}});
  } else if (sub == "analyze") {
    c.update(Json{{"embeddings", nullptr},
                  {"head", nullptr},
                  {"aux_embeddings", nullptr},
                  {"activations_v", nullptr},
                  {"activations_t", nullptr},
                  {"boundary_pair", nullptr},
                  {"include_bias", true}});
  } else if (sub == "mrs-fit") {
    c.update(Json{{"input", nullptr}, {"mean_words_per_text", nullptr}});
  } else {
    throw ConfigError("unknown subcommand '" + sub + "'");
  }
  return c;
}

Json resolve_config(const std::string& sub, const Json& user) {
  Json c = default_config(sub);
  overlay(c, user, "");
  if (c["schema_version"] != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + c["schema_version"].dump() + " (this tool reads version " +
                      std::to_string(kSchemaVersion) + ")");
  }
  return c;
}

Outcome execute(const std::string& sub, const Json& config, std::uint64_t seed, unsigned workers) {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (sub == "verify-theorems") return run_verify_theorems(config, seed, workers);
  if (sub == "budget-sweep") return run_budget_sweep(config, seed, workers);
  if (sub == "monte-carlo") return run_monte_carlo(config, seed, workers);
  if (sub == "gaussian-exp") return run_gaussian_exp(config, seed, workers);
  if (sub == "train-sup") return run_train_sup(config, seed, workers);
  if (sub == "train-ssl") return run_train_ssl(config, seed, workers);
  if (sub == "analyze") return run_analyze(config, seed, workers);
  if (sub == "mrs-fit") return run_mrs_fit(config, seed, workers);
  throw ConfigError("unknown subcommand '" + sub + "'");
}

int run(const std::vector<std::string>& args) {
  setup_logging();
  CLI::App app{"Unpaired multimodal learning lab", "uml_lab"};
  app.set_version_flag("--version", kVersion);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Base seed")->capture_default_str();
  app.add_option("--outdir", g.outdir, "Output directory")->capture_default_str();
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--workers", g.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--replay", g.replay_path, "Re-run a report.json and compare its metrics");

  // Flag overrides, applied on top of the config file.
  std::optional<Index> configs, seeds, epochs, trials, total;
  bool non_orthogonal = false;
  std::optional<std::string> embeddings, head, aux, input;
  std::optional<double> words;
  std::map<std::string, CLI::App*> subs;
  static const std::map<std::string, std::string> help = {
      {"verify-theorems", "Check every variance statement on randomized design ensembles"},
      {"budget-sweep", "Profile CRLB trace across X/Y splits of a fixed sample budget"},
      {"monte-carlo", "Monte-Carlo covariance of the common-factor estimate against the CRLB"},
      {"gaussian-exp", "Shared autoencoder on attenuated Gaussian data, unimodal vs joint"},
      {"train-sup", "Supervised shared-head training with unimodal, joint and shuffled arms"},
      {"train-ssl", "Next-step self-supervised shared trunk with a linear probe"},
      {"analyze", "Margins, cluster quality, prototypes, boundary and neuron correlations"},
      {"mrs-fit", "Plane fit of accuracy over log shots and the modality exchange rate"}};
  for (const auto& name : subcommands()) {
    auto* s = app.add_subcommand(name, help.at(name));
    s->fallthrough();
    subs[name] = s;
  }
  subs["verify-theorems"]->add_option("--configs", configs, "Configurations per statement");
  subs["verify-theorems"]->add_flag("--non-orthogonal", non_orthogonal, "Use non-orthogonal designs");
  subs["budget-sweep"]->add_option("--trials", trials, "Monte-Carlo trials per point (0 skips)");
  subs["budget-sweep"]->add_option("--total", total, "Total sample budget");
  subs["monte-carlo"]->add_option("--trials", trials, "Monte-Carlo trials");
  for (const char* name : {"gaussian-exp", "train-sup", "train-ssl"}) {
    subs[name]->add_option("--seeds", seeds, "Number of seeds");
    subs[name]->add_option("--epochs", epochs, "Training epochs");
  }
  subs["analyze"]->add_option("--embeddings", embeddings, "Labelled embedding file (uml-emb v1)");
  subs["analyze"]->add_option("--head", head, "Classifier head weights (UMLW)");
  subs["analyze"]->add_option("--aux-embeddings", aux, "Labelled auxiliary embeddings");
  subs["mrs-fit"]->add_option("--input", input, "CSV with img_shots, txt_shots, accuracy");
  subs["mrs-fit"]->add_option("--words-per-text", words, "Mean words per text");
  app.require_subcommand(0, 1);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  }

  try {
    if (!g.replay_path.empty()) {
      if (!app.get_subcommands().empty() || !g.config_path.empty()) {
        throw ConfigError("--replay takes its subcommand and config from the report; drop the others");
      }
      return replay(g);
    }
    if (app.get_subcommands().empty()) {
      throw ConfigError("no subcommand given (choose one of: verify-theorems, budget-sweep, monte-carlo, gaussian-exp, "
                        "train-sup, train-ssl, analyze, mrs-fit)");
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    Json user = Json::object();
    if (!g.config_path.empty()) {
      if (!fs::is_regular_file(g.config_path)) throw ConfigError("cannot read config '" + g.config_path + "'");
      const std::string text = read_text_file(g.config_path);
      user = Json::parse(text, nullptr, false);
      if (user.is_discarded()) throw ConfigError("config '" + g.config_path + "' is not valid JSON");
    }
    if (configs) user["configs"] = *configs;
    if (non_orthogonal) user["orthogonal"] = false;
    if (trials) user["trials"] = *trials;
    if (total) user["total_budget"] = *total;
    if (seeds) user["seeds"] = *seeds;
    if (epochs) user["epochs"] = *epochs;
    if (embeddings) user["embeddings"] = *embeddings;
    if (head) user["head"] = *head;
    if (aux) user["aux_embeddings"] = *aux;
    if (input) user["input"] = *input;
    if (words) user["mean_words_per_text"] = *words;
    const Json config = resolve_config(sub, user);
    const std::string started = utc_now();
    const Outcome outcome = execute(sub, config, g.seed, g.workers);
    return finish(sub, config, g, outcome, started);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}

}  // namespace uml::cli
