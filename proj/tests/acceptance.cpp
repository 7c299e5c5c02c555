// Acceptance suite: one [PASS]/[FAIL] line per criterion.
//
// Exit status is 0 when the set of failing criteria equals the set passed
// with --expect-red (empty by default), so a known red criterion stays
// visible without breaking the build.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "uml/analysis.hpp"
#include "uml/cli.hpp"
#include "uml/dgp.hpp"
#include "uml/estimation.hpp"
#include "uml/io.hpp"
#include "uml/neural.hpp"
#include "uml/rng.hpp"
#include "uml/theorems.hpp"
#include "uml/train.hpp"

using namespace uml;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

// Swallows stdout for the lifetime of the object.
class QuietStdout {
 public:
  QuietStdout() : saved_(std::cout.rdbuf(sink_.rdbuf())) {}
  ~QuietStdout() { std::cout.rdbuf(saved_); }
  QuietStdout(const QuietStdout&) = delete;
  QuietStdout& operator=(const QuietStdout&) = delete;

 private:
  std::ostringstream sink_;
  std::streambuf* saved_;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ---- 1: theorem ensembles -------------------------------------------------------------

void criterion_theorems(Verdict& v) {
  const auto t0 = Clock::now();
  EnsembleOptions o;
  o.configs = 500;
  o.orthogonal = true;
  const auto reports = verify_theorems(o);
  const double secs = seconds_since(t0);
  Index violations = 0, min_configs = std::numeric_limits<Index>::max(), min_passed = min_configs;
  for (const auto& r : reports) {
    violations += static_cast<Index>(r.failures.size());
    min_configs = std::min(min_configs, r.n_configs_tested);
    min_passed = std::min(min_passed, r.n_passed);
    v.require(r.ok(), r.theorem_id + " not clean");
  }
  v.require(reports.size() == theorem_ids().size(), "every statement checked");
  v.require(min_configs >= 500, ">= 500 configs per statement");
  v.require(violations == 0, "zero violations");
  v.require(secs < 60.0, "runtime < 60 s");
  v.detail << reports.size() << " statements, >= " << min_configs << " configs each (>= " << min_passed
           << " with premises met), " << violations << " violations, " << num(secs, 3) << " s";
}

// ---- 2: Monte-Carlo covariance vs profile bound ------------------------------------------

void criterion_crlb(Verdict& v) {
  const auto t0 = Clock::now();
  Rng draw(2024);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    LatentPartition p{draw.integer(2, 4), draw.integer(1, 3), draw.integer(1, 3)};
    const Index m = p.d_c + p.d_x + draw.integer(0, 3);
    const Index n = p.d_c + p.d_y + draw.integer(0, 3);
    const Index slots_x = draw.integer(1, 2), slots_y = draw.integer(1, 2);
    const Index n_x = draw.integer(2, 6), n_y = draw.integer(2, 6);
    const auto spec = make_orthogonal_spec(p, m, n, slots_x, slots_y, 0.3, 0.3, 100 + static_cast<std::uint64_t>(k));
    const MatrixXd crlb = crlb_common(fisher_info(spec, EstimatorMode::Joint, n_x, n_y, true), true);
    const auto mc = monte_carlo_cov(spec, EstimatorMode::Joint, n_x, n_y, 20000, 500 + static_cast<std::uint64_t>(k));
    const double rel = (mc.cov - crlb).norm() / crlb.norm();
    worst = std::max(worst, rel);
    v.require(rel <= 0.05, "spec " + std::to_string(k) + " rel error " + num(rel));
  }
  const double secs = seconds_since(t0);
  v.require(secs < 300.0, "runtime < 5 min");
  v.detail << "10 specs x 20000 trials, sigma 0.3, worst Frobenius rel error " << num(worst, 3) << ", " << num(secs, 3)
           << " s";
}

// ---- 3: contraction factor --------------------------------------------------------------

void criterion_contraction(Verdict& v) {
  const std::pair<double, double> cases[] = {{1, 1}, {3, 1}, {1, 9}};
  const Index trials = 20000;
  std::ostringstream parts;
  int idx = 0;
  for (const auto& [a, b] : cases) {
    const VectorXd av = (VectorXd(3) << a, 2.0, 0.5).finished();
    const VectorXd bv = (VectorXd(3) << b, 1.0, 3.0).finished();
    MatrixXd q;
    const auto spec = make_common_eigen_spec(av, bv, 2, 1, 0.3, 30 + static_cast<std::uint64_t>(idx), &q);
    const VectorXd dir = q.col(0);
    const double target = a / (a + b);

    const MatrixXd cc_x = fisher_info(spec, EstimatorMode::XOnly, 1, 0, false).cc();
    const MatrixXd cc_y = fisher_info(spec, EstimatorMode::YOnly, 0, 1, false).cc();
    const double analytic = realized_contraction(cc_x, cc_y, dir);
    v.require(std::abs(analytic - target) <= 1e-10, "analytic ratio for (" + num(a) + "," + num(b) + ")");
    v.require(std::abs(contraction_factor(a, b) - target) <= 1e-15, "closed form");

    const auto mx = monte_carlo_cov(spec, EstimatorMode::XOnly, 1, 0, trials, 700 + static_cast<std::uint64_t>(idx));
    const auto mj = monte_carlo_cov(spec, EstimatorMode::Joint, 1, 1, trials, 800 + static_cast<std::uint64_t>(idx));
    const double ratio = dir.dot(mj.cov * dir) / dir.dot(mx.cov * dir);
    // Ratio of two independent Gaussian sample variances: relative sd ~ sqrt(4 / (T - 1)).
    const double sd = target * std::sqrt(4.0 / static_cast<double>(trials - 1));
    v.require(std::abs(ratio - target) <= 3.0 * sd, "MC ratio for (" + num(a) + "," + num(b) + ") = " + num(ratio));
    parts << (idx ? "; " : "") << "(" << a << "," << b << "): target " << num(target) << ", analytic err "
          << num(std::abs(analytic - target), 2) << ", MC " << num(ratio) << " (3sd " << num(3 * sd, 2) << ")";
    ++idx;
  }
  v.detail << parts.str();
}

// ---- 4: rescue ----------------------------------------------------------------------

void criterion_rescue(Verdict& v) {
  LinearDgpSpec spec;
  spec.partition = {2, 1, 1};
  spec.theta_true = (VectorXd(4) << 0.5, -1.0, 2.0, 0.3).finished();
  spec.sigma_x = spec.sigma_y = 0.3;
  // X sees only the first common coordinate; Y sees both.
  spec.x_designs.push_back({(MatrixXd(2, 2) << 1, 0, 0, 0).finished(), (MatrixXd(2, 1) << 0, 1).finished()});
  spec.y_designs.push_back(
      {(MatrixXd(3, 2) << 1, 0, 0, 1, 0, 0).finished(), (MatrixXd(3, 1) << 0, 0, 1).finished()});
  validate(spec);
  const VectorXd dir = (VectorXd(2) << 0, 1).finished();

  const auto fx = fisher_info(spec, EstimatorMode::XOnly, 10, 0, true);
  const auto fj = fisher_info(spec, EstimatorMode::Joint, 10, 10, true);
  const auto fy = fisher_info(spec, EstimatorMode::YOnly, 0, 10, true);
  const MatrixXd b_c = spec.y_designs[0].b_c;
  v.require((b_c * dir).norm() > 0, "B_c v != 0");
  v.require(check_rescue_blocks(fx.cc(), fy.cc(), dir).status == CheckStatus::Passed, "rescue check passes");

  const auto var_x = directional_variance(profile_information(fx), dir);
  const auto var_j = directional_variance(profile_information(fj), dir);
  v.require(!var_x.finite, "X-only variance along v is infinite");
  v.require(var_j.finite && std::isfinite(var_j.value) && var_j.value > 0, "joint variance along v is finite");

  const auto data = sample_datasets(spec, 10, 10, 42);
  const auto ex = estimate_x_only(data.x, spec);
  const auto ej = estimate_joint(data.x, data.y, spec);
  const bool x_flag_unidentifiable = !ex.theta_c_identifiable() && !ex.identifiable_mask[1];
  v.require(x_flag_unidentifiable, "X-only estimator flags theta_c unidentifiable");
  v.require(ex.identifiable_mask[0], "first common coordinate stays identifiable from X");
  v.require(ej.theta_c_identifiable(), "joint estimator identifies theta_c");
  const double joint_dir_var = dir.dot(ej.cov_cc * dir);
  v.require(std::isfinite(joint_dir_var) && ej.cov_cc.allFinite(), "joint covariance finite");
  v.detail << "X-only flag: " << (x_flag_unidentifiable ? "unidentifiable" : "identifiable")
           << ", joint variance along v " << num(var_j.value) << " (estimator " << num(joint_dir_var) << ")";
}

// ---- 5: shared autoencoder ----------------------------------------------------------

void criterion_autoencoder(Verdict& v) {
  const auto t0 = Clock::now();
  const auto cfg = cli::resolve_config("gaussian-exp", Json::object());
  const auto out = cli::execute("gaussian-exp", cfg, 0, 1);
  const double secs = seconds_since(t0);
  const Index wins = out.metrics["joint_lower_count"].get<Index>();
  const double uni = out.metrics["mean_unimodal_x_val_mse"].get<double>();
  const double joint = out.metrics["mean_joint_x_val_mse"].get<double>();
  v.require(wins >= 4, "joint lower on >= 4/5 seeds");
  v.require(joint < uni, "joint lower in the mean");
  v.require(secs < 600.0, "runtime < 10 min");
  v.detail << "joint lower on " << wins << "/5 seeds; mean X val MSE unimodal " << num(uni, 5) << ", joint "
           << num(joint, 5) << ", " << num(secs, 3) << " s";
}

// ---- 6-8: supervised task -------------------------------------------------------------

struct SupervisedSummary {
  double unimodal = 0.0;
  double joint = 0.0;
  double shuffled = 0.0;
};

SupervisedSummary& supervised_summary() {
  static SupervisedSummary s = [] {
    const auto out = cli::execute("train-sup", cli::resolve_config("train-sup", Json::object()), 0, 1);
    const Json& m = out.metrics["mean_x_test_accuracy"];
    return SupervisedSummary{m["unimodal"].get<double>(), m["joint"].get<double>(), m["shuffled"].get<double>()};
  }();
  return s;
}

void criterion_supervised_gain(Verdict& v) {
  const auto& s = supervised_summary();
  const double gain = s.joint - s.unimodal;
  v.require(gain >= 2.0, "joint gain >= 2 points");

  // lambda = 0 with auxiliary data present against a run without it.
  const auto task = make_supervised_task(0, SupervisedTaskOptions{});
  TrainConfig c;
  c.seed = 0;
  SharedNet uni_net = make_shared_net(supervised_shape(task), 0);
  const auto uni = train_supervised(uni_net, task.train_x, nullptr, task.test_x, c);
  c.lambda = 0.0;
  SharedNet zero_net = make_shared_net(supervised_shape(task), 0);
  const auto zero = train_supervised(zero_net, task.train_x, &task.train_y, task.test_x, c);
  bool same_losses = uni.epochs.size() == zero.epochs.size();
  for (std::size_t e = 0; same_losses && e < uni.epochs.size(); ++e) {
    same_losses = uni.epochs[e].x == zero.epochs[e].x && zero.epochs[e].y_batches == 0;
  }
  const bool bitwise = same_losses && uni.parameter_digest == zero.parameter_digest &&
                       uni.schedule_digest == zero.schedule_digest && uni.x_test_accuracy == zero.x_test_accuracy;
  v.require(bitwise, "lambda = 0 reproduces the unimodal trajectory bitwise");
  v.detail << "mean X test accuracy over 5 seeds: unimodal " << num(s.unimodal) << ", joint " << num(s.joint)
           << " (gain " << num(gain, 3) << " points); lambda=0 bitwise: " << (bitwise ? "yes" : "no");
}

void criterion_shuffled(Verdict& v) {
  const auto& s = supervised_summary();
  const double shuffled_gain = s.shuffled - s.unimodal;
  const double gain = s.joint - s.unimodal;
  v.require(std::abs(shuffled_gain) <= 1.0, "shuffled within +-1 point of unimodal");
  v.require(gain >= 2.0, "related auxiliary data still shows the gain");
  v.detail << "shuffled " << num(s.shuffled) << " vs unimodal " << num(s.unimodal) << " (diff "
           << num(shuffled_gain, 3) << "); related gain " << num(gain, 3);
}

void criterion_batch_ratio(Verdict& v) {
  std::vector<double> acc;
  std::ostringstream parts;
  for (double r : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    Json user = {{"arms", {"joint"}}, {"batch_ratio", r}};
    const auto out = cli::execute("train-sup", cli::resolve_config("train-sup", user), 0, 1);
    acc.push_back(out.metrics["mean_x_test_accuracy"]["joint"].get<double>());
    parts << (acc.size() > 1 ? ", " : "") << "r=" << r << ": " << num(acc.back());
  }
  const double spread = *std::max_element(acc.begin(), acc.end()) - *std::min_element(acc.begin(), acc.end());
  v.require(spread <= 2.0, "spread <= 2 points");
  v.detail << parts.str() << "; spread " << num(spread, 3) << " points";
}

// ---- 9: gradient checks ---------------------------------------------------------------

void criterion_gradients(Verdict& v) {
  Rng rng(99);
  std::ostringstream parts;
  auto record = [&](const std::string& name, const GradCheckResult& r) {
    v.require(r.checked >= 100, name + " checked >= 100");
    v.require(r.max_rel_error <= 1e-5, name + " rel error " + num(r.max_rel_error, 3));
    parts << (parts.tellp() > 0 ? "; " : "") << name << " " << num(r.max_rel_error, 2) << " (" << r.checked << " checked, "
          << r.skipped_kinks << " at kinks)";
  };

  {
    const auto task = make_supervised_task(1, SupervisedTaskOptions{});
    for (const SupervisedArchitecture& arch : {SupervisedArchitecture{}, SupervisedArchitecture{32, {48}}}) {
      SharedNet net = make_shared_net(supervised_shape(task, arch), 2);
      for (Modality m : {Modality::X, Modality::Y}) {
        const auto& data = m == Modality::X ? task.train_x : task.train_y;
        const MatrixXd x = data.x.topRows(std::min<Index>(12, data.x.rows()));
        const std::vector<int> y(data.labels.begin(), data.labels.begin() + x.rows());
        const auto g = classification_loss(net, m, x, y).grads;
        const NetGrad& adapter = m == Modality::X ? g.adapter_x : g.adapter_y;
        auto loss = [&] { return classification_loss(net, m, x, y).value; };
        record(std::string("supervised") + (arch.trunk_hidden.empty() ? "" : "+hidden") + "/" + to_string(m),
               gradient_check({{&net.adapter_for(m), &adapter}, {&net.trunk, &g.trunk}, {&net.head_x, &g.head_x}},
                              loss, 150, rng));
      }
    }
  }
  {
    const GaussianExpConfig cfg;
    SharedNet net = make_shared_net(autoencoder_shape(cfg), 3);
    const MatrixXd x = rng.normal_matrix(8, cfg.spec.obs_dim);
    for (Modality m : {Modality::X, Modality::Y}) {
      const auto g = reconstruction_loss(net, m, x).grads;
      const NetGrad& adapter = m == Modality::X ? g.adapter_x : g.adapter_y;
      const NetGrad& head = m == Modality::X ? g.head_x : g.head_y;
      auto loss = [&] { return reconstruction_loss(net, m, x).value; };
      record(std::string("autoencoder/") + to_string(m),
             gradient_check({{&net.adapter_for(m), &adapter}, {&net.trunk, &g.trunk}, {&net.head_for(m), &head}}, loss,
                            150, rng));
    }
  }
  {
    const SslConfig cfg;
    const SslTaskOptions task;
    SslModel model = make_ssl_model(task.embed_x, task.embed_y, cfg);
    for (Modality m : {Modality::X, Modality::Y}) {
      const Index e = m == Modality::X ? task.embed_x : task.embed_y;
      const std::vector<MatrixXd> batch = {rng.normal_matrix(task.length, e), rng.normal_matrix(task.length, e)};
      const auto g = ssl_sequence_loss(model, m, batch);
      DenseNet& adapter = m == Modality::X ? model.adapter_x : model.adapter_y;
      DenseNet& head = m == Modality::X ? model.head_x : model.head_y;
      auto loss = [&] { return ssl_sequence_loss(model, m, batch).value; };
      record(std::string("ssl/") + to_string(m),
             gradient_check({{&adapter, &g.adapter}, {&model.trunk, &g.trunk}, {&head, &g.head}}, loss, 150, rng));
    }
  }
  {
    // Linear softmax probe.
    DenseNet probe = make_dense_net({16, 8}, {Activation::Identity}, rng);
    const MatrixXd x = rng.normal_matrix(20, 16);
    std::vector<int> y(20);
    for (int i = 0; i < 20; ++i) y[static_cast<std::size_t>(i)] = i % 8;
    const auto cache = forward(probe, x);
    const NetGrad g = backward(probe, cache, cross_entropy_loss(cache.output, y).grad);
    auto loss = [&] { return cross_entropy_loss(predict(probe, x), y).value; };
    record("probe", gradient_check({{&probe, &g}}, loss, 120, rng));
  }
  v.detail << parts.str();
}

// ---- 10: MRS plane fit ----------------------------------------------------------------

std::vector<ShotPoint> planted_grid(double a_img, double a_txt, double c) {
  std::vector<ShotPoint> pts;
  for (double i : {0.0, 1.0, 3.0, 7.0, 15.0}) {
    for (double t : {0.0, 1.0, 3.0, 7.0, 15.0}) {
      pts.push_back({i, t, c + a_img * std::log2(1.0 + i) + a_txt * std::log2(1.0 + t)});
    }
  }
  return pts;
}

void criterion_mrs(Verdict& v) {
  const double planted[][3] = {{0.05, 0.01, 0.1}, {2.5, 0.5, -3.0}, {0.3, 0.06, 40.0}};
  double worst = 0.0;
  for (const auto& p : planted) {
    const auto fit = mrs_plane_fit(planted_grid(p[0], p[1], p[2]), 12.0);
    const double err = std::max({std::abs(fit.alpha_img - p[0]), std::abs(fit.alpha_txt - p[1]),
                                 std::abs(fit.intercept - p[2])});
    worst = std::max(worst, err);
    v.require(err <= 1e-9, "plane recovered to 1e-9");
    v.require(fit.texts_per_image && std::abs(*fit.texts_per_image - 5.0) <= 1e-9, "texts_per_image = 5");
    v.require(!fit.texts_per_image_unbounded, "bounded rate");
    v.require(fit.words_per_image && std::abs(*fit.words_per_image - 60.0) <= 1e-8, "words per image = 60");
  }
  const auto flat = mrs_plane_fit(planted_grid(0.05, 0.0, 0.2));
  v.require(flat.texts_per_image_unbounded && !flat.texts_per_image, "unbounded flag when alpha_txt = 0");
  v.detail << "3 planted planes, worst coefficient error " << num(worst, 2) << ", texts_per_image 5.0; alpha_txt=0 flag: "
           << (flat.texts_per_image_unbounded ? "unbounded" : "bounded");
}

// ---- 11: analysis oracles -------------------------------------------------------------

double dist(const MatrixXd& e, Index i, Index j) {
  double s = 0.0;
  for (Index k = 0; k < e.cols(); ++k) s += (e(i, k) - e(j, k)) * (e(i, k) - e(j, k));
  return std::sqrt(s);
}

double oracle_margin(const MatrixXd& w, const VectorXd& b, const VectorXd& x, int y, bool bias) {
  std::vector<double> logit(static_cast<std::size_t>(w.rows()), 0.0);
  for (Index k = 0; k < w.rows(); ++k) {
    for (Index d = 0; d < w.cols(); ++d) logit[static_cast<std::size_t>(k)] += w(k, d) * x(d);
    if (bias) logit[static_cast<std::size_t>(k)] += b(k);
  }
  Index comp = -1;
  for (Index k = 0; k < w.rows(); ++k) {
    if (k != y && (comp < 0 || logit[static_cast<std::size_t>(k)] > logit[static_cast<std::size_t>(comp)])) comp = k;
  }
  double nrm = 0.0;
  for (Index d = 0; d < w.cols(); ++d) nrm += (w(y, d) - w(comp, d)) * (w(y, d) - w(comp, d));
  return (logit[static_cast<std::size_t>(y)] - logit[static_cast<std::size_t>(comp)]) / std::sqrt(nrm);
}

double oracle_silhouette(const MatrixXd& e, const std::vector<int>& l) {
  const Index n = e.rows();
  std::set<int> classes(l.begin(), l.end());
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    double own = 0.0;
    Index own_n = 0;
    for (Index j = 0; j < n; ++j) {
      if (j != i && l[static_cast<std::size_t>(j)] == l[static_cast<std::size_t>(i)]) {
        own += dist(e, i, j);
        ++own_n;
      }
    }
    if (own_n == 0) continue;
    const double a = own / static_cast<double>(own_n);
    double b = std::numeric_limits<double>::infinity();
    for (int c : classes) {
      if (c == l[static_cast<std::size_t>(i)]) continue;
      double s = 0.0;
      Index cnt = 0;
      for (Index j = 0; j < n; ++j) {
        if (l[static_cast<std::size_t>(j)] == c) {
          s += dist(e, i, j);
          ++cnt;
        }
      }
      b = std::min(b, s / static_cast<double>(cnt));
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

double oracle_davies_bouldin(const MatrixXd& e, const std::vector<int>& l) {
  std::set<int> classes(l.begin(), l.end());
  std::vector<VectorXd> cent;
  std::vector<double> scat;
  for (int c : classes) {
    VectorXd m = VectorXd::Zero(e.cols());
    Index cnt = 0;
    for (Index i = 0; i < e.rows(); ++i) {
      if (l[static_cast<std::size_t>(i)] == c) {
        m += e.row(i).transpose();
        ++cnt;
      }
    }
    m /= static_cast<double>(cnt);
    double s = 0.0;
    for (Index i = 0; i < e.rows(); ++i) {
      if (l[static_cast<std::size_t>(i)] == c) s += (e.row(i).transpose() - m).norm();
    }
    cent.push_back(m);
    scat.push_back(s / static_cast<double>(cnt));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < cent.size(); ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < cent.size(); ++j) {
      if (i != j) worst = std::max(worst, (scat[i] + scat[j]) / (cent[i] - cent[j]).norm());
    }
    sum += worst;
  }
  return sum / static_cast<double>(cent.size());
}

double oracle_pearson(const VectorXd& a, const VectorXd& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (Index i = 0; i < a.size(); ++i) {
    sa += a(i);
    sb += b(i);
  }
  const double ma = sa / n, mb = sb / n;
  double cov = 0, va = 0, vb = 0;
  for (Index i = 0; i < a.size(); ++i) {
    cov += (a(i) - ma) * (b(i) - mb);
    va += (a(i) - ma) * (a(i) - ma);
    vb += (b(i) - mb) * (b(i) - mb);
  }
  if (a.maxCoeff() == a.minCoeff() || b.maxCoeff() == b.minCoeff()) return 0.0;
  return cov / std::sqrt(va * vb);
}

ClassifierHead head_of(const MatrixXd& w, const VectorXd& b) { return ClassifierHead{w, b}; }

void criterion_analysis(Verdict& v) {
  const double tol = 1e-9;
  Rng rng(1234);
  int instances[6] = {0, 0, 0, 0, 0, 0};

  // Functional margin.
  {
    const MatrixXd w2 = MatrixXd::Identity(2, 2);
    const VectorXd x = (VectorXd(2) << 3, 1).finished();
    v.require(std::abs(functional_margin(head_of(w2, VectorXd::Zero(2)), x, 0).margin - std::sqrt(2.0)) <= tol,
              "margin hand 1");
    v.require(std::abs(functional_margin(head_of(w2, (VectorXd(2) << 0, 1).finished()), x, 0).margin -
                       1.0 / std::sqrt(2.0)) <= tol,
              "margin hand 2");
    const MatrixXd w3 = (MatrixXd(3, 2) << 1, 0, 0, 1, -1, 0).finished();
    const auto r3 = functional_margin(head_of(w3, VectorXd::Zero(3)), (VectorXd(2) << 0, 2).finished(), 0);
    v.require(std::abs(r3.margin + std::sqrt(2.0)) <= tol && r3.competitor == 1, "margin hand 3");
    instances[0] += 3;
    for (int rep = 0; rep < 5; ++rep) {
      const MatrixXd w = rng.normal_matrix(4, 3);
      const VectorXd b = rng.normal_vector(4), xx = rng.normal_vector(3);
      const int y = rep % 4;
      for (bool bias : {true, false}) {
        v.require(std::abs(functional_margin(head_of(w, b), xx, y, bias).margin - oracle_margin(w, b, xx, y, bias)) <=
                      tol,
                  "margin oracle");
      }
      ++instances[0];
    }
  }

  // Silhouette, including a singleton class.
  {
    const MatrixXd e1 = (MatrixXd(4, 1) << 0, 1, 4, 5).finished();
    v.require(std::abs(silhouette(e1, {0, 0, 1, 1}) - 47.0 / 63.0) <= tol, "silhouette hand 1");
    const MatrixXd e2 = (MatrixXd(3, 1) << 0, 1, 10).finished();
    v.require(std::abs(silhouette(e2, {0, 0, 1}) - (0.9 + 8.0 / 9.0) / 3.0) <= tol, "silhouette singleton");
    const MatrixXd e3 = (MatrixXd(4, 2) << 0, 0, 0, 2, 3, 0, 3, 2).finished();
    v.require(std::abs(silhouette(e3, {0, 0, 1, 1}) - oracle_silhouette(e3, {0, 0, 1, 1})) <= tol, "silhouette hand 3");
    instances[1] += 3;
    for (int rep = 0; rep < 3; ++rep) {
      const MatrixXd e = rng.normal_matrix(9, 3);
      const std::vector<int> l = {0, 1, 2, 0, 1, 2, 0, 1, 0};
      v.require(std::abs(silhouette(e, l) - oracle_silhouette(e, l)) <= tol, "silhouette oracle");
      ++instances[1];
    }
  }

  // Davies-Bouldin, including coincident centroids.
  {
    const MatrixXd e1 = (MatrixXd(4, 1) << 0, 2, 10, 12).finished();
    v.require(std::abs(davies_bouldin(e1, {0, 0, 1, 1}).value - 0.2) <= tol, "DB hand 1");
    const MatrixXd e2 = (MatrixXd(4, 1) << -1, 1, 0, 0).finished();
    const auto d2 = davies_bouldin(e2, {0, 0, 1, 1});
    v.require(d2.degenerate && d2.value == kDaviesBouldinSentinel, "DB coincident centroids");
    const MatrixXd e3 = (MatrixXd(6, 2) << 0, 0, 2, 0, 5, 5, 5, 7, -4, 1, -4, 3).finished();
    const std::vector<int> l3 = {0, 0, 1, 1, 2, 2};
    v.require(std::abs(davies_bouldin(e3, l3).value - oracle_davies_bouldin(e3, l3)) <= tol, "DB hand 3");
    instances[2] += 3;
    for (int rep = 0; rep < 3; ++rep) {
      const MatrixXd e = rng.normal_matrix(10, 4);
      const std::vector<int> l = {0, 1, 2, 3, 0, 1, 2, 3, 0, 1};
      v.require(std::abs(davies_bouldin(e, l).value - oracle_davies_bouldin(e, l)) <= tol, "DB oracle");
      ++instances[2];
    }
  }

  // Prototype alignment.
  {
    const MatrixXd w = MatrixXd::Identity(2, 2);
    const auto p1 = prototype_alignment(head_of(w, VectorXd::Zero(2)), (MatrixXd(2, 2) << 2, 0, 0, 3).finished());
    v.require((p1.inner - (MatrixXd(2, 2) << 2, 0, 0, 3).finished()).norm() <= tol && p1.dominance == 1.0,
              "prototype hand 1");
    const auto p2 = prototype_alignment(head_of(w, VectorXd::Zero(2)), (MatrixXd(2, 2) << 0, 1, 1, 0).finished());
    v.require(p2.dominance == 0.0, "prototype hand 2");
    const MatrixXd w3 = (MatrixXd(3, 2) << 1, 1, -1, 0, 0, 2).finished();
    const MatrixXd m3 = (MatrixXd(3, 2) << 1, 0, -2, 1, 0, 1).finished();
    const auto p3 = prototype_alignment(head_of(w3, VectorXd::Zero(3)), m3);
    // Rows: (1, -1, 1), (-1, 2, 0), (0, 2, 2); diagonals 1, 2, 2 are all row maxima.
    v.require((p3.inner - (MatrixXd(3, 3) << 1, -1, 1, -1, 2, 0, 0, 2, 2).finished()).norm() <= tol &&
                  p3.dominance == 1.0,
              "prototype hand 3");
    instances[3] += 3;
    for (int rep = 0; rep < 3; ++rep) {
      const MatrixXd wr = rng.normal_matrix(4, 5), mr = rng.normal_matrix(4, 5);
      const auto p = prototype_alignment(head_of(wr, VectorXd::Zero(4)), mr);
      double err = 0.0;
      int dom = 0;
      for (Index k = 0; k < 4; ++k) {
        double best = -std::numeric_limits<double>::infinity();
        for (Index l = 0; l < 4; ++l) {
          double s = 0.0;
          for (Index d = 0; d < 5; ++d) s += wr(k, d) * mr(l, d);
          err = std::max(err, std::abs(s - p.inner(k, l)));
          best = std::max(best, s);
        }
        double diag = 0.0;
        for (Index d = 0; d < 5; ++d) diag += wr(k, d) * mr(k, d);
        dom += diag >= best;
      }
      v.require(err <= tol && p.dominance == dom / 4.0, "prototype oracle");
      ++instances[3];
    }
  }

  // Boundary projection.
  {
    const MatrixXd w = (MatrixXd(2, 2) << 1, 0, 0, 0).finished();
    const MatrixXd e = (MatrixXd(3, 2) << 1, 1, 1, 3, 0, 0).finished();
    const auto bp = boundary_projection(head_of(w, VectorXd::Zero(2)), e, {0, 0, 1}, 0, 1);
    v.require((bp.coords - e).norm() <= tol, "boundary hand 1");
    const auto swapped = boundary_projection(head_of(w, VectorXd::Zero(2)), e, {0, 0, 1}, 1, 0);
    v.require((swapped.coords + e).norm() <= tol, "boundary hand 2 (swapped pair)");
    const MatrixXd w3 = (MatrixXd(2, 3) << 0, 0, 2, 0, 0, 0).finished();
    const MatrixXd e3 = (MatrixXd(2, 3) << 0, 4, 1, 0, 0, 0).finished();
    const auto b3 = boundary_projection(head_of(w3, VectorXd::Zero(2)), e3, {0, 1}, 0, 1);
    v.require((b3.coords - (MatrixXd(2, 2) << 1, 4, 0, 0).finished()).norm() <= tol, "boundary hand 3");
    instances[4] += 3;
    for (int rep = 0; rep < 3; ++rep) {
      const MatrixXd wr = rng.normal_matrix(3, 4), er = rng.normal_matrix(7, 4);
      const std::vector<int> l = {0, 1, 2, 0, 1, 2, 0};
      const auto p = boundary_projection(head_of(wr, VectorXd::Zero(3)), er, l, 2, 0);
      VectorXd a1 = (wr.row(2) - wr.row(0)).transpose();
      a1 /= a1.norm();
      VectorXd m2 = VectorXd::Zero(4), m0 = VectorXd::Zero(4);
      for (Index i = 0; i < 7; ++i) {
        if (l[static_cast<std::size_t>(i)] == 2) m2 += er.row(i).transpose() / 2.0;
        if (l[static_cast<std::size_t>(i)] == 0) m0 += er.row(i).transpose() / 3.0;
      }
      VectorXd a2 = (m2 - m0) - a1.dot(m2 - m0) * a1;
      a2 /= a2.norm();
      double err = 0.0;
      for (Index i = 0; i < 7; ++i) {
        err = std::max(err, std::abs(er.row(i).dot(a1) - p.coords(i, 0)));
        err = std::max(err, std::abs(er.row(i).dot(a2) - p.coords(i, 1)));
      }
      v.require(err <= tol, "boundary oracle");
      ++instances[4];
    }
  }

  // Neuron correlations with the zero-for-undefined rule.
  {
    const MatrixXd va = (MatrixXd(4, 3) << 1, 5, 2, 2, 5, 4, 3, 5, 1, 4, 5, 3).finished();
    const MatrixXd ta = (MatrixXd(4, 3) << 2, 1, 0, 4, 2, 0, 6, 3, 0, 8, 4, 0).finished();
    const auto nc = neuron_correlations(va, ta, {0, 0, 1, 1});
    v.require(std::abs(nc[0].overall - 1.0) <= tol && !nc[0].overall_undefined, "neuron hand 1 (identical trend)");
    v.require(nc[1].overall == 0.0 && nc[1].overall_undefined, "neuron hand 2 (constant V activation)");
    v.require(nc[2].overall == 0.0 && nc[2].overall_undefined && nc[2].per_label.at(0) == 0.0 &&
                  nc[2].per_label_undefined.at(0),
              "neuron hand 3 (constant T activation)");
    const auto neg = neuron_correlations((MatrixXd(3, 1) << 1, 2, 3).finished(), (MatrixXd(3, 1) << 3, 2, 1).finished(),
                                         {0, 0, 0});
    v.require(std::abs(neg[0].overall + 1.0) <= tol, "neuron hand 4 (anti-correlated)");
    instances[5] += 4;
    for (int rep = 0; rep < 3; ++rep) {
      const MatrixXd a = rng.normal_matrix(12, 3), b = rng.normal_matrix(12, 3);
      const std::vector<int> l = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
      const auto r = neuron_correlations(a, b, l);
      double err = 0.0;
      for (Index j = 0; j < 3; ++j) {
        err = std::max(err, std::abs(r[static_cast<std::size_t>(j)].overall - oracle_pearson(a.col(j), b.col(j))));
        for (int lab : {0, 1}) {
          VectorXd sa(6), sb(6);
          Index k = 0;
          for (Index i = 0; i < 12; ++i) {
            if (l[static_cast<std::size_t>(i)] == lab) {
              sa(k) = a(i, j);
              sb(k) = b(i, j);
              ++k;
            }
          }
          err = std::max(err, std::abs(r[static_cast<std::size_t>(j)].per_label.at(lab) - oracle_pearson(sa, sb)));
        }
      }
      v.require(err <= tol, "neuron oracle");
      ++instances[5];
    }
  }

  const char* names[] = {"margin", "silhouette", "davies-bouldin", "prototype", "boundary", "neurons"};
  for (int i = 0; i < 6; ++i) {
    v.require(instances[i] >= 3, std::string(names[i]) + " has >= 3 instances");
    v.detail << (i ? ", " : "") << names[i] << " " << instances[i];
  }
  v.detail << " instances at tolerance 1e-9";
}

// ---- 12: replay ---------------------------------------------------------------------

void criterion_replay(Verdict& v) {
  const fs::path root = fs::temp_directory_path() / "uml_acceptance_replay";
  fs::remove_all(root);
  fs::create_directories(root);
  auto p = [&](const std::string& s) { return (root / s).string(); };

  // Inputs for the file-driven subcommands.
  std::string csv = "img_shots,txt_shots,accuracy\n";
  for (const auto& pt : planted_grid(0.04, 0.01, 0.3)) {
    csv += format_double(pt.img_shots) + "," + format_double(pt.txt_shots) + "," + format_double(pt.accuracy) + "\n";
  }
  write_text_file(root / "shots.csv", csv);
  write_text_file(root / "gauss.json",
                  R"({"seeds": 2, "epochs": 2, "n_unimodal": 200, "n_joint_x": 100, "n_joint_y": 100, "n_validation": 50})");

  const std::vector<std::pair<std::string, std::vector<std::string>>> runs = {
      {"verify-theorems", {"verify-theorems", "--configs", "40"}},
      {"budget-sweep", {"budget-sweep", "--trials", "300", "--total", "40"}},
      {"monte-carlo", {"monte-carlo", "--trials", "3000"}},
      {"gaussian-exp", {"--config", p("gauss.json"), "gaussian-exp"}},
      {"train-sup", {"train-sup", "--seeds", "3", "--epochs", "100"}},
      {"train-ssl", {"train-ssl", "--seeds", "2", "--epochs", "10"}},
      {"mrs-fit", {"mrs-fit", "--input", p("shots.csv")}},
  };
  int reproduced = 0;
  QuietStdout quiet;
  auto replay_one = [&](const std::string& name, std::vector<std::string> args) {
    args.insert(args.end(), {"--seed", "11", "--workers", "2", "--outdir", p(name)});
    if (cli::run(args) != cli::kOk) {
      v.require(false, name + " run");
      return;
    }
    const int rc = cli::run({"--replay", p(name + "/report.json"), "--workers", "1", "--outdir", p(name + "_replay")});
    const Json a = Json::parse(read_text_file(root / name / "report.json"));
    const Json b = Json::parse(read_text_file(root / (name + "_replay") / "report.json"));
    const bool same = rc == cli::kOk && a["metrics"].dump() == b["metrics"].dump() && b["workers"] == 1;
    v.require(same, name + " replay bitwise");
    reproduced += same;
  };
  for (const auto& [name, args] : runs) replay_one(name, args);
  replay_one("analyze", {"analyze", "--embeddings", p("train-sup/joint_test_embeddings.emb"), "--head",
                         p("train-sup/joint_head.umlw"), "--aux-embeddings", p("train-sup/joint_aux_embeddings.emb")});
  fs::remove_all(root);
  v.detail << reproduced << "/8 subcommands replayed with --workers 1 (recorded with --workers 2), metrics identical";
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Verdict&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> expect_red, only;
  app.add_option("--expect-red", expect_red, "Criteria known to fail; exit 0 when exactly these fail");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const std::vector<Criterion> criteria = {
      {1, "theorem ensembles", criterion_theorems},
      {2, "Monte-Carlo covariance vs CRLB", criterion_crlb},
      {3, "contraction factor", criterion_contraction},
      {4, "rescue by unpaired Y", criterion_rescue},
      {5, "shared autoencoder reconstruction", criterion_autoencoder},
      {6, "supervised gain", criterion_supervised_gain},
      {7, "shuffled auxiliary control", criterion_shuffled},
      {8, "batch-ratio insensitivity", criterion_batch_ratio},
      {9, "gradient checks", criterion_gradients},
      {10, "MRS plane fit", criterion_mrs},
      {11, "analysis oracles", criterion_analysis},
      {12, "replay", criterion_replay},
  };

  std::set<int> failed;
  const std::set<int> selected(only.begin(), only.end());
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Verdict v;
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [exception: " << e.what() << "]";
    }
    if (!v.pass) failed.insert(c.id);
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << c.id << ". " << c.name << ": " << v.detail.str() << std::endl;
  }

  std::set<int> expected;
  for (int id : expect_red) {
    if (selected.empty() || selected.count(id)) expected.insert(id);
  }
  if (failed == expected) {
    if (!expected.empty()) std::cout << "failing criteria match the expected red set" << std::endl;
    return 0;
  }
  std::cout << "unexpected outcome: failing {";
  for (int id : failed) std::cout << ' ' << id;
  std::cout << " } vs expected red {";
  for (int id : expected) std::cout << ' ' << id;
  std::cout << " }" << std::endl;
  return 1;
}
