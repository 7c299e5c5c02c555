#include "uml/report_json.hpp"

#include <string>

#include "uml/errors.hpp"

namespace uml {

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Index cols_if_empty) {
  if (!j.is_array()) throw InvalidInput("matrix must be an array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, cols_if_empty);
  const auto cols = static_cast<Index>(j.front().is_array() ? j.front().size() : 0);
  Eigen::MatrixXd m(static_cast<Index>(j.size()), cols);
  for (Index i = 0; i < m.rows(); ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw InvalidInput("matrix rows must have equal length");
    for (Index c = 0; c < cols; ++c) {
      const Json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw InvalidInput("matrix entries must be numbers");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw InvalidInput("vector must be an array");
  Eigen::VectorXd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) {
    const Json& e = j[static_cast<std::size_t>(i)];
    if (!e.is_number()) throw InvalidInput("vector entries must be numbers");
    v(i) = e.get<double>();
  }
  return v;
}

Json to_json(const LinearDgpSpec& spec) {
  Json xs = Json::array(), ys = Json::array();
  for (const auto& d : spec.x_designs) xs.push_back({{"a_c", matrix_json(d.a_c)}, {"a_x", matrix_json(d.a_x)}});
  for (const auto& d : spec.y_designs) ys.push_back({{"b_c", matrix_json(d.b_c)}, {"b_y", matrix_json(d.b_y)}});
  return {{"partition", {{"d_c", spec.partition.d_c}, {"d_x", spec.partition.d_x}, {"d_y", spec.partition.d_y}}},
          {"theta_true", vector_json(spec.theta_true)},
          {"sigma_x", spec.sigma_x},
          {"sigma_y", spec.sigma_y},
          {"x_rows", spec.x_rows()},
          {"y_rows", spec.y_rows()},
          {"x_designs", xs},
          {"y_designs", ys}};
}

LinearDgpSpec spec_from_json(const Json& j) {
  try {
    LinearDgpSpec spec;
    const Json& p = j.at("partition");
    spec.partition = {p.at("d_c").get<Index>(), p.at("d_x").get<Index>(), p.at("d_y").get<Index>()};
    spec.theta_true = vector_from_json(j.at("theta_true"));
    spec.sigma_x = j.at("sigma_x").get<double>();
    spec.sigma_y = j.at("sigma_y").get<double>();
    const auto m = j.at("x_rows").get<Index>();
    const auto n = j.at("y_rows").get<Index>();
    // Zero-column blocks serialize as rows of [], which keeps the row count.
    auto block = [](const Json& b, Index rows, Index cols) {
      Eigen::MatrixXd out = matrix_from_json(b, cols);
      if (out.rows() != rows || out.cols() != cols) throw InvalidInput("design block shape disagrees with the header");
      return out;
    };
    for (const auto& d : j.at("x_designs")) {
      spec.x_designs.push_back({block(d.at("a_c"), m, spec.partition.d_c), block(d.at("a_x"), m, spec.partition.d_x)});
    }
    for (const auto& d : j.at("y_designs")) {
      spec.y_designs.push_back({block(d.at("b_c"), n, spec.partition.d_c), block(d.at("b_y"), n, spec.partition.d_y)});
    }
    validate(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed spec document: ") + e.what());
  }
}

Json to_json(const TheoremReport& r) {
  Json failures = Json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"seed", f.seed}, {"spec_digest", f.spec_digest}, {"magnitude", f.magnitude}, {"detail", f.detail}});
  }
  Json tolerances = Json::object();
  for (const auto& [k, v] : r.tolerances) tolerances[k] = v;
  Json reported = Json::object();
  for (const auto& [k, v] : r.reported) reported[k] = v;
  return {{"theorem_id", r.theorem_id},
          {"n_configs_tested", r.n_configs_tested},
          {"n_passed", r.n_passed},
          {"n_precondition_unmet", r.n_precondition_unmet},
          {"n_failures", r.failures.size()},
          {"ok", r.ok()},
          {"tolerances", tolerances},
          {"reported", reported},
          {"failures", failures}};
}

Json to_json(const BudgetCurve& c) {
  Json points = Json::array();
  for (const auto& p : c.points) {
    points.push_back({{"fraction", p.fraction},
                      {"n_x", p.n_x},
                      {"n_y", p.n_y},
                      {"crlb_trace", p.crlb_trace},
                      {"mc_trace", p.mc_trace ? Json(*p.mc_trace) : Json()},
                      {"identifiable", p.identifiable}});
  }
  return {{"total_budget", c.total_budget}, {"argmin", c.argmin()}, {"points", points}};
}

Json to_json(const MrsFit& f) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(); };
  return {{"alpha_img", f.alpha_img},
          {"alpha_txt", f.alpha_txt},
          {"intercept", f.intercept},
          {"residual_rms", f.residual_rms},
          {"se_img", f.se_img},
          {"se_txt", f.se_txt},
          {"texts_per_image", opt(f.texts_per_image)},
          {"images_per_text", opt(f.images_per_text)},
          {"texts_per_image_unbounded", f.texts_per_image_unbounded},
          {"images_per_text_unbounded", f.images_per_text_unbounded},
          {"words_per_image", opt(f.words_per_image)},
          {"shot_transform", f.shot_transform}};
}

Json to_json(const DaviesBouldin& d) { return {{"value", d.value}, {"degenerate", d.degenerate}}; }

namespace {

Json epochs_json(const std::vector<EpochLosses>& epochs) {
  Json out = Json::array();
  for (const auto& e : epochs) out.push_back({{"x", e.x}, {"y", e.y}, {"y_batches", e.y_batches}});
  return out;
}

}  // namespace

Json to_json(const TrainReport& r, bool with_epochs) {
  Json out = {{"epochs", r.epochs.size()},
              {"steps", r.steps},
              {"x_test_accuracy", r.x_test_accuracy},
              {"x_val_mse", r.x_val_mse},
              {"final_x_loss", r.epochs.empty() ? 0.0 : r.epochs.back().x},
              {"final_y_loss", r.epochs.empty() ? 0.0 : r.epochs.back().y},
              {"parameter_digest", r.parameter_digest},
              {"schedule_digest", r.schedule_digest}};
  if (with_epochs) out["epoch_losses"] = epochs_json(r.epochs);
  return out;
}

Json to_json(const SslReport& r, bool with_epochs) {
  Json out = {{"epochs", r.epochs.size()},
              {"steps", r.steps},
              {"final_x_loss", r.epochs.empty() ? 0.0 : r.epochs.back().x},
              {"final_y_loss", r.epochs.empty() ? 0.0 : r.epochs.back().y},
              {"parameter_digest", r.parameter_digest}};
  if (with_epochs) out["epoch_losses"] = epochs_json(r.epochs);
  return out;
}

}  // namespace uml
