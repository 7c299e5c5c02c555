#pragma once

// JSON forms of reports and results, used by the CLI report files.

#include <Eigen/Dense>

#include "json.hpp"
#include "uml/analysis.hpp"
#include "uml/theorems.hpp"
#include "uml/train.hpp"

namespace uml {

using Json = nlohmann::ordered_json;

Json matrix_json(const Eigen::MatrixXd& m);  // array of rows
Json vector_json(const Eigen::VectorXd& v);
// Inverses of the above; throw InvalidInput on ragged or non-numeric input.
Eigen::MatrixXd matrix_from_json(const Json& j, Index cols_if_empty = 0);
Eigen::VectorXd vector_from_json(const Json& j);

Json to_json(const LinearDgpSpec& spec);
// Round-trips to_json exactly; the result is validated.
LinearDgpSpec spec_from_json(const Json& j);

Json to_json(const TheoremReport& r);
Json to_json(const BudgetCurve& c);
Json to_json(const MrsFit& f);
Json to_json(const DaviesBouldin& d);
// Per-epoch losses are included when with_epochs is set.
Json to_json(const TrainReport& r, bool with_epochs);
Json to_json(const SslReport& r, bool with_epochs);

}  // namespace uml
