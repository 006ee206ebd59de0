#pragma once

#include <string>

#include <json.hpp>

#include "varsep/field.hpp"
#include "varsep/nvs.hpp"
#include "varsep/sreg.hpp"
#include "varsep/tensor.hpp"

namespace varsep::io {

using json = nlohmann::json;

inline constexpr int format_version = 1;

json to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);

json to_json(const basis::Basis& b);
std::shared_ptr<const basis::Basis> basis_from_json(const json& j);

json to_json(const sreg::SparseModel& m);
sreg::SparseModel sparse_model_from_json(const json& j);

json to_json(const tensor::GroupSplit& s);
std::shared_ptr<const tensor::GroupSplit> split_from_json(const json& j);

json to_json(const tensor::RankMApprox& a);
tensor::RankMApprox rank_m_from_json(const json& j);

json to_json(const tensor::HierApprox& a);
tensor::HierApprox hier_from_json(const json& j);

// Terms sharing a basis or split on save share it again on load.
json to_json(const nvs::SurrogateSet& s);
nvs::SurrogateSet surrogates_from_json(const json& j);

json to_json(const nvs::SeparatedSolution& s);
// The coefficient closures are not stored; the caller rebuilds them from the problem.
nvs::SeparatedSolution solution_from_json(const json& j, field::CoefficientFn op_coeff,
                                          field::CoefficientFn rhs_coeff);

json to_json(const nvs::SeparatedFunction& s);
nvs::SeparatedFunction function_from_json(const json& j, nvs::NodalFunction f);

// Wraps a payload with {"format_version", "kind", "payload"} and writes it.
void write_document(const std::string& path, const std::string& kind, const json& payload,
                    const json& metadata = json::object());
// Checks version and kind; returns the whole document.
json read_document(const std::string& path, const std::string& kind);

}  // namespace varsep::io
