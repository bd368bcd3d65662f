#pragma once

#include "acflow/model.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace acflow {

using json = nlohmann::json;

namespace detail {

[[noreturn]] inline void config_error(const std::string& field, const std::string& what) {
  fail(ErrorKind::ModelValidation, "config field '" + field + "': " + what);
}

inline const json& member(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) config_error(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) config_error(path.empty() ? key : path + "." + key, "missing");
  return *it;
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) config_error(path, "expected a number");
  return v.get<double>();
}

inline int positive_int(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 1)
    config_error(path, "expected a positive integer");
  return static_cast<int>(v.get<long long>());
}

inline const json& array_of(const json& v, std::size_t len, const std::string& path) {
  if (!v.is_array()) config_error(path, "expected an array");
  if (v.size() != len)
    config_error(path, "expected " + std::to_string(len) + " entries, found " +
                           std::to_string(v.size()));
  return v;
}

inline Matrix matrix_field(const json& v, int rows, int cols, const std::string& path) {
  array_of(v, rows, path);
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const std::string row = index(path, i);
    array_of(v[i], cols, row);
    for (int j = 0; j < cols; ++j) out(i, j) = number(v[i][j], index(row, j));
  }
  return out;
}

// N x K x dim array into an (N*K) x dim matrix.
inline Matrix feature_field(const json& v, int n, int k, int dim, const std::string& path) {
  array_of(v, n, path);
  Matrix out(static_cast<Eigen::Index>(n) * k, dim);
  for (int i = 0; i < n; ++i) {
    const std::string si = index(path, i);
    array_of(v[i], k, si);
    for (int a = 0; a < k; ++a) {
      const std::string sa = index(si, a);
      array_of(v[i][a], dim, sa);
      for (int c = 0; c < dim; ++c)
        out(static_cast<Eigen::Index>(i) * k + a, c) = number(v[i][a][c], index(sa, c));
    }
  }
  return out;
}

inline json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

inline json feature_json(const Matrix& f, int n, int k) {
  json out = json::array();
  for (int i = 0; i < n; ++i) {
    json per_state = json::array();
    for (int a = 0; a < k; ++a) {
      json vec = json::array();
      for (Eigen::Index c = 0; c < f.cols(); ++c)
        vec.push_back(f(static_cast<Eigen::Index>(i) * k + a, c));
      per_state.push_back(vec);
    }
    out.push_back(per_state);
  }
  return out;
}

}  // namespace detail

/// Parses a model document; every malformed field is reported by its path.
inline ModelSpec model_from_json(const json& doc) {
  using namespace detail;
  ModelSpec model;
  const json& dims = member(doc, "dims", "");
  model.N = positive_int(member(dims, "N", "dims"), "dims.N");
  model.K = positive_int(member(dims, "K", "dims"), "dims.K");
  model.d = positive_int(member(dims, "d", "dims"), "dims.d");
  model.m = positive_int(member(dims, "m", "dims"), "dims.m");

  const json& constants = member(doc, "constants", "");
  model.R_theta = number(member(constants, "R_theta", "constants"), "constants.R_theta");
  model.actor.tau = number(member(constants, "tau", "constants"), "constants.tau");
  model.lambda_c = number(member(constants, "lambda_c", "constants"), "constants.lambda_c");
  if (!(model.R_theta > 0)) config_error("constants.R_theta", "must be positive");
  if (!(model.actor.tau > 0)) config_error("constants.tau", "must be positive");
  if (!(model.lambda_c > 0)) config_error("constants.lambda_c", "must be positive");

  model.rewards = matrix_field(member(doc, "rewards", ""), model.N, model.K, "rewards");
  model.actor.num_states = model.N;
  model.actor.num_actions = model.K;
  model.actor.psi =
      feature_field(member(doc, "actor_features", ""), model.N, model.K, model.d, "actor_features");
  model.critic_features = feature_field(member(doc, "critic_features", ""), model.N, model.K,
                                        model.m, "critic_features");

  const json& gen = member(doc, "generators", "");
  const json& type = member(gen, "type", "generators");
  if (!type.is_string()) config_error("generators.type", "expected a string");
  if (type == "affine") {
    AffineRates rates;
    rates.base = matrix_field(member(gen, "base_rates", "generators"), model.N, model.N,
                              "generators.base_rates");
    rates.slopes = feature_field(member(gen, "slopes", "generators"), model.N, model.N, model.d,
                                 "generators.slopes");
    model.generators.form = rates;
  } else if (type == "action_mixture") {
    const json& mats = member(gen, "matrices", "generators");
    array_of(mats, model.K, "generators.matrices");
    ActionMixture mix;
    for (int a = 0; a < model.K; ++a)
      mix.generators.push_back(
          matrix_field(mats[a], model.N, model.N, index("generators.matrices", a)));
    model.generators.form = mix;
  } else {
    config_error("generators.type", "expected \"affine\" or \"action_mixture\"");
  }
  return make_model(model);
}

inline json model_to_json(const ModelSpec& model) {
  using namespace detail;
  json doc;
  doc["dims"] = {{"N", model.N}, {"K", model.K}, {"d", model.d}, {"m", model.m}};
  doc["constants"] = {
      {"R_theta", model.R_theta}, {"tau", model.actor.tau}, {"lambda_c", model.lambda_c}};
  doc["rewards"] = matrix_json(model.rewards);
  doc["actor_features"] = feature_json(model.actor.psi, model.N, model.K);
  doc["critic_features"] = feature_json(model.critic_features, model.N, model.K);
  if (const auto* rates = std::get_if<AffineRates>(&model.generators.form)) {
    Matrix base = rates->base;
    Matrix slopes = rates->slopes;
    for (int i = 0; i < model.N; ++i) {
      base(i, i) = 0.0;
      slopes.row(rates->slope_row(i, i)).setZero();
    }
    doc["generators"] = {{"type", "affine"},
                         {"base_rates", matrix_json(base)},
                         {"slopes", feature_json(slopes, model.N, model.N)}};
  } else {
    const auto& mix = std::get<ActionMixture>(model.generators.form);
    json mats = json::array();
    for (const Matrix& g : mix.generators) mats.push_back(matrix_json(g));
    doc["generators"] = {{"type", "action_mixture"}, {"matrices", mats}};
  }
  return doc;
}

inline ModelSpec load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::InvalidInput, "cannot open config file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ModelValidation, "config " + path + " is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

inline void save_model(const ModelSpec& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::InvalidInput, "cannot write " + path);
  out << model_to_json(model).dump(2) << '\n';
}

}  // namespace acflow
