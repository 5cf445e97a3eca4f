#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtgp/data/preprocess.hpp"
#include "mtgp/errors.hpp"
#include "mtgp/experiment.hpp"
#include "mtgp/model.hpp"

namespace mtgp {

/// A fitted model with everything needed to predict in original units.
struct SavedModel {
  MethodSpec method;
  FittedModel model;
  TargetScaler scaler;
  std::vector<std::string> task_names;
  std::vector<std::string> task_units;
  std::vector<double> wavelengths;  // band centers of the model's inputs
  std::vector<BandRange> band_exclusions;
  std::uint64_t seed = 0;

  /// Predictive mean in original target units.
  Eigen::VectorXd predict(const Eigen::MatrixXd& xs, int task) const {
    Eigen::VectorXd m = model.predict_mean(xs, task);
    for (auto& v : m) v = scaler.invert(v, task);
    return m;
  }
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

inline Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// Model file schema ("mtgp-model-v1", JSON):
///
///   format, method (id, e.g. "comp-se-nn"), label,
///   structure: { num_tasks, terms: [{kernel, rank}], noise_rank (null if absent) },
///   parameters: flattened vector (see ModelConfig),
///   target_scaler: { mean: [M], scale: [M] },
///   task_names, task_units, wavelengths, band_exclusions: [[lo, hi]],
///   training: { inputs: [[d] x N], observations: [[input, task, standardized value]] },
///   training_checksum: FNV-1a of the training set (hex), seed.
///
/// Doubles are written in shortest round-trip form, so save then load
/// reproduces every parameter and prediction bit for bit.
inline nlohmann::json model_to_json(const SavedModel& m) {
  const auto& c = m.model.config();
  const auto& train = m.model.training();
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : c.terms) {
    terms.push_back({{"kernel", std::string(to_string(t.kernel.kind))}, {"rank", t.task.rank}});
  }
  nlohmann::json inputs = nlohmann::json::array();
  for (Eigen::Index i = 0; i < train.x.rows(); ++i) {
    inputs.push_back(detail::to_vec(train.x.row(i).transpose()));
  }
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : train.obs) obs.push_back({o.input, o.task, o.value});
  nlohmann::json excl = nlohmann::json::array();
  for (const auto& r : m.band_exclusions) excl.push_back({r.lo, r.hi});
  return {
      {"format", "mtgp-model-v1"},
      {"method", m.method.id()},
      {"label", m.method.label()},
      {"structure",
       {{"num_tasks", c.num_tasks()},
        {"terms", terms},
        {"noise_rank", c.noise ? nlohmann::json(c.noise->rank) : nlohmann::json(nullptr)}}},
      {"parameters", detail::to_vec(c.params())},
      {"target_scaler", {{"mean", detail::to_vec(m.scaler.mean)}, {"scale", detail::to_vec(m.scaler.scale)}}},
      {"task_names", m.task_names},
      {"task_units", m.task_units},
      {"wavelengths", m.wavelengths},
      {"band_exclusions", excl},
      {"training", {{"inputs", inputs}, {"observations", obs}}},
      {"training_checksum", detail::hex64(checksum(train))},
      {"seed", m.seed},
  };
}

inline SavedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "mtgp-model-v1") throw ParseError("unsupported model format", 0);
    const auto method = MethodSpec::parse(j.at("method").get<std::string>());
    const auto& st = j.at("structure");
    ModelConfig c;
    const int m = st.at("num_tasks").get<int>();
    for (const auto& t : st.at("terms")) {
      c.terms.push_back({TaskCorrMatrix(m, t.at("rank").get<int>()),
                         KernelSpec::unit(parse_kernel_kind(t.at("kernel").get<std::string>()))});
    }
    if (!st.at("noise_rank").is_null()) c.noise = TaskCorrMatrix(m, st.at("noise_rank").get<int>());
    c.task_noise_log = Eigen::VectorXd::Zero(m);
    c.set_params(detail::from_vec(j.at("parameters").get<std::vector<double>>()));

    const auto& tr = j.at("training");
    const auto rows = tr.at("inputs").get<std::vector<std::vector<double>>>();
    const auto dim = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
    ObservationSet train{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), dim), m, {}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != dim) throw ParseError("ragged training inputs", 0);
      train.x.row(static_cast<Eigen::Index>(i)) = detail::from_vec(rows[i]).transpose();
    }
    for (const auto& o : tr.at("observations")) {
      train.obs.push_back({o.at(0).get<int>(), o.at(1).get<int>(), o.at(2).get<double>()});
    }
    if (detail::hex64(checksum(train)) != j.at("training_checksum").get<std::string>()) {
      throw DataError("model file training data does not match its checksum");
    }
    std::vector<BandRange> excl;
    for (const auto& r : j.at("band_exclusions")) excl.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    const auto& sc = j.at("target_scaler");
    return SavedModel{method,
                      FittedModel(std::move(c), std::move(train)),
                      TargetScaler{detail::from_vec(sc.at("mean").get<std::vector<double>>()),
                                   detail::from_vec(sc.at("scale").get<std::vector<double>>())},
                      j.at("task_names").get<std::vector<std::string>>(),
                      j.at("task_units").get<std::vector<std::string>>(),
                      j.at("wavelengths").get<std::vector<double>>(),
                      std::move(excl),
                      j.at("seed").get<std::uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what(), 0);
  }
}

inline void save_model(const std::string& path, const SavedModel& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << model_to_json(m).dump(1) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline SavedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what(), 0);
  }
  return model_from_json(j);
}

}  // namespace mtgp
