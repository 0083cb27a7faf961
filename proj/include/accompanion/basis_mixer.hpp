#pragma once

// Basis-function encoding of the accompaniment and the two expressive
// networks: a bidirectional tanh RNN over onsets and a two-layer tanh MLP
// over notes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "accompanion/score.hpp"

namespace accompanion {

inline constexpr int kOnsetBasisSize = 10;
inline constexpr int kNoteBasisSize = 5;

using OnsetBasis = Eigen::Matrix<double, kOnsetBasisSize, 1>;
using NoteBasis = Eigen::Matrix<double, kNoteBasisSize, 1>;

struct OnsetTargets {
  double loudnessTrend = 1.0;
  double bpRatio = 1.0;
};

struct NoteTargets {
  double loudnessDev = 0.0;   // velocity units
  double timing = 0.0;        // seconds
  double articulation = 1.0;  // duration scale
};

namespace target_range {
inline constexpr double kRatioMin = 0.25, kRatioMax = 4.0;
inline constexpr double kLoudnessDevMax = 32.0;
inline constexpr double kTimingMax = 0.2;
inline constexpr double kArticulationMin = 0.1, kArticulationMax = 2.0;
}  // namespace target_range

class WeightsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OnsetwiseWeights {
  Eigen::MatrixXd fwIn, fwRec;
  Eigen::VectorXd fwBias;
  Eigen::MatrixXd bwIn, bwRec;
  Eigen::VectorXd bwBias;
  Eigen::MatrixXd out;  // 2 x 2H, columns [forward | backward]
  Eigen::VectorXd outBias;

  Eigen::Index hidden() const { return fwIn.rows(); }
};

struct NotewiseWeights {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
  Eigen::MatrixXd out;  // 3 x H2
  Eigen::VectorXd outBias;
};

struct ModelWeights {
  OnsetwiseWeights onsetwise;
  NotewiseWeights notewise;

  static ModelWeights zeros(int hidden = 16, int hidden1 = 16, int hidden2 = 16) {
    ModelWeights w;
    auto& o = w.onsetwise;
    o.fwIn = Eigen::MatrixXd::Zero(hidden, kOnsetBasisSize);
    o.fwRec = Eigen::MatrixXd::Zero(hidden, hidden);
    o.fwBias = Eigen::VectorXd::Zero(hidden);
    o.bwIn = Eigen::MatrixXd::Zero(hidden, kOnsetBasisSize);
    o.bwRec = Eigen::MatrixXd::Zero(hidden, hidden);
    o.bwBias = Eigen::VectorXd::Zero(hidden);
    o.out = Eigen::MatrixXd::Zero(2, 2 * hidden);
    o.outBias = Eigen::VectorXd::Zero(2);
    auto& n = w.notewise;
    n.w1 = Eigen::MatrixXd::Zero(hidden1, kNoteBasisSize);
    n.b1 = Eigen::VectorXd::Zero(hidden1);
    n.w2 = Eigen::MatrixXd::Zero(hidden2, hidden1);
    n.b2 = Eigen::VectorXd::Zero(hidden2);
    n.out = Eigen::MatrixXd::Zero(3, hidden2);
    n.outBias = Eigen::VectorXd::Zero(3);
    return w;
  }

  /// Throws WeightsError naming the first inconsistent or non-finite array.
  void validate() const;
};

namespace mixer_detail {

inline void check(const std::string& name, const Eigen::MatrixXd& m, Eigen::Index rows,
                  Eigen::Index cols) {
  if (m.rows() != rows || m.cols() != cols)
    throw WeightsError(name + ": expected shape [" + std::to_string(rows) + ", " +
                       std::to_string(cols) + "], got [" + std::to_string(m.rows()) + ", " +
                       std::to_string(m.cols()) + "]");
  if (!m.allFinite()) throw WeightsError(name + ": non-finite value");
}

inline double cap(double v, double limit) { return std::min(v, limit) / limit; }

inline double positive_mod(double v, double m) {
  double r = std::fmod(v, m);
  return r < 0 ? r + m : r;
}

}  // namespace mixer_detail

inline void ModelWeights::validate() const {
  using mixer_detail::check;
  const auto& o = onsetwise;
  const Eigen::Index h = o.fwIn.rows();
  if (h < 1) throw WeightsError("onsetwise.Wfw_in: hidden size must be positive");
  check("onsetwise.Wfw_in", o.fwIn, h, kOnsetBasisSize);
  check("onsetwise.Wfw_rec", o.fwRec, h, h);
  check("onsetwise.bfw", o.fwBias, h, 1);
  check("onsetwise.Wbw_in", o.bwIn, h, kOnsetBasisSize);
  check("onsetwise.Wbw_rec", o.bwRec, h, h);
  check("onsetwise.bbw", o.bwBias, h, 1);
  check("onsetwise.Wout", o.out, 2, 2 * h);
  check("onsetwise.bout", o.outBias, 2, 1);
  const auto& n = notewise;
  const Eigen::Index h1 = n.w1.rows(), h2 = n.w2.rows();
  if (h1 < 1 || h2 < 1) throw WeightsError("notewise: hidden sizes must be positive");
  check("notewise.W1", n.w1, h1, kNoteBasisSize);
  check("notewise.b1", n.b1, h1, 1);
  check("notewise.W2", n.w2, h2, h1);
  check("notewise.b2", n.b2, h2, 1);
  check("notewise.Wout", n.out, 3, h2);
  check("notewise.bout", n.outBias, 3, 1);
}

// ---------------------------------------------------------------------------
// Basis functions

/// One feature vector per onset group, in score order.
inline std::vector<OnsetBasis> extract_onset_basis(const AccompanimentScore& accomp) {
  using mixer_detail::cap;
  std::vector<OnsetBasis> out;
  const auto& groups = accomp.onsets;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    int lo = 127, hi = 0;
    double pitchSum = 0.0, durSum = 0.0;
    for (int id : group.noteIds) {
      const auto& n = accomp.note(id);
      lo = std::min(lo, n.pitch);
      hi = std::max(hi, n.pitch);
      pitchSum += n.pitch;
      durSum += n.duration;
    }
    const double size = static_cast<double>(group.noteIds.size());
    const double ioiPrev = g > 0 ? group.onsetBeats - groups[g - 1].onsetBeats : 0.0;
    const double ioiNext = g + 1 < groups.size() ? groups[g + 1].onsetBeats - group.onsetBeats : 0.0;
    OnsetBasis phi;
    phi << pitchSum / size / 127.0, (hi - lo) / 127.0, std::min(size, 10.0) / 10.0,
        mixer_detail::positive_mod(group.onsetBeats, 1.0),
        mixer_detail::positive_mod(group.onsetBeats, 4.0) / 4.0, cap(ioiPrev, 4.0),
        cap(ioiNext, 4.0), cap(durSum / size, 4.0), g == 0 ? 1.0 : 0.0,
        g + 1 == groups.size() ? 1.0 : 0.0;
    out.push_back(phi);
  }
  return out;
}

/// One feature vector per accompaniment note, indexed like `accomp.notes`.
inline std::vector<NoteBasis> extract_note_basis(const AccompanimentScore& accomp) {
  std::vector<NoteBasis> out(accomp.notes.size(), NoteBasis::Zero());
  for (const auto& group : accomp.onsets) {
    int lo = 127, hi = 0;
    for (int id : group.noteIds) {
      lo = std::min(lo, accomp.note(id).pitch);
      hi = std::max(hi, accomp.note(id).pitch);
    }
    const double span = std::max(1, hi - lo);
    const double size = static_cast<double>(group.noteIds.size());
    for (int id : group.noteIds) {
      const auto idx = accomp.indexOf(id);
      const auto& n = accomp.notes[idx];
      out[idx] << n.pitch / 127.0, mixer_detail::cap(n.duration, 4.0), (n.pitch - lo) / span,
          std::min(size, 10.0) / 10.0, mixer_detail::positive_mod(n.onset, 1.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Onsetwise bidirectional RNN

struct OnsetwiseTrace {
  std::vector<Eigen::VectorXd> forward;
  std::vector<Eigen::VectorXd> backward;
  std::vector<Eigen::Vector2d> output;  // pre-link
};

inline OnsetwiseTrace onsetwise_forward(const OnsetwiseWeights& w, std::span<const OnsetBasis> basis) {
  const auto t = basis.size();
  const Eigen::Index h = w.hidden();
  OnsetwiseTrace trace;
  trace.forward.resize(t);
  trace.backward.resize(t);
  trace.output.resize(t);

  Eigen::VectorXd state = Eigen::VectorXd::Zero(h);
  for (std::size_t i = 0; i < t; ++i) {
    state = (w.fwIn * basis[i] + w.fwRec * state + w.fwBias).array().tanh().matrix();
    trace.forward[i] = state;
  }
  state.setZero();
  for (std::size_t i = t; i-- > 0;) {
    state = (w.bwIn * basis[i] + w.bwRec * state + w.bwBias).array().tanh().matrix();
    trace.backward[i] = state;
  }
  for (std::size_t i = 0; i < t; ++i)
    trace.output[i] = w.out.leftCols(h) * trace.forward[i] + w.out.rightCols(h) * trace.backward[i] +
                      w.outBias;
  return trace;
}

inline OnsetTargets onset_link(const Eigen::Vector2d& y) {
  using namespace target_range;
  return {std::clamp(std::exp(y(0)), kRatioMin, kRatioMax),
          std::clamp(std::exp(y(1)), kRatioMin, kRatioMax)};
}

inline std::vector<OnsetTargets> predict_onsetwise(const ModelWeights& weights,
                                                   std::span<const OnsetBasis> basis) {
  weights.validate();
  auto trace = onsetwise_forward(weights.onsetwise, basis);
  std::vector<OnsetTargets> out;
  out.reserve(trace.output.size());
  for (const auto& y : trace.output) out.push_back(onset_link(y));
  return out;
}

// ---------------------------------------------------------------------------
// Notewise feed-forward network

inline Eigen::Vector3d notewise_output(const NotewiseWeights& w, const NoteBasis& phi) {
  Eigen::VectorXd h1 = (w.w1 * phi + w.b1).array().tanh().matrix();
  Eigen::VectorXd h2 = (w.w2 * h1 + w.b2).array().tanh().matrix();
  return w.out * h2 + w.outBias;
}

/// d(pre-link output) / d(phi).
inline Eigen::Matrix<double, 3, kNoteBasisSize> notewise_jacobian(const NotewiseWeights& w,
                                                                  const NoteBasis& phi) {
  Eigen::VectorXd h1 = (w.w1 * phi + w.b1).array().tanh().matrix();
  Eigen::VectorXd h2 = (w.w2 * h1 + w.b2).array().tanh().matrix();
  Eigen::VectorXd d1 = (1.0 - h1.array().square()).matrix();
  Eigen::VectorXd d2 = (1.0 - h2.array().square()).matrix();
  return w.out * d2.asDiagonal() * w.w2 * d1.asDiagonal() * w.w1;
}

inline NoteTargets note_link(const Eigen::Vector3d& y) {
  using namespace target_range;
  return {kLoudnessDevMax * std::tanh(y(0)), kTimingMax * std::tanh(y(1)),
          std::clamp(std::exp(y(2)), kArticulationMin, kArticulationMax)};
}

inline NoteTargets predict_notewise(const ModelWeights& weights, const NoteBasis& basis) {
  weights.validate();
  return note_link(notewise_output(weights.notewise, basis));
}

// ---------------------------------------------------------------------------

/// All targets for a piece, computed once at load.
struct PieceTargets {
  std::vector<OnsetTargets> onsets;  // per onset group
  std::vector<NoteTargets> notes;    // indexed like AccompanimentScore::notes
};

inline PieceTargets predict_piece(const ModelWeights& weights, const AccompanimentScore& accomp) {
  weights.validate();
  PieceTargets out;
  auto onsetBasis = extract_onset_basis(accomp);
  auto trace = onsetwise_forward(weights.onsetwise, onsetBasis);
  for (const auto& y : trace.output) out.onsets.push_back(onset_link(y));
  for (const auto& phi : extract_note_basis(accomp))
    out.notes.push_back(note_link(notewise_output(weights.notewise, phi)));
  return out;
}

/// Deterministic weights for a seed: uniform in +-1/sqrt(fan_in).
inline ModelWeights random_init(std::uint64_t seed, int hidden = 16, int hidden1 = 16,
                                int hidden2 = 16) {
  std::mt19937_64 rng(seed);
  // explicit 53-bit conversion keeps the stream identical across standard libraries
  auto fill = [&](auto& m, Eigen::Index fanIn) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fanIn));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      m.data()[i] = (2.0 * u - 1.0) * scale;
    }
  };
  ModelWeights w = ModelWeights::zeros(hidden, hidden1, hidden2);
  auto& o = w.onsetwise;
  fill(o.fwIn, kOnsetBasisSize);
  fill(o.fwRec, hidden);
  fill(o.fwBias, kOnsetBasisSize);
  fill(o.bwIn, kOnsetBasisSize);
  fill(o.bwRec, hidden);
  fill(o.bwBias, kOnsetBasisSize);
  fill(o.out, 2 * hidden);
  fill(o.outBias, 2 * hidden);
  auto& n = w.notewise;
  fill(n.w1, kNoteBasisSize);
  fill(n.b1, kNoteBasisSize);
  fill(n.w2, hidden1);
  fill(n.b2, hidden1);
  fill(n.out, hidden2);
  fill(n.outBias, hidden2);
  return w;
}

// ---------------------------------------------------------------------------
// Weights file: {"onsetwise": {name: {"shape": [r, c], "data": [...]}, ...},
//                "notewise": {...}}, data row-major.

namespace mixer_detail {

inline nlohmann::json to_json_array(const Eigen::MatrixXd& m, bool vector) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  nlohmann::json shape = vector ? nlohmann::json::array({m.rows()})
                                : nlohmann::json::array({m.rows(), m.cols()});
  return {{"shape", shape}, {"data", data}};
}

inline Eigen::MatrixXd from_json_array(const nlohmann::json& parent, const std::string& section,
                                       const char* key) {
  const std::string name = section + "." + key;
  if (!parent.contains(key)) throw WeightsError(name + ": missing");
  const auto& node = parent.at(key);
  if (!node.is_object() || !node.contains("shape") || !node.contains("data"))
    throw WeightsError(name + ": expected an object with \"shape\" and \"data\"");
  const auto& shape = node.at("shape");
  if (!shape.is_array() || shape.empty() || shape.size() > 2)
    throw WeightsError(name + ": shape must be [n] or [rows, cols]");
  for (const auto& d : shape)
    if (!d.is_number_integer() || d.get<std::int64_t>() < 0)
      throw WeightsError(name + ": shape entries must be non-negative integers");
  const Eigen::Index rows = shape[0].get<Eigen::Index>();
  const Eigen::Index cols = shape.size() == 2 ? shape[1].get<Eigen::Index>() : 1;
  const auto& data = node.at("data");
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw WeightsError(name + ": data length does not match shape [" + std::to_string(rows) +
                       ", " + std::to_string(cols) + "]");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows * cols; ++i) {
    const auto& v = data[static_cast<std::size_t>(i)];
    if (!v.is_number() || !std::isfinite(v.get<double>()))
      throw WeightsError(name + ": non-finite value at element " + std::to_string(i));
    m(i / cols, i % cols) = v.get<double>();
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& parent, const std::string& section,
                                        const char* key) {
  Eigen::MatrixXd m = from_json_array(parent, section, key);
  if (m.cols() != 1)
    throw WeightsError(section + "." + key + ": expected a vector, got shape [" +
                       std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + "]");
  return m.col(0);
}

}  // namespace mixer_detail

inline std::string save_weights(const ModelWeights& w) {
  using mixer_detail::to_json_array;
  const auto& o = w.onsetwise;
  const auto& n = w.notewise;
  nlohmann::json j;
  j["onsetwise"] = {{"Wfw_in", to_json_array(o.fwIn, false)},  {"Wfw_rec", to_json_array(o.fwRec, false)},
                    {"bfw", to_json_array(o.fwBias, true)},    {"Wbw_in", to_json_array(o.bwIn, false)},
                    {"Wbw_rec", to_json_array(o.bwRec, false)}, {"bbw", to_json_array(o.bwBias, true)},
                    {"Wout", to_json_array(o.out, false)},     {"bout", to_json_array(o.outBias, true)}};
  j["notewise"] = {{"W1", to_json_array(n.w1, false)},   {"b1", to_json_array(n.b1, true)},
                   {"W2", to_json_array(n.w2, false)},   {"b2", to_json_array(n.b2, true)},
                   {"Wout", to_json_array(n.out, false)}, {"bout", to_json_array(n.outBias, true)}};
  return j.dump(1);
}

inline ModelWeights load_weights(std::string_view text) {
  using mixer_detail::from_json_array;
  using mixer_detail::vector_from_json;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw WeightsError(std::string("weights file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("onsetwise") || !j.contains("notewise"))
    throw WeightsError("weights file needs \"onsetwise\" and \"notewise\" sections");
  const auto& o = j.at("onsetwise");
  const auto& n = j.at("notewise");
  ModelWeights w;
  w.onsetwise.fwIn = from_json_array(o, "onsetwise", "Wfw_in");
  w.onsetwise.fwRec = from_json_array(o, "onsetwise", "Wfw_rec");
  w.onsetwise.fwBias = vector_from_json(o, "onsetwise", "bfw");
  w.onsetwise.bwIn = from_json_array(o, "onsetwise", "Wbw_in");
  w.onsetwise.bwRec = from_json_array(o, "onsetwise", "Wbw_rec");
  w.onsetwise.bwBias = vector_from_json(o, "onsetwise", "bbw");
  w.onsetwise.out = from_json_array(o, "onsetwise", "Wout");
  w.onsetwise.outBias = vector_from_json(o, "onsetwise", "bout");
  w.notewise.w1 = from_json_array(n, "notewise", "W1");
  w.notewise.b1 = vector_from_json(n, "notewise", "b1");
  w.notewise.w2 = from_json_array(n, "notewise", "W2");
  w.notewise.b2 = vector_from_json(n, "notewise", "b2");
  w.notewise.out = from_json_array(n, "notewise", "Wout");
  w.notewise.outBias = vector_from_json(n, "notewise", "bout");
  w.validate();
  return w;
}

}  // namespace accompanion
