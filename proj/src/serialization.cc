#include "nodectl/serialization.h"

#include <fstream>
#include <sstream>

namespace nodectl {

Json MatToJson(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat MatFromJson(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) {
    throw SchemaError(what + ": expected a nonempty array of rows");
  }
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw SchemaError(what + ": rows must be nonempty arrays");
  Mat m(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw SchemaError(what + ": ragged row " + std::to_string(i));
    }
    for (size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw SchemaError(what + ": non-numeric entry");
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

Json VecToJson(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vec VecFromJson(const Json& j, const std::string& what) {
  if (!j.is_array()) throw SchemaError(what + ": expected an array");
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaError(what + ": non-numeric entry");
    v(i) = j[i].get<double>();
  }
  return v;
}

Json BoxToJson(const Box& box) {
  Json lo = Json::array(), hi = Json::array();
  for (const auto& iv : box) {
    lo.push_back(iv.lo);
    hi.push_back(iv.hi);
  }
  return Json{{"lo", lo}, {"hi", hi}};
}

Box BoxFromJson(const Json& j) {
  RequireKeys(j, {"lo", "hi"}, "box");
  const Vec lo = VecFromJson(j.at("lo"), "box.lo");
  const Vec hi = VecFromJson(j.at("hi"), "box.hi");
  if (lo.size() != hi.size()) throw SchemaError("box: lo/hi length mismatch");
  Box box;
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (!(lo(i) <= hi(i))) throw SchemaError("box: lo > hi");
    box.emplace_back(lo(i), hi(i));
  }
  return box;
}

void RequireKeys(const Json& j, std::initializer_list<const char*> allowed,
                 const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw SchemaError(where + ": unknown key '" + it.key() + "'");
  }
}

Json ModelToJson(const NodeModel& model) {
  Json weights = Json::array(), biases = Json::array();
  for (const auto& w : model.net.weights) weights.push_back(MatToJson(w));
  for (const auto& b : model.net.biases) biases.push_back(VecToJson(b));
  return Json{{"state_dim", model.state_dim()},
              {"dims", model.net.dims},
              {"A", MatToJson(model.A)},
              {"weights", weights},
              {"biases", biases},
              {"epsilon", model.epsilon},
              {"box", BoxToJson(model.box)}};
}

NodeModel ModelFromJson(const Json& j) {
  RequireKeys(j, {"state_dim", "dims", "A", "weights", "biases", "epsilon", "box"},
              "model");
  NodeModel m;
  try {
    m.net.dims = j.at("dims").get<std::vector<int>>();
    m.A = MatFromJson(j.at("A"), "model.A");
    for (const auto& w : j.at("weights")) {
      m.net.weights.push_back(MatFromJson(w, "model.weights"));
    }
    for (const auto& b : j.at("biases")) {
      m.net.biases.push_back(VecFromJson(b, "model.biases"));
    }
    m.epsilon = j.at("epsilon").get<double>();
    m.box = BoxFromJson(j.at("box"));
    if (j.at("state_dim").get<int>() != m.A.rows()) {
      throw SchemaError("model: state_dim does not match A");
    }
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("model: ") + e.what());
  }
  try {
    m.Validate();
  } catch (const DimensionError& e) {
    throw SchemaError(e.what());
  }
  return m;
}

Json DatasetToJson(const Dataset& d) {
  Json xs = Json::array(), dxs = Json::array();
  for (const auto& x : d.states) xs.push_back(VecToJson(x));
  for (const auto& x : d.derivatives) dxs.push_back(VecToJson(x));
  return Json{{"box", BoxToJson(d.box)}, {"states", xs}, {"derivatives", dxs}};
}

Dataset DatasetFromJson(const Json& j) {
  RequireKeys(j, {"box", "states", "derivatives"}, "dataset");
  Dataset d;
  d.box = BoxFromJson(j.at("box"));
  for (const auto& x : j.at("states")) d.states.push_back(VecFromJson(x, "states"));
  for (const auto& x : j.at("derivatives")) {
    d.derivatives.push_back(VecFromJson(x, "derivatives"));
  }
  if (d.states.size() != d.derivatives.size()) {
    throw SchemaError("dataset: states/derivatives length mismatch");
  }
  return d;
}

Json BoundsToJson(const SectorBounds& b) {
  Json layers = Json::array();
  for (size_t i = 0; i < b.per_layer.size(); ++i) {
    const auto& l = b.per_layer[i];
    Json alpha = Json::array(), beta = Json::array();
    for (const auto& n : l.per_neuron) {
      alpha.push_back(n.alpha);
      beta.push_back(n.beta);
    }
    Json lo = Json::array(), hi = Json::array();
    for (const auto& iv : b.preactivation_ranges[i]) {
      lo.push_back(iv.lo);
      hi.push_back(iv.hi);
    }
    layers.push_back(Json{{"layer", i + 1},
                          {"alpha", l.alpha},
                          {"beta", l.beta},
                          {"per_neuron_alpha", alpha},
                          {"per_neuron_beta", beta},
                          {"preactivation", Json{{"lo", lo}, {"hi", hi}}}});
  }
  return Json{{"layers", layers}};
}

Json CertificateToJson(const ContractionCertificate& c) {
  return Json{{"P", MatToJson(c.P)},   {"gamma", c.gamma}, {"mu", c.mu},
              {"p_low", c.p_low},      {"p_up", c.p_up},   {"form", c.form},
              {"residuals", c.residuals}};
}

Json ControllerToJson(const ControllerSpec& c) {
  Json log = Json::array();
  for (const auto& p : c.sweep_log) {
    log.push_back(Json{{"s_low", p.s_low},
                       {"kappa", p.kappa},
                       {"status", p.status},
                       {"mu", p.mu},
                       {"s_min", p.s_min},
                       {"s_max", p.s_max},
                       {"objective", p.objective},
                       {"max_residual", p.max_residual}});
  }
  return Json{{"H", MatToJson(c.H)},
              {"W_umin", MatToJson(c.W_umin)},
              {"b_u", VecToJson(c.b_u)},
              {"gamma", c.gamma},
              {"radius", c.radius},
              {"S", MatToJson(c.S)},
              {"Y", MatToJson(c.Y)},
              {"mu", c.mu},
              {"s_low", c.s_low},
              {"s_up", c.s_up},
              {"form", c.form},
              {"sweep_log", log}};
}

ControllerSpec ControllerFromJson(const Json& j) {
  RequireKeys(j, {"H", "W_umin", "b_u", "gamma", "radius", "S", "Y", "mu",
                  "s_low", "s_up", "form", "sweep_log"},
              "controller");
  ControllerSpec c;
  try {
    c.H = MatFromJson(j.at("H"), "H");
    c.W_umin = MatFromJson(j.at("W_umin"), "W_umin");
    c.b_u = VecFromJson(j.at("b_u"), "b_u");
    c.gamma = j.at("gamma").get<double>();
    c.radius = j.at("radius").get<double>();
    c.S = MatFromJson(j.at("S"), "S");
    c.Y = MatFromJson(j.at("Y"), "Y");
    c.mu = j.at("mu").get<double>();
    c.s_low = j.at("s_low").get<double>();
    c.s_up = j.at("s_up").get<double>();
    if (j.contains("form")) c.form = j.at("form").get<std::string>();
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("controller: ") + e.what());
  }
  return c;
}

namespace {

const char* KindName(VariableKind k) {
  switch (k) {
    case VariableKind::kSymmetric:
      return "symmetric";
    case VariableKind::kRectangular:
      return "rectangular";
    case VariableKind::kScalar:
      return "scalar";
  }
  return "unknown";
}

}  // namespace

Json LmiProblemToJson(const LmiProblem& p, const Assignment* assignment) {
  Json vars = Json::array();
  for (const auto& v : p.variables()) {
    Json e{{"name", v.name}, {"kind", KindName(v.kind)}, {"rows", v.rows},
           {"cols", v.cols}};
    if (v.lower) e["lower"] = *v.lower;
    if (v.upper) e["upper"] = *v.upper;
    vars.push_back(std::move(e));
  }
  const Assignment zero = p.ZeroAssignment();
  Json cons = Json::array();
  for (const auto& c : p.constraints()) {
    Json e{{"name", c.name}, {"size", c.map(zero).rows()}};
    if (assignment) {
      e["lambda_max"] = SymEigBounds(Symmetrize(c.map(*assignment))).lambda_max;
    }
    cons.push_back(std::move(e));
  }
  Json out{{"variables", vars}, {"constraints", cons},
           {"has_objective", p.objective().has_value()}};
  return out;
}

Json LmiSolutionToJson(const LmiSolution& s) {
  Json vals = Json::object();
  for (const auto& [name, m] : s.assignment.values()) vals[name] = MatToJson(m);
  return Json{{"status", ToString(s.status)},
              {"max_residual", s.max_residual},
              {"objective_value", s.objective_value},
              {"residuals", s.residuals},
              {"infeasibility", s.infeasibility},
              {"newton_steps", s.newton_steps},
              {"message", s.message},
              {"assignment", vals}};
}

Json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError("'" + path + "': " + e.what());
  }
}

void WriteTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void WriteJsonFile(const std::string& path, const Json& j) {
  WriteTextFile(path, j.dump(2) + "\n");
}

}  // namespace nodectl
