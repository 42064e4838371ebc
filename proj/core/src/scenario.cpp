#include "lem/scenario.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace lem::io {
namespace {

using nlohmann::json;
using cosim::Scenario;

std::string summarize(const std::vector<ScenarioIssue>& issues) {
  std::string s = "invalid scenario";
  for (const auto& i : issues) s += "\n  [" + i.kind + "] " + (i.path.empty() ? "/" : i.path) + ": " + i.message;
  return s;
}

struct Reader {
  std::vector<ScenarioIssue> issues;

  void add(std::string kind, std::string path, std::string msg) {
    issues.push_back({std::move(kind), std::move(path), std::move(msg)});
  }

  const json* member(const json& obj, const std::string& key, const std::string& path, bool required) {
    if (!obj.is_object()) {
      add("schema", path, "expected an object");
      return nullptr;
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) add("schema", path + "/" + key, "missing required field");
      return nullptr;
    }
    return &*it;
  }

  std::optional<double> number(const json& obj, const std::string& key, const std::string& path, bool required) {
    const json* v = member(obj, key, path, required);
    if (!v) return std::nullopt;
    if (!v->is_number()) {
      add("schema", path + "/" + key, "expected a number");
      return std::nullopt;
    }
    return v->get<double>();
  }

  double number_or(const json& obj, const std::string& key, const std::string& path, double def) {
    return number(obj, key, path, false).value_or(def);
  }

  std::optional<std::string> string(const json& obj, const std::string& key, const std::string& path, bool required) {
    const json* v = member(obj, key, path, required);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      add("schema", path + "/" + key, "expected a string");
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  std::optional<net3p::Complex> complex(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      add("schema", path, "expected [real, imag]");
      return std::nullopt;
    }
    return net3p::Complex(v[0].get<double>(), v[1].get<double>());
  }

  std::optional<std::vector<double>> series(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) {
      add("schema", path, "expected a non-empty array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        add("schema", path + "/" + std::to_string(i), "expected a number");
        return std::nullopt;
      }
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::optional<net3p::PhaseSet> phases(const json& obj, const std::string& path) {
    auto s = string(obj, "phases", path, false);
    if (!s) return obj.is_object() && obj.contains("phases") ? std::nullopt : std::optional(net3p::PhaseSet::all());
    try {
      return net3p::PhaseSet::from_string(*s);
    } catch (const std::exception& e) {
      add("schema", path + "/phases", e.what());
      return std::nullopt;
    }
  }

  // Scale applied to a section's quantities: 1 for "pu", the given divisor for "si".
  std::optional<double> units(const json& section, const std::string& path, double si_divisor) {
    auto u = string(section, "units", path, false);
    if (!u || *u == "pu") return 1.0;
    if (*u == "si") {
      if (!(si_divisor > 0.0)) {
        add("units", path + "/units", "SI units need positive base values");
        return std::nullopt;
      }
      return si_divisor;
    }
    add("units", path + "/units", "unknown unit system '" + *u + "' (expected pu or si)");
    return std::nullopt;
  }
};

sm::CommodityKind kind_of(Reader& r, const std::string& s, const std::string& path) {
  if (s == "load") return sm::CommodityKind::load;
  if (s == "generator") return sm::CommodityKind::generator;
  r.add("schema", path, "expected load or generator");
  return sm::CommodityKind::load;
}

const char* kind_name(sm::CommodityKind k) { return k == sm::CommodityKind::load ? "load" : "generator"; }

}  // namespace

ScenarioError::ScenarioError(std::vector<ScenarioIssue> issues)
    : std::runtime_error(summarize(issues)), issues_(std::move(issues)) {}

std::string format_number(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

Scenario parse_scenario_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError({{"parse", "", e.what()}});
  }
  Reader r;
  if (!doc.is_object()) throw ScenarioError({{"schema", "", "document must be an object"}});
  {
    const json* v = r.member(doc, "schema_version", "", true);
    if (v && (!v->is_number_integer() || v->get<int>() != kSchemaVersion))
      r.add("schema", "/schema_version", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
  }

  // network
  std::vector<net3p::Bus> buses;
  std::vector<net3p::Branch> branches;
  double s_base = 1e6, v_base = 2401.78;
  if (const json* net = r.member(doc, "network", "", true)) {
    s_base = r.number_or(*net, "s_base_va", "/network", s_base);
    v_base = r.number_or(*net, "v_base_v", "/network", v_base);
    if (!(s_base > 0.0)) r.add("units", "/network/s_base_va", "base power must be positive");
    if (!(v_base > 0.0)) r.add("units", "/network/v_base_v", "base voltage must be positive");
    const double z_base = v_base * v_base / s_base;
    const double i_base = s_base / v_base;
    const auto zscale = r.units(*net, "/network", z_base);
    const double iscale = zscale && *zscale != 1.0 ? i_base : 1.0;

    std::set<std::string> ids;
    if (const json* arr = r.member(*net, "buses", "/network", true); arr && arr->is_array()) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        const json& b = (*arr)[i];
        const std::string path = "/network/buses/" + std::to_string(i);
        net3p::Bus bus;
        bus.id = r.string(b, "id", path, true).value_or("");
        ids.insert(bus.id);
        bus.phases = r.phases(b, path).value_or(net3p::PhaseSet::all());
        const auto kind = r.string(b, "kind", path, false).value_or("pq");
        if (kind == "slack")
          bus.kind = net3p::BusKind::slack;
        else if (kind != "pq")
          r.add("schema", path + "/kind", "expected slack or pq");
        if (const json* vn = r.member(b, "v_nominal", path, false)) {
          if (!vn->is_array() || vn->size() != 3)
            r.add("schema", path + "/v_nominal", "expected three [real, imag] pairs");
          else
            for (std::size_t k = 0; k < 3; ++k)
              if (auto c = r.complex((*vn)[k], path + "/v_nominal/" + std::to_string(k))) bus.v_nominal[k] = *c;
        }
        buses.push_back(std::move(bus));
      }
    } else if (arr) {
      r.add("schema", "/network/buses", "expected an array");
    }

    if (const json* arr = r.member(*net, "branches", "/network", true); arr && arr->is_array()) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        const json& b = (*arr)[i];
        const std::string path = "/network/branches/" + std::to_string(i);
        net3p::Branch br;
        br.id = r.string(b, "id", path, true).value_or("");
        br.from = r.string(b, "from", path, true).value_or("");
        br.to = r.string(b, "to", path, true).value_or("");
        for (const auto* end : {&br.from, &br.to})
          if (!end->empty() && !ids.contains(*end))
            r.add("reference", path, "branch " + br.id + " references unknown bus " + *end);
        br.phases = r.phases(b, path).value_or(net3p::PhaseSet::all());
        const auto n = static_cast<Eigen::Index>(br.phases.size());
        const double zs = zscale.value_or(1.0);
        if (const json* z = r.member(b, "z", path, true)) {
          if (z->is_array() && z->size() == 2 && (*z)[0].is_number()) {
            if (auto c = r.complex(*z, path + "/z")) br.z = Eigen::MatrixXcd::Identity(n, n) * (*c / zs);
          } else if (z->is_array() && static_cast<Eigen::Index>(z->size()) == n) {
            br.z = Eigen::MatrixXcd::Zero(n, n);
            for (Eigen::Index row = 0; row < n; ++row) {
              const json& zr = (*z)[static_cast<std::size_t>(row)];
              if (!zr.is_array() || static_cast<Eigen::Index>(zr.size()) != n) {
                r.add("schema", path + "/z/" + std::to_string(row), "row length must equal the phase count");
                continue;
              }
              for (Eigen::Index col = 0; col < n; ++col)
                if (auto c = r.complex(zr[static_cast<std::size_t>(col)],
                                       path + "/z/" + std::to_string(row) + "/" + std::to_string(col)))
                  br.z(row, col) = *c / zs;
            }
          } else {
            r.add("schema", path + "/z", "expected [r, x] or a phase-count square matrix of [r, x]");
          }
        }
        if (const json* im = r.member(b, "i_max", path, true)) {
          if (im->is_number()) {
            br.i_max = Eigen::VectorXd::Constant(n, im->get<double>() / iscale);
          } else if (auto s = r.series(*im, path + "/i_max")) {
            if (static_cast<Eigen::Index>(s->size()) != n) {
              r.add("schema", path + "/i_max", "length must equal the phase count");
            } else {
              br.i_max = Eigen::Map<Eigen::VectorXd>(s->data(), n) / iscale;
            }
          }
        }
        branches.push_back(std::move(br));
      }
    } else if (arr) {
      r.add("schema", "/network/branches", "expected an array");
    }
  }

  std::optional<net3p::ThreePhaseNetwork> network;
  if (r.issues.empty()) {
    try {
      network.emplace(buses, branches, s_base, v_base);
    } catch (const net3p::NetworkError& e) {
      r.add("schema", "/network", e.what());
    }
  }

  // population
  std::vector<cosim::SmoSpec> smos;
  std::vector<cosim::DcaSpec> dcas;
  if (const json* pop = r.member(doc, "population", "", true)) {
    const auto pscale = r.units(*pop, "/population", s_base / 1000.0);
    if (const json* arr = r.member(*pop, "smos", "/population", true); arr && arr->is_array()) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        const json& s = (*arr)[i];
        const std::string path = "/population/smos/" + std::to_string(i);
        cosim::SmoSpec smo;
        smo.id = r.string(s, "id", path, true).value_or("");
        smo.bus_id = r.string(s, "bus", path, true).value_or("");
        smo.alpha_p = r.number(s, "alpha_p", path, false);
        smo.alpha_q = r.number(s, "alpha_q", path, false);
        if (!smo.bus_id.empty() && std::none_of(buses.begin(), buses.end(), [&](const auto& b) { return b.id == smo.bus_id; }))
          r.add("reference", path + "/bus", "SMO " + smo.id + " references unknown bus " + smo.bus_id);
        smos.push_back(std::move(smo));
      }
    }
    if (const json* arr = r.member(*pop, "dcas", "/population", true); arr && arr->is_array()) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        const json& d = (*arr)[i];
        const std::string path = "/population/dcas/" + std::to_string(i);
        cosim::DcaSpec dca;
        dca.id = r.string(d, "id", path, true).value_or("");
        dca.smo_id = r.string(d, "smo", path, true).value_or("");
        if (auto k = r.string(d, "p_kind", path, false)) dca.p_kind = kind_of(r, *k, path + "/p_kind");
        if (auto k = r.string(d, "q_kind", path, false)) dca.q_kind = kind_of(r, *k, path + "/q_kind");
        dca.p_profile = r.string(d, "p_profile", path, false).value_or("");
        dca.q_profile = r.string(d, "q_profile", path, false).value_or("");
        dca.commitment = r.number_or(d, "commitment", path, 1.0);
        dca.flexibility = r.number(d, "flexibility", path, false);
        dca.beta_p = r.number(d, "beta_p", path, false);
        dca.beta_q = r.number(d, "beta_q", path, false);
        if (const json* base = r.member(d, "baseline", path, true); base && base->is_object()) {
          for (const auto& [key, val] : base->items()) {
            if (key.size() != 1 || key[0] < 'a' || key[0] > 'c') {
              r.add("schema", path + "/baseline/" + key, "phase key must be a, b or c");
              continue;
            }
            if (auto c = r.complex(val, path + "/baseline/" + key)) {
              const double sc = pscale.value_or(1.0);
              dca.phases[static_cast<std::size_t>(key[0] - 'a')] = cosim::DcaPhaseBase{c->real() / sc, c->imag() / sc};
            }
          }
        } else if (base) {
          r.add("schema", path + "/baseline", "expected an object keyed by phase");
        }
        if (!dca.smo_id.empty() && std::none_of(smos.begin(), smos.end(), [&](const auto& s) { return s.id == dca.smo_id; }))
          r.add("reference", path + "/smo", "DCA " + dca.id + " references unknown SMO " + dca.smo_id);
        dcas.push_back(std::move(dca));
      }
    }
  }

  std::map<std::string, std::vector<double>> profiles;
  if (const json* prof = r.member(doc, "profiles", "", false)) {
    if (!prof->is_object())
      r.add("schema", "/profiles", "expected an object of named series");
    else
      for (const auto& [name, val] : prof->items())
        if (auto s = r.series(val, "/profiles/" + name)) profiles[name] = *s;
  }

  cosim::MarketConfig market;
  if (const json* m = r.member(doc, "market", "", true)) {
    const std::string p = "/market";
    market.dt_s_min = r.number_or(*m, "dt_s", p, market.dt_s_min);
    market.dt_p_min = r.number_or(*m, "dt_p", p, market.dt_p_min);
    market.horizon_min = r.number_or(*m, "horizon", p, market.horizon_min);
    market.xi = r.number_or(*m, "xi", p, market.xi);
    market.epsilon = r.number_or(*m, "epsilon", p, market.epsilon);
    market.theta_window_deg = r.number_or(*m, "theta_window", p, market.theta_window_deg);
    if (const json* s = r.member(*m, "seed", p, false)) {
      if (s->is_number_unsigned())
        market.seed = s->get<std::uint64_t>();
      else
        r.add("schema", p + "/seed", "expected a non-negative integer");
    }
    for (auto [key, lo, hi] : {std::tuple{"v_limits", &market.v_min, &market.v_max},
                               std::tuple{"flexibility_range", &market.flex_min, &market.flex_max}}) {
      if (const json* v = r.member(*m, key, p, false)) {
        auto s = r.series(*v, p + "/" + key);
        if (s && s->size() == 2) {
          *lo = (*s)[0];
          *hi = (*s)[1];
        } else if (s) {
          r.add("schema", p + "/" + key, "expected [low, high]");
        }
      }
    }
  }

  cosim::PriceSeries prices;
  if (const json* pr = r.member(doc, "prices", "", true)) {
    for (auto [key, dst] : {std::pair{"lambda_p", &prices.lambda_p}, std::pair{"lambda_q", &prices.lambda_q}}) {
      if (const json* v = r.member(*pr, key, "/prices", true))
        if (auto s = r.series(*v, std::string("/prices/") + key)) *dst = *s;
    }
  }

  if (!r.issues.empty() || !network) throw ScenarioError(std::move(r.issues));
  Scenario scenario{std::move(*network), std::move(smos), std::move(dcas), std::move(profiles), market, prices};
  try {
    scenario.validate();
  } catch (const cosim::ScenarioInvalid& e) {
    throw ScenarioError({{e.kind(), e.path(), e.what()}});
  }
  return scenario;
}

Scenario parse_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str());
}

std::string serialize_scenario(const Scenario& s) {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  const auto& net = s.network;
  json& jn = doc["network"];
  jn["units"] = "pu";
  jn["s_base_va"] = net.s_base();
  jn["v_base_v"] = net.v_base();
  jn["buses"] = json::array();
  for (const auto& b : net.buses()) {
    json jb{{"id", b.id}, {"phases", b.phases.to_string()}, {"kind", b.kind == net3p::BusKind::slack ? "slack" : "pq"}};
    jb["v_nominal"] = json::array();
    for (const auto& v : b.v_nominal) jb["v_nominal"].push_back({v.real(), v.imag()});
    jn["buses"].push_back(std::move(jb));
  }
  jn["branches"] = json::array();
  for (const auto& br : net.branches()) {
    json jz = json::array();
    for (Eigen::Index r = 0; r < br.z.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < br.z.cols(); ++c) row.push_back({br.z(r, c).real(), br.z(r, c).imag()});
      jz.push_back(std::move(row));
    }
    json im = json::array();
    for (Eigen::Index k = 0; k < br.i_max.size(); ++k) im.push_back(br.i_max[k]);
    jn["branches"].push_back(
        {{"id", br.id}, {"from", br.from}, {"to", br.to}, {"phases", br.phases.to_string()}, {"z", jz}, {"i_max", im}});
  }

  json& jp = doc["population"];
  jp["units"] = "pu";
  jp["smos"] = json::array();
  for (const auto& smo : s.smos) {
    json j{{"id", smo.id}, {"bus", smo.bus_id}};
    if (smo.alpha_p) j["alpha_p"] = *smo.alpha_p;
    if (smo.alpha_q) j["alpha_q"] = *smo.alpha_q;
    jp["smos"].push_back(std::move(j));
  }
  jp["dcas"] = json::array();
  for (const auto& d : s.dcas) {
    json j{{"id", d.id}, {"smo", d.smo_id}, {"p_kind", kind_name(d.p_kind)}, {"q_kind", kind_name(d.q_kind)},
           {"commitment", d.commitment}};
    if (!d.p_profile.empty()) j["p_profile"] = d.p_profile;
    if (!d.q_profile.empty()) j["q_profile"] = d.q_profile;
    if (d.flexibility) j["flexibility"] = *d.flexibility;
    if (d.beta_p) j["beta_p"] = *d.beta_p;
    if (d.beta_q) j["beta_q"] = *d.beta_q;
    json base = json::object();
    for (net3p::Phase p : net3p::kAllPhases)
      if (const auto& b = d.at(p)) base[std::string(1, net3p::to_char(p))] = {b->p, b->q};
    j["baseline"] = std::move(base);
    jp["dcas"].push_back(std::move(j));
  }

  doc["profiles"] = json::object();
  for (const auto& [name, series] : s.profiles) doc["profiles"][name] = series;

  const auto& m = s.market;
  doc["market"] = {{"dt_s", m.dt_s_min},
                   {"dt_p", m.dt_p_min},
                   {"horizon", m.horizon_min},
                   {"xi", m.xi},
                   {"epsilon", m.epsilon},
                   {"v_limits", {m.v_min, m.v_max}},
                   {"theta_window", m.theta_window_deg},
                   {"seed", m.seed},
                   {"flexibility_range", {m.flex_min, m.flex_max}}};
  doc["prices"] = {{"lambda_p", s.prices.lambda_p}, {"lambda_q", s.prices.lambda_q}};
  return doc.dump(2) + "\n";
}

}  // namespace lem::io
