#include "gridflex/case_io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gridflex {

using nlohmann::ordered_json;

namespace {

BusKind parse_kind(const std::string& s, const std::string& ctx) {
  if (s == "slack") return BusKind::Slack;
  if (s == "generator") return BusKind::Generator;
  if (s == "load") return BusKind::Load;
  if (s == "adn-pcc") return BusKind::AdnPcc;
  if (s == "feeder-internal") return BusKind::FeederInternal;
  throw CaseFormatError(ctx + ": unknown bus kind '" + s + "'");
}

double need_num(const ordered_json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key))
    throw CaseFormatError(ctx + ": missing field '" + key + "'");
  if (!j[key].is_number())
    throw CaseFormatError(ctx + ": field '" + key + "' must be a number");
  return j[key].get<double>();
}

std::string need_str(const ordered_json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key) || !j[key].is_string())
    throw CaseFormatError(ctx + ": missing string field '" + key + "'");
  return j[key].get<std::string>();
}

double opt_num(const ordered_json& j, const char* key, double dflt) {
  return j.contains(key) ? j[key].get<double>() : dflt;
}

void check_bus_ref(const NetworkCase& net, const std::string& id, const std::string& ctx) {
  if (!net.has_bus(id))
    throw CaseFormatError(ctx + ": dangling bus reference '" + id + "'");
}

NetworkCase parse_case_json(const ordered_json& doc, const std::string& origin);

void parse_sections(NetworkCase& net, const ordered_json& doc, const std::string& origin) {
  if (!doc.contains("base_MVA"))
    throw CaseFormatError(origin + ": missing base declaration 'base_MVA'");
  net.base_mva = doc["base_MVA"].get<double>();
  net.name = doc.value("name", std::string{});

  std::set<std::string> seen;
  for (const auto& jb : doc.value("buses", ordered_json::array())) {
    const std::string ctx = origin + ": bus[" + std::to_string(net.buses.size()) + "]";
    Bus b;
    b.id = need_str(jb, "id", ctx);
    if (!seen.insert(b.id).second)
      throw CaseFormatError(ctx + ": duplicate bus id '" + b.id + "'");
    b.kind = parse_kind(jb.value("kind", "load"), ctx);
    b.v_min = opt_num(jb, "v_min", 0.0);
    b.v_max = opt_num(jb, "v_max", 2.0);
    b.base_kv = opt_num(jb, "base_kV", 0.0);
    net.buses.push_back(std::move(b));
  }
  net.rebuild_index();

  int n_slack = 0;
  for (const auto& b : net.buses)
    if (b.kind == BusKind::Slack) ++n_slack;
  if (n_slack != 1)
    throw CaseFormatError(origin + ": no slack bus" +
                          (n_slack > 1 ? std::string(" (found several)") : std::string{}));

  for (const auto& jb : doc.value("branches", ordered_json::array())) {
    const std::string ctx = origin + ": branch[" + std::to_string(net.branches.size()) + "]";
    Branch br;
    br.from = need_str(jb, "from", ctx);
    br.to = need_str(jb, "to", ctx);
    check_bus_ref(net, br.from, ctx);
    check_bus_ref(net, br.to, ctx);
    br.r = need_num(jb, "r", ctx);
    br.x = need_num(jb, "x", ctx);
    br.b_c = opt_num(jb, "b_c", 0.0);
    br.in_service = jb.value("in_service", true);
    net.branches.push_back(std::move(br));
  }

  for (const auto& jt : doc.value("transformers", ordered_json::array())) {
    const std::string ctx =
        origin + ": transformer[" + std::to_string(net.transformers.size()) + "]";
    TransformerLtc t;
    t.hv_bus = need_str(jt, "hv_bus", ctx);
    t.mv_bus = need_str(jt, "mv_bus", ctx);
    check_bus_ref(net, t.hv_bus, ctx);
    check_bus_ref(net, t.mv_bus, ctx);
    t.x_t = need_num(jt, "x_t", ctx);
    t.v_set = opt_num(jt, "v_set", 1.0);
    t.deadband_half = opt_num(jt, "deadband_half", 0.01);
    t.tap_min = opt_num(jt, "tap_min", 0.9);
    t.tap_max = opt_num(jt, "tap_max", 1.1);
    t.tap_step = opt_num(jt, "tap_step", 0.01);
    t.delay_first_s = opt_num(jt, "delay_first_s", 30.0);
    t.delay_step_s = opt_num(jt, "delay_step_s", 10.0);
    net.transformers.push_back(std::move(t));
  }

  for (const auto& jl : doc.value("loads", ordered_json::array())) {
    const std::string ctx = origin + ": load[" + std::to_string(net.loads.size()) + "]";
    ExpLoad l;
    l.bus = need_str(jl, "bus", ctx);
    check_bus_ref(net, l.bus, ctx);
    l.p0_mw = need_num(jl, "p_MW", ctx);
    l.q0_mvar = need_num(jl, "q_Mvar", ctx);
    l.v0 = opt_num(jl, "v0", 1.0);
    l.exp_p = opt_num(jl, "a", 1.0);
    l.exp_q = opt_num(jl, "b", 2.0);
    net.loads.push_back(std::move(l));
  }

  for (const auto& ji : doc.value("ibgs", ordered_json::array())) {
    const std::string ctx = origin + ": ibg[" + std::to_string(net.ibgs.size()) + "]";
    IbgUnit u;
    u.bus = need_str(ji, "bus", ctx);
    check_bus_ref(net, u.bus, ctx);
    u.s_nom_mva = need_num(ji, "s_nom_MVA", ctx);
    u.i_n_pu = opt_num(ji, "i_n", u.s_nom_mva / net.base_mva);
    u.p0_mw = need_num(ji, "p_MW", ctx);
    u.q0_mvar = opt_num(ji, "q_Mvar", 0.0);
    u.p_min_mw = opt_num(ji, "p_min_MW", u.p0_mw);
    u.p_max_mw = opt_num(ji, "p_max_MW", u.p0_mw);
    u.v_set = opt_num(ji, "v_set", 1.0);
    net.ibgs.push_back(std::move(u));
  }

  for (const auto& jg : doc.value("generators", ordered_json::array())) {
    const std::string ctx =
        origin + ": generator[" + std::to_string(net.generators.size()) + "]";
    SyncGen g;
    g.bus = need_str(jg, "bus", ctx);
    check_bus_ref(net, g.bus, ctx);
    g.p0_mw = need_num(jg, "p_MW", ctx);
    g.p_min_mw = opt_num(jg, "p_min_MW", 0.0);
    g.p_max_mw = opt_num(jg, "p_max_MW", g.p0_mw);
    g.v_ref = opt_num(jg, "v_ref", 1.0);
    g.w = opt_num(jg, "w", 0.0);
    if (jg.contains("caps") && !jg["caps"].is_null()) {
      const auto& jc = jg["caps"];
      CapabilityParams c;
      c.s_n_mva = need_num(jc, "s_n_MVA", ctx);
      c.v_n = opt_num(jc, "v_n", 1.0);
      c.i_n_pu = opt_num(jc, "i_n", c.s_n_mva / net.base_mva / c.v_n);
      c.e_lim = need_num(jc, "e_lim", ctx);
      c.x_l = need_num(jc, "x_l", ctx);
      c.x_ad = need_num(jc, "x_ad", ctx);
      c.m = opt_num(jc, "m", 0.0);
      c.n = opt_num(jc, "n", 0.0);
      c.p_n_mw = need_num(jc, "p_n_MW", ctx);
      c.base_mva = net.base_mva;
      g.caps = c;
    }
    net.generators.push_back(std::move(g));
  }

  for (const auto& ja : doc.value("adns", ordered_json::array())) {
    const std::string ctx = origin + ": adn[" + std::to_string(net.adns.size()) + "]";
    AdnAttachment a;
    a.pcc_bus = need_str(ja, "pcc_bus", ctx);
    check_bus_ref(net, a.pcc_bus, ctx);
    a.p0_mw = need_num(ja, "p_MW", ctx);
    a.q0_mvar = need_num(ja, "q_Mvar", ctx);
    if (ja.contains("feeder") && !ja["feeder"].is_null()) {
      a.feeder = std::make_shared<NetworkCase>(
          parse_case_json(ja["feeder"], ctx + ".feeder"));
    }
    if (ja.contains("polygon") && !ja["polygon"].is_null()) {
      PolygonData p;
      for (const auto& v : ja["polygon"].at("vertices"))
        p.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      a.polygon = std::move(p);
    }
    net.adns.push_back(std::move(a));
  }

  if (doc.contains("stress")) {
    const auto& js = doc["stress"];
    if (js.contains("p_MW")) {
      for (const auto& [key, val] : js["p_MW"].items()) {
        check_bus_ref(net, key, origin + ": stress.p_MW");
        net.stress.d_p_mw[key] = val.get<double>();
      }
    }
    if (js.contains("q_Mvar")) {
      for (const auto& [key, val] : js["q_Mvar"].items()) {
        check_bus_ref(net, key, origin + ": stress.q_Mvar");
        net.stress.d_q_mvar[key] = val.get<double>();
      }
    }
  }
}

NetworkCase parse_case_json(const ordered_json& doc, const std::string& origin) {
  NetworkCase net;
  parse_sections(net, doc, origin);
  return net;
}

ordered_json case_to_json(const NetworkCase& net) {
  ordered_json doc;
  if (!net.name.empty()) doc["name"] = net.name;
  doc["base_MVA"] = net.base_mva;

  auto& jbuses = doc["buses"] = ordered_json::array();
  for (const auto& b : net.buses) {
    ordered_json j{{"id", b.id}, {"kind", to_string(b.kind)},
                   {"v_min", b.v_min}, {"v_max", b.v_max}};
    if (b.base_kv != 0.0) j["base_kV"] = b.base_kv;
    jbuses.push_back(std::move(j));
  }
  if (!net.branches.empty()) {
    auto& arr = doc["branches"] = ordered_json::array();
    for (const auto& br : net.branches) {
      ordered_json j{{"from", br.from}, {"to", br.to}, {"r", br.r}, {"x", br.x}};
      if (br.b_c != 0.0) j["b_c"] = br.b_c;
      if (!br.in_service) j["in_service"] = false;
      arr.push_back(std::move(j));
    }
  }
  if (!net.transformers.empty()) {
    auto& arr = doc["transformers"] = ordered_json::array();
    for (const auto& t : net.transformers)
      arr.push_back({{"hv_bus", t.hv_bus}, {"mv_bus", t.mv_bus}, {"x_t", t.x_t},
                     {"v_set", t.v_set}, {"deadband_half", t.deadband_half},
                     {"tap_min", t.tap_min}, {"tap_max", t.tap_max},
                     {"tap_step", t.tap_step}, {"delay_first_s", t.delay_first_s},
                     {"delay_step_s", t.delay_step_s}});
  }
  if (!net.loads.empty()) {
    auto& arr = doc["loads"] = ordered_json::array();
    for (const auto& l : net.loads)
      arr.push_back({{"bus", l.bus}, {"p_MW", l.p0_mw}, {"q_Mvar", l.q0_mvar},
                     {"v0", l.v0}, {"a", l.exp_p}, {"b", l.exp_q}});
  }
  if (!net.ibgs.empty()) {
    auto& arr = doc["ibgs"] = ordered_json::array();
    for (const auto& u : net.ibgs)
      arr.push_back({{"bus", u.bus}, {"s_nom_MVA", u.s_nom_mva}, {"i_n", u.i_n_pu},
                     {"p_MW", u.p0_mw}, {"q_Mvar", u.q0_mvar},
                     {"p_min_MW", u.p_min_mw}, {"p_max_MW", u.p_max_mw},
                     {"v_set", u.v_set}});
  }
  if (!net.generators.empty()) {
    auto& arr = doc["generators"] = ordered_json::array();
    for (const auto& g : net.generators) {
      ordered_json j{{"bus", g.bus}, {"p_MW", g.p0_mw}, {"p_min_MW", g.p_min_mw},
                     {"p_max_MW", g.p_max_mw}, {"v_ref", g.v_ref}, {"w", g.w}};
      if (g.caps) {
        j["caps"] = {{"s_n_MVA", g.caps->s_n_mva}, {"v_n", g.caps->v_n},
                     {"i_n", g.caps->i_n_pu}, {"e_lim", g.caps->e_lim},
                     {"x_l", g.caps->x_l}, {"x_ad", g.caps->x_ad},
                     {"m", g.caps->m}, {"n", g.caps->n}, {"p_n_MW", g.caps->p_n_mw}};
      }
      arr.push_back(std::move(j));
    }
  }
  if (!net.adns.empty()) {
    auto& arr = doc["adns"] = ordered_json::array();
    for (const auto& a : net.adns) {
      ordered_json j{{"pcc_bus", a.pcc_bus}, {"p_MW", a.p0_mw}, {"q_Mvar", a.q0_mvar}};
      if (a.feeder) j["feeder"] = case_to_json(*a.feeder);
      if (a.polygon) {
        auto& vs = j["polygon"]["vertices"] = ordered_json::array();
        for (const auto& v : a.polygon->vertices) vs.push_back({v[0], v[1]});
      }
      arr.push_back(std::move(j));
    }
  }
  if (!net.stress.empty()) {
    auto& js = doc["stress"];
    if (!net.stress.d_p_mw.empty())
      for (const auto& [k, v] : net.stress.d_p_mw) js["p_MW"][k] = v;
    if (!net.stress.d_q_mvar.empty())
      for (const auto& [k, v] : net.stress.d_q_mvar) js["q_Mvar"][k] = v;
  }
  return doc;
}

}  // namespace

NetworkCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw CaseFormatError("cannot open case file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str(), path.string());
}

NetworkCase parse_case(const std::string& json_text, const std::string& origin) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CaseFormatError(origin + ": " + e.what());
  }
  return parse_case_json(doc, origin);
}

std::string serialize_case(const NetworkCase& net) {
  return case_to_json(net).dump(2) + "\n";
}

void save_case(const NetworkCase& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw CaseFormatError("cannot write case file '" + path.string() + "'");
  out << serialize_case(net);
}

namespace {

void validate_into(const NetworkCase& net, const std::string& prefix,
                   std::vector<ValidationFinding>& out) {
  auto add = [&](const std::string& where, const std::string& msg) {
    out.push_back({prefix + where, msg});
  };

  for (const auto& b : net.buses) {
    if (!(b.v_min < b.v_max))
      add("bus " + b.id, "voltage band degenerate (v_min >= v_max)");
  }
  for (size_t i = 0; i < net.branches.size(); ++i) {
    const auto& br = net.branches[i];
    const std::string where = "branch " + br.from + "-" + br.to;
    if (br.x == 0.0) add(where, "zero series reactance");
    if (br.r < 0.0) add(where, "negative series resistance");
  }
  for (const auto& t : net.transformers) {
    const std::string where = "transformer " + t.hv_bus + "-" + t.mv_bus;
    if (!(t.tap_min < t.tap_max)) add(where, "degenerate tap range");
    if (!(t.deadband_half > 0.0)) add(where, "non-positive deadband");
  }
  for (const auto& l : net.loads) {
    if (!(l.v0 > 0.0)) add("load at " + l.bus, "non-positive reference voltage");
  }
  for (const auto& u : net.ibgs) {
    const std::string where = "ibg at " + u.bus;
    if (!(u.i_n_pu > 0.0)) add(where, "non-positive current limit");
    if (!(u.p_min_mw <= u.p0_mw && u.p0_mw <= u.p_max_mw))
      add(where, "dispatch outside [p_min, p_max]");
  }
  double w_sum = 0.0;
  for (const auto& g : net.generators) {
    const std::string where = "generator at " + g.bus;
    w_sum += g.w;
    if (!(g.p_min_mw <= g.p0_mw && g.p0_mw <= g.p_max_mw))
      add(where, "dispatch outside [p_min, p_max]");
    if (g.caps) {
      const auto& c = *g.caps;
      const double expect_in = c.s_n_mva / net.base_mva / c.v_n;
      if (std::abs(c.i_n_pu - expect_in) > 1e-9 * std::max(1.0, expect_in))
        add(where, "current limit inconsistent with rating (i_n != S_N/V_N)");
      if (c.p_n_mw > c.s_n_mva * c.v_n)
        add(where, "rated active power exceeds rating");
    }
  }
  if (!net.generators.empty() && std::abs(w_sum - 1.0) > 1e-9)
    add("generators", "participation factors not normalized");

  for (const auto& a : net.adns) {
    const std::string where = "adn at " + a.pcc_bus;
    if (a.feeder) {
      int s = a.feeder->slack_bus();
      int ltc_at_root = 0;
      if (s >= 0) {
        for (const auto& t : a.feeder->transformers)
          if (t.hv_bus == a.feeder->buses[s].id) ++ltc_at_root;
      }
      if (ltc_at_root != 1)
        add(where, "feeder must contain exactly one LTC connecting to the PCC");
      validate_into(*a.feeder, prefix + "adn at " + a.pcc_bus + ": ", out);
    }
  }

  if (!net.stress.empty() && net.stress.total_dp_mw() <= 0.0)
    add("stress", "total active stress direction not positive");
}

}  // namespace

ValidationReport validate_case(const NetworkCase& net) {
  ValidationReport rep;
  validate_into(net, "", rep.findings);
  return rep;
}

}  // namespace gridflex
