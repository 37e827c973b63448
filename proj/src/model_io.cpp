#include "aeroflight/errors.hpp"
#include "aeroflight/model.hpp"
#include "aeroflight/text.hpp"

#include <sstream>

namespace aeroflight {

namespace {

using KV = std::map<std::string, std::string>;

const std::string& require(const KV& kv, const std::string& key, const std::string& what, int line) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ParseError(what + ": missing '" + key + "='", line);
  return it->second;
}

void reject_unknown(const KV& kv, std::initializer_list<const char*> allowed, int line) {
  for (const auto& [k, v] : kv) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ParseError("unknown attribute '" + k + "'", line);
  }
}

std::pair<std::string, std::string> parse_pair(const std::string& s, int line) {
  const auto parts = text::split(s, ',');
  if (parts.size() != 2 || parts[0].empty() || parts[1].empty()) {
    throw ParseError("expected '<a>,<b>' pair, got '" + s + "'", line);
  }
  return {parts[0], parts[1]};
}

}  // namespace

RobotModel load_model(std::string_view contents) {
  struct PendingJoint {
    JointSpec spec;
    std::string parent, child;
    int line;
  };
  struct PendingJet {
    JetSpec spec;
    std::string link;
    int line;
  };
  std::vector<LinkSpec> links;
  std::vector<PendingJoint> joints;
  std::vector<PendingJet> jets;
  std::vector<RobotModel::MirrorPair> joint_pairs, link_pairs;
  double gravity = kDefaultGravity;
  bool symmetric = false;

  std::istringstream in{std::string(contents)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const auto tokens = text::split_ws(std::string_view(raw).substr(0, hash));
    if (tokens.empty()) continue;
    const std::string& kind = tokens[0];

    if (kind == "link") {
      if (tokens.size() < 2) throw ParseError("link: missing name", line_no);
      const auto kv = text::parse_kv_tokens(tokens, 2, line_no);
      reject_unknown(kv, {"mass", "com", "inertia", "axis", "aero"}, line_no);
      LinkSpec l;
      l.name = tokens[1];
      l.mass = text::parse_double(require(kv, "mass", "link", line_no), line_no);
      l.com = text::parse_vec3(require(kv, "com", "link", line_no), line_no);
      const auto in6 = text::parse_list(require(kv, "inertia", "link", line_no), 6, line_no);
      l.inertia << in6[0], in6[3], in6[4], in6[3], in6[1], in6[5], in6[4], in6[5], in6[2];
      l.axis = text::parse_vec3(require(kv, "axis", "link", line_no), line_no);
      const auto& aero = require(kv, "aero", "link", line_no);
      if (aero != "0" && aero != "1") throw ParseError("aero must be 0 or 1", line_no);
      l.aero = aero == "1";
      links.push_back(std::move(l));
    } else if (kind == "joint") {
      if (tokens.size() < 2) throw ParseError("joint: missing name", line_no);
      const auto kv = text::parse_kv_tokens(tokens, 2, line_no);
      reject_unknown(kv, {"parent", "child", "axis", "origin", "limits", "vmax", "type"}, line_no);
      PendingJoint pj;
      pj.line = line_no;
      pj.spec.name = tokens[1];
      pj.parent = require(kv, "parent", "joint", line_no);
      pj.child = require(kv, "child", "joint", line_no);
      pj.spec.origin = text::parse_vec3(require(kv, "origin", "joint", line_no), line_no);
      std::string type = kv.count("type") ? kv.at("type") : "revolute";
      if (type == "revolute") {
        pj.spec.type = JointType::revolute;
        pj.spec.axis = text::parse_vec3(require(kv, "axis", "joint", line_no), line_no);
        const auto lim = text::parse_list(require(kv, "limits", "joint", line_no), 2, line_no);
        pj.spec.lower = lim[0];
        pj.spec.upper = lim[1];
        pj.spec.vmax = text::parse_double(require(kv, "vmax", "joint", line_no), line_no);
      } else if (type == "fixed") {
        pj.spec.type = JointType::fixed;
      } else {
        throw ParseError("joint type must be revolute or fixed", line_no);
      }
      joints.push_back(std::move(pj));
    } else if (kind == "jet") {
      if (tokens.size() < 2) throw ParseError("jet: missing name", line_no);
      const auto kv = text::parse_kv_tokens(tokens, 2, line_no);
      reject_unknown(kv, {"link", "dir", "tmin", "tmax", "pos"}, line_no);
      PendingJet pj;
      pj.line = line_no;
      pj.spec.name = tokens[1];
      pj.link = require(kv, "link", "jet", line_no);
      pj.spec.direction = text::parse_vec3(require(kv, "dir", "jet", line_no), line_no);
      pj.spec.thrust_min = text::parse_double(require(kv, "tmin", "jet", line_no), line_no);
      pj.spec.thrust_max = text::parse_double(require(kv, "tmax", "jet", line_no), line_no);
      if (kv.count("pos")) pj.spec.position = text::parse_vec3(kv.at("pos"), line_no);
      jets.push_back(std::move(pj));
    } else if (kind == "gravity") {
      if (tokens.size() != 2) throw ParseError("gravity: expected one value", line_no);
      gravity = text::parse_double(tokens[1], line_no);
    } else if (kind == "symmetry") {
      const auto kv = text::parse_kv_tokens(tokens, 1, line_no);
      reject_unknown(kv, {"lateral"}, line_no);
      if (require(kv, "lateral", "symmetry", line_no) != "y") {
        throw ParseError("only lateral=y is supported", line_no);
      }
      symmetric = true;
    } else if (kind == "mirror") {
      const auto kv = text::parse_kv_tokens(tokens, 1, line_no);
      reject_unknown(kv, {"joint", "link"}, line_no);
      if (kv.size() != 1) throw ParseError("mirror: expected exactly one of joint= or link=", line_no);
      auto [a, b] = parse_pair(kv.begin()->second, line_no);
      (kv.count("joint") ? joint_pairs : link_pairs).push_back({a, b});
    } else {
      throw ParseError("unknown directive '" + kind + "'", line_no);
    }
  }

  auto link_id = [&](const std::string& name, int line) {
    for (std::size_t i = 0; i < links.size(); ++i) {
      if (links[i].name == name) return static_cast<int>(i);
    }
    throw ValidationError("line " + std::to_string(line) + ": unknown link '" + name + "'");
  };
  std::vector<JointSpec> joint_specs;
  for (auto& pj : joints) {
    pj.spec.parent = link_id(pj.parent, pj.line);
    pj.spec.child = link_id(pj.child, pj.line);
    joint_specs.push_back(pj.spec);
  }
  std::vector<JetSpec> jet_specs;
  for (auto& pj : jets) {
    pj.spec.link = link_id(pj.link, pj.line);
    jet_specs.push_back(pj.spec);
  }
  if ((!joint_pairs.empty() || !link_pairs.empty()) && !symmetric) {
    throw ValidationError("mirror pairs declared without a 'symmetry' directive");
  }
  return RobotModel::build(std::move(links), std::move(joint_specs), std::move(jet_specs), gravity,
                           symmetric, joint_pairs, link_pairs);
}

RobotModel load_model_file(const std::string& path) { return load_model(text::read_file(path)); }

}  // namespace aeroflight
