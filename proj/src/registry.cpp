#include "dynflow/registry.hpp"

#include <algorithm>
#include <fstream>

namespace dynflow {

using nlohmann::json;

const Template* Registry::find_template(std::string_view id) const {
  for (const auto& t : templates) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

std::vector<Template> Registry::templates_by_complexity() const {
  std::vector<Template> out = templates;
  std::sort(out.begin(), out.end(), complexity_less);
  return out;
}

std::vector<Template> builtin_templates() {
  using R = ActorRole;
  return {
      {"0", {single(R::Generator)}},
      {"A", {single(R::Generator), single(R::Optimizer)}},
      {"B", {parallel({R::Generator, R::Generator, R::Generator}), single(R::Selector)}},
      {"C", {single(R::Generator), parallel({R::Optimizer, R::Optimizer}), single(R::Selector)}},
      {"D", {single(R::Parser), single(R::Generator)}},
      {"E",
       {single(R::Parser), parallel({R::Scaler, R::Scaler}), single(R::Optimizer),
        single(R::Selector)}},
      {"F", {parallel({R::Scaler, R::Scaler, R::Scaler, R::Scaler}), single(R::Selector)}},
      {"G",
       {parallel({R::Generator, R::Generator}), parallel({R::Scaler, R::Scaler}),
        single(R::Selector)}},
      {"H",
       {single(R::Parser), single(R::Generator), parallel({R::Scaler, R::Scaler, R::Scaler}),
        single(R::Optimizer), single(R::Selector)}},
      {"I",
       {single(R::Parser), parallel({R::Generator, R::Scaler}),
        parallel({R::Optimizer, R::Optimizer}), single(R::Selector), single(R::Optimizer)}},
  };
}

ActorPool synthetic_pool(int actors_per_role) {
  std::vector<std::pair<ActorRole, int>> counts;
  for (ActorRole r : kAllRoles) counts.emplace_back(r, actors_per_role);
  return synthetic_pool(counts);
}

ActorPool synthetic_pool(const std::vector<std::pair<ActorRole, int>>& counts) {
  std::vector<ActorSpec> actors;
  for (const auto& [role, n] : counts) {
    for (int i = 1; i <= n; ++i) {
      ActorSpec a;
      a.id = std::string(role_name(role)) + std::to_string(i);
      a.role = role;
      a.binding.kind = ActorBinding::Kind::Synthetic;
      actors.push_back(std::move(a));
    }
  }
  return ActorPool(std::move(actors));
}

Registry builtin_registry(int actors_per_role) {
  return Registry{synthetic_pool(actors_per_role), builtin_templates()};
}

json registry_to_json(const Registry& reg) {
  json actors = json::array();
  for (const auto& a : reg.pool.actors()) {
    json ja;
    ja["id"] = a.id;
    ja["role"] = role_name(a.role);
    ja["binding"] = {{"kind", a.binding.kind == ActorBinding::Kind::Synthetic ? "synthetic"
                                                                              : "external"}};
    if (a.binding.kind == ActorBinding::Kind::External) {
      ja["binding"]["command"] = a.binding.command;
    }
    if (a.cost_hint) ja["cost_hint"] = *a.cost_hint;
    actors.push_back(std::move(ja));
  }
  json templates = json::array();
  for (const auto& t : reg.templates) {
    json stages = json::array();
    for (const auto& s : t.stages) {
      json roles = json::array();
      for (ActorRole r : s.roles) roles.push_back(role_name(r));
      stages.push_back({{"kind", s.parallel() ? "parallel" : "single"}, {"roles", roles}});
    }
    templates.push_back({{"id", t.id}, {"stages", stages}});
  }
  return {{"actors", actors}, {"templates", templates}};
}

Registry registry_from_json(const json& j) {
  std::vector<ActorSpec> actors;
  for (const auto& ja : j.at("actors")) {
    ActorSpec a;
    a.id = ja.at("id").get<std::string>();
    a.role = role_from_name(ja.at("role").get<std::string>());
    if (ja.contains("binding")) {
      const auto& jb = ja.at("binding");
      std::string kind = jb.value("kind", "synthetic");
      a.binding.kind =
          kind == "external" ? ActorBinding::Kind::External : ActorBinding::Kind::Synthetic;
      if (jb.contains("command")) a.binding.command = jb.at("command").get<std::vector<std::string>>();
    }
    if (ja.contains("cost_hint")) a.cost_hint = ja.at("cost_hint").get<double>();
    actors.push_back(std::move(a));
  }
  std::vector<Template> templates;
  for (const auto& jt : j.at("templates")) {
    Template t;
    t.id = jt.at("id").get<std::string>();
    for (const auto& js : jt.at("stages")) {
      TemplateStage s;
      for (const auto& jr : js.at("roles")) s.roles.push_back(role_from_name(jr.get<std::string>()));
      std::string kind = js.value("kind", s.roles.size() > 1 ? "parallel" : "single");
      if ((kind == "parallel") != s.parallel()) {
        throw WorkflowError(WorkflowError::Code::Invalid,
                            "stage kind does not match role count in template " + t.id);
      }
      t.stages.push_back(std::move(s));
    }
    if (auto violations = validate_template(t); !violations.empty()) {
      throw WorkflowError(WorkflowError::Code::Invalid,
                          "template " + t.id + " invalid: " + violations.front().message);
    }
    templates.push_back(std::move(t));
  }
  return Registry{ActorPool(std::move(actors)), std::move(templates)};
}

Registry load_registry(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw WorkflowError(WorkflowError::Code::Invalid, "cannot open registry file: " + path);
  }
  json j;
  in >> j;
  return registry_from_json(j);
}

void save_registry(const Registry& reg, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw WorkflowError(WorkflowError::Code::Invalid, "cannot write registry file: " + path);
  }
  out << registry_to_json(reg).dump(2) << "\n";
}

}  // namespace dynflow
