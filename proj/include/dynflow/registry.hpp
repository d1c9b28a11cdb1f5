#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynflow/workflow.hpp"

namespace dynflow {

// Actor pool plus template catalog; the unit the CLI loads from disk.
struct Registry {
  ActorPool pool;
  std::vector<Template> templates;

  const Template* find_template(std::string_view id) const;
  // Templates sorted simplest-first (complexity_rank, then id).
  std::vector<Template> templates_by_complexity() const;
};

// The bundled template catalog: 0, A..I.
std::vector<Template> builtin_templates();

// One synthetic actor per role, ids "<role>1" (or "<role>1".."<role>N").
ActorPool synthetic_pool(int actors_per_role = 1);
ActorPool synthetic_pool(const std::vector<std::pair<ActorRole, int>>& counts);

Registry builtin_registry(int actors_per_role = 1);

nlohmann::json registry_to_json(const Registry& reg);
Registry registry_from_json(const nlohmann::json& j);
Registry load_registry(const std::string& path);
void save_registry(const Registry& reg, const std::string& path);

}  // namespace dynflow
