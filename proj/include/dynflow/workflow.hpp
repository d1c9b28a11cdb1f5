#pragma once

#include <array>
#include <compare>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dynflow {

enum class ActorRole { Reducer, Parser, Generator, Decomposer, Scaler, Optimizer, Selector };

inline constexpr std::array<ActorRole, 7> kAllRoles = {
    ActorRole::Reducer,    ActorRole::Parser,    ActorRole::Generator,
    ActorRole::Decomposer, ActorRole::Scaler,    ActorRole::Optimizer,
    ActorRole::Selector};

std::string_view role_name(ActorRole role);
ActorRole role_from_name(std::string_view name);

enum class Difficulty { Easy, Moderate, Complex, HighlyComplex };

inline constexpr std::array<Difficulty, 4> kAllDifficulties = {
    Difficulty::Easy, Difficulty::Moderate, Difficulty::Complex, Difficulty::HighlyComplex};

std::string_view difficulty_name(Difficulty d);
Difficulty difficulty_from_name(std::string_view name);

// How an actor is realized: synthetic actors answer from a planted
// environment, external ones speak the line-delimited JSON protocol
// over a child process's stdin/stdout.
struct ActorBinding {
  enum class Kind { Synthetic, External };
  Kind kind = Kind::Synthetic;
  std::vector<std::string> command;  // argv, external only
};

struct ActorSpec {
  std::string id;
  ActorRole role = ActorRole::Generator;
  ActorBinding binding;
  std::optional<double> cost_hint;  // nonnegative seconds
};

// One template stage: a single role slot or an ordered parallel group (>= 2).
struct TemplateStage {
  std::vector<ActorRole> roles;

  bool parallel() const { return roles.size() > 1; }
  int width() const { return static_cast<int>(roles.size()); }
};

inline TemplateStage single(ActorRole r) { return TemplateStage{{r}}; }
inline TemplateStage parallel(std::vector<ActorRole> rs) { return TemplateStage{std::move(rs)}; }

struct Template {
  std::string id;
  std::vector<TemplateStage> stages;

  int stage_count() const { return static_cast<int>(stages.size()); }
  int slot_count() const;
  int max_parallel_width() const;
  // (stage count, total slots, max parallel width); orders templates from
  // simpler to more expressive. Ties broken by id where a total order is needed.
  std::array<int, 3> complexity_rank() const;
  // Roles flattened in stage order, parallel slots in listed order.
  std::vector<ActorRole> slot_roles() const;
};

// Total order used wherever "simplest first" matters.
bool complexity_less(const Template& a, const Template& b);

struct Workflow {
  std::string template_id;
  std::vector<std::string> assignment;  // one actor id per slot, stage order

  friend bool operator==(const Workflow&, const Workflow&) = default;
};

class ActorPool {
 public:
  ActorPool() = default;
  explicit ActorPool(std::vector<ActorSpec> actors);  // sorts by id, rejects dups/empty

  const std::vector<ActorSpec>& actors() const { return actors_; }
  const ActorSpec* find(std::string_view id) const;
  std::vector<const ActorSpec*> with_role(ActorRole role) const;
  std::size_t size() const { return actors_.size(); }

 private:
  std::vector<ActorSpec> actors_;  // sorted by id
};

// Per-actor retention bits, domain == pool id set, pool (sorted-id) order.
class MaskVector {
 public:
  MaskVector() = default;
  static MaskVector all_ones(const ActorPool& pool);
  static MaskVector from_bits(const ActorPool& pool, const std::vector<bool>& bits);

  bool bit(std::string_view actor_id) const;
  void set(std::string_view actor_id, bool value);
  std::string bits_string() const;  // e.g. "10110", pool order
  static MaskVector from_bits_string(const ActorPool& pool, std::string_view bits);
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  // m' <= m bitwise
  bool subset_of(const MaskVector& other) const;

 private:
  std::vector<std::string> ids_;  // pool order
  std::vector<bool> bits_;
};

struct Task {
  std::string task_id;
  std::string question;
  std::string db_ref;
  std::string knowledge;
  std::string gold_sql;
  Difficulty difficulty = Difficulty::Easy;
};

// ---------------------------------------------------------------------------
// Operations

struct TemplateViolation {
  int stage_index = -1;
  std::string message;
};

// Empty result means the template is well formed.
std::vector<TemplateViolation> validate_template(const Template& t);

class WorkflowError : public std::runtime_error {
 public:
  enum class Code { RoleMismatch, UnknownActor, Arity, UnknownTemplate, Invalid };
  WorkflowError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// Instantiate a template by binding one actor per slot. Total and
// deterministic; throws WorkflowError on role mismatch, unknown actor,
// or wrong assignment length.
Workflow f_match(const Template& t, std::vector<std::string> assignment, const ActorPool& pool);

// Every instantiation of every template over mask-retained actors, in
// canonical order: template id ascending, then lexicographic assignment.
std::vector<Workflow> enumerate_workflows(std::span<const Template> templates,
                                          const ActorPool& pool, const MaskVector& mask);

// Stable injective key: "templateId|actorId,actorId,...".
std::string canonical_string(const Workflow& w);
Workflow parse_canonical(std::string_view s);

struct AnswerFailure {
  enum class Kind { MissingThink, MissingAnswer, MalformedList, UnknownActor, NoMatchingTemplate };
  Kind kind;
  std::string detail;
};

std::string_view answer_failure_name(AnswerFailure::Kind kind);

using AnswerParse = std::variant<Workflow, AnswerFailure>;

// Policy answer grammar: a <think>...</think> block followed by exactly one
// <answer>list[...]</answer> block. The list holds quoted actor ids, flat or
// with nested groups (flattened in stage order); the template is inferred by
// matching the flattened role sequence against registered templates in
// complexity order, first match wins.
AnswerParse parse_answer(std::string_view text, const ActorPool& pool,
                         std::span<const Template> templates);

// Canonical flat rendering accepted back by parse_answer.
std::string render_answer(const Workflow& w);

}  // namespace dynflow
