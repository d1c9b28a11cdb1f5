#include "dynflow/workflow.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace dynflow {

namespace {

constexpr std::array<std::string_view, 7> kRoleNames = {
    "reducer", "parser", "generator", "decomposer", "scaler", "optimizer", "selector"};

constexpr std::array<std::string_view, 4> kDifficultyNames = {
    "easy", "moderate", "complex", "highly_complex"};

}  // namespace

std::string_view role_name(ActorRole role) { return kRoleNames[static_cast<int>(role)]; }

ActorRole role_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
    if (kRoleNames[i] == name) return static_cast<ActorRole>(i);
  }
  throw WorkflowError(WorkflowError::Code::Invalid, "unknown actor role: " + std::string(name));
}

std::string_view difficulty_name(Difficulty d) { return kDifficultyNames[static_cast<int>(d)]; }

Difficulty difficulty_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kDifficultyNames.size(); ++i) {
    if (kDifficultyNames[i] == name) return static_cast<Difficulty>(i);
  }
  throw WorkflowError(WorkflowError::Code::Invalid, "unknown difficulty: " + std::string(name));
}

int Template::slot_count() const {
  int n = 0;
  for (const auto& s : stages) n += s.width();
  return n;
}

int Template::max_parallel_width() const {
  int w = 1;
  for (const auto& s : stages) w = std::max(w, s.width());
  return w;
}

std::array<int, 3> Template::complexity_rank() const {
  return {stage_count(), slot_count(), max_parallel_width()};
}

std::vector<ActorRole> Template::slot_roles() const {
  std::vector<ActorRole> out;
  out.reserve(static_cast<std::size_t>(slot_count()));
  for (const auto& s : stages) out.insert(out.end(), s.roles.begin(), s.roles.end());
  return out;
}

bool complexity_less(const Template& a, const Template& b) {
  auto ra = a.complexity_rank(), rb = b.complexity_rank();
  if (ra != rb) return ra < rb;
  return a.id < b.id;
}

ActorPool::ActorPool(std::vector<ActorSpec> actors) : actors_(std::move(actors)) {
  if (actors_.empty()) {
    throw WorkflowError(WorkflowError::Code::Invalid, "actor pool must be nonempty");
  }
  std::sort(actors_.begin(), actors_.end(),
            [](const ActorSpec& a, const ActorSpec& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < actors_.size(); ++i) {
    if (actors_[i].id == actors_[i - 1].id) {
      throw WorkflowError(WorkflowError::Code::Invalid, "duplicate actor id: " + actors_[i].id);
    }
  }
  for (const auto& a : actors_) {
    if (a.cost_hint && *a.cost_hint < 0) {
      throw WorkflowError(WorkflowError::Code::Invalid, "negative cost_hint for " + a.id);
    }
  }
}

const ActorSpec* ActorPool::find(std::string_view id) const {
  auto it = std::lower_bound(actors_.begin(), actors_.end(), id,
                             [](const ActorSpec& a, std::string_view v) { return a.id < v; });
  if (it != actors_.end() && it->id == id) return &*it;
  return nullptr;
}

std::vector<const ActorSpec*> ActorPool::with_role(ActorRole role) const {
  std::vector<const ActorSpec*> out;
  for (const auto& a : actors_) {
    if (a.role == role) out.push_back(&a);
  }
  return out;
}

MaskVector MaskVector::all_ones(const ActorPool& pool) {
  MaskVector m;
  for (const auto& a : pool.actors()) m.ids_.push_back(a.id);
  m.bits_.assign(m.ids_.size(), true);
  return m;
}

MaskVector MaskVector::from_bits(const ActorPool& pool, const std::vector<bool>& bits) {
  if (bits.size() != pool.size()) {
    throw WorkflowError(WorkflowError::Code::Invalid, "mask size must equal pool size");
  }
  MaskVector m = all_ones(pool);
  m.bits_ = bits;
  return m;
}

bool MaskVector::bit(std::string_view actor_id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), actor_id);
  if (it == ids_.end() || *it != actor_id) {
    throw WorkflowError(WorkflowError::Code::UnknownActor,
                        "mask queried for unknown actor: " + std::string(actor_id));
  }
  return bits_[static_cast<std::size_t>(it - ids_.begin())];
}

void MaskVector::set(std::string_view actor_id, bool value) {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), actor_id);
  if (it == ids_.end() || *it != actor_id) {
    throw WorkflowError(WorkflowError::Code::UnknownActor,
                        "mask set for unknown actor: " + std::string(actor_id));
  }
  bits_[static_cast<std::size_t>(it - ids_.begin())] = value;
}

std::string MaskVector::bits_string() const {
  std::string s;
  s.reserve(bits_.size());
  for (bool b : bits_) s.push_back(b ? '1' : '0');
  return s;
}

MaskVector MaskVector::from_bits_string(const ActorPool& pool, std::string_view bits) {
  std::vector<bool> v;
  v.reserve(bits.size());
  for (char c : bits) {
    if (c != '0' && c != '1') {
      throw WorkflowError(WorkflowError::Code::Invalid, "mask bits must be 0/1");
    }
    v.push_back(c == '1');
  }
  return from_bits(pool, v);
}

bool MaskVector::subset_of(const MaskVector& other) const {
  if (ids_ != other.ids_) return false;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !other.bits_[i]) return false;
  }
  return true;
}

std::vector<TemplateViolation> validate_template(const Template& t) {
  std::vector<TemplateViolation> out;
  if (t.stages.empty()) {
    out.push_back({-1, "template has no stages"});
    return out;
  }
  for (int i = 0; i < t.stage_count(); ++i) {
    if (t.stages[static_cast<std::size_t>(i)].roles.empty()) {
      out.push_back({i, "stage has no role slots"});
    }
  }
  if (!out.empty()) return out;

  const auto& last = t.stages.back();
  if (last.parallel()) {
    out.push_back({t.stage_count() - 1, "final stage must be a single slot"});
  } else {
    ActorRole r = last.roles[0];
    if (r != ActorRole::Generator && r != ActorRole::Optimizer && r != ActorRole::Selector) {
      out.push_back({t.stage_count() - 1,
                     "final stage role must be generator, optimizer, or selector"});
    }
  }

  for (int i = 0; i < t.stage_count(); ++i) {
    const auto& s = t.stages[static_cast<std::size_t>(i)];
    if (!s.parallel()) continue;
    bool followed = false;
    for (int j = i + 1; j < t.stage_count(); ++j) {
      const auto& later = t.stages[static_cast<std::size_t>(j)];
      if (!later.parallel() && later.roles[0] == ActorRole::Selector) {
        followed = true;
        break;
      }
    }
    if (!followed) out.push_back({i, "parallel group without later selector"});
  }
  return out;
}

Workflow f_match(const Template& t, std::vector<std::string> assignment, const ActorPool& pool) {
  const auto roles = t.slot_roles();
  if (assignment.size() != roles.size()) {
    throw WorkflowError(WorkflowError::Code::Arity,
                        "assignment length " + std::to_string(assignment.size()) +
                            " does not match slot count " + std::to_string(roles.size()) +
                            " of template " + t.id);
  }
  for (std::size_t i = 0; i < roles.size(); ++i) {
    const ActorSpec* a = pool.find(assignment[i]);
    if (a == nullptr) {
      throw WorkflowError(WorkflowError::Code::UnknownActor,
                          "unknown actor '" + assignment[i] + "' at slot " + std::to_string(i));
    }
    if (a->role != roles[i]) {
      throw WorkflowError(WorkflowError::Code::RoleMismatch,
                          "slot " + std::to_string(i) + " of template " + t.id + " expects " +
                              std::string(role_name(roles[i])) + ", actor '" + a->id + "' is a " +
                              std::string(role_name(a->role)));
    }
  }
  return Workflow{t.id, std::move(assignment)};
}

std::vector<Workflow> enumerate_workflows(std::span<const Template> templates,
                                          const ActorPool& pool, const MaskVector& mask) {
  std::vector<const Template*> order;
  order.reserve(templates.size());
  for (const auto& t : templates) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const Template* a, const Template* b) { return a->id < b->id; });

  std::vector<Workflow> out;
  for (const Template* t : order) {
    const auto roles = t->slot_roles();
    std::vector<std::vector<std::string>> slot_candidates(roles.size());
    bool feasible = true;
    for (std::size_t i = 0; i < roles.size(); ++i) {
      for (const ActorSpec* a : pool.with_role(roles[i])) {
        if (mask.bit(a->id)) slot_candidates[i].push_back(a->id);
      }
      if (slot_candidates[i].empty()) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;

    // Odometer over sorted candidate lists; leftmost slot slowest, so the
    // emitted order is lexicographic in the assignment tuple.
    std::vector<std::size_t> idx(roles.size(), 0);
    while (true) {
      std::vector<std::string> assignment;
      assignment.reserve(roles.size());
      for (std::size_t i = 0; i < roles.size(); ++i) {
        assignment.push_back(slot_candidates[i][idx[i]]);
      }
      out.push_back(Workflow{t->id, std::move(assignment)});
      std::size_t pos = roles.size();
      while (pos > 0) {
        --pos;
        if (++idx[pos] < slot_candidates[pos].size()) break;
        idx[pos] = 0;
        if (pos == 0) goto next_template;
      }
      if (roles.empty()) break;
    }
  next_template:;
  }
  return out;
}

std::string canonical_string(const Workflow& w) {
  std::string s = w.template_id;
  s.push_back('|');
  for (std::size_t i = 0; i < w.assignment.size(); ++i) {
    if (i > 0) s.push_back(',');
    s += w.assignment[i];
  }
  return s;
}

Workflow parse_canonical(std::string_view s) {
  auto bar = s.find('|');
  if (bar == std::string_view::npos) {
    throw WorkflowError(WorkflowError::Code::Invalid, "canonical string missing '|'");
  }
  Workflow w;
  w.template_id = std::string(s.substr(0, bar));
  std::string_view rest = s.substr(bar + 1);
  while (!rest.empty()) {
    auto comma = rest.find(',');
    w.assignment.emplace_back(rest.substr(0, comma));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  if (w.template_id.empty() || w.assignment.empty()) {
    throw WorkflowError(WorkflowError::Code::Invalid, "malformed canonical string");
  }
  return w;
}

std::string_view answer_failure_name(AnswerFailure::Kind kind) {
  switch (kind) {
    case AnswerFailure::Kind::MissingThink: return "missing-think";
    case AnswerFailure::Kind::MissingAnswer: return "missing-answer";
    case AnswerFailure::Kind::MalformedList: return "malformed-list";
    case AnswerFailure::Kind::UnknownActor: return "unknown-actor";
    case AnswerFailure::Kind::NoMatchingTemplate: return "no-matching-template";
  }
  return "unknown";
}

namespace {

void skip_ws(std::string_view s, std::size_t& i) {
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
}

bool parse_quoted(std::string_view s, std::size_t& i, std::string& out) {
  if (i >= s.size() || (s[i] != '\'' && s[i] != '"')) return false;
  char quote = s[i++];
  out.clear();
  while (i < s.size() && s[i] != quote) out.push_back(s[i++]);
  if (i >= s.size()) return false;
  ++i;  // closing quote
  return true;
}

// list[...] body: quoted ids and [group]s of quoted ids, comma separated.
bool parse_id_list(std::string_view body, std::vector<std::string>& ids) {
  std::size_t i = 0;
  skip_ws(body, i);
  bool first = true;
  while (i < body.size()) {
    if (!first) {
      if (body[i] != ',') return false;
      ++i;
      skip_ws(body, i);
    }
    first = false;
    if (i < body.size() && body[i] == '[') {
      ++i;
      skip_ws(body, i);
      bool group_first = true;
      while (true) {
        if (i >= body.size()) return false;
        if (body[i] == ']') {
          ++i;
          break;
        }
        if (!group_first) {
          if (body[i] != ',') return false;
          ++i;
          skip_ws(body, i);
        }
        group_first = false;
        std::string id;
        if (!parse_quoted(body, i, id)) return false;
        ids.push_back(std::move(id));
        skip_ws(body, i);
      }
      if (group_first) return false;  // empty group
    } else {
      std::string id;
      if (!parse_quoted(body, i, id)) return false;
      ids.push_back(std::move(id));
    }
    skip_ws(body, i);
  }
  return !ids.empty();
}

}  // namespace

AnswerParse parse_answer(std::string_view text, const ActorPool& pool,
                         std::span<const Template> templates) {
  auto think_open = text.find("<think>");
  auto think_close = text.find("</think>");
  if (think_open == std::string_view::npos || think_close == std::string_view::npos ||
      think_close < think_open) {
    return AnswerFailure{AnswerFailure::Kind::MissingThink, "no <think>...</think> block"};
  }
  std::string_view tail = text.substr(think_close + 8);
  auto ans_open = tail.find("<answer>");
  auto ans_close = tail.find("</answer>");
  if (ans_open == std::string_view::npos || ans_close == std::string_view::npos ||
      ans_close < ans_open) {
    return AnswerFailure{AnswerFailure::Kind::MissingAnswer, "no <answer>...</answer> block"};
  }
  if (tail.find("<answer>", ans_open + 8) != std::string_view::npos) {
    return AnswerFailure{AnswerFailure::Kind::MalformedList, "multiple <answer> blocks"};
  }
  std::string_view inner = tail.substr(ans_open + 8, ans_close - ans_open - 8);

  std::size_t i = 0;
  skip_ws(inner, i);
  if (inner.substr(i, 5) != "list[") {
    return AnswerFailure{AnswerFailure::Kind::MalformedList, "answer must use list[...] syntax"};
  }
  std::size_t body_begin = i + 5;
  auto body_end = inner.rfind(']');
  if (body_end == std::string_view::npos || body_end < body_begin) {
    return AnswerFailure{AnswerFailure::Kind::MalformedList, "unterminated list[...]"};
  }
  std::string_view after = inner.substr(body_end + 1);
  std::size_t j = 0;
  skip_ws(after, j);
  if (j != after.size()) {
    return AnswerFailure{AnswerFailure::Kind::MalformedList, "trailing content after list[...]"};
  }

  std::vector<std::string> ids;
  if (!parse_id_list(inner.substr(body_begin, body_end - body_begin), ids)) {
    return AnswerFailure{AnswerFailure::Kind::MalformedList, "could not parse actor id list"};
  }

  std::vector<ActorRole> roles;
  roles.reserve(ids.size());
  for (const auto& id : ids) {
    const ActorSpec* a = pool.find(id);
    if (a == nullptr) {
      return AnswerFailure{AnswerFailure::Kind::UnknownActor, "actor '" + id + "' is not in the pool"};
    }
    roles.push_back(a->role);
  }

  std::vector<const Template*> order;
  order.reserve(templates.size());
  for (const auto& t : templates) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const Template* a, const Template* b) { return complexity_less(*a, *b); });
  for (const Template* t : order) {
    if (t->slot_roles() == roles) {
      return f_match(*t, std::move(ids), pool);
    }
  }
  return AnswerFailure{AnswerFailure::Kind::NoMatchingTemplate,
                       "no registered template matches the role sequence"};
}

std::string render_answer(const Workflow& w) {
  std::string out = "<think>selected by policy</think><answer>list[";
  for (std::size_t i = 0; i < w.assignment.size(); ++i) {
    if (i > 0) out += ", ";
    out.push_back('\'');
    out += w.assignment[i];
    out.push_back('\'');
  }
  out += "]</answer>";
  return out;
}

}  // namespace dynflow
