#include <doctest.h>

#include <cmath>

#include "dynflow/policy.hpp"

using namespace dynflow;

namespace {

Registry two_template_registry() {
  std::vector<ActorSpec> actors;
  for (auto [id, role] : std::initializer_list<std::pair<const char*, ActorRole>>{
           {"p1", ActorRole::Parser},
           {"p2", ActorRole::Parser},
           {"g1", ActorRole::Generator},
           {"g2", ActorRole::Generator},
           {"g3", ActorRole::Generator}}) {
    ActorSpec a;
    a.id = id;
    a.role = role;
    actors.push_back(a);
  }
  std::vector<Template> templates{
      {"0", {single(ActorRole::Generator)}},
      {"D", {single(ActorRole::Parser), single(ActorRole::Generator)}},
  };
  return Registry{ActorPool(std::move(actors)), std::move(templates)};
}

struct FdProblem {
  RolloutGroup group;
  Eigen::MatrixXd features;
  Eigen::VectorXd theta;
  Eigen::VectorXd theta_ref;
  GrpoConfig cfg;
};

FdProblem random_problem(SplitMix64& rng, const Registry& reg, const Featurizer& feat,
                         double beta) {
  FdProblem p;
  p.cfg.group_size = 5;
  p.cfg.clip_eps = 0.2;
  p.cfg.kl_beta = beta;

  Task task = planted_task("t", kAllDifficulties[rng.uniform_index(4)]);
  p.group.task_id = task.task_id;
  p.group.mask = MaskVector::all_ones(reg.pool);
  p.group.candidates = enumerate_workflows(reg.templates, reg.pool, p.group.mask);
  p.features = feat.matrix(task, p.group.candidates);

  const Eigen::Index dim = feat.layout().dim();
  p.theta.resize(dim);
  p.theta_ref.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    p.theta(i) = 2.0 * rng.next_unit01() - 1.0;
    p.theta_ref(i) = 2.0 * rng.next_unit01() - 1.0;
  }

  // sampling policy: a perturbed theta, so ratios are away from 1
  Eigen::VectorXd theta_old = p.theta;
  for (Eigen::Index i = 0; i < dim; ++i) theta_old(i) += 0.6 * (2.0 * rng.next_unit01() - 1.0);
  Eigen::VectorXd probs = policy_distribution(theta_old, p.features);

  const int G = p.cfg.group_size;
  p.group.chosen.resize(G);
  p.group.old_probs.resize(G);
  p.group.rewards.resize(G);
  p.group.lambdas.assign(G, 1);
  for (int k = 0; k < G; ++k) {
    auto pick = static_cast<Eigen::Index>(rng.uniform_index(
        static_cast<std::size_t>(p.group.candidates.size())));
    p.group.chosen[static_cast<std::size_t>(k)] = static_cast<int>(pick);
    p.group.old_probs(k) = probs(pick);
    p.group.rewards(k) = -0.5 + 4.0 * rng.next_unit01();
  }
  p.group.advantages = group_advantages(p.group.rewards);
  return p;
}

}  // namespace

TEST_CASE("feature layout and the hand-computed example") {
  Registry reg = two_template_registry();
  Featurizer feat(reg);
  const FeatureLayout& layout = feat.layout();

  const Eigen::Index t_count = 2, p_count = 5;
  CHECK(layout.dim() == 4 + t_count + p_count + 2 + 4 * t_count + 1);

  Task easy = planted_task("t", Difficulty::Easy);
  const Template* d = reg.find_template("D");
  Workflow w = f_match(*d, {"p1", "g1"}, reg.pool);
  Eigen::VectorXd v = feat(easy, w);

  CHECK(v(0) == 1.0);  // easy one-hot
  CHECK(v(1) == 0.0);
  CHECK(v(2) == 0.0);
  CHECK(v(3) == 0.0);
  CHECK(v(4) == 0.0);  // template "0"
  CHECK(v(5) == 1.0);  // template "D"
  // pool order is sorted ids: g1 g2 g3 p1 p2
  CHECK(v(6) == 1.0);   // g1
  CHECK(v(7) == 0.0);   // g2
  CHECK(v(8) == 0.0);   // g3
  CHECK(v(9) == 1.0);   // p1
  CHECK(v(10) == 0.0);  // p2
  CHECK(v(11) == doctest::Approx(2.0 / 2.0));  // stage count / max stages
  CHECK(v(12) == doctest::Approx(1.0 / 1.0));  // width / max width
  // difficulty x template cross block: easy x D
  CHECK(v(13 + 0 * t_count + 1) == 1.0);
  CHECK(v(layout.dim() - 1) == 1.0);  // bias

  // every vector has the same fixed length
  for (const auto& cand :
       enumerate_workflows(reg.templates, reg.pool, MaskVector::all_ones(reg.pool))) {
    CHECK(feat(easy, cand).size() == layout.dim());
  }

  // identical template and actors -> identical features
  Workflow w2 = f_match(*d, {"p1", "g1"}, reg.pool);
  CHECK((feat(easy, w2).array() == feat(easy, w).array()).all());
}

TEST_CASE("policy distribution is a stable softmax") {
  SUBCASE("zero scores are uniform") {
    Eigen::MatrixXd f(4, 3);
    f.setRandom();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd p = policy_distribution(theta, f);
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(p(i) == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("single candidate gets probability one") {
    Eigen::MatrixXd f(1, 2);
    f << 3.0, -1.0;
    Eigen::VectorXd theta(2);
    theta << 0.7, 0.1;
    Eigen::VectorXd p = policy_distribution(theta, f);
    CHECK(p(0) == 1.0);
  }

  SUBCASE("scores 0 and ln 3 give [0.25, 0.75]") {
    Eigen::MatrixXd f(2, 1);
    f << 0.0, 1.0;
    Eigen::VectorXd theta(1);
    theta << std::log(3.0);
    Eigen::VectorXd p = policy_distribution(theta, f);
    CHECK(p(0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p(1) == doctest::Approx(0.75).epsilon(1e-12));
  }

  SUBCASE("sums to one and survives huge score offsets") {
    SplitMix64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::MatrixXd f(5, 3);
      for (Eigen::Index i = 0; i < 5; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) f(i, j) = 10.0 * (2 * rng.next_unit01() - 1);
      }
      f.col(2).setOnes();  // bias column
      Eigen::VectorXd theta(3);
      theta << rng.next_unit01(), rng.next_unit01(), 0.0;
      Eigen::VectorXd p = policy_distribution(theta, f);
      CHECK(std::fabs(p.sum() - 1.0) <= 1e-12);

      // shift invariance through the bias weight
      Eigen::VectorXd shifted = theta;
      shifted(2) += 500.0;
      Eigen::VectorXd p2 = policy_distribution(shifted, f);
      for (Eigen::Index i = 0; i < 5; ++i) CHECK(p2(i) == doctest::Approx(p(i)).epsilon(1e-12));
    }
  }

  SUBCASE("empty candidate list is an error") {
    Eigen::MatrixXd f(0, 3);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS((void)policy_distribution(theta, f), WorkflowError);
  }
}

TEST_CASE("sample_mask honors the schedule and always admits a workflow") {
  SUBCASE("r = 1 keeps everything") {
    Registry reg = builtin_registry(1);
    SplitMix64 rng(1);
    MaskVector m = sample_mask(reg.pool, full_retention_schedule(), Difficulty::Easy,
                               reg.templates, rng);
    CHECK(m.bits_string() == std::string(reg.pool.size(), '1'));
  }

  SUBCASE("r = 0 is rejected") {
    Registry reg = builtin_registry(1);
    SplitMix64 rng(1);
    MaskSchedule zero;
    for (Difficulty d : kAllDifficulties) zero[d] = 0.0;
    CHECK_THROWS_AS(
        (void)sample_mask(reg.pool, zero, Difficulty::Easy, reg.templates, rng), WorkflowError);
  }

  SUBCASE("r = 0.5 retains half the pool on average") {
    std::vector<std::pair<ActorRole, int>> counts{{ActorRole::Generator, 10}};
    ActorPool pool = synthetic_pool(counts);
    std::vector<Template> templates{{"0", {single(ActorRole::Generator)}}};
    MaskSchedule half;
    for (Difficulty d : kAllDifficulties) half[d] = 0.5;
    SplitMix64 rng(8);
    double total = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      MaskVector m = sample_mask(pool, half, Difficulty::Easy, templates, rng);
      std::string bits = m.bits_string();
      total += static_cast<double>(std::count(bits.begin(), bits.end(), '1')) / 10.0;
    }
    double mean = total / n;
    CHECK(mean > 0.48);
    CHECK(mean < 0.52);
  }

  SUBCASE("low retention still yields a nonempty space") {
    Registry reg = builtin_registry(1);
    MaskSchedule low;
    for (Difficulty d : kAllDifficulties) low[d] = 0.3;
    SplitMix64 rng(9);
    for (int i = 0; i < 300; ++i) {
      MaskVector m = sample_mask(reg.pool, low, Difficulty::Complex, reg.templates, rng);
      CHECK(!enumerate_workflows(reg.templates, reg.pool, m).empty());
    }
  }
}

TEST_CASE("group advantages are population-normalized with a sigma guard") {
  Eigen::VectorXd r(3);
  r << 1, 2, 3;
  Eigen::VectorXd a = group_advantages(r);
  CHECK(a(0) == doctest::Approx(-1.224744871391589).epsilon(1e-12));
  CHECK(a(1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a(2) == doctest::Approx(1.224744871391589).epsilon(1e-12));

  Eigen::VectorXd r2(2);
  r2 << 0.0, 3.5;
  Eigen::VectorXd a2 = group_advantages(r2);
  CHECK(a2(0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(a2(1) == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::VectorXd r3 = Eigen::VectorXd::Constant(5, 3.4);
  CHECK(group_advantages(r3).isZero(0.0));

  SplitMix64 rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index g = 2 + static_cast<Eigen::Index>(rng.uniform_index(8));
    Eigen::VectorXd rewards(g);
    for (Eigen::Index i = 0; i < g; ++i) rewards(i) = 4.0 * rng.next_unit01() - 0.5;
    Eigen::VectorXd adv = group_advantages(rewards);
    double mu = adv.mean();
    double sd = std::sqrt((adv.array() - mu).square().mean());
    if (!adv.isZero(0.0)) {
      CHECK(std::fabs(mu) <= 1e-9);
      CHECK(std::fabs(sd - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("rollout groups are deterministic and respect the mask") {
  auto env = plant_env(61, 10, 40, 1.0);
  const Registry& reg = env.registry();
  Featurizer feat(reg);
  GrpoConfig cfg;
  cfg.group_size = 5;

  RolloutEvaluator evaluate = [&](const Workflow& w, const Task& task, SplitMix64&) {
    return RolloutResult{env.staged_total(w, task, cfg.timeout_seconds), 1};
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(feat.layout().dim());
  const Task& task = env.tasks().front();

  SplitMix64 rng1(derive_key(mix64(99), "grp"));
  RolloutGroup g1 = rollout_group(theta, task, cfg, reg, feat, evaluate, rng1);
  SplitMix64 rng2(derive_key(mix64(99), "grp"));
  RolloutGroup g2 = rollout_group(theta, task, cfg, reg, feat, evaluate, rng2);

  CHECK(g1.chosen == g2.chosen);
  CHECK((g1.rewards.array() == g2.rewards.array()).all());
  CHECK(g1.mask.bits_string() == g2.mask.bits_string());
  CHECK(g1.chosen.size() == 5);

  // masked actors never appear in sampled workflows
  SplitMix64 rng3(7);
  for (int trial = 0; trial < 50; ++trial) {
    RolloutGroup g = rollout_group(theta, env.tasks()[trial % env.tasks().size()], cfg, reg, feat,
                                   evaluate, rng3);
    for (int idx : g.chosen) {
      for (const auto& actor : g.candidates[static_cast<std::size_t>(idx)].assignment) {
        CHECK(g.mask.bit(actor));
      }
    }
    // all-equal rewards force zero advantages
    bool all_equal = true;
    for (Eigen::Index i = 1; i < g.rewards.size(); ++i) {
      if (g.rewards(i) != g.rewards(0)) all_equal = false;
    }
    if (all_equal) CHECK(g.advantages.isZero(0.0));
  }
}

TEST_CASE("grpo loss and gradient: closed-form anchors") {
  Registry reg = two_template_registry();
  Featurizer feat(reg);
  Task task = planted_task("t", Difficulty::Easy);
  auto candidates = enumerate_workflows(reg.templates, reg.pool, MaskVector::all_ones(reg.pool));
  Eigen::MatrixXd features = feat.matrix(task, candidates);
  const Eigen::Index dim = feat.layout().dim();

  SUBCASE("zero advantages at theta = theta_ref give zero loss and gradient") {
    RolloutGroup g;
    g.candidates = candidates;
    g.mask = MaskVector::all_ones(reg.pool);
    g.chosen = {0, 1, 2};
    g.old_probs = policy_distribution(Eigen::VectorXd::Zero(dim), features)(g.chosen[0]) *
                  Eigen::VectorXd::Ones(3);
    g.rewards = Eigen::VectorXd::Constant(3, 2.0);
    g.advantages = Eigen::VectorXd::Zero(3);
    g.lambdas = {1, 1, 1};
    GrpoConfig cfg;
    auto res = grpo_loss_and_grad(Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim), g,
                                  features, cfg);
    CHECK(res.loss == 0.0);
    CHECK(res.grad.isZero(0.0));
    CHECK(res.kl == 0.0);
  }

  SUBCASE("single rollout, ratio 1.5, A = +1: clipped objective is 1.2") {
    RolloutGroup g;
    g.candidates = candidates;
    g.mask = MaskVector::all_ones(reg.pool);
    g.chosen = {0};
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd p = policy_distribution(theta, features);
    g.old_probs = Eigen::VectorXd::Constant(1, p(0) / 1.5);
    g.rewards = Eigen::VectorXd::Constant(1, 1.0);
    g.advantages = Eigen::VectorXd::Constant(1, 1.0);
    g.lambdas = {1};
    GrpoConfig cfg;
    cfg.kl_beta = 0.0;
    auto res = grpo_loss_and_grad(theta, theta, g, features, cfg);
    CHECK(res.surrogate == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(res.loss == doctest::Approx(-1.2).epsilon(1e-12));
    CHECK(res.grad.isZero(1e-15));  // clip active: constant branch
  }

  SUBCASE("at theta = theta_old every ratio is exactly one") {
    Eigen::VectorXd theta(dim);
    SplitMix64 rng(23);
    for (Eigen::Index i = 0; i < dim; ++i) theta(i) = rng.next_unit01() - 0.5;
    Eigen::VectorXd p = policy_distribution(theta, features);
    RolloutGroup g;
    g.candidates = candidates;
    g.chosen = {1, 3, 1, 2, 0};
    g.old_probs.resize(5);
    for (int k = 0; k < 5; ++k) g.old_probs(k) = p(g.chosen[static_cast<std::size_t>(k)]);
    g.rewards.resize(5);
    g.rewards << 3.4, 0.0, 3.4, -0.5, 0.0;
    g.advantages = group_advantages(g.rewards);
    g.lambdas = {1, 1, 1, 1, 1};
    GrpoConfig cfg;
    cfg.kl_beta = 0.0;
    auto res = grpo_loss_and_grad(theta, theta, g, features, cfg);
    CHECK(res.surrogate == doctest::Approx(g.advantages.mean()).epsilon(1e-12));
  }

  SUBCASE("mismatched group is rejected") {
    RolloutGroup g;
    g.candidates = candidates;
    g.chosen = {0};
    g.old_probs = Eigen::VectorXd::Ones(2);  // wrong length
    g.rewards = Eigen::VectorXd::Ones(1);
    g.advantages = Eigen::VectorXd::Ones(1);
    GrpoConfig cfg;
    CHECK_THROWS_AS((void)grpo_loss_and_grad(Eigen::VectorXd::Zero(dim),
                                             Eigen::VectorXd::Zero(dim), g, features, cfg),
                    WorkflowError);
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  Registry reg = builtin_registry(1);
  Featurizer feat(reg);
  SplitMix64 rng(2718);

  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    double beta = trial % 2 == 0 ? 0.01 : 0.0;
    FdProblem p = random_problem(rng, reg, feat, beta);
    auto res = grpo_loss_and_grad(p.theta, p.theta_ref, p.group, p.features, p.cfg);

    const double h = 1e-5;
    Eigen::VectorXd fd(p.theta.size());
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) {
      Eigen::VectorXd up = p.theta, dn = p.theta;
      up(i) += h;
      dn(i) -= h;
      double lu = grpo_loss_and_grad(up, p.theta_ref, p.group, p.features, p.cfg).loss;
      double ld = grpo_loss_and_grad(dn, p.theta_ref, p.group, p.features, p.cfg).loss;
      fd(i) = (lu - ld) / (2 * h);
    }
    double rel = (res.grad - fd).norm() / std::max(1.0, res.grad.norm());
    worst = std::max(worst, rel);
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("KL is zero at the reference and nonnegative elsewhere") {
  Registry reg = builtin_registry(1);
  Featurizer feat(reg);
  Task task = planted_task("t", Difficulty::Moderate);
  auto candidates = enumerate_workflows(reg.templates, reg.pool, MaskVector::all_ones(reg.pool));
  Eigen::MatrixXd features = feat.matrix(task, candidates);
  const Eigen::Index dim = feat.layout().dim();

  SplitMix64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd a(dim), b(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      a(i) = 2 * rng.next_unit01() - 1;
      b(i) = 2 * rng.next_unit01() - 1;
    }
    RolloutGroup g;
    g.candidates = candidates;
    g.chosen = {0};
    g.old_probs = Eigen::VectorXd::Constant(1, 0.5);
    g.rewards = Eigen::VectorXd::Zero(1);
    g.advantages = Eigen::VectorXd::Zero(1);
    g.lambdas = {1};
    GrpoConfig cfg;
    auto same = grpo_loss_and_grad(a, a, g, features, cfg);
    CHECK(same.kl == 0.0);
    auto diff = grpo_loss_and_grad(a, b, g, features, cfg);
    CHECK(diff.kl >= 0.0);
  }
}

TEST_CASE("training: zero steps change nothing, dominance is learned") {
  PlantOptions opts;
  opts.base_accuracy = {{"simple", 0.05}, {"standard", 0.95}, {"advanced", 0.6}};
  auto env = plant_env(71, 2, 60, 0.0, RuntimeModel::defaults(), opts);  // templates 0 and A

  SUBCASE("zero steps leave theta at the origin") {
    GrpoConfig cfg;
    cfg.steps = 0;
    cfg.seed = 3;
    TrainResult r = train(cfg, env);
    CHECK(r.theta.isZero(0.0));
    CHECK(r.trace.empty());
  }

  SUBCASE("500 steps lock onto the dominant workflow") {
    GrpoConfig cfg;
    cfg.steps = 500;
    cfg.seed = 3;
    TrainResult r = train(cfg, env);

    // brute-force dominant workflow: highest row mean
    auto [y, t] = env.materialize();
    GapReport g = brute_force_report(y);
    const std::string dominant = y.workflows[static_cast<std::size_t>(g.i_star)];

    Featurizer feat(env.registry());
    int matches = 0;
    for (const auto& task : env.tasks()) {
      Eigen::MatrixXd f = feat.matrix(task, env.workflows());
      Eigen::VectorXd scores = f * r.theta;
      Eigen::Index pick = 0;
      scores.maxCoeff(&pick);
      if (canonical_string(env.workflows()[static_cast<std::size_t>(pick)]) == dominant) {
        ++matches;
      }
    }
    CHECK(matches >= static_cast<int>(0.95 * static_cast<double>(env.tasks().size())));
  }
}

TEST_CASE("policy evaluation is deterministic given the seed") {
  auto env = plant_env(81, 6, 30, 1.0);
  Featurizer feat(env.registry());
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(feat.layout().dim());
  double a = evaluate_policy_ex(theta, env, env.tasks(), 0.5, 5, 42);
  double b = evaluate_policy_ex(theta, env, env.tasks(), 0.5, 5, 42);
  CHECK(a == b);
  double full = evaluate_policy_ex(theta, env, env.tasks(), 1.0, 1, 42);
  CHECK(full >= 0.0);
  CHECK(full <= 1.0);
}
