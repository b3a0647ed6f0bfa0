#include <cmath>
#include <vector>

#include "doctest.h"
#include "ddp/error.hpp"
#include "ddp/fixtures.hpp"
#include "ddp/model_io.hpp"
#include "ddp/models.hpp"
#include "reference.hpp"
#include "support.hpp"

using namespace ddp;
using namespace ddp::testing;

namespace {

Batch random_inputs(const Fixture& f, Philox4x32& rng) {
  Batch b = f.data;
  if (!b.tokens.empty()) {
    const auto vocab = static_cast<std::uint64_t>(b.tokens.size() ? 7 : 0);
    for (auto& seq : b.tokens)
      for (auto& t : seq) t = static_cast<int>(rng.below(vocab));
  } else {
    for (Eigen::Index i = 0; i < b.x.rows(); ++i)
      for (Eigen::Index j = 0; j < b.x.cols(); ++j) b.x(i, j) = rng.normal();
  }
  return b;
}

double max_abs(const Eigen::MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("dense forward equals the naive reference") {
  for (auto kind : all_kinds()) {
    CAPTURE(to_string(kind));
    const auto f = make_fixture(small_spec(kind), 5);
    Philox4x32 rng(77);
    for (int trial = 0; trial < 100; ++trial) {
      const Batch b = random_inputs(f, rng);
      const std::vector<double> ones(f.model->num_components(), 1.0);
      const Eigen::MatrixXd ref = reference_forward(*f.model, b);
      CHECK(max_abs(f.model->forward_masked(b, ones) - ref) <= 1e-12);
      CHECK(f.model->forward_masked(b, ones) == f.model->forward_dense(b));
    }
  }
}

TEST_CASE("zero masks silence the module") {
  for (auto kind : {ModelKind::kPlantedLinear, ModelKind::kToyMlp, ModelKind::kToyMoe,
                    ModelKind::kToyAttention}) {
    const auto f = make_fixture(small_spec(kind), 2);
    const std::vector<double> zeros(f.model->num_components(), 0.0);
    CHECK(max_abs(f.model->forward_masked(f.data, zeros)) == 0.0);
  }
}

TEST_CASE("component additivity") {
  for (auto kind : {ModelKind::kPlantedLinear, ModelKind::kToyMlp, ModelKind::kToyMoe,
                    ModelKind::kToyAttention}) {
    CAPTURE(to_string(kind));
    const auto f = make_fixture(small_spec(kind), 3);
    const auto& sm = dynamic_cast<const SummedComponentModel&>(*f.model);
    const auto parts = sm.component_outputs(f.data);
    Philox4x32 rng(4);
    auto m = uniform_vec(rng, sm.num_components(), 0.0, 2.0);
    const Eigen::MatrixXd base = sm.forward_masked(f.data, m);
    for (std::size_t k = 0; k < sm.num_components(); ++k) {
      auto mk = m;
      mk[k] += 0.75;
      const Eigen::MatrixXd diff = sm.forward_masked(f.data, mk) - base;
      CHECK(max_abs(diff - 0.75 * parts[k]) <= 1e-12);
    }
  }
}

TEST_CASE("two-expert routing example") {
  Eigen::MatrixXd router(1, 2);
  router << std::log(0.7), std::log(0.3);
  auto expert = [](double target) {
    GatedMlp e{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::MatrixXd::Constant(1, 1, 1.0),
               Eigen::MatrixXd::Constant(1, 1, 0.0)};
    const double act = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));  // gelu(1) * 1
    e.wd(0, 0) = target / act;
    return e;
  };
  ToyMoeModel moe(router, {expert(1.0), expert(2.0)});
  Batch b;
  b.x = Eigen::MatrixXd::Constant(1, 1, 1.0);
  b.y = Eigen::MatrixXd::Zero(1, 1);
  const double m[] = {1.0, 0.0};
  CHECK(moe.forward_masked(b, m)(0, 0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(moe.routing(b.x)(0, 0) == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("mask gradients match finite differences") {
  for (auto kind : all_kinds()) {
    CAPTURE(to_string(kind));
    auto spec = small_spec(kind);
    const std::uint64_t seed = 8;
    const auto f = make_fixture(spec, seed);
    const ComponentModel* teacher = nullptr;
    std::unique_ptr<ComponentModel> perturbed;
    if (kind == ModelKind::kTinyTransformer) teacher = f.model.get();
    Philox4x32 rng(101);
    int probes = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const auto k = f.model->num_components();
      const auto m = uniform_vec(rng, k, 0.1, 1.6);
      const auto g = f.model->loss_and_mask_grads(f.data, m, teacher, 2.0, KlReduction::kMean);
      auto loss = [&](std::span<const double> mm) {
        return f.model->loss_and_mask_grads(f.data, mm, teacher, 2.0, KlReduction::kMean).loss;
      };
      // one coordinate probe and one random direction per triple
      const std::size_t c = rng.below(k);
      CHECK(rel_err(g.dloss_dm[c], central_diff(loss, m, c, 1e-5), 1e-6) <= 1e-4);
      std::vector<double> dir = uniform_vec(rng, k, -1.0, 1.0);
      auto mp = m, mm = m;
      double analytic = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        mp[i] += 1e-5 * dir[i];
        mm[i] -= 1e-5 * dir[i];
        analytic += g.dloss_dm[i] * dir[i];
      }
      CHECK(rel_err(analytic, (loss(mp) - loss(mm)) / 2e-5, 1e-6) <= 1e-4);
      probes += 2;
    }
    CHECK(probes >= 40);
  }
}

TEST_CASE("distillation against itself is zero") {
  const auto f = make_fixture(small_spec(ModelKind::kTinyTransformer), 1);
  const std::vector<double> ones(f.model->num_components(), 1.0);
  const auto g = f.model->loss_and_mask_grads(f.data, ones, f.model.get(), 2.0);
  CHECK(std::abs(g.kl) <= 1e-14);
  CHECK(g.loss == doctest::Approx(g.task_loss).epsilon(1e-12));
  const auto p = make_fixture(small_spec(ModelKind::kPlantedLinear), 1);
  const std::vector<double> pones(p.model->num_components(), 1.0);
  CHECK_THROWS_AS(p.model->loss_and_mask_grads(p.data, pones, p.model.get(), 2.0), ValidationError);
}

TEST_CASE("fold matches the masked forward") {
  for (auto kind : all_kinds()) {
    CAPTURE(to_string(kind));
    const auto f = make_fixture(small_spec(kind), 6);
    Philox4x32 rng(55);
    const auto k = f.model->num_components();
    for (int trial = 0; trial < 10; ++trial) {
      auto m = uniform_vec(rng, k, 0.0, 2.0);
      // prune roughly a third but keep one component per module type
      for (auto& v : m)
        if (rng.uniform() < 0.33) v = 0.0;
      for (const auto& type : f.model->module_types()) m[f.model->indices_of_type(type).front()] = 1.3;
      const auto pruned = f.model->fold(m);
      std::size_t kept = 0;
      for (double v : m) kept += v > 0.0;
      CHECK(pruned->num_components() == kept);
      const std::vector<double> ones(kept, 1.0);
      for (int in = 0; in < 10; ++in) {
        const Batch b = random_inputs(f, rng);
        CHECK(max_abs(pruned->forward_masked(b, ones) - f.model->forward_masked(b, m)) <= 1e-10);
      }
    }
    const std::vector<double> dense(k, 1.0);
    const auto same = f.model->fold(dense);
    CHECK(same->num_components() == k);
    CHECK(max_abs(same->forward_dense(f.data) - f.model->forward_dense(f.data)) <= 1e-12);
    const std::vector<double> none(k, 0.0);
    CHECK_THROWS_AS(f.model->fold(none), ValidationError);
  }
}

TEST_CASE("fold scales kept components") {
  Eigen::MatrixXd u(2, 2), v(2, 3);
  u << 1, 0, 0, 1;
  v << 1, 2, 3, 4, 5, 6;
  PlantedLinearModel pl(u, v);
  const double m[] = {2.0, 0.0};
  const auto pruned = pl.fold(m);
  REQUIRE(pruned->num_components() == 1);
  const auto& p = dynamic_cast<const PlantedLinearModel&>(*pruned);
  CHECK(p.v().row(0) == Eigen::RowVector3d(2, 4, 6));

  const auto f = make_fixture(small_spec(ModelKind::kPlantedLinear), 9);
  std::vector<double> half(6, -1.0);
  for (int i = 0; i < 3; ++i) half[static_cast<std::size_t>(2 * i)] = 0.5;
  std::vector<double> mm(6);
  for (std::size_t i = 0; i < 6; ++i) mm[i] = std::max(0.0, half[i]);
  CHECK(f.model->fold(mm)->num_components() == 3);
}

TEST_CASE("planted construction") {
  const auto a = make_planted_model(8, 4, 0.0, 21);
  const auto b = make_planted_model(8, 4, 0.0, 21);
  CHECK(a.true_support == b.true_support);
  CHECK(a.data.x == b.data.x);
  CHECK(a.model->theta_checksum() == b.model->theta_checksum());
  CHECK(a.true_support.size() == 4);
  std::vector<double> ind(8, 0.0);
  for (auto i : a.true_support) ind[i] = 1.0;
  CHECK(a.model->task_loss(a.data, ind) == 0.0);
  CHECK(a.model->task_loss(a.data, std::vector<double>(8, 1.0)) == 0.0);  // noise 0 distractors
  const auto c = make_planted_model(8, 4, 0.0, 22);
  CHECK(a.model->theta_checksum() != c.model->theta_checksum());
  CHECK_THROWS_AS(make_planted_model(8, 0, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(make_planted_model(8, 9, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(make_planted_model(8, 4, -0.1, 1), ValidationError);
}

TEST_CASE("shape errors") {
  const auto f = make_fixture(small_spec(ModelKind::kPlantedLinear), 1);
  CHECK_THROWS_AS(f.model->forward_masked(f.data, std::vector<double>(3, 1.0)), ValidationError);
  Batch bad = f.data;
  bad.x = Eigen::MatrixXd::Zero(bad.x.rows(), bad.x.cols() + 1);
  CHECK_THROWS_AS(f.model->forward_dense(bad), ValidationError);
  const auto t = make_fixture(small_spec(ModelKind::kTinyTransformer), 1);
  Batch tb = t.data;
  tb.tokens[0][1] = 99;
  CHECK_THROWS_AS(t.model->forward_dense(tb), ValidationError);
}

TEST_CASE("checkpoint round-trip") {
  for (auto kind : all_kinds()) {
    CAPTURE(to_string(kind));
    const auto f = make_fixture(small_spec(kind), 12);
    const std::string text = model_to_json(*f.model);
    const auto back = model_from_json(text);
    CHECK(back->spec() == f.model->spec());
    CHECK(back->component_map() == f.model->component_map());
    CHECK(back->theta_checksum() == f.model->theta_checksum());
    CHECK(back->forward_dense(f.data) == f.model->forward_dense(f.data));
    CHECK(model_to_json(*back) == text);
  }
  CHECK_THROWS_AS(model_from_json("{\"schema_version\": 1}"), ValidationError);
  CHECK_THROWS_AS(model_from_json("not json"), ValidationError);
}

TEST_CASE("component maps") {
  const auto t = make_fixture(small_spec(ModelKind::kTinyTransformer), 1);
  CHECK(t.model->module_types() == std::vector<std::string>{"attn", "mlp"});
  CHECK(t.model->indices_of_type("attn").size() == 4);
  CHECK(t.model->indices_of_type("mlp").size() == 12);
  const auto m = make_fixture(small_spec(ModelKind::kToyMoe), 1);
  CHECK(m.model->component_map().size() == 3);
  CHECK(m.model->num_components() == 6);
}
