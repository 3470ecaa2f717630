#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pip/discriminator.hpp"
#include "pip/generator.hpp"
#include "pip/losses.hpp"

using namespace pip;

namespace {

template <typename S>
Tensor<S> rand_tensor(Shape shape, std::uint64_t seed) {
  RandomStream rng(derive_seed(seed, "loss-test"));
  return Tensor<S>::randn(std::move(shape), rng);
}

Tensor<double> row1(const std::vector<double>& v) {
  FlatArray<double> a(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), a.data());
  return Tensor<double>::from_array({1, static_cast<std::int64_t>(v.size())}, std::move(a));
}

Tensor<double> vec(const std::vector<double>& v) {
  FlatArray<double> a(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), a.data());
  return Tensor<double>::from_array({static_cast<std::int64_t>(v.size())}, std::move(a));
}

double softplus_ref(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

TEST_CASE("adversarial pair on zero and saturated logits") {
  Tensor<double> zeros = Tensor<double>::zeros({4});
  auto [ld, lg] = adversarial_losses(zeros, zeros);
  CHECK(ld.item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(lg.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tensor<double> real_hi = Tensor<double>::full({4}, 40.0);
  Tensor<double> fake_lo = Tensor<double>::full({4}, -40.0);
  auto [ld2, lg2] = adversarial_losses(real_hi, fake_lo);
  CHECK(ld2.item() < 1e-15);
  CHECK(lg2.item() == doctest::Approx(40.0).epsilon(1e-12));  // -(-40) saturates high
}

TEST_CASE("adversarial pair matches the scalar softplus oracle on random logits") {
  RandomStream rng(derive_seed(1, "adv"));
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.uniform_index(16));
    Tensor<double> lr = Tensor<double>::randn({n}, rng, 3.0);
    Tensor<double> lf = Tensor<double>::randn({n}, rng, 3.0);
    double d_ref = 0, g_ref = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      d_ref += softplus_ref(lf.at(i)) + softplus_ref(-lr.at(i));
      g_ref += softplus_ref(-lf.at(i));
    }
    auto [ld, lg] = adversarial_losses(lr, lf);
    CHECK(ld.item() == doctest::Approx(d_ref / n).epsilon(1e-12));
    CHECK(lg.item() == doctest::Approx(g_ref / n).epsilon(1e-12));
  }
}

namespace {

// D(x) = <a, x> per sample: the R1 penalty must be (gamma/2)*||a||^2.
struct LinearD {
  Tensor<double> a;  // [n]
  Tensor<double> logits(const Tensor<double>& x, const Tensor<double>&) const {
    const std::int64_t B = x.dim(0);
    const std::int64_t n = a.size();
    return reshape(matmul_nt(reshape(x, {B, n}), reshape(a, {1, n})), {B});
  }
};

struct ConstD {
  Tensor<double> k;  // [1]
  Tensor<double> logits(const Tensor<double>& x, const Tensor<double>&) const {
    return broadcast_scalar(k, {x.dim(0)});
  }
};

struct TinyMlpD {
  MLP<double> mlp;
  Tensor<double> logits(const Tensor<double>& x, const Tensor<double>&) const {
    const std::int64_t n = x.size() / x.dim(0);
    return reshape(mlp.forward(reshape(x, {x.dim(0), n})), {x.dim(0)});
  }
};

}  // namespace

TEST_CASE("R1 on a linear discriminator is (gamma/2)||a||^2, independent of x") {
  LinearD d{rand_tensor<double>({3 * 8 * 8}, 10)};
  double a_sq = 0;
  for (Eigen::Index i = 0; i < d.a.size(); ++i) a_sq += d.a.at(i) * d.a.at(i);

  for (std::uint64_t s = 0; s < 3; ++s) {
    Tensor<double> x = rand_tensor<double>({4, 3, 8, 8}, 20 + s);
    Tensor<double> pen = r1_penalty(d, x, Tensor<double>::zeros({4, 1}), 2.5);
    CHECK(pen.item() == doctest::Approx(2.5 / 2.0 * a_sq).epsilon(1e-10));
  }
}

TEST_CASE("R1 on a constant discriminator is zero") {
  ConstD d{Tensor<double>::full({1}, 3.0)};
  Tensor<double> x = rand_tensor<double>({2, 3, 8, 8}, 30);
  Tensor<double> pen = r1_penalty(d, x, Tensor<double>::zeros({2, 1}), 1.0);
  CHECK(pen.item() == 0.0);
}

TEST_CASE("R1 against a finite-difference gradient-norm oracle") {
  RandomStream rng(derive_seed(2, "r1fd"));
  ParamRegistry<double> reg;
  TinyMlpD d{MLP<double>(reg, "d", 3 * 8 * 8, 16, 1, 2, rng)};

  const std::int64_t B = 2;
  Tensor<double> x = rand_tensor<double>({B, 3, 8, 8}, 40);
  const double gamma = 1.7;
  Tensor<double> pen = r1_penalty(d, x, Tensor<double>::zeros({B, 1}), gamma);

  NoGradGuard ng;
  const double h = 1e-5;
  double norm_acc = 0;
  auto& xa = x.mutable_array();
  for (Eigen::Index e = 0; e < xa.size(); ++e) {
    const double saved = xa[e];
    const std::int64_t b = e / (3 * 8 * 8);
    xa[e] = saved + h;
    const double lp = d.logits(x, Tensor<double>()).at(b);
    xa[e] = saved - h;
    const double lm = d.logits(x, Tensor<double>()).at(b);
    xa[e] = saved;
    const double fd = (lp - lm) / (2 * h);
    norm_acc += fd * fd;
  }
  const double ref = gamma / 2.0 * norm_acc / B;
  CHECK(pen.item() == doctest::Approx(ref).epsilon(1e-4));
}

TEST_CASE("optimizing the R1 penalty reaches discriminator weights") {
  RandomStream rng(derive_seed(3, "r1param"));
  DiscriminatorConfig cfg;
  cfg.resolution = 8;
  cfg.feature_dim = 6;
  cfg.width_mult = 0.0625;
  Discriminator<double> d(cfg, rng);
  Tensor<double> x = rand_tensor<double>({2, 3, 8, 8}, 50);
  Tensor<double> cond = rand_tensor<double>({2, 6}, 51);
  Tensor<double> pen = r1_penalty(d, x, cond, 1.0);
  CHECK(pen.item() >= 0.0);
  auto grads = grad(pen, d.params.tensors());
  bool any_nonzero = false;
  for (auto& g : grads) {
    CHECK(g.all_finite());
    for (Eigen::Index i = 0; i < g.size(); ++i) any_nonzero |= g.at(i) != 0.0;
  }
  CHECK(any_nonzero);
}

TEST_CASE("direction core hits 0, 2, and 1 on aligned, opposed, orthogonal pairs") {
  Tensor<double> dd = vec({2.0, 0.0, 0.0, 0.0});
  CHECK(direction_loss_core(row1({5.0, 0.0, 0.0, 0.0}), dd).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(direction_loss_core(row1({-0.25, 0.0, 0.0, 0.0}), dd).item() ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(direction_loss_core(row1({0.0, 3.0, 0.0, 0.0}), dd).item() ==
        doctest::Approx(1.0).epsilon(1e-12));

  // batched: one of each, mean is (0+2+1)/3
  FlatArray<double> rows(12);
  rows.setZero();
  rows[0] = 1.0;   // aligned
  rows[4] = -1.0;  // opposed
  rows[9] = 7.0;   // orthogonal
  Tensor<double> ds = Tensor<double>::from_array({3, 4}, std::move(rows));
  CHECK(direction_loss_core(ds, dd).item() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("direction core: positive rescaling invariance and range over 1000 pairs") {
  RandomStream rng(derive_seed(4, "dirprop"));
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor<double> ds = Tensor<double>::randn({1, 8}, rng);
    Tensor<double> dd = Tensor<double>::randn({8}, rng);
    const double alpha = 0.01 + 10.0 * rng.uniform();
    const double base = direction_loss_core(ds, dd).item();
    CHECK(base >= 0.0);
    CHECK(base <= 2.0);
    Tensor<double> scaled = scale(ds, alpha);
    CHECK(direction_loss_core(scaled, dd).item() == doctest::Approx(base).epsilon(1e-6));
    // swapping class roles negates both vectors and preserves the loss
    CHECK(direction_loss_core(neg(ds), neg(dd)).item() ==
          doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("zero-norm directions contribute loss 1 and bump the warning counter") {
  Tensor<double> dd = vec({1.0, 1.0});
  std::int64_t warnings = 0;

  // one dead row among two
  FlatArray<double> v(4);
  v.setZero();
  v[2] = 1.0;
  v[3] = 1.0;
  Tensor<double> ds = Tensor<double>::from_array({2, 2}, std::move(v));
  const double loss = direction_loss_core(ds, dd, &warnings).item();
  CHECK(loss == doctest::Approx((1.0 + 0.0) / 2.0).epsilon(1e-12));
  CHECK(warnings == 1);

  // zero domain direction: every row is undefined, loss is exactly 1
  warnings = 0;
  Tensor<double> live = rand_tensor<double>({3, 2}, 60);
  CHECK(direction_loss_core(live, vec({0.0, 0.0}), &warnings).item() == 1.0);
  CHECK(warnings == 3);

  // gradients stay finite when a dead row is present
  Tensor<double> leaf = rand_tensor<double>({2, 2}, 61);
  leaf.mutable_array()[0] = 0.0;
  leaf.mutable_array()[1] = 0.0;
  leaf.set_requires_grad(true);
  auto g = grad(direction_loss_core(leaf, dd), {leaf});
  CHECK(g[0].all_finite());
}

TEST_CASE("direction loss gradients on a 2-parameter toy generator match FD") {
  auto enc = stub_feature_encoder<double>(7, 6);
  Tensor<double> base_p1 = rand_tensor<double>({2, 3, 8, 8}, 70);
  Tensor<double> base_p2 = rand_tensor<double>({2, 3, 8, 8}, 71);
  Tensor<double> base_t1 = rand_tensor<double>({2, 3, 8, 8}, 72);
  Tensor<double> base_t2 = rand_tensor<double>({2, 3, 8, 8}, 73);
  Tensor<double> dd = rand_tensor<double>({6}, 74);

  Tensor<double> th1 = Tensor<double>::full({1}, 0.7);
  Tensor<double> th2 = Tensor<double>::full({1}, -0.3);
  th1.set_requires_grad(true);
  th2.set_requires_grad(true);

  auto loss_of = [&]() {
    const Shape shp = base_p1.shape();
    Tensor<double> img_p = add(mul(broadcast_scalar(th1, shp), base_p1),
                               mul(broadcast_scalar(th2, shp), base_p2));
    Tensor<double> img_t = add(mul(broadcast_scalar(th1, shp), base_t1),
                               mul(broadcast_scalar(th2, shp), base_t2));
    Tensor<double> ds = sub(enc(img_p), enc(img_t));
    return direction_loss_core(ds, dd);
  };

  auto grads = grad(loss_of(), {th1, th2});

  const double h = 1e-5;
  for (int which = 0; which < 2; ++which) {
    Tensor<double>& t = which == 0 ? th1 : th2;
    const double saved = t.at(0);
    t.mutable_array()[0] = saved + h;
    const double lp = loss_of().item();
    t.mutable_array()[0] = saved - h;
    const double lm = loss_of().item();
    t.mutable_array()[0] = saved;
    const double fd = (lp - lm) / (2 * h);
    INFO("theta_" << which + 1 << " fd=" << fd);
    CHECK(grads[static_cast<std::size_t>(which)].at(0) ==
          doctest::Approx(fd).epsilon(1e-3));
  }
}

TEST_CASE("full direction loss drives the real generator") {
  RandomStream rng(derive_seed(8, "dirfull"));
  GeneratorConfig gcfg;
  gcfg.resolution = 8;
  gcfg.latent_dim = 8;
  gcfg.w_dim = 8;
  gcfg.c_dim = 8;
  gcfg.feature_dim = 12;
  gcfg.width_mult = 0.0625;
  gcfg.key.active = {4, 8};
  Generator<double> gen(gcfg, rng);
  auto pair = stub_direction_pair<double>(9, 10);

  DirectionLossConfig cfg;
  cfg.t_peer = "photo of a peer";
  cfg.t_target = "photo of a target";

  Tensor<double> z = rand_tensor<double>({3, 8}, 80);
  Tensor<double> cm_p = rand_tensor<double>({1, 12}, 81);
  Tensor<double> cm_t = rand_tensor<double>({1, 12}, 82);

  std::int64_t warnings = 0;
  Tensor<double> loss = direction_loss(gen, z, cm_p, cm_t, pair, cfg, 5, &warnings);
  CHECK(loss.item() >= 0.0);
  CHECK(loss.item() <= 2.0);
  CHECK(warnings == 0);

  Tensor<double> again = direction_loss(gen, z, cm_p, cm_t, pair, cfg, 5, &warnings);
  CHECK(loss.item() == again.item());

  auto grads = grad(loss, gen.params.tensors());
  for (auto& g : grads) CHECK(g.all_finite());

  // identical class embeddings: both renders coincide, all rows dead
  warnings = 0;
  Tensor<double> same = direction_loss(gen, z, cm_p, cm_p, pair, cfg, 5, &warnings);
  CHECK(same.item() == 1.0);
  CHECK(warnings == 3);
}

TEST_CASE("lazy schedule fires exactly on multiples of the interval") {
  DirectionLossConfig cfg;
  cfg.lazy_interval = 16;
  std::vector<std::int64_t> fired;
  for (std::int64_t it = 0; it < 64; ++it)
    if (should_apply_direction(it, cfg)) fired.push_back(it);
  CHECK(fired == std::vector<std::int64_t>{0, 16, 32, 48});
  CHECK_FALSE(should_apply_direction(15, cfg));

  cfg.lazy_interval = 1;
  for (std::int64_t it = 0; it < 5; ++it) CHECK(should_apply_direction(it, cfg));

  cfg.lazy_interval = 0;
  CHECK_THROWS_AS(should_apply_direction(0, cfg), ConfigError);
}

TEST_CASE("discriminator: projection arithmetic, class sensitivity, shapes") {
  RandomStream rng(derive_seed(10, "disc"));
  DiscriminatorConfig cfg;
  cfg.resolution = 16;
  cfg.feature_dim = 12;
  cfg.width_mult = 0.0625;
  Discriminator<float> d(cfg, rng);

  CHECK(d.blocks.size() == 2);  // 16 and 8
  CHECK(d.blocks[0].resolution == 16);
  CHECK(d.blocks[1].resolution == 8);

  Tensor<float> x = rand_tensor<float>({3, 3, 16, 16}, 90);
  Tensor<float> cond = rand_tensor<float>({3, 12}, 91);
  Tensor<float> out = d.logits(x, cond);
  CHECK(out.ndim() == 1);
  CHECK(out.dim(0) == 3);
  CHECK(out.all_finite());

  // D(x,c) = d(x) + <phi(x), e(c)>, recomputed from the public pieces
  Tensor<float> phi = d.features(x);
  Tensor<float> manual =
      add(reshape(d.head.forward(phi), {3}), rowwise_dot(phi, d.embed.forward(cond)));
  CHECK((out.array() == manual.array()).all());

  // a different condition moves the logits
  Tensor<float> cond2 = rand_tensor<float>({3, 12}, 92);
  CHECK_FALSE((d.logits(x, cond2).array() == out.array()).all());

  // determinism and input validation
  CHECK((d.logits(x, cond).array() == out.array()).all());
  CHECK_THROWS_AS(d.logits(x, rand_tensor<float>({3, 5}, 93)), std::invalid_argument);
  CHECK_THROWS_AS(d.logits(rand_tensor<float>({3, 3, 8, 8}, 94), cond),
                  std::invalid_argument);
}

TEST_CASE("one-hot conditioning mode") {
  RandomStream rng(derive_seed(11, "onehot"));
  DiscriminatorConfig cfg;
  cfg.resolution = 8;
  cfg.feature_dim = 12;  // ignored in one-hot mode
  cfg.width_mult = 0.0625;
  cfg.onehot_condition = true;
  Discriminator<float> d(cfg, rng);
  CHECK(d.condition_dim() == 2);

  FlatArray<float> oh(4);
  oh << 1.0f, 0.0f, 0.0f, 1.0f;
  Tensor<float> cond = Tensor<float>::from_array({2, 2}, std::move(oh));
  Tensor<float> x = rand_tensor<float>({2, 3, 8, 8}, 95);
  Tensor<float> out = d.logits(x, cond);
  CHECK(out.all_finite());
}

TEST_CASE("adversarial losses backprop into every discriminator parameter") {
  RandomStream rng(derive_seed(12, "dgrad"));
  DiscriminatorConfig cfg;
  cfg.resolution = 8;
  cfg.feature_dim = 6;
  cfg.width_mult = 0.0625;
  Discriminator<double> d(cfg, rng);

  Tensor<double> xr = rand_tensor<double>({2, 3, 8, 8}, 96);
  Tensor<double> xf = rand_tensor<double>({2, 3, 8, 8}, 97);
  Tensor<double> cond = rand_tensor<double>({2, 6}, 98);
  Tensor<double> loss = discriminator_adversarial_loss(d.logits(xr, cond), d.logits(xf, cond));
  auto grads = grad(loss, d.params.tensors());
  REQUIRE(grads.size() == d.params.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    INFO("param " << d.params.items[i].first);
    CHECK(grads[i].all_finite());
    double mag = 0;
    for (Eigen::Index e = 0; e < grads[i].size(); ++e) mag += std::abs(grads[i].at(e));
    CHECK(mag > 0.0);
  }
}
