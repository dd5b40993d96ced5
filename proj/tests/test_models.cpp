// Layer and model tests: finite-difference gradient verification in double
// precision, closed-form parameter counts, determinism, the bicubic identity
// start, and checkpoint round-trips.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>

#include "casr/checkpoint.hpp"
#include "casr/models.hpp"

using namespace casr;

namespace {

Tensor<double> random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

// 0.5 * sum((y - target)^2); dL/dy = y - target.
double sq_loss(const Tensor<double>& y, const Tensor<double>& target) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.v.size(); ++i) {
    const double d = y.v[i] - target.v[i];
    acc += 0.5 * d * d;
  }
  return acc;
}

Tensor<double> sq_grad(const Tensor<double>& y, const Tensor<double>& target) {
  Tensor<double> g(y.shape);
  for (std::size_t i = 0; i < y.v.size(); ++i) g.v[i] = y.v[i] - target.v[i];
  return g;
}

// Relative-error FD comparison over a sampled subset of coordinates.
struct FdStats {
  int checked = 0, passed = 0;
};

template <typename Forward>
void fd_check_tensor(Tensor<double>& x, const Tensor<double>& analytic, Forward&& loss_of,
                     FdStats& st, std::size_t stride = 1, double h = 1e-4, double tol = 1e-3) {
  for (std::size_t i = 0; i < x.v.size(); i += stride) {
    const double keep = x.v[i];
    x.v[i] = keep + h;
    const double up = loss_of();
    x.v[i] = keep - h;
    const double dn = loss_of();
    x.v[i] = keep;
    const double fd = (up - dn) / (2 * h);
    const double an = analytic.v[i];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    ++st.checked;
    if (std::abs(fd - an) / denom < tol) ++st.passed;
  }
}

}  // namespace

TEST_CASE("conv2d gradient check (params and input)") {
  Rng rng(1);
  Conv2d<double> conv(3, 4, 3);
  conv.init(rng);
  Tensor<double> x = random_tensor(rng, {2, 3, 6, 6});
  Tensor<double> target = random_tensor(rng, {2, 4, 6, 6});

  auto loss_of = [&] { return sq_loss(conv.forward(x), target); };
  const Tensor<double> y = conv.forward(x);
  conv.zero_grad();
  const Tensor<double> gx = conv.backward(sq_grad(y, target));

  FdStats st;
  fd_check_tensor(conv.w, conv.gw, loss_of, st, 3);
  fd_check_tensor(conv.b, conv.gb, loss_of, st, 1);
  fd_check_tensor(x, gx, loss_of, st, 5);
  CHECK(st.passed == st.checked);
  CHECK(st.checked > 60);
}

TEST_CASE("conv2d 1x1 gradient check") {
  Rng rng(2);
  Conv2d<double> conv(4, 2, 1);
  conv.init(rng);
  Tensor<double> x = random_tensor(rng, {1, 4, 5, 5});
  Tensor<double> target = random_tensor(rng, {1, 2, 5, 5});
  auto loss_of = [&] { return sq_loss(conv.forward(x), target); };
  const Tensor<double> y = conv.forward(x);
  conv.zero_grad();
  conv.backward(sq_grad(y, target));
  FdStats st;
  fd_check_tensor(conv.w, conv.gw, loss_of, st, 1);
  CHECK(st.passed == st.checked);
}

TEST_CASE("linear gradient check") {
  Rng rng(3);
  Linear<double> fc(10, 7);
  fc.init(rng);
  Tensor<double> x = random_tensor(rng, {4, 10});
  Tensor<double> target = random_tensor(rng, {4, 7});
  auto loss_of = [&] { return sq_loss(fc.forward(x), target); };
  const Tensor<double> y = fc.forward(x);
  fc.zero_grad();
  const Tensor<double> gx = fc.backward(sq_grad(y, target));
  FdStats st;
  fd_check_tensor(fc.w, fc.gw, loss_of, st, 2);
  fd_check_tensor(fc.b, fc.gb, loss_of, st, 1);
  fd_check_tensor(x, gx, loss_of, st, 1);
  CHECK(st.passed == st.checked);
}

TEST_CASE("pooling, pixel shuffle, and activations round-trip gradients") {
  Rng rng(4);

  AvgPool2<double> pool;
  Tensor<double> x = random_tensor(rng, {2, 3, 6, 6});
  Tensor<double> target = random_tensor(rng, {2, 3, 3, 3});
  {
    auto loss_of = [&] { return sq_loss(pool.forward(x), target); };
    const auto y = pool.forward(x);
    const auto gx = pool.backward(sq_grad(y, target));
    FdStats st;
    fd_check_tensor(x, gx, loss_of, st, 4);
    CHECK(st.passed == st.checked);
  }

  GlobalAvgPool<double> gap;
  Tensor<double> x2 = random_tensor(rng, {2, 5, 4, 4});
  Tensor<double> t2 = random_tensor(rng, {2, 5});
  {
    auto loss_of = [&] { return sq_loss(gap.forward(x2), t2); };
    const auto y = gap.forward(x2);
    const auto gx = gap.backward(sq_grad(y, t2));
    FdStats st;
    fd_check_tensor(x2, gx, loss_of, st, 7);
    CHECK(st.passed == st.checked);
  }

  PixelShuffle2<double> ps;
  Tensor<double> x3 = random_tensor(rng, {2, 8, 3, 3});
  Tensor<double> t3 = random_tensor(rng, {2, 2, 6, 6});
  {
    auto loss_of = [&] { return sq_loss(ps.forward(x3), t3); };
    const auto y = ps.forward(x3);
    const auto gx = ps.backward(sq_grad(y, t3));
    FdStats st;
    fd_check_tensor(x3, gx, loss_of, st, 11);
    CHECK(st.passed == st.checked);
  }

  Sigmoid<double> sig;
  Tensor<double> x4 = random_tensor(rng, {3, 9});
  Tensor<double> t4 = random_tensor(rng, {3, 9});
  {
    auto loss_of = [&] { return sq_loss(sig.forward(x4), t4); };
    const auto y = sig.forward(x4);
    const auto gx = sig.backward(sq_grad(y, t4));
    FdStats st;
    fd_check_tensor(x4, gx, loss_of, st, 1);
    CHECK(st.passed == st.checked);
  }
}

TEST_CASE("channel scale gradients w.r.t. input and gate") {
  Rng rng(5);
  ChannelScale<double> cs;
  Tensor<double> x = random_tensor(rng, {2, 3, 4, 4});
  Tensor<double> gate = random_tensor(rng, {2, 3}, 0.1, 0.9);
  Tensor<double> target = random_tensor(rng, {2, 3, 4, 4});

  auto loss_of = [&] { return sq_loss(cs.forward(x, gate), target); };
  const auto y = cs.forward(x, gate);
  Tensor<double> ggate;
  const auto gx = cs.backward(sq_grad(y, target), ggate);
  FdStats st;
  fd_check_tensor(x, gx, loss_of, st, 5);
  fd_check_tensor(gate, ggate, loss_of, st, 1);
  CHECK(st.passed == st.checked);
}

TEST_CASE("dropout semantics") {
  Dropout<double> drop(0.5);
  Tensor<double> x({1, 1000});
  x.fill(1.0);

  // Eval mode: exact identity.
  const auto y_eval = drop.forward(x, false, nullptr);
  CHECK(y_eval.v == x.v);

  // Train mode: deterministic per seed, inverted scaling, roughly half kept.
  Rng r1(99), r2(99);
  const auto y1 = drop.forward(x, true, &r1);
  const auto y2 = drop.forward(x, true, &r2);
  CHECK(y1.v == y2.v);
  int kept = 0;
  for (double v : y1.v) {
    CHECK((v == 0.0 || v == 2.0));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 400);
  CHECK(kept < 600);

  CHECK_THROWS_AS(drop.forward(x, true, nullptr), ConfigError);
  CHECK_THROWS_AS(Dropout<double>(1.0), ConfigError);
}

TEST_CASE("softmax cross entropy values and gradient") {
  Tensor<double> logits({2, 6});
  logits.fill(0.0);
  const std::vector<int> labels = {0, 3};
  // Uniform logits: loss = log(6).
  CHECK(softmax_cross_entropy<double>(logits, labels) ==
        Catch::Approx(std::log(6.0)).epsilon(1e-12));

  Rng rng(8);
  Tensor<double> l2 = random_tensor(rng, {3, 6});
  const std::vector<int> y2 = {1, 5, 2};
  Tensor<double> g;
  softmax_cross_entropy<double>(l2, y2, &g);
  FdStats st;
  auto loss_of = [&] { return softmax_cross_entropy<double>(l2, y2); };
  fd_check_tensor(l2, g, loss_of, st, 1, 1e-5);
  CHECK(st.passed == st.checked);

  const std::vector<int> bad = {0, 6, 0};
  CHECK_THROWS_AS(softmax_cross_entropy<double>(l2, bad), DomainError);
}

TEST_CASE("adam converges on a quadratic and rejects config drift") {
  Tensor<double> p({4});
  p.v = {5.0, -3.0, 2.0, 0.5};
  Tensor<double> g({4});
  std::vector<ParamRef<double>> refs{{"p", &p, &g}};
  Adam<double> opt(0.05);
  for (int i = 0; i < 400; ++i) {
    for (std::size_t j = 0; j < 4; ++j) g.v[j] = p.v[j];  // L = 0.5 |p|^2
    opt.step(refs);
  }
  for (double x : p.v) CHECK(std::abs(x) < 1e-3);
  CHECK(opt.steps_taken() == 400);
  CHECK_THROWS_AS(Adam<double>(0.0), ConfigError);
}

TEST_CASE("sr model config validation") {
  SrModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.scale = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SrModelConfig{};
  c.channels = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SrModelConfig{};
  c.blocks = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SrModelConfig{};
  c.attention_reduction = 64;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("sr model parameter counts match closed forms at channels=32 blocks=4") {
  const int C = 32, B = 4;
  auto conv3 = [](int cin, int cout) { return cout * (cin * 9) + cout; };
  auto conv1 = [](int cin, int cout) { return cout * cin + cout; };

  SrModelConfig edsr;
  edsr.family = SrFamily::EdsrLite;
  edsr.channels = C;
  edsr.blocks = B;
  SrModel<float> me(edsr, 1);
  auto pe = me.params();
  const std::int64_t want_edsr =
      conv3(1, C) + B * 2 * conv3(C, C) + conv3(C, C) + conv3(C, 4);
  CHECK(param_count(pe) == want_edsr);

  SrModelConfig carn = edsr;
  carn.family = SrFamily::CarnLite;
  SrModel<float> mc(carn, 1);
  auto pc = mc.params();
  const std::int64_t want_carn = conv3(1, C) + B * (2 * conv3(C, C) + conv1(2 * C, C)) + conv3(C, 4);
  CHECK(param_count(pc) == want_carn);

  SrModelConfig rcan = edsr;
  rcan.family = SrFamily::RcanLite;
  rcan.attention_reduction = 8;
  SrModel<float> mr(rcan, 1);
  auto pr = mr.params();
  const int mid = C / 8;
  const std::int64_t want_rcan = conv3(1, C) +
                                 B * (2 * conv3(C, C) + (C * mid + mid) + (mid * C + C)) +
                                 conv3(C, C) + conv3(C, 4);
  CHECK(param_count(pr) == want_rcan);
}

TEST_CASE("sr model output shape, range, and finite checks") {
  for (SrFamily fam : {SrFamily::EdsrLite, SrFamily::CarnLite, SrFamily::RcanLite}) {
    SrModelConfig cfg;
    cfg.family = fam;
    cfg.channels = 8;
    cfg.blocks = 2;
    cfg.attention_reduction = 4;
    SrModel<double> model(cfg, 7);
    Rng rng(10);
    Tensor<double> x = random_tensor(rng, {2, 1, 8, 8}, 0.0, 1.0);
    const auto y = model.forward(x);
    CHECK(y.shape == std::vector<int>{2, 1, 16, 16});
    for (double v : y.v) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }

    Tensor<double> bad = x;
    bad.v[3] = std::nan("");
    CHECK_THROWS_AS(model.forward(bad), NumericError);

    Tensor<double> wrong({2, 2, 8, 8});
    CHECK_THROWS_AS(model.forward(wrong), ShapeError);
  }
}

TEST_CASE("identity init reproduces the bicubic baseline exactly") {
  SrModelConfig cfg;
  cfg.family = SrFamily::CarnLite;
  cfg.channels = 8;
  cfg.blocks = 2;
  cfg.identity_init = true;
  SrModel<double> model(cfg, 3);
  Rng rng(11);
  Tensor<double> x = random_tensor(rng, {3, 1, 10, 10}, 0.05, 0.95);
  const auto y = model.forward(x);
  const auto base = upsample_2x_tensor(x, 1.0);
  REQUIRE(y.shape == base.shape);
  for (std::size_t i = 0; i < y.v.size(); ++i) CHECK(y.v[i] == base.v[i]);
}

TEST_CASE("sr model analytic gradients match finite differences") {
  for (SrFamily fam : {SrFamily::EdsrLite, SrFamily::CarnLite, SrFamily::RcanLite}) {
    SrModelConfig cfg;
    cfg.family = fam;
    cfg.channels = 8;
    cfg.blocks = 1;
    cfg.attention_reduction = 4;
    SrModel<double> model(cfg, 21);
    Rng rng(22);
    Tensor<double> x = random_tensor(rng, {1, 1, 6, 6}, 0.2, 0.8);
    Tensor<double> target = random_tensor(rng, {1, 1, 12, 12}, 0.0, 1.0);

    auto loss_of = [&] { return sq_loss(model.forward(x), target); };
    const auto y = model.forward(x);
    model.zero_grad();
    model.backward(sq_grad(y, target));
    auto params = model.params();

    FdStats st;
    for (auto& p : params) {
      Tensor<double> analytic = *p.grad;  // copy before FD reruns forward
      fd_check_tensor(*p.value, analytic, loss_of, st, 17);
    }
    INFO(to_string(fam));
    // ReLU/clamp kinks can spoil isolated coordinates; demand 99%+.
    CHECK(st.passed >= st.checked - st.checked / 100);
    CHECK(st.checked > 50);
  }
}

TEST_CASE("one training step leaves at least 99% of gradients live") {
  for (SrFamily fam : {SrFamily::EdsrLite, SrFamily::CarnLite, SrFamily::RcanLite}) {
    SrModelConfig cfg;
    cfg.family = fam;
    cfg.channels = 8;
    cfg.blocks = 2;
    cfg.attention_reduction = 2;  // keeps the gate bottleneck ratio of real configs
    SrModel<float> model(cfg, 5);
    Rng rng(6);
    Tensor<float> x({8, 1, 12, 12});
    for (auto& v : x.v) v = static_cast<float>(rng.uniform());
    Tensor<float> target({8, 1, 24, 24});
    for (auto& v : target.v) v = static_cast<float>(rng.uniform());

    const auto y = model.forward(x);
    model.zero_grad();
    Tensor<float> g(y.shape);
    for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] = y.v[i] - target.v[i];
    model.backward(g);
    const auto params = model.params();
    INFO(to_string(fam));
    CHECK(fraction_nonzero_grads(params) >= 0.99);
  }
}

TEST_CASE("frozen init digests for the default configs") {
  // Pinned once on the reference platform. Init flows only through the
  // portable in-repo RNG, so these stay stable across rebuilds; a change
  // here means the initialization scheme itself changed.
  SrModelConfig cfg;  // carn_lite, channels 32, blocks 4
  SrModel<float> m(cfg, 17);
  CHECK(hex64(snapshot_digest(take_snapshot(m.params()))) == "edd4b54a8d7f369c");

  ClassifierConfig cc;  // 64px input, 4096 head
  Classifier<float> c(cc, 17);
  CHECK(hex64(snapshot_digest(take_snapshot(c.params()))) == "fd54d91ef4e3c876");
}

TEST_CASE("sr model is deterministic per seed and differs across seeds") {
  SrModelConfig cfg;
  cfg.channels = 8;
  cfg.blocks = 2;
  SrModel<float> a(cfg, 42), b(cfg, 42), c(cfg, 43);
  const auto da = snapshot_digest(take_snapshot(a.params()));
  const auto db = snapshot_digest(take_snapshot(b.params()));
  const auto dc = snapshot_digest(take_snapshot(c.params()));
  CHECK(da == db);
  CHECK(da != dc);

  Rng rng(1);
  Tensor<float> x({1, 1, 8, 8});
  for (auto& v : x.v) v = static_cast<float>(rng.uniform());
  const auto ya = a.forward(x);
  const auto yb = b.forward(x);
  CHECK(ya.v == yb.v);
}

TEST_CASE("classifier config derives its stage layout") {
  ClassifierConfig c;
  CHECK(c.num_stages() == 4);
  CHECK(c.stage_channels(0) == 8);
  CHECK(c.stage_channels(1) == 16);
  CHECK(c.stage_channels(2) == 32);
  CHECK(c.stage_channels(3) == 32);
  CHECK(c.flat_features() == 512);

  ClassifierConfig tiny;
  tiny.input_size = 8;
  CHECK(tiny.num_stages() == 1);
  CHECK(tiny.flat_features() == 8 * 16);

  ClassifierConfig bad;
  bad.input_size = 48;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.input_size = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("classifier forward contract and eval determinism") {
  ClassifierConfig cfg;
  cfg.input_size = 16;
  cfg.head_hidden = 32;
  Classifier<float> model(cfg, 9);
  Rng rng(10);
  Tensor<float> x({3, 1, 16, 16});
  for (auto& v : x.v) v = static_cast<float>(rng.uniform());

  const auto l1 = model.forward(x);
  const auto l2 = model.forward(x);
  CHECK(l1.shape == std::vector<int>{3, kNumClasses});
  CHECK(l1.v == l2.v);  // eval mode: no dropout, no RNG

  Tensor<float> wrong({3, 1, 8, 8});
  CHECK_THROWS_AS(model.forward(wrong), ShapeError);

  const auto preds = model.predict(x);
  CHECK(preds.size() == 3);
  for (int p : preds) {
    CHECK(p >= 0);
    CHECK(p < kNumClasses);
  }
}

TEST_CASE("classifier gradients match finite differences on the 8x8 variant") {
  ClassifierConfig cfg;
  cfg.input_size = 8;
  cfg.head_hidden = 16;
  Classifier<double> model(cfg, 31);
  Rng rng(32);
  Tensor<double> x = random_tensor(rng, {2, 1, 8, 8}, 0.0, 1.0);
  const std::vector<int> labels = {2, 4};

  auto loss_of = [&] { return softmax_cross_entropy<double>(model.forward(x), labels); };
  const auto logits = model.forward(x);
  Tensor<double> gl;
  softmax_cross_entropy<double>(logits, labels, &gl);
  model.zero_grad();
  const Tensor<double> gx = model.backward(gl);
  auto params = model.params();

  FdStats st;
  for (auto& p : params) {
    Tensor<double> analytic = *p.grad;
    fd_check_tensor(*p.value, analytic, loss_of, st, 13);
  }
  FdStats sti;
  Tensor<double> analytic_gx = gx;
  fd_check_tensor(x, analytic_gx, loss_of, sti, 7);
  CHECK(st.passed >= st.checked - st.checked / 100);
  CHECK(sti.passed >= sti.checked - sti.checked / 100);
  CHECK(st.checked + sti.checked > 60);
}

TEST_CASE("snapshot load validates names and shapes") {
  SrModelConfig cfg;
  cfg.channels = 8;
  cfg.blocks = 1;
  SrModel<float> a(cfg, 1);
  auto snap = take_snapshot(a.params());

  SrModel<float> b(cfg, 2);
  auto pb = b.params();
  load_snapshot(pb, snap);
  CHECK(snapshot_digest(take_snapshot(b.params())) == snapshot_digest(snap));

  auto broken = snap;
  broken.erase(broken.begin());
  CHECK_THROWS_AS(load_snapshot(pb, broken), CheckpointError);

  auto renamed = snap;
  auto node = renamed.extract(renamed.begin());
  node.key() = "bogus";
  renamed.insert(std::move(node));
  CHECK_THROWS_AS(load_snapshot(pb, renamed), CheckpointError);

  SrModelConfig other = cfg;
  other.channels = 12;
  SrModel<float> c(other, 1);
  auto pc = c.params();
  CHECK_THROWS_AS(load_snapshot(pc, snap), CheckpointError);
}

TEST_CASE("checkpoint files round-trip bit-exactly and validate on load") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "casr_ckpt_test";
  fs::create_directories(dir);

  SrModelConfig cfg;
  cfg.family = SrFamily::RcanLite;
  cfg.channels = 8;
  cfg.blocks = 2;
  cfg.attention_reduction = 4;
  SrModel<float> model(cfg, 77);

  SrCheckpoint<float> ck;
  ck.stage = StageTag::SrPt;
  ck.config = cfg;
  ck.seed = 77;
  ck.params = take_snapshot(model.params());
  const auto path = dir / "model.ckpt.json";
  save_checkpoint(ck, path);

  const auto loaded = load_sr_checkpoint<float>(path);
  CHECK(loaded.stage == StageTag::SrPt);
  CHECK(loaded.seed == 77);
  CHECK(to_string(loaded.config.family) == "rcan_lite");
  CHECK(snapshot_digest(loaded.params) == snapshot_digest(ck.params));
  for (const auto& [name, t] : ck.params) CHECK(loaded.params.at(name).v == t.v);

  auto rebuilt = make_sr_model(loaded);
  CHECK(snapshot_digest(take_snapshot(rebuilt.params())) == snapshot_digest(ck.params));

  // dtype mismatch is refused.
  CHECK_THROWS_AS(load_sr_checkpoint<double>(path), CheckpointError);
  // kind mismatch is refused.
  CHECK_THROWS_AS(load_classifier_checkpoint<float>(path), CheckpointError);
  // Corruption is caught by the digest.
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("fnv1a:");
  text[pos + 7] = text[pos + 7] == '0' ? '1' : '0';
  const auto bad_path = dir / "bad.ckpt.json";
  std::ofstream(bad_path) << text;
  CHECK_THROWS_AS(load_sr_checkpoint<float>(bad_path), CheckpointError);

  CHECK_THROWS_AS(load_sr_checkpoint<float>(dir / "missing.json"), CheckpointError);

  // Classifier checkpoints share the container.
  ClassifierConfig ccfg;
  ccfg.input_size = 16;
  ccfg.head_hidden = 32;
  Classifier<float> cls(ccfg, 5);
  ClassifierCheckpoint<float> cc;
  cc.config = ccfg;
  cc.seed = 5;
  cc.params = take_snapshot(cls.params());
  const auto cpath = dir / "cls.ckpt.json";
  save_checkpoint(cc, cpath);
  const auto cl = load_classifier_checkpoint<float>(cpath);
  CHECK(snapshot_digest(cl.params) == snapshot_digest(cc.params));
  auto crebuilt = make_classifier(cl);
  CHECK(snapshot_digest(take_snapshot(crebuilt.params())) == snapshot_digest(cc.params));

  fs::remove_all(dir);
}
