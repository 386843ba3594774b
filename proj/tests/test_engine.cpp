#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "trajview/engine/gradcheck.hpp"
#include "trajview/engine/layers.hpp"
#include "trajview/engine/optim.hpp"
#include "trajview/engine/params.hpp"
#include "trajview/engine/tape.hpp"

using namespace trajview::engine;

namespace {

Tensor random_tensor(int rows, int cols, uint64_t seed, double scale = 1.0) {
  Tensor t(rows, cols);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
  return t;
}

void check_grads(const ScalarFn& fn, const std::vector<Tensor>& inputs, double tol = 1e-4) {
  auto res = grad_check(fn, inputs);
  INFO("worst input ", res.worst_input, " coord ", res.worst_coord, " analytic ", res.analytic, " numeric ",
       res.numeric);
  CHECK(res.max_rel_error < tol);
}

}  // namespace

TEST_CASE("softmax of a constant vector is uniform") {
  Tape tape;
  Var x = tape.constant(Tensor::full(1, 7, 3.25));
  Var p = tape.softmax_rows(x);
  for (int c = 0; c < 7; ++c) CHECK(tape.value(p).at(0, c) == doctest::Approx(1.0 / 7).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one") {
  Tape tape;
  Var x = tape.constant(random_tensor(5, 9, 11));
  Var p = tape.softmax_rows(x);
  for (int r = 0; r < 5; ++r) {
    double s = 0.0;
    for (int c = 0; c < 9; ++c) s += tape.value(p).at(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("embedding lookup returns exact rows") {
  Tape tape;
  Tensor table = random_tensor(6, 4, 3);
  Var t = tape.leaf(table);
  Var rows = tape.gather_rows(t, {2});
  for (int c = 0; c < 4; ++c) CHECK(tape.value(rows).at(0, c) == table.at(2, c));
}

TEST_CASE("layer_norm centers and scales each row before affine") {
  Tape tape;
  Var x = tape.constant(random_tensor(4, 16, 99, 3.0));
  Var g = tape.constant(Tensor::full(1, 16, 1.0));
  Var b = tape.constant(Tensor(1, 16));
  Var y = tape.layer_norm(x, g, b, 1e-10);
  for (int r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < 16; ++c) mean += tape.value(y).at(r, c);
    mean /= 16;
    for (int c = 0; c < 16; ++c) {
      const double d = tape.value(y).at(r, c) - mean;
      var += d * d;
    }
    var /= 16;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("shape mismatches raise errors naming shapes") {
  Tape tape;
  Var a = tape.constant(Tensor(2, 3));
  Var b = tape.constant(Tensor(3, 3));
  CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
  CHECK_THROWS_AS(tape.matmul(a, a), std::invalid_argument);
}

TEST_CASE("gradients: linear layer matches finite differences") {
  Tensor x = random_tensor(3, 4, 1);
  Tensor w = random_tensor(4, 5, 2);
  Tensor b = random_tensor(1, 5, 3);
  check_grads(
      [](Tape& t, const std::vector<Var>& in) { return t.mean_all(t.tanh_(t.linear(in[0], in[1], in[2]))); },
      {x, w, b});
}

TEST_CASE("gradients: central differences are near-exact for affine maps") {
  Tensor x = random_tensor(1, 6, 4);
  auto res = grad_check(
      [](Tape& t, const std::vector<Var>& in) {
        Var w = t.constant(random_tensor(6, 1, 5));
        return t.matmul(in[0], w);
      },
      {x});
  CHECK(res.max_rel_error < 1e-9);
}

TEST_CASE("grad_check: f(x)=x^2 at x=3 gives 6") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0));
  Var y = tape.mul(x, x);
  tape.backward(y);
  CHECK(tape.grad(x)[0] == doctest::Approx(6.0).epsilon(1e-12));
  auto res = grad_check([](Tape& t, const std::vector<Var>& in) { return t.mul(in[0], in[0]); },
                        {Tensor::scalar(3.0)});
  CHECK(std::fabs(res.analytic - 6.0) < 1e-9);
  CHECK(std::fabs(res.numeric - 6.0) < 1e-6);
}

TEST_CASE("gradients: softmax cross-entropy") {
  Tensor logits = random_tensor(4, 6, 7, 2.0);
  check_grads(
      [](Tape& t, const std::vector<Var>& in) { return t.softmax_xent_rows(in[0], {1, 0, 5, 3}); },
      {logits});
}

TEST_CASE("gradients: layer_norm with affine") {
  Tensor x = random_tensor(3, 8, 8, 2.0);
  Tensor g = random_tensor(1, 8, 9);
  Tensor b = random_tensor(1, 8, 10);
  check_grads(
      [](Tape& t, const std::vector<Var>& in) {
        return t.mean_all(t.tanh_(t.layer_norm(in[0], in[1], in[2])));
      },
      {x, g, b});
}

TEST_CASE("gradients: row normalization and masked softmax") {
  Tensor x = random_tensor(4, 5, 12, 2.0);
  check_grads([](Tape& t, const std::vector<Var>& in) { return t.mean_all(t.normalize_rows(in[0])); }, {x});

  Tensor mask(3, 3);
  mask.at(0, 0) = 1;
  mask.at(0, 2) = 1;
  mask.at(1, 1) = 1;
  mask.at(2, 0) = 1;
  mask.at(2, 1) = 1;
  mask.at(2, 2) = 1;
  Tensor s = random_tensor(3, 3, 13, 1.5);
  check_grads(
      [mask](Tape& t, const std::vector<Var>& in) {
        Var w = t.constant(random_tensor(3, 1, 14));
        return t.mean_all(t.matmul(t.masked_softmax_rows(in[0], mask), w));
      },
      {s});
}

// ---------------------------------------------------------------------------
// GAT
// ---------------------------------------------------------------------------

TEST_CASE("gat: single neighbor without self-loop reduces to elu(g_u W)") {
  Tape tape;
  Tensor feats = random_tensor(2, 3, 20);
  Tensor w = random_tensor(3, 3, 21);
  Tensor adj(2, 2);  // node 0 attends only to node 1 and vice versa
  adj.at(0, 1) = 1;
  adj.at(1, 0) = 1;
  GatParams p;
  Var f = tape.constant(feats);
  p.w = tape.constant(w);
  p.attn_src = tape.constant(random_tensor(3, 1, 22));
  p.attn_dst = tape.constant(random_tensor(3, 1, 23));
  Var z = gat_layer(tape, f, adj, p);
  // expected: elu of row 1 of feats @ w
  for (int c = 0; c < 3; ++c) {
    double hv = 0.0;
    for (int k = 0; k < 3; ++k) hv += feats.at(1, k) * w.at(k, c);
    const double expect = hv > 0 ? hv : std::expm1(hv);
    CHECK(tape.value(z).at(0, c) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("gat: two neighbors with identical features split attention evenly") {
  Tape tape;
  Tensor feats(3, 2);
  feats.at(0, 0) = 0.3;
  feats.at(0, 1) = -0.4;
  feats.at(1, 0) = 0.9;
  feats.at(1, 1) = 0.2;
  feats.at(2, 0) = 0.9;
  feats.at(2, 1) = 0.2;
  Tensor adj(3, 3);
  adj.at(0, 1) = 1;
  adj.at(0, 2) = 1;
  adj.at(1, 0) = 1;
  adj.at(1, 1) = 1;
  adj.at(2, 0) = 1;
  adj.at(2, 2) = 1;
  GatParams p;
  Var f = tape.constant(feats);
  p.w = tape.constant(random_tensor(2, 2, 30));
  p.attn_src = tape.constant(random_tensor(2, 1, 31));
  p.attn_dst = tape.constant(random_tensor(2, 1, 32));
  Var h = tape.matmul(f, p.w);
  Var scores = tape.leaky_relu(tape.outer_sum(tape.matmul(h, p.attn_src), tape.matmul(h, p.attn_dst)), 0.2);
  Var alpha = tape.masked_softmax_rows(scores, adj);
  CHECK(tape.value(alpha).at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tape.value(alpha).at(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gat: isolated node without self-loop is a hard error") {
  Tape tape;
  Tensor adj(2, 2);
  adj.at(0, 1) = 1;  // node 1 has no incoming set at all
  adj.at(0, 0) = 1;
  GatParams p;
  Var f = tape.constant(random_tensor(2, 2, 33));
  p.w = tape.constant(random_tensor(2, 2, 34));
  p.attn_src = tape.constant(random_tensor(2, 1, 35));
  p.attn_dst = tape.constant(random_tensor(2, 1, 36));
  CHECK_THROWS_AS(gat_layer(tape, f, adj, p), std::invalid_argument);
}

TEST_CASE("gradients: gat layer") {
  Tensor feats = random_tensor(4, 3, 40);
  Tensor w = random_tensor(3, 3, 41);
  Tensor a1 = random_tensor(3, 1, 42);
  Tensor a2 = random_tensor(3, 1, 43);
  Tensor adj(4, 4);
  for (int i = 0; i < 4; ++i) adj.at(i, i) = 1;
  adj.at(0, 1) = adj.at(1, 0) = 1;
  adj.at(1, 2) = adj.at(2, 1) = 1;
  adj.at(2, 3) = adj.at(3, 2) = 1;
  check_grads(
      [adj](Tape& t, const std::vector<Var>& in) {
        GatParams p{in[1], in[2], in[3]};
        return t.mean_all(gat_layer(t, in[0], adj, p));
      },
      {feats, w, a1, a2});
}

// ---------------------------------------------------------------------------
// attention / transformer
// ---------------------------------------------------------------------------

namespace {

AttentionParams make_attn(Tape& tape, int d, uint64_t seed) {
  AttentionParams p;
  p.wq = tape.leaf(random_tensor(d, d, seed + 0));
  p.bq = tape.leaf(random_tensor(1, d, seed + 1));
  p.wk = tape.leaf(random_tensor(d, d, seed + 2));
  p.wv = tape.leaf(random_tensor(d, d, seed + 4));
  p.bv = tape.leaf(random_tensor(1, d, seed + 5));
  p.wo = tape.leaf(random_tensor(d, d, seed + 6));
  p.bo = tape.leaf(random_tensor(1, d, seed + 7));
  return p;
}

}  // namespace

TEST_CASE("attention: identical keys give query-independent output") {
  Tape tape;
  const int d = 8;
  Tensor kv(3, d);
  Tensor one_row = random_tensor(1, d, 50);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < d; ++c) kv.at(r, c) = one_row.at(0, c);
  Var q = tape.constant(random_tensor(4, d, 51));
  Var k = tape.constant(kv);
  auto p = make_attn(tape, d, 52);
  Var out = multi_head_attention(tape, q, k, p, 2);
  // every query row gets the same output, equal to attending the one distinct row
  Var single = multi_head_attention(tape, q, tape.constant(one_row), p, 2);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < d; ++c) {
      CHECK(tape.value(out).at(r, c) == doctest::Approx(tape.value(out).at(0, c)).epsilon(1e-9));
      CHECK(tape.value(out).at(r, c) == doctest::Approx(tape.value(single).at(r, c)).epsilon(1e-9));
    }
}

TEST_CASE("attention: kv length one returns the projected single value") {
  Tape tape;
  const int d = 8;
  Tensor kv = random_tensor(1, d, 60);
  Var q = tape.constant(random_tensor(3, d, 61));
  Var k = tape.constant(kv);
  auto p = make_attn(tape, d, 62);
  Var out = multi_head_attention(tape, q, k, p, 2);
  // expected: (kv @ wv + bv) @ wo + bo for every query row
  Var vproj = tape.linear(k, tape.leaf(tape.value(p.wv)), tape.leaf(tape.value(p.bv)));
  Var expect = tape.linear(vproj, tape.leaf(tape.value(p.wo)), tape.leaf(tape.value(p.bo)));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < d; ++c)
      CHECK(tape.value(out).at(r, c) == doctest::Approx(tape.value(expect).at(0, c)).epsilon(1e-9));
}

TEST_CASE("attention: empty kv sequence is a hard error") {
  Tape tape;
  Var q = tape.constant(random_tensor(2, 4, 70));
  Var kv = tape.constant(Tensor(0, 4));
  auto p = make_attn(tape, 4, 71);
  CHECK_THROWS_AS(multi_head_attention(tape, q, kv, p, 2), std::invalid_argument);
}

TEST_CASE("gradients: multi-head attention wrt all four projections") {
  const int d = 6;
  std::vector<Tensor> inputs;
  inputs.push_back(random_tensor(3, d, 80));  // query
  inputs.push_back(random_tensor(4, d, 81));  // kv
  inputs.push_back(random_tensor(d, d, 82));  // wq
  inputs.push_back(random_tensor(1, d, 83));  // bq
  inputs.push_back(random_tensor(d, d, 84));  // wk
  inputs.push_back(random_tensor(d, d, 85));  // wv
  inputs.push_back(random_tensor(1, d, 86));  // bv
  inputs.push_back(random_tensor(d, d, 87));  // wo
  inputs.push_back(random_tensor(1, d, 88));  // bo
  check_grads(
      [](Tape& t, const std::vector<Var>& in) {
        AttentionParams p{in[2], in[3], in[4], in[5], in[6], in[7], in[8]};
        return t.mean_all(t.tanh_(multi_head_attention(t, in[0], in[1], p, 2)));
      },
      inputs);
}

namespace {

TransformerBlockParams make_block(Tape& tape, int d, int ff, uint64_t seed, bool zero_out_proj) {
  TransformerBlockParams p;
  p.ln1_g = tape.leaf(Tensor::full(1, d, 1.0));
  p.ln1_b = tape.leaf(Tensor(1, d));
  p.attn = make_attn(tape, d, seed);
  p.ln2_g = tape.leaf(Tensor::full(1, d, 1.0));
  p.ln2_b = tape.leaf(Tensor(1, d));
  p.ff_w1 = tape.leaf(random_tensor(d, ff, seed + 20));
  p.ff_b1 = tape.leaf(random_tensor(1, ff, seed + 21));
  p.ff_w2 = tape.leaf(zero_out_proj ? Tensor(ff, d) : random_tensor(ff, d, seed + 22));
  p.ff_b2 = tape.leaf(zero_out_proj ? Tensor(1, d) : random_tensor(1, d, seed + 23));
  if (zero_out_proj) {
    p.attn.wo = tape.leaf(Tensor(d, d));
    p.attn.bo = tape.leaf(Tensor(1, d));
  }
  return p;
}

}  // namespace

TEST_CASE("transformer block: zeroed output projections make it the identity") {
  Tape tape;
  const int d = 8;
  Tensor x = random_tensor(5, d, 90);
  Var xin = tape.constant(x);
  auto p = make_block(tape, d, 16, 91, true);
  Var out = transformer_block(tape, xin, p, 2);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < d; ++c) CHECK(tape.value(out).at(r, c) == doctest::Approx(x.at(r, c)).epsilon(1e-12));
}

TEST_CASE("transformer block: output shape equals input shape") {
  Tape tape;
  for (int len : {1, 3, 9}) {
    Var x = tape.constant(random_tensor(len, 8, 100 + len));
    auto p = make_block(tape, 8, 16, 110, false);
    Var out = transformer_block(tape, x, p, 2);
    CHECK(tape.value(out).rows() == len);
    CHECK(tape.value(out).cols() == 8);
  }
}

TEST_CASE("gradients: depth-2 transformer stack") {
  const int d = 6, ff = 10;
  std::vector<Tensor> inputs;
  inputs.push_back(random_tensor(3, d, 120));
  // two blocks, 16 tensors each
  for (int blk = 0; blk < 2; ++blk) {
    uint64_t s = 130 + 40 * blk;
    inputs.push_back(Tensor::full(1, d, 1.0));        // ln1_g
    inputs.push_back(random_tensor(1, d, s + 1, 0.1));  // ln1_b
    inputs.push_back(random_tensor(d, d, s + 2));       // wq
    inputs.push_back(random_tensor(1, d, s + 3));       // bq
    inputs.push_back(random_tensor(d, d, s + 4));       // wk
    inputs.push_back(random_tensor(d, d, s + 5));       // wv
    inputs.push_back(random_tensor(1, d, s + 6));       // bv
    inputs.push_back(random_tensor(d, d, s + 7));       // wo
    inputs.push_back(random_tensor(1, d, s + 8));       // bo
    inputs.push_back(Tensor::full(1, d, 1.0));        // ln2_g
    inputs.push_back(random_tensor(1, d, s + 11, 0.1));  // ln2_b
    inputs.push_back(random_tensor(d, ff, s + 12));
    inputs.push_back(random_tensor(1, ff, s + 13));
    inputs.push_back(random_tensor(ff, d, s + 14));
    inputs.push_back(random_tensor(1, d, s + 15));
  }
  check_grads(
      [](Tape& t, const std::vector<Var>& in) {
        Var x = in[0];
        for (int blk = 0; blk < 2; ++blk) {
          const size_t o = 1 + 15 * blk;
          TransformerBlockParams p;
          p.ln1_g = in[o + 0];
          p.ln1_b = in[o + 1];
          p.attn = AttentionParams{in[o + 2], in[o + 3], in[o + 4], in[o + 5],
                                   in[o + 6], in[o + 7], in[o + 8]};
          p.ln2_g = in[o + 9];
          p.ln2_b = in[o + 10];
          p.ff_w1 = in[o + 11];
          p.ff_b1 = in[o + 12];
          p.ff_w2 = in[o + 13];
          p.ff_b2 = in[o + 14];
          x = transformer_block(t, x, p, 2);
        }
        return t.mean_all(t.tanh_(x));
      },
      inputs);
}

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

namespace {

std::vector<Tensor> gru_tensors(int in, int hidden, uint64_t seed) {
  return {random_tensor(in, 3 * hidden, seed), random_tensor(hidden, 2 * hidden, seed + 1),
          random_tensor(hidden, hidden, seed + 2), random_tensor(1, 2 * hidden, seed + 3),
          random_tensor(1, hidden, seed + 4)};
}

GruParams bind_gru(const std::vector<Var>& in, size_t offset) {
  return GruParams{in[offset], in[offset + 1], in[offset + 2], in[offset + 3], in[offset + 4]};
}

}  // namespace

TEST_CASE("bigru: length-1 summary equals the single per-step state") {
  Tape tape;
  const int h = 4;
  auto fw_t = gru_tensors(3, h, 200);
  auto bw_t = gru_tensors(3, h, 210);
  std::vector<Var> vars;
  for (auto& t : fw_t) vars.push_back(tape.constant(t));
  for (auto& t : bw_t) vars.push_back(tape.constant(t));
  Var seq = tape.constant(random_tensor(1, 3, 220));
  auto res = bigru_encode(tape, seq, bind_gru(vars, 0), bind_gru(vars, 5), h);
  CHECK(tape.value(res.states).rows() == 1);
  for (int c = 0; c < 2 * h; ++c)
    CHECK(tape.value(res.summary).at(0, c) == doctest::Approx(tape.value(res.states).at(0, c)).epsilon(1e-12));
}

TEST_CASE("bigru: identical runs are bit-identical") {
  const int h = 3;
  auto run = [&](std::vector<double>& out) {
    Tape tape;
    auto fw_t = gru_tensors(2, h, 300);
    auto bw_t = gru_tensors(2, h, 310);
    std::vector<Var> vars;
    for (auto& t : fw_t) vars.push_back(tape.constant(t));
    for (auto& t : bw_t) vars.push_back(tape.constant(t));
    Var seq = tape.constant(random_tensor(6, 2, 320));
    auto res = bigru_encode(tape, seq, bind_gru(vars, 0), bind_gru(vars, 5), h);
    out = tape.value(res.states).vec();
  };
  std::vector<double> a, b;
  run(a);
  run(b);
  CHECK(a == b);
}

TEST_CASE("gradients: bigru through a length-5 sequence") {
  const int h = 3, in_dim = 2;
  std::vector<Tensor> inputs;
  inputs.push_back(random_tensor(5, in_dim, 400));
  for (auto& t : gru_tensors(in_dim, h, 410)) inputs.push_back(t);
  for (auto& t : gru_tensors(in_dim, h, 420)) inputs.push_back(t);
  check_grads(
      [h](Tape& t, const std::vector<Var>& in) {
        auto res = bigru_encode(t, in[0], bind_gru(in, 1), bind_gru(in, 6), h);
        return t.mean_all(t.tanh_(res.summary));
      },
      inputs);
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

TEST_CASE("adamw: bias-corrected first step moves by about lr") {
  ParamStore store(1);
  auto& p = store.create("theta", 1, 1, Init::Zeros);
  p.grad[0] = 2.0;
  AdamW opt({.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0});
  CHECK(opt.step(store));
  CHECK(p.value[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adamw: zero gradient with zero decay leaves parameters unchanged") {
  ParamStore store(1);
  auto& p = store.create("theta", 2, 2, Init::GlorotUniform);
  Tensor before = p.value;
  AdamW opt({.lr = 0.1, .weight_decay = 0.0});
  CHECK(opt.step(store));
  CHECK(p.value.vec() == before.vec());
}

TEST_CASE("adamw: decoupled decay shrinks weights with zero gradient") {
  ParamStore store(1);
  auto& p = store.create("theta", 1, 1, Init::Zeros);
  p.value[0] = 1.0;
  AdamW opt({.lr = 0.1, .weight_decay = 0.01});
  CHECK(opt.step(store));
  CHECK(p.value[0] == doctest::Approx(0.999).epsilon(1e-6));
}

TEST_CASE("adamw: non-finite gradient skips the step") {
  ParamStore store(1);
  auto& p = store.create("theta", 1, 1, Init::Zeros);
  p.value[0] = 0.5;
  p.grad[0] = std::numeric_limits<double>::quiet_NaN();
  AdamW opt({.lr = 0.1});
  CHECK_FALSE(opt.step(store));
  CHECK(p.value[0] == 0.5);
  CHECK(opt.step_count() == 0);
}

TEST_CASE("param store: deterministic seeded initialization and f32 values") {
  ParamStore a(7), b(7), c(8);
  auto& pa = a.create("w", 3, 3, Init::GlorotUniform);
  auto& pb = b.create("w", 3, 3, Init::GlorotUniform);
  auto& pc = c.create("w", 3, 3, Init::GlorotUniform);
  CHECK(pa.value.vec() == pb.value.vec());
  CHECK(pa.value.vec() != pc.value.vec());
  for (size_t i = 0; i < pa.value.numel(); ++i)
    CHECK(pa.value[i] == static_cast<double>(static_cast<float>(pa.value[i])));
  CHECK_THROWS_AS(a.create("w", 1, 1, Init::Zeros), std::invalid_argument);
}

TEST_CASE("param store: bind and collect accumulates leaf gradients") {
  ParamStore store(3);
  store.create("w", 2, 2, Init::GlorotUniform);
  Tape tape;
  Var w1 = store.bind(tape, "w");
  Var w2 = store.bind(tape, "w");  // same parameter used twice
  Var loss = tape.mean_all(tape.add(w1, w2));
  tape.backward(loss);
  store.collect_grads(tape);
  for (size_t i = 0; i < 4; ++i) CHECK(store.get("w").grad[i] == doctest::Approx(0.5).epsilon(1e-12));
}
