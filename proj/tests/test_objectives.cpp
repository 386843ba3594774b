#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "trajview/engine/gradcheck.hpp"
#include "trajview/model/objectives.hpp"

using namespace trajview;
using namespace trajview::model;
using engine::Tape;
using engine::Tensor;
using engine::Var;

namespace {

Tensor random_rows(int rows, int cols, uint64_t seed, double scale = 1.0) {
  Tensor t(rows, cols);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
  return t;
}

double pair_loss_value(const Tensor& a, const Tensor& b, double tau) {
  Tape tape;
  Var va = tape.constant(a);
  Var vb = tape.constant(b);
  return tape.value(pair_loss(tape, va, vb, tau))[0];
}

// Direct scalar evaluation of the contrastive pair loss: cosines,
// exponentials and the log ratio, coordinate by coordinate.
double pair_loss_oracle(const Tensor& a, const Tensor& b, double tau) {
  const int n = a.rows(), d = a.cols();
  auto cosine = [&](int i, int j) {
    double dot = 0, na = 0, nb = 0;
    for (int c = 0; c < d; ++c) {
      dot += a.at(i, c) * b.at(j, c);
      na += a.at(i, c) * a.at(i, c);
      nb += b.at(j, c) * b.at(j, c);
    }
    return dot / ((std::sqrt(na) + 1e-12) * (std::sqrt(nb) + 1e-12));
  };
  double total = 0;
  for (int i = 0; i < n; ++i) {
    double denom = 0;
    for (int j = 0; j < n; ++j) denom += std::exp(cosine(i, j) / tau);
    total += -std::log(std::exp(cosine(i, i) / tau) / denom);
  }
  return total / n;
}

}  // namespace

TEST_CASE("pair loss: identical representations across the batch give ln(batch)") {
  Tensor one = random_rows(1, 16, 5);
  for (int batch : {2, 8, 64}) {
    Tensor h(batch, 16);
    for (int r = 0; r < batch; ++r)
      for (int c = 0; c < 16; ++c) h.at(r, c) = one.at(0, c);
    const double loss = pair_loss_value(h, h, 0.07);
    CHECK(std::fabs(loss - std::log(static_cast<double>(batch))) < 1e-9);
    if (batch == 64) CHECK(loss == doctest::Approx(4.158883).epsilon(1e-6));
  }
}

TEST_CASE("pair loss: a single-sample batch is zero") {
  CHECK(std::fabs(pair_loss_value(random_rows(1, 8, 7), random_rows(1, 8, 8), 0.07)) < 1e-12);
}

TEST_CASE("pair loss: matches the direct two-sample oracle") {
  Tensor a(2, 3, {0.3, -1.2, 0.5, 2.0, 0.1, -0.4});
  Tensor b(2, 3, {-0.7, 0.9, 1.1, 0.2, -0.3, 0.8});
  for (double tau : {0.05, 0.07, 0.5, 1.0}) {
    const double got = pair_loss_value(a, b, tau);
    const double want = pair_loss_oracle(a, b, tau);
    CHECK(std::fabs(got - want) < 1e-12);
  }
  // larger batch against the same oracle
  Tensor a8 = random_rows(8, 5, 21);
  Tensor b8 = random_rows(8, 5, 22);
  CHECK(std::fabs(pair_loss_value(a8, b8, 0.07) - pair_loss_oracle(a8, b8, 0.07)) < 1e-11);
}

TEST_CASE("pair loss: raising the positive similarity lowers the loss") {
  Tensor a = random_rows(4, 6, 31);
  Tensor b = random_rows(4, 6, 32);
  const double before = pair_loss_value(a, b, 0.1);
  // move b's rows toward a's rows (raises positives, negatives change too but
  // toward alignment); use exact copy for the strongest positive
  Tensor b2 = a;
  const double after = pair_loss_value(a, b2, 0.1);
  CHECK(after < before);
  CHECK(before >= 0.0);
  CHECK(after >= 0.0);
}

TEST_CASE("pair loss: gradient check") {
  Tensor a = random_rows(3, 4, 41);
  Tensor b = random_rows(3, 4, 42);
  auto res = engine::grad_check(
      [](Tape& t, const std::vector<Var>& in) { return pair_loss(t, in[0], in[1], 0.1); }, {a, b});
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("align loss: identical views give three ln(batch) terms") {
  const int batch = 16;
  Tensor one = random_rows(1, 8, 50);
  Tensor h(batch, 8);
  for (int r = 0; r < batch; ++r)
    for (int c = 0; c < 8; ++c) h.at(r, c) = one.at(0, c);
  Tape tape;
  Var v = tape.constant(h);
  LossConfig cfg;
  Var loss = align_loss(tape, v, v, v, v, cfg);
  CHECK(std::fabs(tape.value(loss)[0] - 3.0 * std::log(static_cast<double>(batch))) < 1e-8);
}

TEST_CASE("align loss: exactly the three specified pairs contribute") {
  // four distinct view batches; compare against independently summed pairs
  Tensor r = random_rows(5, 6, 61), pr = random_rows(5, 6, 62);
  Tensor g = random_rows(5, 6, 63), pg = random_rows(5, 6, 64);
  Tape tape;
  LossConfig cfg;
  Var loss = align_loss(tape, tape.constant(r), tape.constant(pr), tape.constant(g), tape.constant(pg), cfg);
  const double want =
      pair_loss_oracle(r, pr, cfg.tau) + pair_loss_oracle(g, pg, cfg.tau) + pair_loss_oracle(pr, pg, cfg.tau);
  CHECK(std::fabs(tape.value(loss)[0] - want) < 1e-10);
  // sanity: were the (route, grid) pair included, the value would differ
  const double with_rg = want + pair_loss_oracle(r, g, cfg.tau);
  CHECK(std::fabs(tape.value(loss)[0] - with_rg) > 1e-3);
}

TEST_CASE("align loss: invariant to uniform positive rescaling") {
  Tensor r = random_rows(6, 8, 71), pr = random_rows(6, 8, 72);
  Tensor g = random_rows(6, 8, 73), pg = random_rows(6, 8, 74);
  auto eval = [&](double c) {
    auto scaled = [&](const Tensor& t) {
      Tensor s = t;
      for (size_t i = 0; i < s.numel(); ++i) s[i] *= c;
      return s;
    };
    Tape tape;
    LossConfig cfg;
    return tape.value(align_loss(tape, tape.constant(scaled(r)), tape.constant(scaled(pr)),
                                 tape.constant(scaled(g)), tape.constant(scaled(pg)), cfg))[0];
  };
  const double base = eval(1.0);
  CHECK(std::fabs(eval(3.7) - base) < 1e-9);
  CHECK(std::fabs(eval(0.45) - base) < 1e-9);
}

TEST_CASE("align loss: no_grid_view keeps only the route pair") {
  Tensor r = random_rows(4, 6, 81), pr = random_rows(4, 6, 82);
  Tape tape;
  LossConfig cfg;
  Var loss = align_loss(tape, tape.constant(r), tape.constant(pr), Var{}, Var{}, cfg, true);
  CHECK(std::fabs(tape.value(loss)[0] - pair_loss_oracle(r, pr, cfg.tau)) < 1e-10);
}

TEST_CASE("make_mask: zero probability masks nothing") {
  CHECK(make_mask(50, 0.0, 2, 1).empty());
}

TEST_CASE("make_mask: spans clip at the sequence end") {
  for (uint64_t seed = 0; seed < 200; ++seed) {
    auto spans = make_mask_spans(1, 0.9, 2, seed);
    for (const auto& [start, len] : spans) {
      CHECK(start == 0);
      CHECK(len == 1);
    }
    auto mask = make_mask(5, 0.9, 3, seed);
    for (int u : mask) {
      CHECK(u >= 0);
      CHECK(u < 5);
    }
  }
}

TEST_CASE("make_mask: deterministic in the seed") {
  CHECK(make_mask(40, 0.2, 2, 123) == make_mask(40, 0.2, 2, 123));
  CHECK(make_mask(40, 0.2, 2, 123) != make_mask(40, 0.2, 2, 124));
}

TEST_CASE("make_mask: masked fraction matches the configured rate") {
  size_t masked = 0;
  size_t total = 0;
  int max_span = 0;
  for (int i = 0; i < 10000; ++i) {
    auto spans = make_mask_spans(50, 0.2, 2, 1000 + i);
    for (const auto& [start, len] : spans) {
      masked += len;
      max_span = std::max(max_span, len);
    }
    total += 50;
  }
  const double fraction = static_cast<double>(masked) / total;
  CHECK(fraction >= 0.18);
  CHECK(fraction <= 0.22);
  CHECK(max_span <= 2);
}

TEST_CASE("mlm loss: saturated correct logits vanish") {
  Tape tape;
  Tensor logits(2, 4);
  logits.at(0, 1) = 50.0;
  logits.at(1, 3) = 50.0;
  MlmStream s{tape.constant(logits), {1, 3}};
  CHECK(tape.value(mlm_loss(tape, {s}))[0] < 1e-6);
}

TEST_CASE("mlm loss: uniform logits cost ln(vocab)") {
  Tape tape;
  for (int v : {3, 17, 100}) {
    MlmStream s{tape.constant(Tensor::full(5, v, 0.25)), {0, 1, 2, 0, 1}};
    CHECK(std::fabs(tape.value(mlm_loss(tape, {s}))[0] - std::log(static_cast<double>(v))) < 1e-9);
  }
}

TEST_CASE("mlm loss: matches a hand-computed two-token three-class case") {
  Tape tape;
  Tensor logits(2, 3, {1.0, 2.0, 0.5, -0.3, 0.2, 0.9});
  // softmax NLL per row, then the stream mean; second stream empty
  auto nll = [&](int row, int target) {
    double z = 0;
    for (int c = 0; c < 3; ++c) z += std::exp(logits.at(row, c));
    return -std::log(std::exp(logits.at(row, target)) / z);
  };
  const double want = (nll(0, 2) + nll(1, 1)) / 2.0;
  MlmStream s{tape.constant(logits), {2, 1}};
  MlmStream empty{};
  CHECK(std::fabs(tape.value(mlm_loss(tape, {s, empty}))[0] - want) < 1e-12);
}

TEST_CASE("mlm loss: one-class vocabulary costs nothing") {
  Tape tape;
  MlmStream s{tape.constant(Tensor::full(3, 1, -2.0)), {0, 0, 0}};
  CHECK(tape.value(mlm_loss(tape, {s}))[0] == 0.0);
}

TEST_CASE("mlm loss: streams sum") {
  Tape tape;
  MlmStream a{tape.constant(Tensor::full(2, 4, 0.0)), {0, 1}};
  MlmStream b{tape.constant(Tensor::full(1, 8, 0.0)), {5}};
  const double want = std::log(4.0) + std::log(8.0);
  CHECK(std::fabs(tape.value(mlm_loss(tape, {a, b}))[0] - want) < 1e-12);
}

TEST_CASE("total loss: weighted sum and gradient linearity") {
  Tape tape;
  Var a = tape.leaf(Tensor::scalar(1.5));
  Var m = tape.leaf(Tensor::scalar(0.5));
  Var total = total_loss(tape, a, m, 2.0, 1.0);
  CHECK(tape.value(total)[0] == doctest::Approx(3.5).epsilon(1e-12));
  tape.backward(total);
  CHECK(tape.grad(a)[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(tape.grad(m)[0] == doctest::Approx(1.0).epsilon(1e-12));

  // zero weights cut the corresponding gradient path
  Tape t2;
  Var a2 = t2.leaf(Tensor::scalar(1.5));
  Var m2 = t2.leaf(Tensor::scalar(0.5));
  t2.backward(total_loss(t2, a2, m2, 0.0, 1.0));
  CHECK(t2.grad(a2)[0] == 0.0);
  CHECK(t2.grad(m2)[0] == 1.0);
  Tape t3;
  Var a3 = t3.leaf(Tensor::scalar(1.5));
  Var m3 = t3.leaf(Tensor::scalar(0.5));
  t3.backward(total_loss(t3, a3, m3, 2.0, 0.0));
  CHECK(t3.grad(a3)[0] == 2.0);
  CHECK(t3.grad(m3)[0] == 0.0);
  CHECK_THROWS_AS(total_loss(t3, a3, m3, -1.0, 0.0), std::invalid_argument);
}
