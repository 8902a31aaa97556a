#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "s2s/set_transformer.hpp"

using namespace s2s;

namespace {

Tensor random_tensor(int r, int c, std::mt19937_64& rng, bool rg = false) {
  std::uniform_real_distribution<double> dist(-1, 1);
  Tensor t = Tensor::zeros(r, c, rg);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor permute_rows(const Tensor& x, const std::vector<int>& perm) {
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(perm[i], j);
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Naive per-element attention used as the oracle.
Tensor brute_force_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const double phi = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  Tensor out = Tensor::zeros(q.rows(), v.cols());
  for (int i = 0; i < q.rows(); ++i) {
    std::vector<double> w(k.rows());
    double denom = 0;
    for (int j = 0; j < k.rows(); ++j) {
      double dot = 0;
      for (int p = 0; p < q.cols(); ++p) dot += q.at(i, p) * k.at(j, p);
      w[j] = std::exp(dot * phi);
      denom += w[j];
    }
    for (int j = 0; j < k.rows(); ++j)
      for (int c = 0; c < v.cols(); ++c) out.at(i, c) += (w[j] / denom) * v.at(j, c);
  }
  return out;
}

}  // namespace

TEST_CASE("attention: single key returns the single value row") {
  std::mt19937_64 rng(1);
  Tape t;
  Tensor q = random_tensor(3, 4, rng);
  Tensor k = random_tensor(1, 4, rng);
  Tensor v = random_tensor(1, 4, rng);
  Tensor out = attention(t, q, k, v);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) CHECK(out.at(i, j) == doctest::Approx(v.at(0, j)));
}

TEST_CASE("attention: orthogonal queries give the mean of values") {
  Tape t;
  Tensor q = Tensor::zeros(2, 3);
  std::mt19937_64 rng(2);
  Tensor k = random_tensor(4, 3, rng);
  Tensor v = random_tensor(4, 3, rng);
  Tensor out = attention(t, q, k, v);
  for (int j = 0; j < 3; ++j) {
    double mean = 0;
    for (int i = 0; i < 4; ++i) mean += v.at(i, j);
    mean /= 4;
    CHECK(out.at(0, j) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("attention: two keys with logits ln3 and 0 weight values 3:1") {
  Tape t;
  // width 1 so phi = 1 and the raw dot products are the logits
  Tensor q = Tensor::from(1, 1, {1.0});
  Tensor k = Tensor::from(2, 1, {std::log(3.0), 0.0});
  Tensor v = Tensor::from(2, 1, {10.0, 2.0});
  Tensor out = attention(t, q, k, v);
  CHECK(out.at(0, 0) == doctest::Approx(0.75 * 10.0 + 0.25 * 2.0).epsilon(1e-12));
}

TEST_CASE("attention matches brute force on random 3x4 inputs") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    Tape t;
    Tensor q = random_tensor(3, 4, rng);
    Tensor k = random_tensor(3, 4, rng);
    Tensor v = random_tensor(3, 4, rng);
    Tensor got = attention(t, q, k, v);
    Tensor want = brute_force_attention(q, k, v);
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("attention: fully masked keys error, masked keys get zero weight") {
  std::mt19937_64 rng(4);
  Tape t;
  Tensor q = random_tensor(2, 3, rng);
  Tensor k = random_tensor(3, 3, rng);
  Tensor v = random_tensor(3, 3, rng);
  CHECK_THROWS_AS(attention(t, q, k, v, Mask{0, 0, 0}), std::invalid_argument);

  Tensor masked = attention(t, q, k, v, Mask{1, 1, 0});
  Tensor k2 = Tensor::from(2, 3, {k.at(0, 0), k.at(0, 1), k.at(0, 2),
                                  k.at(1, 0), k.at(1, 1), k.at(1, 2)});
  Tensor v2 = Tensor::from(2, 3, {v.at(0, 0), v.at(0, 1), v.at(0, 2),
                                  v.at(1, 0), v.at(1, 1), v.at(1, 2)});
  Tensor unpadded = attention(t, q, k2, v2);
  CHECK(max_abs_diff(masked, unpadded) < 1e-12);
}

TEST_CASE("multi_head with one head and identity projections equals attention") {
  std::mt19937_64 rng(5);
  AttentionConfig cfg{4, 1};
  MABParams p = MABParams::init(cfg, rng);
  p.wq[0] = Tensor::identity(4);
  p.wk[0] = Tensor::identity(4);
  p.wv[0] = Tensor::identity(4);
  p.wo = Tensor::identity(4);

  Tape t;
  Tensor x_q = random_tensor(3, 4, rng);
  Tensor x_kv = random_tensor(5, 4, rng);
  Tensor got = multi_head(t, x_q, x_kv, p);
  Tensor want = attention(t, x_q, x_kv, x_kv);
  CHECK(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("multi_head is invariant to key/value permutation") {
  std::mt19937_64 rng(6);
  AttentionConfig cfg{8, 2};
  MABParams p = MABParams::init(cfg, rng);
  Tensor x_q = random_tensor(2, 8, rng);
  Tensor x_kv = random_tensor(5, 8, rng);

  Tape t;
  Tensor base = multi_head(t, x_q, x_kv, p);
  std::vector<int> perm = {4, 2, 0, 3, 1};
  Tensor shuffled = multi_head(t, x_q, permute_rows(x_kv, perm), p);
  CHECK(max_abs_diff(base, shuffled) < 1e-9);
}

TEST_CASE("multi_head with zero value projections is zero") {
  std::mt19937_64 rng(7);
  AttentionConfig cfg{4, 2};
  MABParams p = MABParams::init(cfg, rng);
  for (auto& w : p.wv) w = Tensor::zeros(4, 2);
  Tape t;
  Tensor out = multi_head(t, random_tensor(3, 4, rng), random_tensor(3, 4, rng), p);
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("mab(X, X) equals sab(X) and keeps the query row count") {
  std::mt19937_64 rng(8);
  AttentionConfig cfg{8, 2};
  MABParams p = MABParams::init(cfg, rng);
  Tensor x = random_tensor(4, 8, rng);
  Tensor y = random_tensor(7, 8, rng);

  Tape t;
  CHECK(max_abs_diff(mab(t, x, x, p), sab(t, x, p)) == 0.0);

  Tensor out = mab(t, x, y, p);
  CHECK(out.rows() == 4);
  CHECK(out.cols() == 8);
}

TEST_CASE("mab is invariant to permutations of Y") {
  std::mt19937_64 rng(9);
  AttentionConfig cfg{8, 4};
  MABParams p = MABParams::init(cfg, rng);
  Tensor x = random_tensor(3, 8, rng);
  Tensor y = random_tensor(6, 8, rng);

  Tape t;
  Tensor base = mab(t, x, y, p);
  std::vector<int> perm = {5, 3, 1, 0, 4, 2};
  CHECK(max_abs_diff(base, mab(t, x, permute_rows(y, perm), p)) < 1e-9);
}

TEST_CASE("sab is permutation-equivariant") {
  std::mt19937_64 rng(10);
  AttentionConfig cfg{8, 2};
  MABParams p = MABParams::init(cfg, rng);
  Tensor x = random_tensor(5, 8, rng);

  std::vector<int> perm(5);
  std::iota(perm.begin(), perm.end(), 0);
  for (int rep = 0; rep < 20; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Tape t;
    Tensor lhs = sab(t, permute_rows(x, perm), p);
    Tensor rhs = permute_rows(sab(t, x, p), perm);
    CHECK(max_abs_diff(lhs, rhs) < 1e-9);
  }
}

TEST_CASE("isab is permutation-equivariant and mask-transparent") {
  std::mt19937_64 rng(11);
  AttentionConfig cfg{8, 2};
  ISABParams p = ISABParams::init(cfg, 3, rng);
  Tensor x = random_tensor(5, 8, rng);

  std::vector<int> perm(5);
  std::iota(perm.begin(), perm.end(), 0);
  for (int rep = 0; rep < 10; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Tape t;
    Tensor lhs = isab(t, permute_rows(x, perm), p);
    Tensor rhs = permute_rows(isab(t, x, p), perm);
    CHECK(max_abs_diff(lhs, rhs) < 1e-9);
  }

  // Padding rows must not leak into unmasked outputs.
  Tape t;
  Tensor padded = Tensor::zeros(7, 8);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 8; ++j) padded.at(i, j) = x.at(i, j);
  padded.at(5, 0) = 99.0;
  padded.at(6, 3) = -42.0;
  Tensor out_padded = isab(t, padded, p, Mask{1, 1, 1, 1, 1, 0, 0});
  Tensor out_plain = isab(t, x, p);
  double m = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 8; ++j)
      m = std::max(m, std::abs(out_padded.at(i, j) - out_plain.at(i, j)));
  CHECK(m < 1e-9);
}

TEST_CASE("pma is permutation-invariant") {
  std::mt19937_64 rng(12);
  AttentionConfig cfg{8, 2};
  PMAParams p = PMAParams::init(cfg, 1, rng);
  Tensor z = random_tensor(8, 8, rng);

  Tape t;
  Tensor base = pma(t, z, p);
  CHECK(base.rows() == 1);

  std::vector<int> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  for (int rep = 0; rep < 100; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Tape t2;
    CHECK(max_abs_diff(base, pma(t2, permute_rows(z, perm), p)) < 1e-9);
  }
}

TEST_CASE("pma: duplicated rows give the same pooled output") {
  std::mt19937_64 rng(13);
  AttentionConfig cfg{4, 1};
  PMAParams p = PMAParams::init(cfg, 1, rng);
  Tensor single = random_tensor(1, 4, rng);
  Tensor doubled = Tensor::zeros(2, 4);
  for (int j = 0; j < 4; ++j) {
    doubled.at(0, j) = single.at(0, j);
    doubled.at(1, j) = single.at(0, j);
  }
  Tape t;
  CHECK(max_abs_diff(pma(t, single, p), pma(t, doubled, p)) < 1e-12);
}

TEST_CASE("pma: masked padding equals unpadded oracle, empty set errors") {
  std::mt19937_64 rng(14);
  AttentionConfig cfg{8, 4};
  PMAParams p = PMAParams::init(cfg, 1, rng);
  Tensor z = random_tensor(4, 8, rng);

  Tape t;
  Tensor padded = Tensor::zeros(6, 8);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 8; ++j) padded.at(i, j) = z.at(i, j);
  padded.at(4, 2) = 7.0;
  CHECK(max_abs_diff(pma(t, z, p), pma(t, padded, p, Mask{1, 1, 1, 1, 0, 0})) < 1e-9);

  CHECK_THROWS_AS(pma(t, z, p, Mask{0, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("block gradients pass finite-difference checks") {
  std::mt19937_64 rng(15);
  AttentionConfig cfg{4, 2};
  ISABParams ip = ISABParams::init(cfg, 2, rng);
  PMAParams pp = PMAParams::init(cfg, 1, rng);
  Tensor x = random_tensor(3, 4, rng, true);

  std::vector<Tensor> params;
  params.push_back(x);
  ip.collect(params);
  pp.collect(params);

  for (auto& p : params) p.zero_grad();
  {
    Tape t;
    Tensor h = isab(t, x, ip);
    Tensor pooled = pma(t, h, pp);
    Tensor loss = sum(t, mul(t, pooled, pooled));
    t.backward(loss);
  }

  double max_rel = 0;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
  };
  for (auto& p : params) {
    Tensor fd = finite_difference_gradient(
        [&](const Tensor& probe) {
          std::vector<double> saved = p.data();
          p.data() = probe.data();
          Tape t;
          Tensor h = isab(t, x, ip);
          Tensor pooled = pma(t, h, pp);
          const double v = sum(t, mul(t, pooled, pooled)).data()[0];
          p.data() = saved;
          return v;
        },
        p);
    for (int i = 0; i < p.size(); ++i)
      max_rel = std::max(max_rel, rel(p.grad()[i], fd.data()[i]));
  }
  CHECK(max_rel < 1e-4);
}
