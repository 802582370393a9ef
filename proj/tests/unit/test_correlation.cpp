#include <doctest.h>

#include "../oracles.hpp"
#include "trident/errors.hpp"
#include "trident/correlation.hpp"

using namespace trident;

namespace {

template <typename Scalar>
void check_stochastic(const RowMatrix<Scalar>& a, double tol = 1e-5) {
  CHECK((a.array() >= Scalar(0)).all());
  for (Index i = 0; i < a.rows(); ++i) CHECK(std::abs(static_cast<double>(a.row(i).sum()) - 1.0) <= tol);
}

}  // namespace

TEST_CASE("correlation kind names") {
  CHECK(parse_correlation_kind("affinity") == CorrelationKind::affinity);
  CHECK(parse_correlation_kind("cos") == CorrelationKind::cosine);
  CHECK(to_string(CorrelationKind::attention) == "attention");
  CHECK_THROWS_AS(parse_correlation_kind("bogus"), ConfigError);
  CHECK_THROWS_AS(check_epsilon(1.5), ConfigError);
}

TEST_CASE("proxy_window_correlation") {
  const RowMatrix<float> same = RowMatrix<float>::Ones(4, 3);
  const auto u = proxy_window_correlation(same, 0.0, 2, 2);
  CHECK((u.values.array() - 0.25f).abs().maxCoeff() <= 1e-7f);

  RowMatrix<float> clusters(4, 2);
  clusters << 1, 0, 1, 0.01f, 0, 1, 0.02f, 1;
  const auto b = proxy_window_correlation(clusters, 0.5, 2, 2);
  check_stochastic(b.values);
  CHECK(b.values(0, 2) == 0.0f);
  CHECK(b.values(0, 3) == 0.0f);
  CHECK(b.values(2, 0) == 0.0f);
  CHECK(b.values(3, 1) == 0.0f);
  CHECK(b.values(0, 1) > 0.0f);

  RowMatrix<float> single(1, 5);
  single << 1, 2, 3, 4, 5;
  CHECK(proxy_window_correlation(single, 0.0, 1, 1).values(0, 0) == 1.0f);
  CHECK_THROWS_AS(proxy_window_correlation(single, 0.0, 2, 1), ShapeError);
}

TEST_CASE("window_features") {
  std::mt19937_64 rng(6);
  const auto v = oracle::random_matrix(4, 3, rng);
  const RowMatrix<float> p = RowMatrix<float>::Identity(3, 3);
  const auto id = window_features(v, identity_correlation<float>(2, 2), p);
  CHECK(id.cells == v);
  CHECK(id.rows == 2);

  CorrelationMatrix<float> uniform{RowMatrix<float>::Constant(4, 4, 0.25f), CorrelationKind::cosine, 2, 2};
  const auto proj = oracle::random_matrix(3, 5, rng);
  const auto out = window_features(v, uniform, proj);
  const Eigen::RowVectorXf expect = v.colwise().mean() * proj;
  for (Index i = 0; i < 4; ++i) CHECK((out.cells.row(i) - expect).cwiseAbs().maxCoeff() <= 1e-6f);
  CHECK_THROWS_AS(window_features(v, uniform, oracle::random_matrix(2, 5, rng)), ShapeError);
}

TEST_CASE("sam_cosine_affinity") {
  const RowMatrix<float> ortho = RowMatrix<float>::Identity(6, 6);
  CHECK(sam_cosine_affinity(ortho, 0.5, 2, 3).values == ortho);
  const RowMatrix<float> same = RowMatrix<float>::Ones(6, 4);
  const auto u = sam_cosine_affinity(same, 0.5, 3, 2);
  CHECK((u.values.array() - 1.0f / 6).abs().maxCoeff() <= 1e-7f);
}

TEST_CASE("reduce_attention_heads") {
  std::mt19937_64 rng(7);
  const auto h = softmax_rows(oracle::random_matrix(5, 5, rng));
  CHECK(reduce_attention_heads(std::vector<RowMatrix<float>>{h}) == h);

  const RowMatrix<double> id = RowMatrix<double>::Identity(4, 4);
  const RowMatrix<double> uni = RowMatrix<double>::Constant(4, 4, 0.25);
  const auto m = reduce_attention_heads(std::vector<RowMatrix<double>>{id, uni});
  CHECK((m - (0.5 * id + 0.5 * uni)).cwiseAbs().maxCoeff() <= 1e-15);

  std::vector<RowMatrix<float>> heads;
  for (int i = 0; i < 8; ++i) heads.push_back(softmax_rows(oracle::random_matrix(12, 12, rng), 3.0f));
  check_stochastic(reduce_attention_heads(heads));

  heads[0](0, 0) = -0.1f;
  CHECK_THROWS_AS(reduce_attention_heads(heads), ValidationError);
  CHECK_THROWS_AS(reduce_attention_heads(std::vector<RowMatrix<float>>{}), ShapeError);
}

TEST_CASE("hybrid_affinity") {
  RowMatrix<double> w(3, 3), c(3, 3);
  w << 0.5, 0.3, 0.2, 0.3, 0.4, 0.3, 0.2, 0.3, 0.5;
  c << 1.0, 0.2, -0.1, 0.2, 1.0, 0.2, -0.1, 0.2, 1.0;
  const auto a = hybrid_affinity(w, c, 0.0, 1, 3);
  CHECK(std::abs(a.values(0, 0) - 0.625) <= 1e-9);
  CHECK(std::abs(a.values(0, 1) - 0.375) <= 1e-9);
  CHECK(a.values(0, 2) == 0.0);

  std::mt19937_64 rng(8);
  const auto wf = softmax_rows(oracle::random_matrix(9, 9, rng), 4.0f);
  const auto cf = cosine_matrix(oracle::random_matrix(9, 4, rng), oracle::random_matrix(9, 4, rng));
  CHECK(hybrid_affinity(wf, cf, -1.0, 3, 3).values == wf);

  const RowMatrix<float> idc = RowMatrix<float>::Identity(9, 9);
  CHECK(hybrid_affinity(wf, idc, 1.0, 3, 3).values == idc);

  const auto h = hybrid_affinity(wf, cf, 0.3, 3, 3);
  const auto keep = threshold_mask(cf, 0.3);
  for (Index i = 0; i < 9; ++i)
    for (Index j = 0; j < 9; ++j) {
      if (!keep(i, j)) CHECK(h.values(i, j) == 0.0f);
      for (Index k = 0; k < 9; ++k)
        if (keep(i, j) && keep(i, k) && wf(i, j) < wf(i, k)) CHECK(h.values(i, j) <= h.values(i, k));
    }

  CHECK_THROWS_AS(hybrid_affinity(wf, idc.topRows(3), 0.0, 3, 3), ShapeError);
  RowMatrix<float> neg = wf;
  neg(0, 1) = -0.1f;
  CHECK_THROWS_AS(hybrid_affinity(neg, cf, 0.0, 3, 3), ValidationError);
}

TEST_CASE("sam cosine and hybrid agree when W is the softmax of C") {
  RowMatrix<double> f(4, 2);
  f << 1, 0, 1, 0.1, 0, 1, 0.1, 1;
  const auto c = cosine_matrix(f, f);
  const auto cos_a = sam_cosine_affinity(f, 0.5, 2, 2);
  const auto hyb = hybrid_affinity(softmax_rows(c), c, 0.5, 2, 2);
  CHECK((cos_a.values - hyb.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("attention_correlation normalizes rows") {
  RowMatrix<float> w(2, 2);
  w << 1, 3, 2, 2;
  const auto a = attention_correlation(w, 1, 2);
  CHECK(a.values(0, 1) == 0.75f);
  CHECK(a.values(1, 0) == 0.5f);
  w.row(1).setZero();
  CHECK_THROWS_AS(attention_correlation(w, 1, 2), ValidationError);
}
