#include <doctest.h>

#include "../oracles.hpp"
#include "trident/errors.hpp"
#include "trident/numerics.hpp"

using namespace trident;

TEST_CASE("l2_normalize_rows") {
  RowMatrix<float> m(1, 2);
  m << 3, 4;
  const auto n = l2_normalize_rows(m);
  CHECK(n(0, 0) == doctest::Approx(0.6));
  CHECK(n(0, 1) == doctest::Approx(0.8));

  const RowMatrix<float> id = RowMatrix<float>::Identity(4, 4);
  CHECK(l2_normalize_rows(id) == id);

  std::mt19937_64 rng(1);
  const auto r = l2_normalize_rows(oracle::random_matrix(8, 16, rng));
  for (Index i = 0; i < r.rows(); ++i) CHECK(std::abs(r.row(i).norm() - 1.0f) <= 1e-6f);
  CHECK((l2_normalize_rows(r) - r).cwiseAbs().maxCoeff() <= 1e-6f);

  RowMatrix<float> z = RowMatrix<float>::Zero(2, 3);
  CHECK(l2_normalize_rows(z).isZero());
  z(0, 0) = std::nanf("");
  CHECK_THROWS_AS(l2_normalize_rows(z), ValidationError);
}

TEST_CASE("cosine_matrix") {
  RowMatrix<float> a(1, 2), b(2, 2);
  a << 1, 0;
  b << 1, 0, 0, 1;
  const auto c = cosine_matrix(a, b);
  CHECK(c(0, 0) == 1.0f);
  CHECK(c(0, 1) == 0.0f);

  std::mt19937_64 rng(2);
  const auto x = oracle::random_matrix(6, 5, rng);
  const auto self = cosine_matrix(x, x);
  for (Index i = 0; i < 6; ++i) CHECK(self(i, i) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK((self - self.transpose()).cwiseAbs().maxCoeff() <= 1e-6f);

  const auto p = oracle::random_matrix(5, 3, rng);
  const auto q = oracle::random_matrix(4, 3, rng);
  const auto expect = oracle::cosine(p.cast<double>(), q.cast<double>());
  CHECK((cosine_matrix(p, q).cast<double>() - expect).cwiseAbs().maxCoeff() <= 1e-6);

  CHECK_THROWS_AS(cosine_matrix(p, oracle::random_matrix(4, 2, rng)), ShapeError);
}

TEST_CASE("masked_softmax_rows") {
  RowMatrix<double> s(1, 3);
  s << 1, 1, 1;
  RowMask keep(1, 3);
  keep << true, true, false;
  const auto a = masked_softmax_rows(s, keep);
  CHECK(a(0, 0) == 0.5);
  CHECK(a(0, 1) == 0.5);
  CHECK(a(0, 2) == 0.0);

  RowMatrix<double> zero = RowMatrix<double>::Zero(1, 2);
  const auto b = masked_softmax_rows(zero, RowMask::Constant(1, 2, true));
  CHECK(b(0, 0) == 0.5);
  CHECK(b(0, 1) == 0.5);

  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 20; ++trial) {
    const RowMatrix<double> m = (oracle::random_matrix(16, 16, rng) * 5.0f).cast<double>();
    RowMask k(16, 16);
    for (Index i = 0; i < k.size(); ++i) k.data()[i] = coin(rng);
    k.diagonal().setConstant(true);
    const auto got = masked_softmax_rows(m, k);
    CHECK((got - oracle::additive_mask_softmax(m, k)).cwiseAbs().maxCoeff() <= 1e-5);
    for (Index i = 0; i < 16; ++i) {
      CHECK(std::abs(got.row(i).sum() - 1.0) <= 1e-5);
      for (Index j = 0; j < 16; ++j)
        if (!k(i, j)) CHECK(got(i, j) == 0.0);
    }
    CHECK((got.array() >= 0).all());
  }

  CHECK_THROWS_AS(masked_softmax_rows(s, RowMask::Constant(1, 3, false)), ValidationError);
}

TEST_CASE("threshold_mask keeps the diagonal") {
  RowMatrix<float> c(2, 2);
  c << 0.2f, 0.9f, 0.1f, 0.3f;
  const auto k = threshold_mask(c, 0.5);
  CHECK(k(0, 0));
  CHECK(k(0, 1));
  CHECK_FALSE(k(1, 0));
  CHECK(k(1, 1));
}

TEST_CASE("softmax_rows and argmax_rows") {
  RowMatrix<float> s(2, 3);
  s << 0, 0, 0, 1, 3, 3;
  const auto p = softmax_rows(s, 100.0f);
  CHECK(p.row(0).sum() == doctest::Approx(1.0));
  const auto idx = argmax_rows(s);
  CHECK(idx[0] == 0);
  CHECK(idx[1] == 1);
}

namespace {

GridMap<double> make_grid(Index r, Index c, Index ch, std::mt19937_64& rng) {
  return GridMap<double>(r, c, oracle::random_matrix(r * c, ch, rng).cast<double>());
}

}  // namespace

TEST_CASE("bilinear_resize") {
  std::mt19937_64 rng(4);
  const auto g = make_grid(21, 21, 4, rng);
  CHECK(bilinear_resize(g, 21, 21).cells == g.cells);

  GridMap<double> one(1, 1, 2);
  one.cells << 0.25, -3;
  const auto big = bilinear_resize(one, 7, 7);
  for (Index i = 0; i < big.size(); ++i) CHECK(big.cells.row(i) == one.cells.row(0));

  GridMap<double> two(2, 2, 1);
  two.cells << 0, 1, 2, 3;
  const auto four = bilinear_resize(two, 4, 4);
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x)
      CHECK(four.cells(y * 4 + x, 0) == doctest::Approx(oracle::half_pixel_sample(two, 0, y, x, 4, 4)).epsilon(1e-12));
  CHECK(four.cells(0, 0) == 0.0);
  CHECK(four.cells(1, 0) == doctest::Approx(0.25));

  for (int trial = 0; trial < 10; ++trial) {
    const auto src = make_grid(3 + trial % 4, 2 + trial % 5, 2, rng);
    const Index oh = 1 + (trial * 7) % 13;
    const Index ow = 1 + (trial * 5) % 11;
    const auto out = bilinear_resize(src, oh, ow);
    for (Index y = 0; y < oh; ++y)
      for (Index x = 0; x < ow; ++x)
        for (Index ch = 0; ch < 2; ++ch)
          CHECK(std::abs(out.cells(y * ow + x, ch) - oracle::half_pixel_sample(src, ch, y, x, oh, ow)) <= 1e-12);
    GridMap<double> scaled(src.rows, src.cols, RowMatrix<double>(src.cells * 2.5));
    CHECK((bilinear_resize(scaled, oh, ow).cells - 2.5 * out.cells).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS(bilinear_resize(two, 0, 3));
}

TEST_CASE("upsample_argmax equals resize then argmax") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const GridMap<float> src(4, 5, oracle::random_matrix(20, 3, rng));
    const auto labels = upsample_argmax(src, 17, 23);
    const auto resized = bilinear_resize(src, 17, 23);
    const auto expect = argmax_rows(resized.cells);
    for (Index i = 0; i < labels.size(); ++i) CHECK(labels.data()[i] == expect[static_cast<std::size_t>(i)]);
    const auto plane = upsample_channel(src, 1, 17, 23);
    for (Index i = 0; i < plane.size(); ++i) CHECK(plane.data()[i] == resized.cells(i, 1));
  }
}
