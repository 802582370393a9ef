#include "trident/tensor.hpp"

#include <cmath>
#include <sstream>

#include "trident/errors.hpp"

namespace trident {

Tensor::Tensor(std::vector<std::uint64_t> dims, std::vector<float> data, std::string_view what)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (dims_.empty()) throw ShapeError(std::string(what) + ": rank must be at least 1");
  std::uint64_t count = 1;
  for (auto d : dims_) {
    if (d == 0) throw ShapeError(std::string(what) + ": zero-sized dimension in " + shape_string());
    count *= d;
  }
  if (count != data_.size()) {
    throw ShapeError(std::string(what) + ": shape " + shape_string() + " needs " + std::to_string(count) +
                     " values, got " + std::to_string(data_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i]))
      throw ValidationError(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
  }
}

Tensor Tensor::zeros(std::vector<std::uint64_t> dims) {
  std::uint64_t count = 1;
  for (auto d : dims) count *= d;
  return Tensor(std::move(dims), std::vector<float>(count, 0.0f));
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
  os << ']';
  return os.str();
}

RowMatrix<float> to_matrix(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected a rank-2 tensor, got " + t.shape_string());
  RowMatrix<float> m(static_cast<Index>(t.dim(0)), static_cast<Index>(t.dim(1)));
  std::copy(t.data().begin(), t.data().end(), m.data());
  return m;
}

Tensor from_matrix(const RowMatrix<float>& m) {
  std::vector<float> data(m.data(), m.data() + m.size());
  return Tensor({static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, std::move(data));
}

GridMap<float> to_grid(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("expected a rank-3 tensor, got " + t.shape_string());
  GridMap<float> g(static_cast<Index>(t.dim(0)), static_cast<Index>(t.dim(1)), static_cast<Index>(t.dim(2)));
  std::copy(t.data().begin(), t.data().end(), g.cells.data());
  return g;
}

Tensor from_grid(const GridMap<float>& g) {
  std::vector<float> data(g.cells.data(), g.cells.data() + g.cells.size());
  return Tensor({static_cast<std::uint64_t>(g.rows), static_cast<std::uint64_t>(g.cols),
                 static_cast<std::uint64_t>(g.channels())},
                std::move(data));
}

}  // namespace trident
