#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trident/types.hpp"

namespace trident {

/// Dense row-major f32 array. Construction rejects empty shapes, zero-sized
/// dimensions, size mismatches and non-finite values, so a live Tensor always
/// satisfies product(dims) == size(data) with finite entries.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::uint64_t> dims, std::vector<float> data, std::string_view what = "tensor");

  static Tensor zeros(std::vector<std::uint64_t> dims);

  const std::vector<std::uint64_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::uint64_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::uint64_t> dims_;
  std::vector<float> data_;
};

/// Views a rank-2 tensor as a matrix (copying into Eigen storage).
RowMatrix<float> to_matrix(const Tensor& t);
Tensor from_matrix(const RowMatrix<float>& m);

/// Rank-3 H x W x C tensor <-> grid map.
GridMap<float> to_grid(const Tensor& t);
Tensor from_grid(const GridMap<float>& g);

}  // namespace trident
