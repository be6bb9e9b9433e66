#include "imcsim/tensor.hpp"

#include <Eigen/Core>

namespace imcsim::train {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

void check(std::size_t size, int rows, int cols, const char* what) {
  if (size != static_cast<std::size_t>(rows) * cols) throw DimensionError(std::string("matmul: bad ") + what + " size");
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, int m, int k, int n,
            bool accumulate) {
  check(a.size(), m, k, "lhs");
  check(b.size(), k, n, "rhs");
  check(out.size(), m, n, "output");
  Map o(out.data(), m, n);
  if (accumulate) {
    o.noalias() += ConstMap(a.data(), m, k) * ConstMap(b.data(), k, n);
  } else {
    o.noalias() = ConstMap(a.data(), m, k) * ConstMap(b.data(), k, n);
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, int m, int k, int n) {
  check(a.size(), m, k, "lhs");
  check(b.size(), m, n, "rhs");
  check(out.size(), k, n, "output");
  Map(out.data(), k, n).noalias() = ConstMap(a.data(), m, k).transpose() * ConstMap(b.data(), m, n);
}

}  // namespace imcsim::train
