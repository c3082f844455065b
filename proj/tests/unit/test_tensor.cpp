#include <gtest/gtest.h>

#include "symrep/tensor.hpp"

namespace symrep {
namespace {

TEST(Tensor, ValuesLengthMatchesShape) {
  const Tensor t(Shape{2, 3, 4}, 1.5);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  for (double v : t.values()) EXPECT_EQ(v, 1.5);
}

TEST(Tensor, RejectsMismatchedStorage) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, ScalarHasRankZero) {
  const Tensor s = Tensor::scalar(2.5);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.item(), 2.5);
}

TEST(Tensor, ItemRequiresSingleElement) {
  EXPECT_THROW(Tensor(Shape{2}).item(), DimensionError);
}

TEST(Tensor, MatrixIndexingIsRowMajor) {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.at(1, 0), 4.0);
  EXPECT_EQ(m.at(0, 2), 3.0);
}

TEST(Tensor, ShapeToString) {
  EXPECT_EQ(shape_to_string(Shape{3, 4}), "[3x4]");
}

TEST(Parameter, GradMatchesValueShape) {
  Parameter p("w", Tensor(Shape{3, 2}, 1.0));
  EXPECT_EQ(p.grad.shape(), p.value.shape());
  p.grad.fill(4.0);
  p.zero_grad();
  for (double v : p.grad.values()) EXPECT_EQ(v, 0.0);
}

}  // namespace
}  // namespace symrep
