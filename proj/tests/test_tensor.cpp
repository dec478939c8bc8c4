// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <limits>
#include <stdexcept>

#include "flowforge/rng.hpp"
#include "flowforge/tensor.hpp"

using namespace flowforge;

TEST_CASE("tensor construction checks shape against data length") {
  CHECK_NOTHROW(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0}, {}), std::invalid_argument);
}

TEST_CASE("tensor rejects non-finite values at construction") {
  CHECK_THROWS_AS(Tensor({2}, {1.0, std::numeric_limits<double>::infinity()}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({1}, {std::numeric_limits<double>::quiet_NaN()}), std::invalid_argument);
}

TEST_CASE("tensor helpers") {
  Tensor z = Tensor::zeros({2, 2});
  CHECK(z.size() == 4);
  CHECK(z[3] == 0.0);
  Tensor s = Tensor::scalar(7.0);
  CHECK(s.size() == 1);
  CHECK(s.shape() == std::vector<std::size_t>{1});
  Tensor m({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(m.last_extent() == 3);
  CHECK(m.outer_extent() == 2);
  CHECK(m.shape_string() == "[2,3]");
}

TEST_CASE("rng streams are deterministic and label-disjoint") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  CHECK(derive_seed(1, "train", 0) == derive_seed(1, "train", 0));
  CHECK(derive_seed(1, "train", 0) != derive_seed(1, "eval", 0));
  CHECK(derive_seed(1, "train", 0) != derive_seed(1, "train", 1));
  CHECK(derive_seed(1, "train", 0) != derive_seed(2, "train", 0));
}

TEST_CASE("rng uniform stays in range and normal is roughly centered") {
  Rng rng(7);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += rng.normal();
  }
  CHECK(std::abs(sum / 10000.0) < 0.05);
}
