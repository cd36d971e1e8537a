// Copyright 2026 The FBR Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <vector>

#include "fbr/numerics.hpp"
#include "fbr/rng.hpp"

namespace testutil {

inline fbr::Tensor random_tensor(fbr::Shape shape, fbr::Rng& rng, double lo = -1.0,
                                 double hi = 1.0, bool requires_grad = true) {
  std::vector<double> v(fbr::shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return fbr::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline fbr::Vec random_unit(std::size_t d, fbr::Rng& rng) {
  fbr::Vec v(d);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return fbr::normalized(v);
}

}  // namespace testutil
