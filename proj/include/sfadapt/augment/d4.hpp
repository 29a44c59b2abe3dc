// Copyright 2026 The sfadapt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "sfadapt/tensor.hpp"

namespace sfadapt::augment {

// Element of the dihedral group of the square: an optional horizontal flip
// followed by `rotation` counter-clockwise quarter turns (as displayed, with
// y pointing down).
struct D4Element {
  int rotation = 0;
  bool flip = false;

  bool operator==(const D4Element&) const = default;
  std::string str() const;
};

D4Element inverse(D4Element g);
// Element equivalent to applying `first`, then `second`.
D4Element compose(D4Element second, D4Element first);
// All eight elements, identity first.
std::array<D4Element, 8> all_d4();

// How a channel transforms. kVector2 channels come in adjacent (u, v) pairs
// holding (dx, dy) displacements; they are moved spatially and their
// components rotated/reflected with the grid.
enum class ChannelKind { kScalar, kVector2 };

// Throws ShapeError for an unpaired kVector2 run and ConfigError for an
// unknown kind value.
void validate_channel_kinds(std::span<const ChannelKind> kinds, int channels);

ChannelKind parse_channel_kind(const std::string& s);

// Applies g to every item of an N x C x H x W batch. Odd rotations swap H
// and W.
template <class T>
Tensor<T> apply_d4(D4Element g, const Tensor<T>& x, std::span<const ChannelKind> kinds);

// Convenience: all channels scalar.
template <class T>
Tensor<T> apply_d4(D4Element g, const Tensor<T>& x) {
  std::vector<ChannelKind> kinds(static_cast<std::size_t>(x.c()), ChannelKind::kScalar);
  return apply_d4(g, x, kinds);
}

}  // namespace sfadapt::augment
