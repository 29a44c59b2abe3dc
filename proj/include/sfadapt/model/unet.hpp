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

#include <cstdint>
#include <string>
#include <vector>

#include "sfadapt/model/snapshot.hpp"
#include "sfadapt/tensor.hpp"

namespace sfadapt::model {

// Input height and width must be multiples of this.
inline constexpr int kDownsampleFactor = 8;

struct UNetConfig {
  int in_channels = 1;
  int base_width = 16;
  int num_classes = 2;

  bool operator==(const UNetConfig&) const = default;
};

template <class T>
struct SegmentationOutput {
  Tensor<T> class_logits;    // N x num_classes x H x W
  Tensor<T> flow;            // N x 2 x H x W, (u, v) = (dx, dy) in pixels
  Tensor<T> bottleneck;      // N x D x 1 x 1
  Tensor<T> bottleneck_map;  // N x D x H/8 x W/8, deepest encoder features
};

template <class T>
struct Parameter {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<T> value;
  std::vector<T> grad;
};

// Three-level encoder/decoder with additive skip connections. Every stage is
// conv3x3 -> instance norm -> ReLU; pooling is 2x2 average, upsampling is
// nearest neighbour. A 1x1 head emits class logits and a 2-channel flow map.
// The embedding is the spatial mean of the bottleneck stage output.
//
// forward() is const and keeps no state, so a network may be shared by
// concurrent readers. Gradients come from forward_train() + backward().
template <class T>
class UNet {
 public:
  struct BlockCache {
    Shape4 in_shape;
    std::vector<T> col;
    std::vector<T> xhat;
    std::vector<T> inv_std;
    Tensor<T> out;
  };
  // Activations recorded by forward_train() and consumed by backward().
  struct Tape {
    std::vector<BlockCache> blocks;
    Tensor<T> head_in;
  };

  explicit UNet(UNetConfig cfg = {}, uint64_t seed = 0);

  const UNetConfig& config() const { return cfg_; }
  std::string architecture_id() const;
  int embedding_dim() const { return 4 * cfg_.base_width; }

  SegmentationOutput<T> forward(const Tensor<T>& images) const;
  SegmentationOutput<T> forward_train(const Tensor<T>& images, Tape& tape) const;

  // Accumulates parameter gradients of a scalar loss given its gradients
  // w.r.t. the class logits and the flow output of the taped forward pass.
  void backward(const Tape& tape, const Tensor<T>& d_logits, const Tensor<T>& d_flow);
  void zero_grad();

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }

  ParamSnapshot snapshot(int64_t iteration = 0) const;
  void restore(const ParamSnapshot& snap);

 private:
  struct BlockSpec {
    int in;
    int out;
    int conv_w;
    int norm_g;
    int norm_b;
  };

  void add_block(const std::string& name, int in, int out);
  int add_param(const std::string& name, std::vector<int64_t> shape);
  SegmentationOutput<T> run(const Tensor<T>& images, Tape* tape) const;
  Tensor<T> block_forward(int b, const Tensor<T>& x, BlockCache* cache) const;
  Tensor<T> block_backward(int b, const BlockCache& cache, const Tensor<T>& d_out,
                           bool need_input_grad);

  UNetConfig cfg_;
  uint64_t seed_ = 0;
  std::vector<Parameter<T>> params_;
  std::vector<BlockSpec> blocks_;
  int head_w_ = -1;
  int head_b_ = -1;
};

// N x D embeddings (the bottleneck field of forward()).
template <class T>
Tensor<T> extract_embedding(const UNet<T>& net, const Tensor<T>& images);

// Softmax over the channel axis of an N x C x H x W logit tensor.
template <class T>
Tensor<T> softmax_channels(const Tensor<T>& logits);

// Inverse of UNet::architecture_id(); throws ArchitectureMismatch on ids of
// other architectures.
UNetConfig parse_architecture_id(const std::string& id);

// A network shaped after the snapshot's architecture, holding its weights.
template <class T>
UNet<T> unet_from_snapshot(const ParamSnapshot& snap) {
  UNet<T> net(parse_architecture_id(snap.architecture));
  net.restore(snap);
  return net;
}

// Copies parameters between networks of the same architecture but possibly
// different scalar types.
template <class To, class From>
void copy_parameters(const UNet<From>& src, UNet<To>& dst) {
  dst.restore(src.snapshot());
}

}  // namespace sfadapt::model
