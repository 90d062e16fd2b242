#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gafnau/tensor.hpp"

// Differentiable primitives. Every op takes the tape it records onto; with an
// inference tape nothing is recorded and outputs never require gradients.
// Feature maps are laid out as [N, C, H, W].
namespace gafnau::ops {

struct Conv2dOptions {
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;
};

// `bias` may be an undefined Tensor for a bias-free convolution.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias,
              Conv2dOptions opts = {});

// 2x2 window, stride 2. Ties resolve to the first cell in row-major order.
Tensor maxpool2d(Tape& tape, const Tensor& input);

// Nearest-neighbour duplication by a factor of 2 along both spatial axes.
Tensor upsample2d(Tape& tape, const Tensor& input);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor power(Tape& tape, const Tensor& x, int p);
Tensor scale(Tape& tape, const Tensor& x, double c);
// a * x + b
Tensor affine(Tape& tape, const Tensor& x, double a, double b);

// Binary ops accept equal shapes, or two rank-4 operands that agree except
// that one of them has a single channel (broadcast along C).
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor sum(Tape& tape, const Tensor& x);

Tensor concat_channels(Tape& tape, std::span<const Tensor> parts);

// Affine rescale of every [n, c] plane to span [0, 1]. A plane whose range is
// numerically zero maps to all ones and passes no gradient.
Tensor minmax_normalize(Tape& tape, const Tensor& x);

// Channel softmax followed by negative log-likelihood, averaged over all
// N*H*W positions. `targets` holds class indices laid out as [N, H, W].
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets);

}  // namespace gafnau::ops
