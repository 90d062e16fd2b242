#include "gafnau/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace gafnau::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool tracks(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape.recording()) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         to_string(t.shape()));
    }
}

// Lays out every receptive field of one sample as a column: rows index
// (c, i, j), columns index output positions.
void im2col(const double* in, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            const Conv2dOptions& o, std::size_t ho, std::size_t wo, double* cols) {
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) {
                double* row = cols + ((c * kh + i) * kw + j) * ho * wo;
                for (std::size_t y = 0; y < ho; ++y) {
                    const long iy = static_cast<long>(y * o.stride_h + i) - static_cast<long>(o.pad_h);
                    for (std::size_t x = 0; x < wo; ++x) {
                        const long ix = static_cast<long>(x * o.stride_w + j) - static_cast<long>(o.pad_w);
                        const bool inside = iy >= 0 && iy < static_cast<long>(h) && ix >= 0 && ix < static_cast<long>(w);
                        row[y * wo + x] = inside ? in[(c * h + iy) * w + ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, const Conv2dOptions& o, std::size_t ho, std::size_t wo, double* out) {
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) {
                const double* row = cols + ((c * kh + i) * kw + j) * ho * wo;
                for (std::size_t y = 0; y < ho; ++y) {
                    const long iy = static_cast<long>(y * o.stride_h + i) - static_cast<long>(o.pad_h);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (std::size_t x = 0; x < wo; ++x) {
                        const long ix = static_cast<long>(x * o.stride_w + j) - static_cast<long>(o.pad_w);
                        if (ix < 0 || ix >= static_cast<long>(w)) continue;
                        out[(c * h + iy) * w + ix] += row[y * wo + x];
                    }
                }
            }
        }
    }
}

template <typename Fwd, typename Deriv>
Tensor unary(Tape& tape, const Tensor& x, Fwd fwd, Deriv deriv) {
    Tensor out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
    if (tracks(tape, {&x})) {
        out.set_requires_grad(true);
        tape.record({x}, out, [x, out, deriv]() mutable {
            auto xv = x.values();
            auto ov = out.values();
            auto g = out.grad();
            auto gx = x.grad_buffer();
            for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * deriv(xv[i], ov[i]);
        });
    }
    return out;
}

// Index helper for channel broadcasting between two rank-4 operands.
struct Broadcast {
    Shape out_shape;
    std::size_t n = 0, c = 0, hw = 0;
    bool a_bcast = false, b_bcast = false;

    std::size_t index_a(std::size_t i) const { return a_bcast ? collapse(i) : i; }
    std::size_t index_b(std::size_t i) const { return b_bcast ? collapse(i) : i; }
    std::size_t collapse(std::size_t i) const { return (i / (c * hw)) * hw + i % hw; }
};

Broadcast resolve_broadcast(const Tensor& a, const Tensor& b, const char* op) {
    Broadcast bc;
    if (a.shape() == b.shape()) {
        bc.out_shape = a.shape();
        return bc;
    }
    const bool ok = a.rank() == 4 && b.rank() == 4 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
                    a.dim(3) == b.dim(3) && (a.dim(1) == 1 || b.dim(1) == 1);
    if (!ok) {
        throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a.shape()) + " with " +
                         to_string(b.shape()));
    }
    bc.a_bcast = a.dim(1) == 1;
    bc.b_bcast = !bc.a_bcast;
    bc.out_shape = bc.a_bcast ? b.shape() : a.shape();
    bc.n = bc.out_shape[0];
    bc.c = bc.out_shape[1];
    bc.hw = bc.out_shape[2] * bc.out_shape[3];
    return bc;
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias, Conv2dOptions opts) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(kernels, 4, "conv2d", "kernels");
    const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    if (kernels.dim(1) != cin) {
        throw ShapeError("conv2d: input channels (dim 1) = " + std::to_string(cin) + " but kernels expect " +
                         std::to_string(kernels.dim(1)));
    }
    if (opts.stride_h == 0 || opts.stride_w == 0) throw ShapeError("conv2d: stride must be positive");
    if (kh > h + 2 * opts.pad_h) {
        throw ShapeError("conv2d: kernel height " + std::to_string(kh) + " exceeds padded input height");
    }
    if (kw > w + 2 * opts.pad_w) {
        throw ShapeError("conv2d: kernel width " + std::to_string(kw) + " exceeds padded input width");
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
        throw ShapeError("conv2d: bias must have shape [" + std::to_string(cout) + "], got " +
                         to_string(bias.shape()));
    }

    const std::size_t ho = (h + 2 * opts.pad_h - kh) / opts.stride_h + 1;
    const std::size_t wo = (w + 2 * opts.pad_w - kw) / opts.stride_w + 1;
    const std::size_t k = cin * kh * kw, p = ho * wo;
    const bool pointwise = kh == 1 && kw == 1 && opts.stride_h == 1 && opts.stride_w == 1 && opts.pad_h == 0 &&
                           opts.pad_w == 0;

    Tensor out(Shape{n, cout, ho, wo});
    ConstMapMat wmat(kernels.values().data(), cout, k);
    std::vector<double> cols(pointwise ? 0 : k * p);
    for (std::size_t s = 0; s < n; ++s) {
        const double* in = input.values().data() + s * cin * h * w;
        const double* src = in;
        if (!pointwise) {
            im2col(in, cin, h, w, kh, kw, opts, ho, wo, cols.data());
            src = cols.data();
        }
        MapMat o(out.values().data() + s * cout * p, cout, p);
        o.noalias() = wmat * ConstMapMat(src, k, p);
        if (bias.defined()) {
            o.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.values().data(), cout);
        }
    }

    if (tracks(tape, {&input, &kernels, &bias})) {
        out.set_requires_grad(true);
        std::vector<Tensor> inputs{input, kernels};
        if (bias.defined()) inputs.push_back(bias);
        tape.record(std::move(inputs), out, [=]() mutable {
            std::vector<double> cols(pointwise ? 0 : k * p);
            std::vector<double> dcols(k * p);
            ConstMapMat wmat(kernels.values().data(), cout, k);
            for (std::size_t s = 0; s < n; ++s) {
                ConstMapMat g(out.grad().data() + s * cout * p, cout, p);
                const double* in = input.values().data() + s * cin * h * w;
                const double* src = in;
                if (!pointwise) {
                    im2col(in, cin, h, w, kh, kw, opts, ho, wo, cols.data());
                    src = cols.data();
                }
                if (kernels.requires_grad()) {
                    MapMat gw(kernels.grad_buffer().data(), cout, k);
                    gw.noalias() += g * ConstMapMat(src, k, p).transpose();
                }
                if (bias.defined() && bias.requires_grad()) {
                    Eigen::Map<Eigen::VectorXd> gb(bias.grad_buffer().data(), cout);
                    gb += g.rowwise().sum();
                }
                if (input.requires_grad()) {
                    double* gin = input.grad_buffer().data() + s * cin * h * w;
                    if (pointwise) {
                        MapMat(gin, k, p).noalias() += wmat.transpose() * g;
                    } else {
                        MapMat dc(dcols.data(), k, p);
                        dc.noalias() = wmat.transpose() * g;
                        col2im_add(dcols.data(), cin, h, w, kh, kw, opts, ho, wo, gin);
                    }
                }
            }
        });
    }
    return out;
}

Tensor maxpool2d(Tape& tape, const Tensor& input) {
    require_rank(input, 4, "maxpool2d", "input");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2d: spatial extents must be even, got " + to_string(input.shape()));
    }
    const std::size_t ho = h / 2, wo = w / 2;
    Tensor out(Shape{n, c, ho, wo});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    auto xv = input.values();
    auto ov = out.values();
    std::uint64_t sig = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        for (std::size_t y = 0; y < ho; ++y) {
            for (std::size_t x = 0; x < wo; ++x) {
                std::size_t best = plane * h * w + (2 * y) * w + 2 * x;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = plane * h * w + (2 * y + dy) * w + 2 * x + dx;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                }
                const std::size_t o = (plane * ho + y) * wo + x;
                ov[o] = xv[best];
                (*argmax)[o] = best;
                sig = sig * 31 + best;
            }
        }
    }
    tape.mix_signature(sig);
    if (tracks(tape, {&input})) {
        out.set_requires_grad(true);
        tape.record({input}, out, [input, out, argmax]() mutable {
            auto g = out.grad();
            auto gx = input.grad_buffer();
            for (std::size_t o = 0; o < g.size(); ++o) gx[(*argmax)[o]] += g[o];
        });
    }
    return out;
}

Tensor upsample2d(Tape& tape, const Tensor& input) {
    require_rank(input, 4, "upsample2d", "input");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    Tensor out(Shape{n, c, 2 * h, 2 * w});
    auto xv = input.values();
    auto ov = out.values();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        for (std::size_t y = 0; y < 2 * h; ++y) {
            for (std::size_t x = 0; x < 2 * w; ++x) {
                ov[(plane * 2 * h + y) * 2 * w + x] = xv[(plane * h + y / 2) * w + x / 2];
            }
        }
    }
    if (tracks(tape, {&input})) {
        out.set_requires_grad(true);
        tape.record({input}, out, [=]() mutable {
            auto g = out.grad();
            auto gx = input.grad_buffer();
            for (std::size_t plane = 0; plane < n * c; ++plane) {
                for (std::size_t y = 0; y < 2 * h; ++y) {
                    for (std::size_t x = 0; x < 2 * w; ++x) {
                        gx[(plane * h + y / 2) * w + x / 2] += g[(plane * 2 * h + y) * 2 * w + x];
                    }
                }
            }
        });
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
    std::uint64_t sig = 0;
    for (double v : x.values()) sig = sig * 3 + (v > 0.0 ? 1 : 2);
    tape.mix_signature(sig);
    return unary(
        tape, x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
    return unary(
        tape, x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor power(Tape& tape, const Tensor& x, int p) {
    if (p < 0) throw std::invalid_argument("power: exponent must be non-negative");
    return unary(
        tape, x, [p](double v) { return p == 0 ? 1.0 : std::pow(v, p); },
        [p](double v, double) { return p == 0 ? 0.0 : p * std::pow(v, p - 1); });
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
    return unary(
        tape, x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor affine(Tape& tape, const Tensor& x, double a, double b) {
    return unary(
        tape, x, [a, b](double v) { return a * v + b; }, [a](double, double) { return a; });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    const Broadcast bc = resolve_broadcast(a, b, "add");
    Tensor out(bc.out_shape);
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[bc.index_a(i)] + bv[bc.index_b(i)];
    if (tracks(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape.record({a, b}, out, [a, b, out, bc]() mutable {
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[bc.index_a(i)] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[bc.index_b(i)] += g[i];
            }
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    const Broadcast bc = resolve_broadcast(a, b, "mul");
    Tensor out(bc.out_shape);
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[bc.index_a(i)] * bv[bc.index_b(i)];
    if (tracks(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape.record({a, b}, out, [a, b, out, bc]() mutable {
            auto g = out.grad();
            auto av = a.values();
            auto bv = b.values();
            if (a.requires_grad()) {
                auto ga = a.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[bc.index_a(i)] += g[i] * bv[bc.index_b(i)];
            }
            if (b.requires_grad()) {
                auto gb = b.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[bc.index_b(i)] += g[i] * av[bc.index_a(i)];
            }
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    Tensor out = Tensor::scalar(total);
    if (tracks(tape, {&x})) {
        out.set_requires_grad(true);
        tape.record({x}, out, [x, out]() mutable {
            const double g = out.grad()[0];
            for (double& gx : x.grad_buffer()) gx += g;
        });
    }
    return out;
}

Tensor concat_channels(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: nothing to concatenate");
    const Tensor& first = parts.front();
    require_rank(first, 4, "concat_channels", "part 0");
    const std::size_t n = first.dim(0), h = first.dim(2), w = first.dim(3);
    std::size_t channels = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const Tensor& t = parts[i];
        require_rank(t, 4, "concat_channels", "part");
        if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
            throw ShapeError("concat_channels: part " + std::to_string(i) + " has shape " + to_string(t.shape()) +
                             ", expected [" + std::to_string(n) + ",*," + std::to_string(h) + "," +
                             std::to_string(w) + "]");
        }
        channels += t.dim(1);
    }
    Tensor out(Shape{n, channels, h, w});
    const std::size_t hw = h * w;
    auto ov = out.values();
    for (std::size_t s = 0; s < n; ++s) {
        std::size_t offset = s * channels * hw;
        for (const Tensor& t : parts) {
            const std::size_t block = t.dim(1) * hw;
            std::copy_n(t.values().begin() + s * block, block, ov.begin() + offset);
            offset += block;
        }
    }
    bool any = false;
    for (const Tensor& t : parts) any = any || (tape.recording() && t.requires_grad());
    if (any) {
        out.set_requires_grad(true);
        std::vector<Tensor> inputs(parts.begin(), parts.end());
        tape.record(inputs, out, [inputs, out, n, channels, hw]() mutable {
            auto g = out.grad();
            for (std::size_t s = 0; s < n; ++s) {
                std::size_t offset = s * channels * hw;
                for (Tensor& t : inputs) {
                    const std::size_t block = t.dim(1) * hw;
                    if (t.requires_grad()) {
                        auto gt = t.grad_buffer();
                        for (std::size_t i = 0; i < block; ++i) gt[s * block + i] += g[offset + i];
                    }
                    offset += block;
                }
            }
        });
    }
    return out;
}

Tensor minmax_normalize(Tape& tape, const Tensor& x) {
    require_rank(x, 4, "minmax_normalize", "input");
    const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    struct PlaneStats {
        std::size_t argmin, argmax;
        double lo, range;
        bool degenerate;
    };
    auto stats = std::make_shared<std::vector<PlaneStats>>(planes);
    Tensor out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    std::uint64_t sig = 0;
    for (std::size_t p = 0; p < planes; ++p) {
        const double* v = xv.data() + p * hw;
        std::size_t lo = 0, hi = 0;
        for (std::size_t i = 1; i < hw; ++i) {
            if (v[i] < v[lo]) lo = i;
            if (v[i] > v[hi]) hi = i;
        }
        const double range = v[hi] - v[lo];
        const bool degenerate = !(range > 1e-12 * std::max(1.0, std::abs(v[hi])));
        (*stats)[p] = {lo, hi, v[lo], range, degenerate};
        for (std::size_t i = 0; i < hw; ++i) ov[p * hw + i] = degenerate ? 1.0 : (v[i] - v[lo]) / range;
        sig = sig * 1000003 + lo * 7919 + hi + (degenerate ? 1 : 0);
    }
    tape.mix_signature(sig);
    if (tracks(tape, {&x})) {
        out.set_requires_grad(true);
        tape.record({x}, out, [x, out, stats, planes, hw]() mutable {
            auto g = out.grad();
            auto xv = x.values();
            auto gx = x.grad_buffer();
            for (std::size_t p = 0; p < planes; ++p) {
                const PlaneStats& s = (*stats)[p];
                if (s.degenerate) continue;
                const double hi = s.lo + s.range;
                const double r2 = s.range * s.range;
                double to_min = 0.0, to_max = 0.0;
                for (std::size_t i = 0; i < hw; ++i) {
                    const double gi = g[p * hw + i];
                    const double xi = xv[p * hw + i];
                    gx[p * hw + i] += gi / s.range;
                    to_min += gi * (xi - hi) / r2;
                    to_max -= gi * (xi - s.lo) / r2;
                }
                gx[p * hw + s.argmin] += to_min;
                gx[p * hw + s.argmax] += to_max;
            }
        });
    }
    return out;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets) {
    require_rank(logits, 4, "softmax_cross_entropy", "logits");
    const std::size_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    if (targets.size() != n * hw) {
        throw ShapeError("softmax_cross_entropy: expected " + std::to_string(n * hw) + " targets, got " +
                         std::to_string(targets.size()));
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= c) {
            throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(t) + " outside [0, " +
                                    std::to_string(c - 1) + "]");
        }
    }
    const std::size_t positions = n * hw;
    auto probs = std::make_shared<std::vector<double>>(logits.size());
    auto lv = logits.values();
    double loss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t q = 0; q < hw; ++q) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < c; ++k) mx = std::max(mx, lv[(s * c + k) * hw + q]);
            double z = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                const double e = std::exp(lv[(s * c + k) * hw + q] - mx);
                (*probs)[(s * c + k) * hw + q] = e;
                z += e;
            }
            for (std::size_t k = 0; k < c; ++k) (*probs)[(s * c + k) * hw + q] /= z;
            const int t = targets[s * hw + q];
            loss += -(lv[(s * c + t) * hw + q] - mx - std::log(z));
        }
    }
    Tensor out = Tensor::scalar(loss / static_cast<double>(positions));
    if (tracks(tape, {&logits})) {
        out.set_requires_grad(true);
        std::vector<int> tcopy(targets.begin(), targets.end());
        tape.record({logits}, out, [logits, out, probs, tcopy, n, c, hw, positions]() mutable {
            const double g = out.grad()[0] / static_cast<double>(positions);
            auto gl = logits.grad_buffer();
            for (std::size_t s = 0; s < n; ++s) {
                for (std::size_t q = 0; q < hw; ++q) {
                    const int t = tcopy[s * hw + q];
                    for (std::size_t k = 0; k < c; ++k) {
                        const std::size_t i = (s * c + k) * hw + q;
                        gl[i] += g * ((*probs)[i] - (static_cast<int>(k) == t ? 1.0 : 0.0));
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace gafnau::ops
