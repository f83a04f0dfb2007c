#include "conceptdrive/tape.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

namespace conceptdrive {

namespace {

std::string shape_str(const Tensor& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

// C += A * B, all row-major, ikj order.
void matmul_accum(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t R = a.rows(), K = a.cols(), C = b.cols();
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t k = 0; k < K; ++k) {
            const double aik = pa[i * K + k];
            if (aik == 0.0) continue;
            const double* brow = pb + k * C;
            double* crow = pc + i * C;
            for (std::size_t j = 0; j < C; ++j) crow[j] += aik * brow[j];
        }
}

}  // namespace

const Tape::Node& Tape::node(NodeId id) const {
    if (id >= nodes_.size()) throw ParamError("tape node id out of range");
    return nodes_[id];
}

Tape::Node& Tape::node(NodeId id) {
    if (id >= nodes_.size()) throw ParamError("tape node id out of range");
    return nodes_[id];
}

bool Tape::any_parent_grad(const std::vector<NodeId>& parents) const {
    for (NodeId p : parents)
        if (node(p).requires_grad) return true;
    return false;
}

NodeId Tape::push(Tensor value, std::vector<NodeId> parents, BackwardFn backward) {
    const bool rg = any_parent_grad(parents);
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.requires_grad = rg;
    if (rg) {
        n.grad = Tensor(n.value.rows(), n.value.cols());
        n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.grad = Tensor(n.value.rows(), n.value.cols());
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Tape::constant(Tensor value) { return leaf(std::move(value), false); }

const Tensor& Tape::value(NodeId id) const { return node(id).value; }

const Tensor& Tape::grad(NodeId id) const {
    const Node& n = node(id);
    if (!n.requires_grad) throw ParamError("grad() on a node that does not require gradients");
    return n.grad;
}

Tensor& Tape::grad_mut(NodeId id) {
    Node& n = node(id);
    if (!n.requires_grad) throw ParamError("grad_mut() on a node that does not require gradients");
    return n.grad;
}

bool Tape::requires_grad(NodeId id) const { return node(id).requires_grad; }

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb))
        throw ShapeError("add: " + shape_str(va) + " vs " + shape_str(vb));
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_mut(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb))
        throw ShapeError("sub: " + shape_str(va) + " vs " + shape_str(vb));
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_mut(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb))
        throw ShapeError("mul: " + shape_str(va) + " vs " + shape_str(vb));
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_mut(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
        }
    });
}

NodeId Tape::scale(NodeId a, double s) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return push(std::move(out), {a}, [a, s](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
}

NodeId Tape::square(NodeId a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
    return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * va[i] * g[i];
    });
}

NodeId Tape::sqrt(NodeId a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
    return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (y[i] > 0.0) ga[i] += g[i] / (2.0 * y[i]);
        // y == 0: subgradient 0, nothing accumulated
    });
}

NodeId Tape::gelu(NodeId a) {
    static const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = out[i];
        out[i] = x * 0.5 * (1.0 + std::erf(x * inv_sqrt2));
    }
    return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
        static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        const Tensor& g = t.grad(self);
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = va[i];
            const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            ga[i] += g[i] * (cdf + x * pdf);
        }
    });
}

NodeId Tape::dropout(NodeId a, double rate, SplitMix64* rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ParamError("dropout rate " + std::to_string(rate) + " outside [0, 1)");
    if (rate == 0.0 || rng == nullptr) return a;
    const Tensor& va = value(a);
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask(va.rows(), va.cols());
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = (rng->next_double() >= rate) ? keep_scale : 0.0;
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return push(std::move(out), {a}, [a, mask](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    });
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.cols() != vb.rows())
        throw ShapeError("matmul: " + shape_str(va) + " * " + shape_str(vb));
    Tensor out(va.rows(), vb.cols());
    matmul_accum(va, vb, out);
    return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        if (t.requires_grad(a)) {
            // dA = g * B^T
            Tensor& ga = t.grad_mut(a);
            const std::size_t R = g.rows(), C = g.cols(), K = vb.rows();
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) {
                    const double gij = g.at(i, j);
                    if (gij == 0.0) continue;
                    for (std::size_t k = 0; k < K; ++k) ga.at(i, k) += gij * vb.at(k, j);
                }
        }
        if (t.requires_grad(b)) {
            // dB = A^T * g
            Tensor& gb = t.grad_mut(b);
            const std::size_t R = g.rows(), C = g.cols(), K = va.cols();
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    const double aik = va.at(i, k);
                    if (aik == 0.0) continue;
                    for (std::size_t j = 0; j < C; ++j) gb.at(k, j) += aik * g.at(i, j);
                }
        }
    });
}

NodeId Tape::transpose(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.cols(), va.rows());
    for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t j = 0; j < va.cols(); ++j) out.at(j, i) = va.at(i, j);
    return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga.at(j, i) += g.at(i, j);
    });
}

NodeId Tape::add_row(NodeId m, NodeId row) {
    const Tensor& vm = value(m);
    const Tensor& vr = value(row);
    if (vr.rows() != 1 || vr.cols() != vm.cols())
        throw ShapeError("add_row: " + shape_str(vm) + " + " + shape_str(vr));
    Tensor out = vm;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += vr[j];
    return push(std::move(out), {m, row}, [m, row](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(m)) {
            Tensor& gm = t.grad_mut(m);
            for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        }
        if (t.requires_grad(row)) {
            Tensor& gr = t.grad_mut(row);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g.at(i, j);
        }
    });
}

NodeId Tape::softmax_rows(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.rows(), va.cols());
    for (std::size_t i = 0; i < va.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < va.cols(); ++j) mx = std::max(mx, va.at(i, j));
        if (!(mx > -std::numeric_limits<double>::infinity()))
            throw NumericError("softmax row " + std::to_string(i) + " fully masked");
        double denom = 0.0;
        for (std::size_t j = 0; j < va.cols(); ++j) {
            const double e = std::exp(va.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (std::size_t j = 0; j < va.cols(); ++j) out.at(i, j) /= denom;
    }
    return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j)
                ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor& vx = value(x);
    const Tensor& vg = value(gamma);
    const Tensor& vb = value(beta);
    const std::size_t C = vx.cols();
    if (vg.rows() != 1 || vg.cols() != C || vb.rows() != 1 || vb.cols() != C)
        throw ShapeError("layer_norm: input " + shape_str(vx) + ", gain " + shape_str(vg) +
                         ", bias " + shape_str(vb));
    // keep the normalised rows and per-row 1/sigma for the backward pass
    Tensor norm(vx.rows(), C);
    std::vector<double> inv_sigma(vx.rows());
    Tensor out(vx.rows(), C);
    for (std::size_t i = 0; i < vx.rows(); ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < C; ++j) mean += vx.at(i, j);
        mean /= static_cast<double>(C);
        double var = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            const double d = vx.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(C);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[i] = is;
        for (std::size_t j = 0; j < C; ++j) {
            const double n = (vx.at(i, j) - mean) * is;
            norm.at(i, j) = n;
            out.at(i, j) = n * vg[j] + vb[j];
        }
    }
    return push(std::move(out), {x, gamma, beta},
                [x, gamma, beta, norm, inv_sigma](Tape& t, NodeId self) {
                    const Tensor& g = t.grad(self);
                    const Tensor& vg = t.value(gamma);
                    const std::size_t R = g.rows(), C = g.cols();
                    if (t.requires_grad(beta)) {
                        Tensor& gb = t.grad_mut(beta);
                        for (std::size_t i = 0; i < R; ++i)
                            for (std::size_t j = 0; j < C; ++j) gb[j] += g.at(i, j);
                    }
                    if (t.requires_grad(gamma)) {
                        Tensor& gg = t.grad_mut(gamma);
                        for (std::size_t i = 0; i < R; ++i)
                            for (std::size_t j = 0; j < C; ++j)
                                gg[j] += g.at(i, j) * norm.at(i, j);
                    }
                    if (t.requires_grad(x)) {
                        Tensor& gx = t.grad_mut(x);
                        for (std::size_t i = 0; i < R; ++i) {
                            double mean_dy = 0.0, mean_dyn = 0.0;
                            for (std::size_t j = 0; j < C; ++j) {
                                const double dy = g.at(i, j) * vg[j];
                                mean_dy += dy;
                                mean_dyn += dy * norm.at(i, j);
                            }
                            mean_dy /= static_cast<double>(C);
                            mean_dyn /= static_cast<double>(C);
                            for (std::size_t j = 0; j < C; ++j) {
                                const double dy = g.at(i, j) * vg[j];
                                gx.at(i, j) +=
                                    inv_sigma[i] * (dy - mean_dy - norm.at(i, j) * mean_dyn);
                            }
                        }
                    }
                });
}

NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ParamError("concat_rows of zero parts");
    const std::size_t C = value(parts[0]).cols();
    std::size_t R = 0;
    for (NodeId p : parts) {
        if (value(p).cols() != C) throw ShapeError("concat_rows: column counts differ");
        R += value(p).rows();
    }
    Tensor out(R, C);
    std::size_t r = 0;
    for (NodeId p : parts) {
        const Tensor& v = value(p);
        for (std::size_t i = 0; i < v.rows(); ++i, ++r)
            for (std::size_t j = 0; j < C; ++j) out.at(r, j) = v.at(i, j);
    }
    return push(std::move(out), parts, [parts](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        std::size_t r = 0;
        for (NodeId p : parts) {
            const std::size_t pr = t.value(p).rows();
            if (t.requires_grad(p)) {
                Tensor& gp = t.grad_mut(p);
                for (std::size_t i = 0; i < pr; ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) gp.at(i, j) += g.at(r + i, j);
            }
            r += pr;
        }
    });
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ParamError("concat_cols of zero parts");
    const std::size_t R = value(parts[0]).rows();
    std::size_t C = 0;
    for (NodeId p : parts) {
        if (value(p).rows() != R) throw ShapeError("concat_cols: row counts differ");
        C += value(p).cols();
    }
    Tensor out(R, C);
    std::size_t c = 0;
    for (NodeId p : parts) {
        const Tensor& v = value(p);
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) out.at(i, c + j) = v.at(i, j);
        c += v.cols();
    }
    return push(std::move(out), parts, [parts](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        std::size_t c = 0;
        for (NodeId p : parts) {
            const std::size_t pc = t.value(p).cols();
            if (t.requires_grad(p)) {
                Tensor& gp = t.grad_mut(p);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < pc; ++j) gp.at(i, j) += g.at(i, c + j);
            }
            c += pc;
        }
    });
}

NodeId Tape::slice_rows(NodeId a, std::size_t begin, std::size_t count) {
    const Tensor& va = value(a);
    if (begin + count > va.rows())
        throw ShapeError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") of " + shape_str(va));
    Tensor out(count, va.cols());
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < va.cols(); ++j) out.at(i, j) = va.at(begin + i, j);
    return push(std::move(out), {a}, [a, begin](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga.at(begin + i, j) += g.at(i, j);
    });
}

NodeId Tape::slice_cols(NodeId a, std::size_t begin, std::size_t count) {
    const Tensor& va = value(a);
    if (begin + count > va.cols())
        throw ShapeError("slice_cols [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") of " + shape_str(va));
    Tensor out(va.rows(), count);
    for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) out.at(i, j) = va.at(i, begin + j);
    return push(std::move(out), {a}, [a, begin](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga.at(i, begin + j) += g.at(i, j);
    });
}

NodeId Tape::stack_scalars(const std::vector<NodeId>& scalars) {
    if (scalars.empty()) throw ParamError("stack_scalars of zero parts");
    Tensor out(1, scalars.size());
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        const Tensor& v = value(scalars[i]);
        if (v.rows() != 1 || v.cols() != 1)
            throw ShapeError("stack_scalars: part " + std::to_string(i) + " is " + shape_str(v));
        out[i] = v[0];
    }
    return push(std::move(out), scalars, [scalars](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        for (std::size_t i = 0; i < scalars.size(); ++i)
            if (t.requires_grad(scalars[i])) t.grad_mut(scalars[i])[0] += g[i];
    });
}

NodeId Tape::reshape(NodeId a, std::size_t rows, std::size_t cols) {
    const Tensor& va = value(a);
    if (rows * cols != va.size())
        throw ShapeError("reshape " + shape_str(va) + " to " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    Tensor out(rows, cols, va.storage());
    return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

NodeId Tape::sum(NodeId a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
    return push(Tensor::scalar(s), {a}, [a](Tape& t, NodeId self) {
        const double g = t.grad(self)[0];
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

NodeId Tape::mean(NodeId a) {
    const Tensor& va = value(a);
    if (va.size() == 0) throw ShapeError("mean of an empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
    const double n = static_cast<double>(va.size());
    return push(Tensor::scalar(s / n), {a}, [a, n](Tape& t, NodeId self) {
        const double g = t.grad(self)[0] / n;
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

NodeId Tape::record(Tensor value, std::vector<NodeId> parents, BackwardFn backward) {
    return push(std::move(value), std::move(parents), std::move(backward));
}

void Tape::backward(NodeId loss) {
    const Node& ln = node(loss);
    if (ln.value.rows() != 1 || ln.value.cols() != 1)
        throw ShapeError("backward target must be a scalar node");
    if (!ln.requires_grad)
        throw ParamError("backward target does not depend on any gradient-tracked input");

    // mark the ancestors the sweep actually has to visit
    std::vector<char> needed(nodes_.size(), 0);
    std::vector<NodeId> stack{loss};
    needed[loss] = 1;
    while (!stack.empty()) {
        const NodeId id = stack.back();
        stack.pop_back();
        for (NodeId p : nodes_[id].parents) {
            if (!needed[p] && nodes_[p].requires_grad) {
                needed[p] = 1;
                stack.push_back(p);
            }
        }
    }

    nodes_[loss].grad[0] = 1.0;
    for (NodeId id = loss + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (needed[id] && n.backward) n.backward(*this, id);
    }
}

}  // namespace conceptdrive
