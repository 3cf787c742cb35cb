#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hardy/errors.hpp"
#include "hardy/rng.hpp"
#include "hardy/tensor.hpp"

namespace hardy {

using GradMap = std::map<std::string, Tensor>;
using ParamSet = std::map<std::string, Tensor>;

// Reverse-mode tape over a closed operation set. Nodes are appended in
// topological order, so the backward pass is a single reverse sweep.
// Tensors are values; a Graph owns copies of everything it touches.
class Graph {
public:
    using NodeId = int;

    // Non-differentiable leaf.
    NodeId input(Tensor t) { return add_node(std::move(t), {}, nullptr, false, ""); }

    // Differentiable leaf. The same name always maps to one node.
    NodeId param(const std::string& name, const Tensor& t) {
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end()) return it->second;
        NodeId id = add_node(t, {}, nullptr, true, name);
        param_nodes_[name] = id;
        return id;
    }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) {
            throw ShapeError("matmul: " + A.shape_string() + " by " + B.shape_string());
        }
        const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
        Tensor C = Tensor::zeros({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t r = 0; r < k; ++r) {
                const double av = A.data[i * k + r];
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) C.data[i * n + j] += av * B.data[r * n + j];
            }
        return add_node(std::move(C), {a, b},
                        [m, k, n](Graph& g, const Node& nd) {
                            const Tensor& G = nd.grad;
                            const Tensor& A2 = g.val(nd.parents[0]);
                            const Tensor& B2 = g.val(nd.parents[1]);
                            if (g.wants_grad(nd.parents[0])) {
                                Tensor& dA = g.grad_ref(nd.parents[0]);
                                for (std::size_t i = 0; i < m; ++i)
                                    for (std::size_t j = 0; j < n; ++j) {
                                        const double gv = G.data[i * n + j];
                                        if (gv == 0.0) continue;
                                        for (std::size_t r = 0; r < k; ++r)
                                            dA.data[i * k + r] += gv * B2.data[r * n + j];
                                    }
                            }
                            if (g.wants_grad(nd.parents[1])) {
                                Tensor& dB = g.grad_ref(nd.parents[1]);
                                for (std::size_t i = 0; i < m; ++i)
                                    for (std::size_t r = 0; r < k; ++r) {
                                        const double av = A2.data[i * k + r];
                                        if (av == 0.0) continue;
                                        for (std::size_t j = 0; j < n; ++j)
                                            dB.data[r * n + j] += av * G.data[i * n + j];
                                    }
                            }
                        });
    }

    // Same-shape add, or a rank-1 vector broadcast across the rows of a
    // rank-2 left operand.
    NodeId add(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        if (A.same_shape(B)) {
            Tensor C = A;
            for (std::size_t i = 0; i < C.numel(); ++i) C.data[i] += B.data[i];
            return add_node(std::move(C), {a, b}, [](Graph& g, const Node& nd) {
                for (NodeId p : nd.parents)
                    if (g.wants_grad(p)) {
                        Tensor& dP = g.grad_ref(p);
                        for (std::size_t i = 0; i < dP.numel(); ++i) dP.data[i] += nd.grad.data[i];
                    }
            });
        }
        if (A.rank() == 2 && B.rank() == 1 && A.cols() == B.numel()) {
            Tensor C = A;
            const std::size_t r = A.rows(), c = A.cols();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) C.data[i * c + j] += B.data[j];
            return add_node(std::move(C), {a, b}, [r, c](Graph& g, const Node& nd) {
                if (g.wants_grad(nd.parents[0])) {
                    Tensor& dA = g.grad_ref(nd.parents[0]);
                    for (std::size_t i = 0; i < dA.numel(); ++i) dA.data[i] += nd.grad.data[i];
                }
                if (g.wants_grad(nd.parents[1])) {
                    Tensor& dB = g.grad_ref(nd.parents[1]);
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) dB.data[j] += nd.grad.data[i * c + j];
                }
            });
        }
        throw ShapeError("add: shapes " + A.shape_string() + " and " + B.shape_string() +
                         " are not addable");
    }

    NodeId scale(NodeId a, double c) {
        Tensor C = val(a);
        for (double& x : C.data) x *= c;
        return add_node(std::move(C), {a}, [c](Graph& g, const Node& nd) {
            if (!g.wants_grad(nd.parents[0])) return;
            Tensor& dA = g.grad_ref(nd.parents[0]);
            for (std::size_t i = 0; i < dA.numel(); ++i) dA.data[i] += c * nd.grad.data[i];
        });
    }

    // Concatenation of rank-1 tensors.
    NodeId concat(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw ShapeError("concat: empty part list");
        std::vector<double> out;
        std::vector<std::size_t> offsets;
        for (NodeId p : parts) {
            const Tensor& t = val(p);
            if (t.rank() != 1) throw ShapeError("concat: rank-1 parts required, got " + t.shape_string());
            offsets.push_back(out.size());
            out.insert(out.end(), t.data.begin(), t.data.end());
        }
        return add_node(Tensor::vec(std::move(out)), parts,
                        [offsets](Graph& g, const Node& nd) {
                            for (std::size_t i = 0; i < nd.parents.size(); ++i) {
                                NodeId p = nd.parents[i];
                                if (!g.wants_grad(p)) continue;
                                Tensor& dP = g.grad_ref(p);
                                for (std::size_t j = 0; j < dP.numel(); ++j)
                                    dP.data[j] += nd.grad.data[offsets[i] + j];
                            }
                        });
    }

    NodeId reshape(NodeId a, std::vector<std::size_t> shape) {
        const Tensor& A = val(a);
        if (Tensor::numel_of(shape) != A.numel()) {
            throw ShapeError("reshape: " + A.shape_string() + " to " + Tensor::shape_str(shape));
        }
        Tensor C(std::move(shape), A.data);
        return add_node(std::move(C), {a}, [](Graph& g, const Node& nd) {
            if (!g.wants_grad(nd.parents[0])) return;
            Tensor& dA = g.grad_ref(nd.parents[0]);
            for (std::size_t i = 0; i < dA.numel(); ++i) dA.data[i] += nd.grad.data[i];
        });
    }

    // Mean over the rows of an L x d sequence; result is a d-vector.
    NodeId mean_rows(NodeId a) {
        const Tensor& A = val(a);
        if (A.rank() != 2) throw ShapeError("mean_rows: rank-2 input required, got " + A.shape_string());
        const std::size_t r = A.rows(), c = A.cols();
        Tensor C = Tensor::zeros({c});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) C.data[j] += A.data[i * c + j];
        for (double& x : C.data) x /= static_cast<double>(r);
        return add_node(std::move(C), {a}, [r, c](Graph& g, const Node& nd) {
            if (!g.wants_grad(nd.parents[0])) return;
            Tensor& dA = g.grad_ref(nd.parents[0]);
            const double inv = 1.0 / static_cast<double>(r);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) dA.data[i * c + j] += inv * nd.grad.data[j];
        });
    }

    NodeId relu(NodeId a) {
        Tensor C = val(a);
        for (double& x : C.data) x = x > 0.0 ? x : 0.0;
        return add_node(std::move(C), {a}, [](Graph& g, const Node& nd) {
            if (!g.wants_grad(nd.parents[0])) return;
            const Tensor& A = g.val(nd.parents[0]);
            Tensor& dA = g.grad_ref(nd.parents[0]);
            for (std::size_t i = 0; i < dA.numel(); ++i)
                if (A.data[i] > 0.0) dA.data[i] += nd.grad.data[i];
        });
    }

    // Exact GELU: x * Phi(x) with the Gaussian CDF.
    NodeId gelu(NodeId a) {
        Tensor C = val(a);
        for (double& x : C.data) x = x * norm_cdf(x);
        return add_node(std::move(C), {a}, [](Graph& g, const Node& nd) {
            if (!g.wants_grad(nd.parents[0])) return;
            const Tensor& A = g.val(nd.parents[0]);
            Tensor& dA = g.grad_ref(nd.parents[0]);
            for (std::size_t i = 0; i < dA.numel(); ++i) {
                const double x = A.data[i];
                const double d = norm_cdf(x) + x * norm_pdf(x);
                dA.data[i] += d * nd.grad.data[i];
            }
        });
    }

    // Rank-1: softmax of the whole vector. Rank-2: row-wise softmax.
    NodeId softmax(NodeId a) {
        const Tensor& A = val(a);
        if (A.numel() == 0) throw ShapeError("softmax: empty input");
        std::size_t rows = 1, cols = A.numel();
        if (A.rank() == 2) {
            rows = A.rows();
            cols = A.cols();
        } else if (A.rank() != 1) {
            throw ShapeError("softmax: rank-1 or rank-2 input required, got " + A.shape_string());
        }
        Tensor C = A;
        for (std::size_t i = 0; i < rows; ++i) softmax_row(&C.data[i * cols], cols);
        return add_node(std::move(C), {a}, [rows, cols](Graph& g, const Node& nd) {
            if (!g.wants_grad(nd.parents[0])) return;
            Tensor& dA = g.grad_ref(nd.parents[0]);
            for (std::size_t i = 0; i < rows; ++i) {
                const double* p = &nd.value.data[i * cols];
                const double* gr = &nd.grad.data[i * cols];
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dot += p[j] * gr[j];
                for (std::size_t j = 0; j < cols; ++j) dA.data[i * cols + j] += p[j] * (gr[j] - dot);
            }
        });
    }

    // Inverted dropout; the mask is drawn from the supplied Rng at forward
    // time, so identical seeds reproduce identical masks.
    NodeId dropout(NodeId a, double rate, Rng& rng) {
        if (rate < 0.0 || rate >= 1.0) throw DomainError("dropout rate must be in [0,1)");
        Tensor C = val(a);
        std::vector<double> mask(C.numel());
        const double keep = 1.0 - rate;
        for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = rng.uniform() >= rate ? 1.0 / keep : 0.0;
            C.data[i] *= mask[i];
        }
        return add_node(std::move(C), {a}, [mask = std::move(mask)](Graph& g, const Node& nd) {
            if (!g.wants_grad(nd.parents[0])) return;
            Tensor& dA = g.grad_ref(nd.parents[0]);
            for (std::size_t i = 0; i < dA.numel(); ++i) dA.data[i] += mask[i] * nd.grad.data[i];
        });
    }

    // Mean squared error; differentiable in both arguments.
    NodeId mse(NodeId x, NodeId xhat) {
        const Tensor& A = val(x);
        const Tensor& B = val(xhat);
        require_same_shape(A, B, "mse");
        const std::size_t n = A.numel();
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = A.data[i] - B.data[i];
            acc += d * d;
        }
        return add_node(Tensor::scalar(acc / static_cast<double>(n)), {x, xhat},
                        [n](Graph& g, const Node& nd) {
                            const double gv = nd.grad.data[0] * 2.0 / static_cast<double>(n);
                            const Tensor& A2 = g.val(nd.parents[0]);
                            const Tensor& B2 = g.val(nd.parents[1]);
                            if (g.wants_grad(nd.parents[0])) {
                                Tensor& dA = g.grad_ref(nd.parents[0]);
                                for (std::size_t i = 0; i < n; ++i)
                                    dA.data[i] += gv * (A2.data[i] - B2.data[i]);
                            }
                            if (g.wants_grad(nd.parents[1])) {
                                Tensor& dB = g.grad_ref(nd.parents[1]);
                                for (std::size_t i = 0; i < n; ++i)
                                    dB.data[i] -= gv * (A2.data[i] - B2.data[i]);
                            }
                        });
    }

    // -log softmax(logits)[label], computed in log space.
    NodeId cross_entropy(NodeId logits, std::size_t label) {
        const Tensor& A = val(logits);
        if (A.rank() != 1) throw ShapeError("cross_entropy: rank-1 logits required, got " + A.shape_string());
        if (label >= A.numel())
            throw DomainError("cross_entropy: label " + std::to_string(label) +
                              " out of range for " + std::to_string(A.numel()) + " classes");
        double mx = A.data[0];
        for (double v : A.data) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : A.data) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        return add_node(Tensor::scalar(lse - A.data[label]), {logits},
                        [label, lse](Graph& g, const Node& nd) {
                            if (!g.wants_grad(nd.parents[0])) return;
                            const Tensor& A2 = g.val(nd.parents[0]);
                            Tensor& dA = g.grad_ref(nd.parents[0]);
                            const double gv = nd.grad.data[0];
                            for (std::size_t i = 0; i < A2.numel(); ++i) {
                                double p = std::exp(A2.data[i] - lse);
                                dA.data[i] += gv * (p - (i == label ? 1.0 : 0.0));
                            }
                        });
    }

    NodeId transpose(NodeId a) {
        const Tensor& A = val(a);
        if (A.rank() != 2) throw ShapeError("transpose: rank-2 input required, got " + A.shape_string());
        const std::size_t r = A.rows(), c = A.cols();
        Tensor C = Tensor::zeros({c, r});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) C.data[j * r + i] = A.data[i * c + j];
        return add_node(std::move(C), {a}, [r, c](Graph& g, const Node& nd) {
            if (!g.wants_grad(nd.parents[0])) return;
            Tensor& dA = g.grad_ref(nd.parents[0]);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) dA.data[i * c + j] += nd.grad.data[j * r + i];
        });
    }

    // Reverse sweep from a scalar root. Returns one gradient per named
    // parameter leaf; leaves the loss never touched get zero tensors.
    GradMap backward(NodeId loss) {
        if (backward_done_) throw ContractError("backward called twice on one graph");
        if (!val(loss).is_scalar()) {
            throw ContractError("backward root must be scalar, got " + val(loss).shape_string());
        }
        backward_done_ = true;
        for (Node& n : nodes_) n.grad = Tensor();
        nodes_[loss].grad = Tensor::scalar(1.0);
        for (int id = loss; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.requires_grad || n.grad.numel() == 0) continue;
            if (n.backprop) n.backprop(*this, n);
        }
        GradMap out;
        for (const auto& [name, id] : param_nodes_) {
            const Node& n = nodes_[id];
            out[name] = n.grad.numel() ? n.grad : Tensor::zeros(n.value.shape);
        }
        return out;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<NodeId> parents;
        std::function<void(Graph&, const Node&)> backprop;
        bool requires_grad = false;
        std::string name;
    };

    static double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }
    static double norm_pdf(double x) {
        return 0.39894228040143267794 * std::exp(-0.5 * x * x);
    }

    static void softmax_row(double* v, std::size_t n) {
        double mx = v[0];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = std::exp(v[i] - mx);
            sum += v[i];
        }
        for (std::size_t i = 0; i < n; ++i) v[i] /= sum;
    }

    const Tensor& val(NodeId id) const { return nodes_[id].value; }

    bool wants_grad(NodeId id) const { return nodes_[id].requires_grad; }

    Tensor& grad_ref(NodeId id) {
        Node& n = nodes_[id];
        if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape);
        return n.grad;
    }

    NodeId add_node(Tensor value, std::vector<NodeId> parents,
                    std::function<void(Graph&, const Node&)> backprop, bool force_grad = false,
                    std::string name = "") {
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.backprop = std::move(backprop);
        n.name = std::move(name);
        n.requires_grad = force_grad;
        for (NodeId p : n.parents)
            if (nodes_[p].requires_grad) n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> param_nodes_;
    bool backward_done_ = false;
};

}  // namespace hardy
