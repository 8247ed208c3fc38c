#include "pointcal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "pointcal/errors.hpp"

namespace pointcal {

struct Tensor::Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    std::vector<double> grad;  // same size as data once touched
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // reads grad, accumulates into parents

    bool is_leaf() const { return parents.empty(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

namespace {

using Node = Tensor::Node;
using NodePtr = std::shared_ptr<Node>;

void check_finite(std::span<const double> values, const char* where) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value in ") + where);
        }
    }
}

NodePtr make_node(int rows, int cols, std::vector<double> data,
                  std::vector<NodePtr> parents, const char* op) {
    if (rows <= 0 || cols <= 0) {
        throw ShapeError(std::string(op) + ": dimensions must be positive");
    }
    if (static_cast<size_t>(rows) * cols != data.size()) {
        throw ShapeError(std::string(op) + ": data length does not match shape");
    }
    check_finite(data, op);
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->data = std::move(data);
    for (auto& p : parents) {
        if (p->requires_grad) n->requires_grad = true;
    }
    n->parents = std::move(parents);
    return n;
}

// Accumulate into a parent only when it takes part in differentiation.
bool wants_grad(Node& p) {
    if (!p.requires_grad) return false;
    p.ensure_grad();
    return true;
}

std::string shape_str(const Node& n) {
    return std::to_string(n.rows) + "x" + std::to_string(n.cols);
}

}  // namespace

// ---- Tensor handle --------------------------------------------------------

Tensor Tensor::constant(int rows, int cols, std::vector<double> values) {
    return Tensor(make_node(rows, cols, std::move(values), {}, "constant"));
}

Tensor Tensor::parameter(int rows, int cols, std::vector<double> values,
                         std::string name) {
    auto n = make_node(rows, cols, std::move(values), {}, "parameter");
    n->requires_grad = true;
    n->name = std::move(name);
    n->ensure_grad();
    return Tensor(n);
}

Tensor Tensor::zeros(int rows, int cols) {
    return constant(rows, cols, std::vector<double>(static_cast<size_t>(rows) * cols, 0.0));
}

Tensor Tensor::scalar(double value) { return constant(1, 1, {value}); }

int Tensor::rows() const { return node_ ? node_->rows : 0; }
int Tensor::cols() const { return node_ ? node_->cols : 0; }

double Tensor::at(int i, int j) const {
    return node_->data[static_cast<size_t>(i) * node_->cols + j];
}

double Tensor::item() const {
    if (rows() != 1 || cols() != 1) {
        throw ShapeError("item(): tensor is " + shape_str(*node_) + ", not scalar");
    }
    return node_->data[0];
}

std::span<const double> Tensor::values() const { return node_->data; }

std::span<const double> Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

double Tensor::grad_at(int i, int j) const {
    node_->ensure_grad();
    return node_->grad[static_cast<size_t>(i) * node_->cols + j];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::string& Tensor::name() const { return node_->name; }

std::vector<double>& Tensor::mutable_values() { return node_->data; }

void Tensor::zero_grad() {
    node_->grad.assign(node_->data.size(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> delta) {
    node_->ensure_grad();
    if (delta.size() != node_->grad.size()) {
        throw ShapeError("accumulate_grad: size mismatch");
    }
    for (size_t i = 0; i < delta.size(); ++i) node_->grad[i] += delta[i];
}

// ---- Operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& an = *a.node();
    const auto& bn = *b.node();
    if (an.cols != bn.rows) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(an) +
                         " times " + shape_str(bn));
    }
    const int m = an.rows, k = an.cols, n = bn.cols;
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int l = 0; l < k; ++l) {
            const double ail = an.data[static_cast<size_t>(i) * k + l];
            const double* brow = &bn.data[static_cast<size_t>(l) * n];
            double* crow = &out[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) crow[j] += ail * brow[j];
        }
    }
    auto node = make_node(m, n, std::move(out), {a.node(), b.node()}, "matmul");
    node->backprop = [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (wants_grad(pa)) {  // dA += dC * B^T
            for (int i = 0; i < m; ++i) {
                for (int l = 0; l < k; ++l) {
                    double acc = 0.0;
                    const double* drow = &self.grad[static_cast<size_t>(i) * n];
                    const double* brow = &pb.data[static_cast<size_t>(l) * n];
                    for (int j = 0; j < n; ++j) acc += drow[j] * brow[j];
                    pa.grad[static_cast<size_t>(i) * k + l] += acc;
                }
            }
        }
        if (wants_grad(pb)) {  // dB += A^T * dC
            for (int i = 0; i < m; ++i) {
                const double* drow = &self.grad[static_cast<size_t>(i) * n];
                for (int l = 0; l < k; ++l) {
                    const double ail = pa.data[static_cast<size_t>(i) * k + l];
                    double* grow = &pb.grad[static_cast<size_t>(l) * n];
                    for (int j = 0; j < n; ++j) grow[j] += ail * drow[j];
                }
            }
        }
    };
    return Tensor(node);
}

Tensor relu(const Tensor& x) {
    const auto& xn = *x.node();
    std::vector<double> out(xn.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(xn.data[i], 0.0);
    auto node = make_node(xn.rows, xn.cols, std::move(out), {x.node()}, "relu");
    node->backprop = [](Node& self) {
        Node& px = *self.parents[0];
        if (!wants_grad(px)) return;
        for (size_t i = 0; i < self.grad.size(); ++i) {
            if (px.data[i] > 0.0) px.grad[i] += self.grad[i];
        }
    };
    return Tensor(node);
}

Tensor sigmoid(const Tensor& x) {
    const auto& xn = *x.node();
    // Smallest/largest representable values inside the open interval (0,1).
    const double lo = std::numeric_limits<double>::min();
    const double hi = std::nextafter(1.0, 0.0);
    std::vector<double> out(xn.data.size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double v = xn.data[i];
        double s;
        if (v >= 0.0) {
            s = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            s = e / (1.0 + e);
        }
        out[i] = std::clamp(s, lo, hi);
    }
    auto node = make_node(xn.rows, xn.cols, std::move(out), {x.node()}, "sigmoid");
    node->backprop = [](Node& self) {
        Node& px = *self.parents[0];
        if (!wants_grad(px)) return;
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const double s = self.data[i];
            px.grad[i] += self.grad[i] * s * (1.0 - s);
        }
    };
    return Tensor(node);
}

Tensor column_mean(const Tensor& f) {
    const auto& fn = *f.node();
    if (fn.rows < 1) throw ShapeError("column_mean: empty input");
    const int n = fn.rows, c = fn.cols;
    std::vector<double> out(c, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) out[j] += fn.data[static_cast<size_t>(i) * c + j];
    }
    for (int j = 0; j < c; ++j) out[j] /= n;
    auto node = make_node(1, c, std::move(out), {f.node()}, "column_mean");
    node->backprop = [n, c](Node& self) {
        Node& pf = *self.parents[0];
        if (!wants_grad(pf)) return;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < c; ++j) {
                pf.grad[static_cast<size_t>(i) * c + j] += self.grad[j] / n;
            }
        }
    };
    return Tensor(node);
}

Tensor scale_columns(const Tensor& f, const Tensor& s) {
    const auto& fn = *f.node();
    const auto& sn = *s.node();
    if (sn.rows != 1 || sn.cols != fn.cols) {
        throw ShapeError("scale_columns: gate shape " + shape_str(sn) +
                         " does not match feature width of " + shape_str(fn));
    }
    const int n = fn.rows, c = fn.cols;
    std::vector<double> out(fn.data.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            out[static_cast<size_t>(i) * c + j] =
                sn.data[j] * fn.data[static_cast<size_t>(i) * c + j];
        }
    }
    auto node = make_node(n, c, std::move(out), {f.node(), s.node()}, "scale_columns");
    node->backprop = [n, c](Node& self) {
        Node& pf = *self.parents[0];
        Node& ps = *self.parents[1];
        if (wants_grad(pf)) {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < c; ++j) {
                    pf.grad[static_cast<size_t>(i) * c + j] +=
                        self.grad[static_cast<size_t>(i) * c + j] * ps.data[j];
                }
            }
        }
        if (wants_grad(ps)) {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < c; ++j) {
                    ps.grad[j] += self.grad[static_cast<size_t>(i) * c + j] *
                                  pf.data[static_cast<size_t>(i) * c + j];
                }
            }
        }
    };
    return Tensor(node);
}

Tensor scale_rows(const Tensor& f, const Tensor& s) {
    const auto& fn = *f.node();
    const auto& sn = *s.node();
    if (sn.cols != 1 || sn.rows != fn.rows) {
        throw ShapeError("scale_rows: gate shape " + shape_str(sn) +
                         " does not match feature height of " + shape_str(fn));
    }
    const int n = fn.rows, c = fn.cols;
    std::vector<double> out(fn.data.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            out[static_cast<size_t>(i) * c + j] =
                sn.data[i] * fn.data[static_cast<size_t>(i) * c + j];
        }
    }
    auto node = make_node(n, c, std::move(out), {f.node(), s.node()}, "scale_rows");
    node->backprop = [n, c](Node& self) {
        Node& pf = *self.parents[0];
        Node& ps = *self.parents[1];
        if (wants_grad(pf)) {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < c; ++j) {
                    pf.grad[static_cast<size_t>(i) * c + j] +=
                        self.grad[static_cast<size_t>(i) * c + j] * ps.data[i];
                }
            }
        }
        if (wants_grad(ps)) {
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int j = 0; j < c; ++j) {
                    acc += self.grad[static_cast<size_t>(i) * c + j] *
                           pf.data[static_cast<size_t>(i) * c + j];
                }
                ps.grad[i] += acc;
            }
        }
    };
    return Tensor(node);
}

Tensor elementwise_max(const Tensor& a, const Tensor& b) {
    const auto& an = *a.node();
    const auto& bn = *b.node();
    if (an.rows != bn.rows || an.cols != bn.cols) {
        throw ShapeError("elementwise_max: shapes differ, " + shape_str(an) +
                         " vs " + shape_str(bn));
    }
    std::vector<double> out(an.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(an.data[i], bn.data[i]);
    auto node =
        make_node(an.rows, an.cols, std::move(out), {a.node(), b.node()}, "elementwise_max");
    node->backprop = [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const bool ga = wants_grad(pa);
        const bool gb = wants_grad(pb);
        for (size_t i = 0; i < self.grad.size(); ++i) {
            // Exact ties go to the first operand.
            if (pa.data[i] >= pb.data[i]) {
                if (ga) pa.grad[i] += self.grad[i];
            } else if (gb) {
                pb.grad[i] += self.grad[i];
            }
        }
    };
    return Tensor(node);
}

Tensor max_over_group(const Tensor& g) {
    const auto& gn = *g.node();
    if (gn.rows < 1) throw ShapeError("max_over_group: empty group");
    const int m = gn.rows, c = gn.cols;
    std::vector<double> out(c);
    for (int j = 0; j < c; ++j) {
        double best = gn.data[j];
        for (int i = 1; i < m; ++i) {
            best = std::max(best, gn.data[static_cast<size_t>(i) * c + j]);
        }
        out[j] = best;
    }
    auto node = make_node(1, c, std::move(out), {g.node()}, "max_over_group");
    node->backprop = [m, c](Node& self) {
        Node& pg = *self.parents[0];
        if (!wants_grad(pg)) return;
        for (int j = 0; j < c; ++j) {
            int arg = 0;
            double best = pg.data[j];
            for (int i = 1; i < m; ++i) {
                const double v = pg.data[static_cast<size_t>(i) * c + j];
                if (v > best) {
                    best = v;
                    arg = i;
                }
            }
            pg.grad[static_cast<size_t>(arg) * c + j] += self.grad[j];
        }
    };
    return Tensor(node);
}

Tensor softmax_cross_entropy(const Tensor& logits, int label) {
    const auto& ln = *logits.node();
    if (ln.rows != 1) throw ShapeError("softmax_cross_entropy: logits must be 1xK");
    const int k = ln.cols;
    if (label < 0 || label >= k) {
        throw ValidationError("softmax_cross_entropy: label " + std::to_string(label) +
                              " out of range for " + std::to_string(k) + " classes");
    }
    const double shift = *std::max_element(ln.data.begin(), ln.data.end());
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(ln.data[j] - shift);
    const double loss = std::log(sum) + shift - ln.data[label];
    auto node = make_node(1, 1, {loss}, {logits.node()}, "softmax_cross_entropy");
    node->backprop = [k, label, shift, sum](Node& self) {
        Node& pl = *self.parents[0];
        if (!wants_grad(pl)) return;
        const double d = self.grad[0];
        for (int j = 0; j < k; ++j) {
            const double soft = std::exp(pl.data[j] - shift) / sum;
            pl.grad[j] += d * (soft - (j == label ? 1.0 : 0.0));
        }
    };
    return Tensor(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
    const auto& an = *a.node();
    const auto& bn = *b.node();
    if (an.rows != bn.rows || an.cols != bn.cols) {
        throw ShapeError("add: shapes differ, " + shape_str(an) + " vs " + shape_str(bn));
    }
    std::vector<double> out(an.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = an.data[i] + bn.data[i];
    auto node = make_node(an.rows, an.cols, std::move(out), {a.node(), b.node()}, "add");
    node->backprop = [](Node& self) {
        for (auto& p : self.parents) {
            if (!wants_grad(*p)) continue;
            for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    };
    return Tensor(node);
}

Tensor add_rowwise(const Tensor& x, const Tensor& b) {
    const auto& xn = *x.node();
    const auto& bn = *b.node();
    if (bn.rows != 1 || bn.cols != xn.cols) {
        throw ShapeError("add_rowwise: bias shape " + shape_str(bn) +
                         " does not match feature width of " + shape_str(xn));
    }
    const int n = xn.rows, c = xn.cols;
    std::vector<double> out(xn.data.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            out[static_cast<size_t>(i) * c + j] =
                xn.data[static_cast<size_t>(i) * c + j] + bn.data[j];
        }
    }
    auto node = make_node(n, c, std::move(out), {x.node(), b.node()}, "add_rowwise");
    node->backprop = [n, c](Node& self) {
        Node& px = *self.parents[0];
        Node& pb = *self.parents[1];
        if (wants_grad(px)) {
            for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
        }
        if (wants_grad(pb)) {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < c; ++j) {
                    pb.grad[j] += self.grad[static_cast<size_t>(i) * c + j];
                }
            }
        }
    };
    return Tensor(node);
}

Tensor scale_by(const Tensor& x, double c) {
    const auto& xn = *x.node();
    if (!std::isfinite(c)) throw NumericError("scale_by: non-finite factor");
    std::vector<double> out(xn.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = c * xn.data[i];
    auto node = make_node(xn.rows, xn.cols, std::move(out), {x.node()}, "scale_by");
    node->backprop = [c](Node& self) {
        Node& px = *self.parents[0];
        if (!wants_grad(px)) return;
        for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += c * self.grad[i];
    };
    return Tensor(node);
}

Tensor exp(const Tensor& x) {
    const auto& xn = *x.node();
    std::vector<double> out(xn.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xn.data[i]);
    auto node = make_node(xn.rows, xn.cols, std::move(out), {x.node()}, "exp");
    node->backprop = [](Node& self) {
        Node& px = *self.parents[0];
        if (!wants_grad(px)) return;
        for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i] * self.data[i];
    };
    return Tensor(node);
}

Tensor log(const Tensor& x) {
    const auto& xn = *x.node();
    std::vector<double> out(xn.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(xn.data[i]);
    auto node = make_node(xn.rows, xn.cols, std::move(out), {x.node()}, "log");
    node->backprop = [](Node& self) {
        Node& px = *self.parents[0];
        if (!wants_grad(px)) return;
        for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i] / px.data[i];
    };
    return Tensor(node);
}

Tensor transpose(const Tensor& x) {
    const auto& xn = *x.node();
    const int r = xn.rows, c = xn.cols;
    std::vector<double> out(xn.data.size());
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
            out[static_cast<size_t>(j) * r + i] = xn.data[static_cast<size_t>(i) * c + j];
        }
    }
    auto node = make_node(c, r, std::move(out), {x.node()}, "transpose");
    node->backprop = [r, c](Node& self) {
        Node& px = *self.parents[0];
        if (!wants_grad(px)) return;
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                px.grad[static_cast<size_t>(i) * c + j] +=
                    self.grad[static_cast<size_t>(j) * r + i];
            }
        }
    };
    return Tensor(node);
}

Tensor gather_rows(const Tensor& f, std::span<const int> row_ids) {
    const auto& fn = *f.node();
    if (row_ids.empty()) throw ShapeError("gather_rows: empty index list");
    for (int id : row_ids) {
        if (id < 0 || id >= fn.rows) {
            throw ValidationError("gather_rows: row index " + std::to_string(id) +
                                  " out of range for " + std::to_string(fn.rows) + " rows");
        }
    }
    const int c = fn.cols;
    const int m = static_cast<int>(row_ids.size());
    std::vector<double> out(static_cast<size_t>(m) * c);
    for (int t = 0; t < m; ++t) {
        const double* src = &fn.data[static_cast<size_t>(row_ids[t]) * c];
        std::copy(src, src + c, &out[static_cast<size_t>(t) * c]);
    }
    std::vector<int> ids(row_ids.begin(), row_ids.end());
    auto node = make_node(m, c, std::move(out), {f.node()}, "gather_rows");
    node->backprop = [ids = std::move(ids), c](Node& self) {
        Node& pf = *self.parents[0];
        if (!wants_grad(pf)) return;
        for (size_t t = 0; t < ids.size(); ++t) {
            double* dst = &pf.grad[static_cast<size_t>(ids[t]) * c];
            const double* src = &self.grad[t * c];
            for (int j = 0; j < c; ++j) dst[j] += src[j];
        }
    };
    return Tensor(node);
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const int c = parts[0].cols();
    int total = 0;
    std::vector<NodePtr> parents;
    parents.reserve(parts.size());
    for (const auto& p : parts) {
        if (p.cols() != c) {
            throw ShapeError("concat_rows: width mismatch, " + std::to_string(p.cols()) +
                             " vs " + std::to_string(c));
        }
        total += p.rows();
        parents.push_back(p.node());
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(total) * c);
    for (const auto& p : parts) {
        auto v = p.values();
        out.insert(out.end(), v.begin(), v.end());
    }
    auto node = make_node(total, c, std::move(out), std::move(parents), "concat_rows");
    node->backprop = [](Node& self) {
        size_t offset = 0;
        for (auto& p : self.parents) {
            const size_t len = p->data.size();
            if (wants_grad(*p)) {
                for (size_t i = 0; i < len; ++i) p->grad[i] += self.grad[offset + i];
            }
            offset += len;
        }
    };
    return Tensor(node);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    const auto& an = *a.node();
    const auto& bn = *b.node();
    if (an.rows != bn.rows) {
        throw ShapeError("concat_cols: row counts differ, " + shape_str(an) + " vs " +
                         shape_str(bn));
    }
    const int r = an.rows, ca = an.cols, cb = bn.cols;
    std::vector<double> out(static_cast<size_t>(r) * (ca + cb));
    for (int i = 0; i < r; ++i) {
        std::copy(&an.data[static_cast<size_t>(i) * ca], &an.data[static_cast<size_t>(i) * ca] + ca,
                  &out[static_cast<size_t>(i) * (ca + cb)]);
        std::copy(&bn.data[static_cast<size_t>(i) * cb], &bn.data[static_cast<size_t>(i) * cb] + cb,
                  &out[static_cast<size_t>(i) * (ca + cb) + ca]);
    }
    auto node = make_node(r, ca + cb, std::move(out), {a.node(), b.node()}, "concat_cols");
    node->backprop = [r, ca, cb](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const bool ga = wants_grad(pa);
        const bool gb = wants_grad(pb);
        for (int i = 0; i < r; ++i) {
            const double* src = &self.grad[static_cast<size_t>(i) * (ca + cb)];
            if (ga) {
                for (int j = 0; j < ca; ++j) pa.grad[static_cast<size_t>(i) * ca + j] += src[j];
            }
            if (gb) {
                for (int j = 0; j < cb; ++j)
                    pb.grad[static_cast<size_t>(i) * cb + j] += src[ca + j];
            }
        }
    };
    return Tensor(node);
}

// ---- Reverse pass ---------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
        throw ShapeError("backward: loss must be a scalar tensor");
    }
    // Iterative post-order DFS; graphs can be deep enough that recursion is
    // not safe (one training step chains every cloud in the batch).
    std::vector<Node*> order;
    std::vector<std::pair<Node*, size_t>> stack;
    std::unordered_map<Node*, bool> visited;
    stack.emplace_back(loss.node().get(), 0);
    visited[loss.node().get()] = true;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (!visited[parent]) {
                visited[parent] = true;
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Interior grads are per-call scratch; leaf grads accumulate across calls.
    for (Node* n : order) {
        if (n->is_leaf()) {
            if (n->requires_grad) n->ensure_grad();
        } else {
            n->grad.assign(n->data.size(), 0.0);
        }
    }
    Node* root = loss.node().get();
    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->requires_grad) n->backprop(*n);
    }
}

// ---- Gradient checking ----------------------------------------------------

GradReport grad_check(std::span<Tensor> params,
                      const std::function<Tensor()>& build_loss, double eps,
                      int corrupt_param) {
    if (eps <= 0.0) throw ValidationError("grad_check: eps must be positive");

    for (auto& p : params) p.zero_grad();
    Tensor loss = build_loss();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        auto g = p.grad();
        analytic.emplace_back(g.begin(), g.end());
    }
    if (corrupt_param >= 0 && corrupt_param < static_cast<int>(params.size())) {
        // Sensitivity probe: a checker that cannot flag a wrong gradient is
        // useless, so callers can deliberately break one and expect a report.
        for (double& g : analytic[corrupt_param]) g = 1.5 * g + 0.05;
    }

    GradReport report;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        GradReport::PerParam pp;
        pp.name = p.name().empty() ? ("param" + std::to_string(pi)) : p.name();
        auto& vals = p.mutable_values();
        for (size_t k = 0; k < vals.size(); ++k) {
            const double orig = vals[k];
            vals[k] = orig + eps;
            const double up = build_loss().item();
            vals[k] = orig - eps;
            const double down = build_loss().item();
            vals[k] = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("grad_check: non-finite loss while perturbing " + pp.name);
            }
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[pi][k];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > pp.max_rel_error) {
                pp.max_rel_error = rel;
                pp.worst_index = static_cast<int>(k);
            }
        }
        if (pp.max_rel_error > report.max_rel_error) {
            report.max_rel_error = pp.max_rel_error;
            report.worst_param = pp.name;
            report.worst_index = pp.worst_index;
        }
        report.params.push_back(std::move(pp));
    }
    return report;
}

}  // namespace pointcal
