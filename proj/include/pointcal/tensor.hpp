#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pointcal {

// Dense row-major 2-D array of doubles participating in a dynamically built
// reverse-mode differentiation graph. A Tensor is a cheap handle onto a graph
// node; the graph lives as long as some handle (typically the loss) keeps it
// alive and is rebuilt from scratch on every forward pass.
//
// Scalars are 1x1. All values are checked finite on creation; NaN or Inf
// anywhere raises NumericError.
class Tensor {
  public:
    Tensor() = default;

    // Leaf without gradient (input data, constants).
    static Tensor constant(int rows, int cols, std::vector<double> values);
    // Leaf with gradient accumulator (trainable weights).
    static Tensor parameter(int rows, int cols, std::vector<double> values,
                            std::string name = "");
    static Tensor zeros(int rows, int cols);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    int rows() const;
    int cols() const;
    int size() const { return rows() * cols(); }

    double at(int i, int j) const;
    double item() const;  // value of a 1x1 tensor
    std::span<const double> values() const;
    std::span<const double> grad() const;
    double grad_at(int i, int j) const;

    bool requires_grad() const;
    const std::string& name() const;

    // In-place mutation of leaf values (optimizer updates, checkpoint loads,
    // finite-difference perturbation). Must not be called on a tensor that is
    // part of a live graph other than as a leaf.
    std::vector<double>& mutable_values();
    void zero_grad();
    void accumulate_grad(std::span<const double> delta);

    struct Node;
    const std::shared_ptr<Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  private:
    std::shared_ptr<Node> node_;
};

// ---- Differentiable operations -------------------------------------------

// C[i][j] = sum_l A[i][l] * B[l][j].
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise max(x, 0). Gradient at exactly 0 is defined as 0.
Tensor relu(const Tensor& x);

// Elementwise logistic, branch form; outputs clamped into the open (0,1).
Tensor sigmoid(const Tensor& x);

// Per-column mean of an NxC matrix -> 1xC.
Tensor column_mean(const Tensor& f);

// out[i][j] = s[0][j] * f[i][j], s is 1xC.
Tensor scale_columns(const Tensor& f, const Tensor& s);

// out[i][j] = s[i][0] * f[i][j], s is Nx1.
Tensor scale_rows(const Tensor& f, const Tensor& s);

// Elementwise max of same-shape tensors; ties route the gradient to a.
Tensor elementwise_max(const Tensor& a, const Tensor& b);

// Per-column max of an mxC matrix -> 1xC; gradient goes to the first argmax.
Tensor max_over_group(const Tensor& g);

// -log softmax(logits)[label] for 1xK logits, log-sum-exp max-shifted.
Tensor softmax_cross_entropy(const Tensor& logits, int label);

// Plumbing ops the network assembly needs.
Tensor add(const Tensor& a, const Tensor& b);
// out[i][j] = x[i][j] + b[0][j]; the row-broadcast add for bias terms.
Tensor add_rowwise(const Tensor& x, const Tensor& b);
Tensor scale_by(const Tensor& x, double c);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor transpose(const Tensor& x);
Tensor gather_rows(const Tensor& f, std::span<const int> row_ids);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);

// Reverse accumulation from a scalar loss. Grads of leaf tensors accumulate
// across calls (+=); interior node grads are scratch and reset per call.
void backward(const Tensor& loss);

// ---- Finite-difference gradient checking ---------------------------------

struct GradReport {
    struct PerParam {
        std::string name;
        double max_rel_error = 0.0;
        int worst_index = -1;  // flat row-major index within the parameter
    };
    std::vector<PerParam> params;
    double max_rel_error = 0.0;
    std::string worst_param;
    int worst_index = -1;

    bool passes(double tol) const { return max_rel_error < tol; }
};

// Central differences on every element of every parameter against the
// analytic gradients of build_loss(). Relative error uses
// max(|analytic|, |numeric|, 1e-8) as denominator. build_loss must rebuild
// the graph from the parameters' current values on each call.
//
// corrupt_param >= 0 deliberately distorts that parameter's analytic
// gradient before comparison; used to prove the checker itself can fail.
GradReport grad_check(std::span<Tensor> params,
                      const std::function<Tensor()>& build_loss, double eps,
                      int corrupt_param = -1);

}  // namespace pointcal
