#pragma once

#include <vector>

#include "core/util.hpp"

namespace fvlab {

/// Reverse-mode autodiff over dense rank<=2 tensors (row-major doubles).
/// Values are computed eagerly as nodes are recorded; backward() fills the
/// gradient slots by a reverse traversal. Gradients of |x| and relu at 0
/// are defined as 0.
class Tape {
public:
    struct Ref {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    // -- leaves ----------------------------------------------------------
    Ref input(int rows, int cols, const std::vector<double>& values, bool needs_grad);
    Ref constant(int rows, int cols, const std::vector<double>& values);
    Ref constant_scalar(double v);

    // -- primitives ------------------------------------------------------
    Ref matmul(Ref a, Ref b);
    /// Elementwise; b may also be a 1 x cols row vector broadcast over rows.
    Ref add(Ref a, Ref b);
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);
    Ref scale(Ref a, double c);
    Ref relu(Ref a);
    Ref gelu(Ref a);
    Ref abs(Ref a);
    Ref sum(Ref a);
    Ref mean(Ref a);
    /// Picks rows of a (duplicates allowed); gradient scatter-adds back.
    Ref gather_rows(Ref a, std::vector<int> rows);
    /// out[idx[r], :] += a[r, :]; receiver-count rows in the result.
    Ref scatter_sum_rows(Ref a, std::vector<int> rows, int out_rows);
    Ref concat_cols(const std::vector<Ref>& parts);
    Ref concat_rows(const std::vector<Ref>& parts);
    Ref slice_cols(Ref a, int begin, int end);

    // -- execution -------------------------------------------------------
    /// Seeds d(root)/d(root) = 1 and accumulates grads; root must be 1x1.
    void backward(Ref root);

    const std::vector<double>& value(Ref r) const { return nodes_[r.id].value; }
    const std::vector<double>& grad(Ref r) const { return nodes_[r.id].grad; }
    int rows(Ref r) const { return nodes_[r.id].rows; }
    int cols(Ref r) const { return nodes_[r.id].cols; }
    double scalar(Ref r) const;

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf,
        MatMul,
        Add,
        Sub,
        Mul,
        Scale,
        Relu,
        Gelu,
        Abs,
        Sum,
        Mean,
        Gather,
        Scatter,
        ConcatCols,
        ConcatRows,
        SliceCols,
    };

    struct Node {
        Op op = Op::Leaf;
        int rows = 0, cols = 0;
        int a = -1, b = -1;
        std::vector<int> inputs;   // for concat
        std::vector<int> indices;  // for gather/scatter
        double factor = 0.0;       // for scale; slice begin for SliceCols
        int aux = 0;               // slice end
        bool needs_grad = false;
        std::vector<double> value;
        std::vector<double> grad;
    };

    int push(Node node);
    Node& at(Ref r);
    const Node& at(Ref r) const;
    void check_shape(Ref r, int rows, int cols, const char* who) const;

    std::vector<Node> nodes_;
};

}  // namespace fvlab
