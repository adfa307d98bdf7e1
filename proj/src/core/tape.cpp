#include "core/tape.hpp"

#include <cmath>

namespace fvlab {

namespace {
constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

int Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    Node& n = nodes_.back();
    if (n.needs_grad) n.grad.assign(n.value.size(), 0.0);
    return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::at(Ref r) {
    if (!r.valid() || r.id >= static_cast<int>(nodes_.size()))
        fail(ErrorCode::internal, "invalid tape ref");
    return nodes_[r.id];
}

const Tape::Node& Tape::at(Ref r) const { return const_cast<Tape*>(this)->at(r); }

void Tape::check_shape(Ref r, int rows, int cols, const char* who) const {
    const Node& n = at(r);
    if (n.rows != rows || n.cols != cols)
        fail(ErrorCode::invalid_argument,
             strprintf("%s: expected %dx%d, got %dx%d", who, rows, cols, n.rows, n.cols));
}

double Tape::scalar(Ref r) const {
    const Node& n = at(r);
    if (n.rows != 1 || n.cols != 1) fail(ErrorCode::invalid_argument, "scalar() on non-1x1 node");
    return n.value[0];
}

Tape::Ref Tape::input(int rows, int cols, const std::vector<double>& values, bool needs_grad) {
    if (static_cast<int>(values.size()) != rows * cols)
        fail(ErrorCode::invalid_argument, "input size does not match shape");
    Node n;
    n.op = Op::Leaf;
    n.rows = rows;
    n.cols = cols;
    n.value = values;
    n.needs_grad = needs_grad;
    return {push(std::move(n))};
}

Tape::Ref Tape::constant(int rows, int cols, const std::vector<double>& values) {
    return input(rows, cols, values, false);
}

Tape::Ref Tape::constant_scalar(double v) { return constant(1, 1, {v}); }

Tape::Ref Tape::matmul(Ref a, Ref b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.cols != nb.rows)
        fail(ErrorCode::invalid_argument,
             strprintf("matmul: %dx%d * %dx%d", na.rows, na.cols, nb.rows, nb.cols));
    Node n;
    n.op = Op::MatMul;
    n.rows = na.rows;
    n.cols = nb.cols;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.value.assign(static_cast<std::size_t>(n.rows) * n.cols, 0.0);
    const int m = na.rows, k = na.cols, p = nb.cols;
    for (int i = 0; i < m; ++i) {
        const double* arow = na.value.data() + static_cast<std::size_t>(i) * k;
        double* crow = n.value.data() + static_cast<std::size_t>(i) * p;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = nb.value.data() + static_cast<std::size_t>(kk) * p;
            for (int j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
    return {push(std::move(n))};
}

namespace {
bool broadcastable(int arows, int acols, int brows, int bcols) {
    return (arows == brows && acols == bcols) || (brows == 1 && acols == bcols);
}
}  // namespace

Tape::Ref Tape::add(Ref a, Ref b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (!broadcastable(na.rows, na.cols, nb.rows, nb.cols))
        fail(ErrorCode::invalid_argument, "add: incompatible shapes");
    Node n;
    n.op = Op::Add;
    n.rows = na.rows;
    n.cols = na.cols;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.value = na.value;
    for (int i = 0; i < n.rows; ++i)
        for (int j = 0; j < n.cols; ++j)
            n.value[static_cast<std::size_t>(i) * n.cols + j] +=
                nb.value[static_cast<std::size_t>(nb.rows == 1 ? 0 : i) * n.cols + j];
    return {push(std::move(n))};
}

Tape::Ref Tape::sub(Ref a, Ref b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (!broadcastable(na.rows, na.cols, nb.rows, nb.cols))
        fail(ErrorCode::invalid_argument, "sub: incompatible shapes");
    Node n;
    n.op = Op::Sub;
    n.rows = na.rows;
    n.cols = na.cols;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.value = na.value;
    for (int i = 0; i < n.rows; ++i)
        for (int j = 0; j < n.cols; ++j)
            n.value[static_cast<std::size_t>(i) * n.cols + j] -=
                nb.value[static_cast<std::size_t>(nb.rows == 1 ? 0 : i) * n.cols + j];
    return {push(std::move(n))};
}

Tape::Ref Tape::mul(Ref a, Ref b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (!broadcastable(na.rows, na.cols, nb.rows, nb.cols))
        fail(ErrorCode::invalid_argument, "mul: incompatible shapes");
    Node n;
    n.op = Op::Mul;
    n.rows = na.rows;
    n.cols = na.cols;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.value = na.value;
    for (int i = 0; i < n.rows; ++i)
        for (int j = 0; j < n.cols; ++j)
            n.value[static_cast<std::size_t>(i) * n.cols + j] *=
                nb.value[static_cast<std::size_t>(nb.rows == 1 ? 0 : i) * n.cols + j];
    return {push(std::move(n))};
}

Tape::Ref Tape::scale(Ref a, double c) {
    const Node& na = at(a);
    Node n;
    n.op = Op::Scale;
    n.rows = na.rows;
    n.cols = na.cols;
    n.a = a.id;
    n.factor = c;
    n.needs_grad = na.needs_grad;
    n.value = na.value;
    for (double& v : n.value) v *= c;
    return {push(std::move(n))};
}

Tape::Ref Tape::relu(Ref a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::Relu;
    n.rows = na.rows;
    n.cols = na.cols;
    n.a = a.id;
    n.needs_grad = na.needs_grad;
    n.value = na.value;
    for (double& v : n.value) v = v > 0.0 ? v : 0.0;
    return {push(std::move(n))};
}

Tape::Ref Tape::gelu(Ref a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::Gelu;
    n.rows = na.rows;
    n.cols = na.cols;
    n.a = a.id;
    n.needs_grad = na.needs_grad;
    n.value = na.value;
    for (double& v : n.value) {
        double u = kGeluK * (v + kGeluA * v * v * v);
        v = 0.5 * v * (1.0 + std::tanh(u));
    }
    return {push(std::move(n))};
}

Tape::Ref Tape::abs(Ref a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::Abs;
    n.rows = na.rows;
    n.cols = na.cols;
    n.a = a.id;
    n.needs_grad = na.needs_grad;
    n.value = na.value;
    for (double& v : n.value) v = std::abs(v);
    return {push(std::move(n))};
}

Tape::Ref Tape::sum(Ref a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::Sum;
    n.rows = 1;
    n.cols = 1;
    n.a = a.id;
    n.needs_grad = na.needs_grad;
    double s = 0.0;
    for (double v : na.value) s += v;
    n.value = {s};
    return {push(std::move(n))};
}

Tape::Ref Tape::mean(Ref a) {
    const Node& na = at(a);
    if (na.value.empty()) fail(ErrorCode::invalid_argument, "mean of empty tensor");
    Node n;
    n.op = Op::Mean;
    n.rows = 1;
    n.cols = 1;
    n.a = a.id;
    n.needs_grad = na.needs_grad;
    double s = 0.0;
    for (double v : na.value) s += v;
    n.value = {s / static_cast<double>(na.value.size())};
    return {push(std::move(n))};
}

Tape::Ref Tape::gather_rows(Ref a, std::vector<int> rows) {
    const Node& na = at(a);
    for (int r : rows)
        if (r < 0 || r >= na.rows)
            fail(ErrorCode::invalid_argument, "gather_rows: index out of range");
    Node n;
    n.op = Op::Gather;
    n.rows = static_cast<int>(rows.size());
    n.cols = na.cols;
    n.a = a.id;
    n.indices = std::move(rows);
    n.needs_grad = na.needs_grad;
    n.value.resize(static_cast<std::size_t>(n.rows) * n.cols);
    for (int i = 0; i < n.rows; ++i)
        for (int j = 0; j < n.cols; ++j)
            n.value[static_cast<std::size_t>(i) * n.cols + j] =
                na.value[static_cast<std::size_t>(n.indices[i]) * n.cols + j];
    return {push(std::move(n))};
}

Tape::Ref Tape::scatter_sum_rows(Ref a, std::vector<int> rows, int out_rows) {
    const Node& na = at(a);
    if (static_cast<int>(rows.size()) != na.rows)
        fail(ErrorCode::invalid_argument, "scatter_sum_rows: one index per row required");
    for (int r : rows)
        if (r < 0 || r >= out_rows)
            fail(ErrorCode::invalid_argument, "scatter_sum_rows: index out of range");
    Node n;
    n.op = Op::Scatter;
    n.rows = out_rows;
    n.cols = na.cols;
    n.a = a.id;
    n.indices = std::move(rows);
    n.needs_grad = na.needs_grad;
    n.value.assign(static_cast<std::size_t>(out_rows) * na.cols, 0.0);
    for (int i = 0; i < na.rows; ++i)
        for (int j = 0; j < na.cols; ++j)
            n.value[static_cast<std::size_t>(n.indices[i]) * n.cols + j] +=
                na.value[static_cast<std::size_t>(i) * n.cols + j];
    return {push(std::move(n))};
}

Tape::Ref Tape::concat_cols(const std::vector<Ref>& parts) {
    if (parts.empty()) fail(ErrorCode::invalid_argument, "concat_cols of nothing");
    Node n;
    n.op = Op::ConcatCols;
    n.rows = at(parts[0]).rows;
    n.cols = 0;
    for (Ref p : parts) {
        const Node& np = at(p);
        if (np.rows != n.rows) fail(ErrorCode::invalid_argument, "concat_cols: row mismatch");
        n.cols += np.cols;
        n.inputs.push_back(p.id);
        n.needs_grad = n.needs_grad || np.needs_grad;
    }
    n.value.resize(static_cast<std::size_t>(n.rows) * n.cols);
    int col0 = 0;
    for (Ref p : parts) {
        const Node& np = at(p);
        for (int i = 0; i < n.rows; ++i)
            for (int j = 0; j < np.cols; ++j)
                n.value[static_cast<std::size_t>(i) * n.cols + col0 + j] =
                    np.value[static_cast<std::size_t>(i) * np.cols + j];
        col0 += np.cols;
    }
    return {push(std::move(n))};
}

Tape::Ref Tape::concat_rows(const std::vector<Ref>& parts) {
    if (parts.empty()) fail(ErrorCode::invalid_argument, "concat_rows of nothing");
    Node n;
    n.op = Op::ConcatRows;
    n.cols = at(parts[0]).cols;
    n.rows = 0;
    for (Ref p : parts) {
        const Node& np = at(p);
        if (np.cols != n.cols) fail(ErrorCode::invalid_argument, "concat_rows: column mismatch");
        n.rows += np.rows;
        n.inputs.push_back(p.id);
        n.needs_grad = n.needs_grad || np.needs_grad;
    }
    n.value.reserve(static_cast<std::size_t>(n.rows) * n.cols);
    for (Ref p : parts) {
        const Node& np = at(p);
        n.value.insert(n.value.end(), np.value.begin(), np.value.end());
    }
    return {push(std::move(n))};
}

Tape::Ref Tape::slice_cols(Ref a, int begin, int end) {
    const Node& na = at(a);
    if (begin < 0 || end > na.cols || begin >= end)
        fail(ErrorCode::invalid_argument, "slice_cols: bad range");
    Node n;
    n.op = Op::SliceCols;
    n.rows = na.rows;
    n.cols = end - begin;
    n.a = a.id;
    n.factor = begin;
    n.aux = end;
    n.needs_grad = na.needs_grad;
    n.value.resize(static_cast<std::size_t>(n.rows) * n.cols);
    for (int i = 0; i < n.rows; ++i)
        for (int j = 0; j < n.cols; ++j)
            n.value[static_cast<std::size_t>(i) * n.cols + j] =
                na.value[static_cast<std::size_t>(i) * na.cols + begin + j];
    return {push(std::move(n))};
}

void Tape::backward(Ref root) {
    Node& r = at(root);
    if (r.rows != 1 || r.cols != 1) fail(ErrorCode::invalid_argument, "backward root must be 1x1");
    if (!r.needs_grad) fail(ErrorCode::invalid_argument, "backward root does not require grad");
    r.grad[0] = 1.0;

    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.op == Op::Leaf) continue;
        const std::vector<double>& g = n.grad;

        auto grad_of = [&](int child) -> std::vector<double>* {
            Node& c = nodes_[child];
            return c.needs_grad ? &c.grad : nullptr;
        };

        switch (n.op) {
            case Op::MatMul: {
                Node& a = nodes_[n.a];
                Node& b = nodes_[n.b];
                const int m = a.rows, k = a.cols, p = b.cols;
                if (auto* ga = grad_of(n.a)) {
                    for (int i = 0; i < m; ++i)
                        for (int kk = 0; kk < k; ++kk) {
                            double s = 0.0;
                            const double* grow = g.data() + static_cast<std::size_t>(i) * p;
                            const double* brow = b.value.data() + static_cast<std::size_t>(kk) * p;
                            for (int j = 0; j < p; ++j) s += grow[j] * brow[j];
                            (*ga)[static_cast<std::size_t>(i) * k + kk] += s;
                        }
                }
                if (auto* gb = grad_of(n.b)) {
                    for (int kk = 0; kk < k; ++kk)
                        for (int i = 0; i < m; ++i) {
                            const double av = a.value[static_cast<std::size_t>(i) * k + kk];
                            if (av == 0.0) continue;
                            const double* grow = g.data() + static_cast<std::size_t>(i) * p;
                            double* brow = gb->data() + static_cast<std::size_t>(kk) * p;
                            for (int j = 0; j < p; ++j) brow[j] += av * grow[j];
                        }
                }
                break;
            }
            case Op::Add:
            case Op::Sub: {
                const double sgn = n.op == Op::Sub ? -1.0 : 1.0;
                if (auto* ga = grad_of(n.a))
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                if (auto* gb = grad_of(n.b)) {
                    Node& b = nodes_[n.b];
                    if (b.rows == n.rows) {
                        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += sgn * g[i];
                    } else {
                        for (int i = 0; i < n.rows; ++i)
                            for (int j = 0; j < n.cols; ++j)
                                (*gb)[j] += sgn * g[static_cast<std::size_t>(i) * n.cols + j];
                    }
                }
                break;
            }
            case Op::Mul: {
                Node& a = nodes_[n.a];
                Node& b = nodes_[n.b];
                if (auto* ga = grad_of(n.a)) {
                    for (int i = 0; i < n.rows; ++i)
                        for (int j = 0; j < n.cols; ++j) {
                            std::size_t idx = static_cast<std::size_t>(i) * n.cols + j;
                            std::size_t bidx =
                                static_cast<std::size_t>(b.rows == 1 ? 0 : i) * n.cols + j;
                            (*ga)[idx] += g[idx] * b.value[bidx];
                        }
                }
                if (auto* gb = grad_of(n.b)) {
                    for (int i = 0; i < n.rows; ++i)
                        for (int j = 0; j < n.cols; ++j) {
                            std::size_t idx = static_cast<std::size_t>(i) * n.cols + j;
                            std::size_t bidx =
                                static_cast<std::size_t>(b.rows == 1 ? 0 : i) * n.cols + j;
                            (*gb)[bidx] += g[idx] * a.value[idx];
                        }
                }
                break;
            }
            case Op::Scale: {
                if (auto* ga = grad_of(n.a))
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += n.factor * g[i];
                break;
            }
            case Op::Relu: {
                if (auto* ga = grad_of(n.a)) {
                    Node& a = nodes_[n.a];
                    for (std::size_t i = 0; i < g.size(); ++i)
                        if (a.value[i] > 0.0) (*ga)[i] += g[i];
                }
                break;
            }
            case Op::Gelu: {
                if (auto* ga = grad_of(n.a)) {
                    Node& a = nodes_[n.a];
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        double x = a.value[i];
                        double u = kGeluK * (x + kGeluA * x * x * x);
                        double t = std::tanh(u);
                        double d = 0.5 * (1.0 + t) +
                                   0.5 * x * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluA * x * x);
                        (*ga)[i] += d * g[i];
                    }
                }
                break;
            }
            case Op::Abs: {
                if (auto* ga = grad_of(n.a)) {
                    Node& a = nodes_[n.a];
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        double s = a.value[i] > 0.0 ? 1.0 : (a.value[i] < 0.0 ? -1.0 : 0.0);
                        (*ga)[i] += s * g[i];
                    }
                }
                break;
            }
            case Op::Sum: {
                if (auto* ga = grad_of(n.a))
                    for (double& v : *ga) v += g[0];
                break;
            }
            case Op::Mean: {
                if (auto* ga = grad_of(n.a)) {
                    double f = g[0] / static_cast<double>(ga->size());
                    for (double& v : *ga) v += f;
                }
                break;
            }
            case Op::Gather: {
                if (auto* ga = grad_of(n.a)) {
                    for (int i = 0; i < n.rows; ++i)
                        for (int j = 0; j < n.cols; ++j)
                            (*ga)[static_cast<std::size_t>(n.indices[i]) * n.cols + j] +=
                                g[static_cast<std::size_t>(i) * n.cols + j];
                }
                break;
            }
            case Op::Scatter: {
                if (auto* ga = grad_of(n.a)) {
                    const int in_rows = static_cast<int>(n.indices.size());
                    for (int i = 0; i < in_rows; ++i)
                        for (int j = 0; j < n.cols; ++j)
                            (*ga)[static_cast<std::size_t>(i) * n.cols + j] +=
                                g[static_cast<std::size_t>(n.indices[i]) * n.cols + j];
                }
                break;
            }
            case Op::ConcatCols: {
                int col0 = 0;
                for (int child : n.inputs) {
                    Node& c = nodes_[child];
                    if (c.needs_grad) {
                        for (int i = 0; i < n.rows; ++i)
                            for (int j = 0; j < c.cols; ++j)
                                c.grad[static_cast<std::size_t>(i) * c.cols + j] +=
                                    g[static_cast<std::size_t>(i) * n.cols + col0 + j];
                    }
                    col0 += c.cols;
                }
                break;
            }
            case Op::ConcatRows: {
                std::size_t offset = 0;
                for (int child : n.inputs) {
                    Node& c = nodes_[child];
                    if (c.needs_grad)
                        for (std::size_t i = 0; i < c.value.size(); ++i) c.grad[i] += g[offset + i];
                    offset += c.value.size();
                }
                break;
            }
            case Op::SliceCols: {
                if (auto* ga = grad_of(n.a)) {
                    Node& a = nodes_[n.a];
                    const int begin = static_cast<int>(n.factor);
                    for (int i = 0; i < n.rows; ++i)
                        for (int j = 0; j < n.cols; ++j)
                            (*ga)[static_cast<std::size_t>(i) * a.cols + begin + j] +=
                                g[static_cast<std::size_t>(i) * n.cols + j];
                }
                break;
            }
            case Op::Leaf:
                break;
        }
    }
}

}  // namespace fvlab
