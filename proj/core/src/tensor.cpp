#include "saf/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace saf {

namespace {

std::atomic<std::uint64_t> next_tape_id{1};

// C(m×n) += A(m×k) · B(k×n).  The j-inner loop keeps both C and B rows
// contiguous, which the optimizer turns into SIMD without reassociating
// any sums, so results stay bit-stable across runs of the same build.
void gemm_acc(const double* a, const double* b, double* c,
              std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

std::vector<double> transposed(const double* a, std::size_t rows, std::size_t cols) {
    std::vector<double> t(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
    return t;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape_)
    : shape(std::move(shape_)), values(shape_size(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
    if (values.size() != shape_size(shape))
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                         shape_string(shape));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape_) { return Tensor(std::move(shape_)); }

std::size_t Tensor::rows() const { return rank() == 2 ? shape[0] : 1; }

std::size_t Tensor::cols() const {
    if (rank() == 2) return shape[1];
    return rank() == 1 ? shape[0] : 1;
}

double Tensor::at(std::size_t i) const {
    if (i >= values.size()) throw ShapeError("tensor index " + std::to_string(i) + " out of range");
    return values[i];
}

double& Tensor::at(std::size_t i) {
    if (i >= values.size()) throw ShapeError("tensor index " + std::to_string(i) + " out of range");
    return values[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    if (rank() != 2 || r >= shape[0] || c >= shape[1])
        throw ShapeError("tensor index (" + std::to_string(r) + "," + std::to_string(c) +
                         ") out of range for shape " + shape_string(shape));
    return values[r * shape[1] + c];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    if (rank() != 2 || r >= shape[0] || c >= shape[1])
        throw ShapeError("tensor index (" + std::to_string(r) + "," + std::to_string(c) +
                         ") out of range for shape " + shape_string(shape));
    return values[r * shape[1] + c];
}

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::ConcatLast: return "concat-last-axis";
        case OpKind::SliceLast: return "slice-last-axis";
        case OpKind::StackRows: return "stack-rows";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Tanh: return "tanh";
        case OpKind::Abs: return "abs";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
    }
    return "?";
}

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

void Tape::check_operand(const Tensor& t, OpKind kind) const {
    if (t.node >= 0 && t.tape_id != id_)
        throw ContractError(std::string(op_name(kind)) + ": operand was recorded on another tape");
    if (t.node >= 0 && static_cast<std::size_t>(t.node) >= nodes_.size())
        throw ContractError(std::string(op_name(kind)) + ": operand node id out of range");
}

void Tape::check_finite(const Node& node) const {
    if (!all_finite(node.values))
        throw NumericError(std::string(op_name(node.kind)) + ": non-finite value in output of shape " +
                           shape_string(node.shape));
}

int Tape::push(Node node) {
    check_finite(node);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size() - 1);
}

Tensor Tape::result_of(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    Tensor out(n.shape, n.values);
    out.node = id;
    out.tape_id = id_;
    return out;
}

const double* Tape::operand_values(const Node& node, bool first) const {
    int parent = first ? node.a : node.b;
    if (parent >= 0) return nodes_[static_cast<std::size_t>(parent)].values.data();
    return first ? node.aconst.data() : node.bconst.data();
}

Tensor Tape::watch(Tensor& parameter) {
    Node node;
    node.kind = OpKind::Leaf;
    node.shape = parameter.shape;
    node.values = parameter.values;
    node.leaf = &parameter;
    return result_of(push(std::move(node)));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    check_operand(a, OpKind::MatMul);
    check_operand(b, OpKind::MatMul);
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw ShapeError("matmul: cannot multiply " + shape_string(a.shape) + " by " +
                         shape_string(b.shape));
    std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];

    Node node;
    node.kind = OpKind::MatMul;
    node.a = a.node;
    node.b = b.node;
    node.ashape = a.shape;
    node.bshape = b.shape;
    if (a.node < 0) node.aconst = a.values;
    if (b.node < 0) node.bconst = b.values;
    node.shape = {m, n};
    node.values.assign(m * n, 0.0);
    gemm_acc(a.values.data(), b.values.data(), node.values.data(), m, k, n);
    return result_of(push(std::move(node)));
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    check_operand(a, OpKind::Add);
    check_operand(b, OpKind::Add);
    bool same = a.shape == b.shape;
    bool bias = a.rank() == 2 && b.rank() == 1 && a.shape[1] == b.shape[0];
    if (!same && !bias)
        throw ShapeError("add: shapes " + shape_string(a.shape) + " and " + shape_string(b.shape) +
                         " (same shape or matrix + row vector)");

    Node node;
    node.kind = OpKind::Add;
    node.a = a.node;
    node.b = b.node;
    node.ashape = a.shape;
    node.bshape = b.shape;
    node.shape = a.shape;
    node.values = a.values;
    if (same) {
        for (std::size_t i = 0; i < node.values.size(); ++i) node.values[i] += b.values[i];
    } else {
        std::size_t rows = a.shape[0], cols = a.shape[1];
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) node.values[r * cols + c] += b.values[c];
    }
    return result_of(push(std::move(node)));
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    check_operand(a, OpKind::Sub);
    check_operand(b, OpKind::Sub);
    if (a.shape != b.shape)
        throw ShapeError("sub: shapes " + shape_string(a.shape) + " and " + shape_string(b.shape));

    Node node;
    node.kind = OpKind::Sub;
    node.a = a.node;
    node.b = b.node;
    node.ashape = a.shape;
    node.bshape = b.shape;
    node.shape = a.shape;
    node.values = a.values;
    for (std::size_t i = 0; i < node.values.size(); ++i) node.values[i] -= b.values[i];
    return result_of(push(std::move(node)));
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    check_operand(a, OpKind::Mul);
    check_operand(b, OpKind::Mul);
    if (a.shape != b.shape)
        throw ShapeError("mul: shapes " + shape_string(a.shape) + " and " + shape_string(b.shape));

    Node node;
    node.kind = OpKind::Mul;
    node.a = a.node;
    node.b = b.node;
    node.ashape = a.shape;
    node.bshape = b.shape;
    if (a.node < 0) node.aconst = a.values;
    if (b.node < 0) node.bconst = b.values;
    node.shape = a.shape;
    node.values = a.values;
    for (std::size_t i = 0; i < node.values.size(); ++i) node.values[i] *= b.values[i];
    return result_of(push(std::move(node)));
}

Tensor Tape::scale(const Tensor& a, double factor) {
    check_operand(a, OpKind::Scale);
    Node node;
    node.kind = OpKind::Scale;
    node.a = a.node;
    node.ashape = a.shape;
    node.factor = factor;
    node.shape = a.shape;
    node.values = a.values;
    for (double& v : node.values) v *= factor;
    return result_of(push(std::move(node)));
}

Tensor Tape::concat_last(const Tensor& a, const Tensor& b) {
    check_operand(a, OpKind::ConcatLast);
    check_operand(b, OpKind::ConcatLast);
    Node node;
    node.kind = OpKind::ConcatLast;
    node.a = a.node;
    node.b = b.node;
    node.ashape = a.shape;
    node.bshape = b.shape;
    if (a.rank() == 1 && b.rank() == 1) {
        node.shape = {a.shape[0] + b.shape[0]};
        node.values = a.values;
        node.values.insert(node.values.end(), b.values.begin(), b.values.end());
    } else if (a.rank() == 2 && b.rank() == 2 && a.shape[0] == b.shape[0]) {
        std::size_t rows = a.shape[0], ca = a.shape[1], cb = b.shape[1];
        node.shape = {rows, ca + cb};
        node.values.resize(rows * (ca + cb));
        for (std::size_t r = 0; r < rows; ++r) {
            std::memcpy(node.values.data() + r * (ca + cb), a.values.data() + r * ca, ca * sizeof(double));
            std::memcpy(node.values.data() + r * (ca + cb) + ca, b.values.data() + r * cb,
                        cb * sizeof(double));
        }
    } else {
        throw ShapeError("concat-last-axis: shapes " + shape_string(a.shape) + " and " +
                         shape_string(b.shape));
    }
    return result_of(push(std::move(node)));
}

Tensor Tape::slice_last(const Tensor& a, std::size_t begin, std::size_t end) {
    check_operand(a, OpKind::SliceLast);
    std::size_t width = a.rank() == 2 ? a.shape[1] : (a.rank() == 1 ? a.shape[0] : 0);
    if (a.rank() == 0 || begin >= end || end > width)
        throw ShapeError("slice-last-axis: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_string(a.shape));

    Node node;
    node.kind = OpKind::SliceLast;
    node.a = a.node;
    node.ashape = a.shape;
    node.begin = begin;
    node.end = end;
    std::size_t out_w = end - begin;
    if (a.rank() == 1) {
        node.shape = {out_w};
        node.values.assign(a.values.begin() + static_cast<std::ptrdiff_t>(begin),
                           a.values.begin() + static_cast<std::ptrdiff_t>(end));
    } else {
        std::size_t rows = a.shape[0];
        node.shape = {rows, out_w};
        node.values.resize(rows * out_w);
        for (std::size_t r = 0; r < rows; ++r)
            std::memcpy(node.values.data() + r * out_w, a.values.data() + r * width + begin,
                        out_w * sizeof(double));
    }
    return result_of(push(std::move(node)));
}

Tensor Tape::stack_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("stack-rows: no inputs");
    std::size_t cols = parts.front().cols();
    std::size_t total_rows = 0;
    for (const Tensor& p : parts) {
        check_operand(p, OpKind::StackRows);
        if (p.rank() == 0 || p.cols() != cols)
            throw ShapeError("stack-rows: input shape " + shape_string(p.shape) +
                             " does not have width " + std::to_string(cols));
        total_rows += p.rows();
    }

    Node node;
    node.kind = OpKind::StackRows;
    node.shape = {total_rows, cols};
    node.values.reserve(total_rows * cols);
    node.stack_parents.reserve(parts.size());
    node.stack_rows.reserve(parts.size());
    for (const Tensor& p : parts) {
        node.values.insert(node.values.end(), p.values.begin(), p.values.end());
        node.stack_parents.push_back(p.node);
        node.stack_rows.push_back(p.rows());
    }
    return result_of(push(std::move(node)));
}

Tensor Tape::sigmoid(const Tensor& a) {
    check_operand(a, OpKind::Sigmoid);
    Node node;
    node.kind = OpKind::Sigmoid;
    node.a = a.node;
    node.ashape = a.shape;
    node.shape = a.shape;
    node.values = a.values;
    for (double& v : node.values) v = 1.0 / (1.0 + std::exp(-v));
    return result_of(push(std::move(node)));
}

Tensor Tape::tanh(const Tensor& a) {
    check_operand(a, OpKind::Tanh);
    Node node;
    node.kind = OpKind::Tanh;
    node.a = a.node;
    node.ashape = a.shape;
    node.shape = a.shape;
    node.values = a.values;
    for (double& v : node.values) v = std::tanh(v);
    return result_of(push(std::move(node)));
}

Tensor Tape::abs(const Tensor& a) {
    check_operand(a, OpKind::Abs);
    Node node;
    node.kind = OpKind::Abs;
    node.a = a.node;
    node.ashape = a.shape;
    if (a.node < 0) node.aconst = a.values;
    node.shape = a.shape;
    node.values = a.values;
    for (double& v : node.values) v = std::fabs(v);
    return result_of(push(std::move(node)));
}

Tensor Tape::sum(const Tensor& a) {
    check_operand(a, OpKind::Sum);
    Node node;
    node.kind = OpKind::Sum;
    node.a = a.node;
    node.ashape = a.shape;
    node.shape = {};
    double s = 0.0;
    for (double v : a.values) s += v;
    node.values = {s};
    return result_of(push(std::move(node)));
}

Tensor Tape::mean(const Tensor& a) {
    check_operand(a, OpKind::Mean);
    if (a.values.empty()) throw ShapeError("mean: empty tensor");
    Node node;
    node.kind = OpKind::Mean;
    node.a = a.node;
    node.ashape = a.shape;
    node.shape = {};
    double s = 0.0;
    for (double v : a.values) s += v;
    node.values = {s / static_cast<double>(a.values.size())};
    return result_of(push(std::move(node)));
}

void Tape::backward(const Tensor& loss) {
    if (loss.node < 0 || loss.tape_id != id_)
        throw ContractError("backward: loss was not recorded on this tape");
    if (loss.size() != 1)
        throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss.shape));

    std::vector<std::vector<double>> grads(nodes_.size());
    std::vector<char> touched(nodes_.size(), 0);

    auto reach = [&](int id) -> std::vector<double>& {
        auto idx = static_cast<std::size_t>(id);
        if (!touched[idx]) {
            grads[idx].assign(nodes_[idx].values.size(), 0.0);
            touched[idx] = 1;
        }
        return grads[idx];
    };

    reach(loss.node)[0] = 1.0;

    for (std::size_t idx = static_cast<std::size_t>(loss.node) + 1; idx-- > 0;) {
        if (!touched[idx]) continue;
        const Node& n = nodes_[idx];
        const std::vector<double>& g = grads[idx];

        switch (n.kind) {
            case OpKind::Leaf: {
                Tensor* p = n.leaf;
                if (p->grad.size() != p->values.size()) p->grad.assign(p->values.size(), 0.0);
                for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
                break;
            }
            case OpKind::MatMul: {
                std::size_t m = n.ashape[0], k = n.ashape[1], c = n.bshape[1];
                if (n.a >= 0) {
                    // dA += dC · Bᵀ
                    std::vector<double> bt = transposed(operand_values(n, false), k, c);
                    gemm_acc(g.data(), bt.data(), reach(n.a).data(), m, c, k);
                }
                if (n.b >= 0) {
                    // dB += Aᵀ · dC
                    std::vector<double> at = transposed(operand_values(n, true), m, k);
                    gemm_acc(at.data(), g.data(), reach(n.b).data(), k, m, c);
                }
                break;
            }
            case OpKind::Add: {
                if (n.a >= 0) {
                    std::vector<double>& da = reach(n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                }
                if (n.b >= 0) {
                    std::vector<double>& db = reach(n.b);
                    if (n.ashape == n.bshape) {
                        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
                    } else {
                        // bias broadcast: gradient is the column sum
                        std::size_t rows = n.ashape[0], cols = n.ashape[1];
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t cidx = 0; cidx < cols; ++cidx)
                                db[cidx] += g[r * cols + cidx];
                    }
                }
                break;
            }
            case OpKind::Sub: {
                if (n.a >= 0) {
                    std::vector<double>& da = reach(n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                }
                if (n.b >= 0) {
                    std::vector<double>& db = reach(n.b);
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
                }
                break;
            }
            case OpKind::Mul: {
                if (n.a >= 0) {
                    const double* bv = operand_values(n, false);
                    std::vector<double>& da = reach(n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
                }
                if (n.b >= 0) {
                    const double* av = operand_values(n, true);
                    std::vector<double>& db = reach(n.b);
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
                }
                break;
            }
            case OpKind::Scale: {
                if (n.a >= 0) {
                    std::vector<double>& da = reach(n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.factor;
                }
                break;
            }
            case OpKind::ConcatLast: {
                if (n.ashape.size() == 1) {
                    std::size_t wa = n.ashape[0];
                    if (n.a >= 0) {
                        std::vector<double>& da = reach(n.a);
                        for (std::size_t i = 0; i < wa; ++i) da[i] += g[i];
                    }
                    if (n.b >= 0) {
                        std::vector<double>& db = reach(n.b);
                        for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[wa + i];
                    }
                } else {
                    std::size_t rows = n.ashape[0], ca = n.ashape[1], cb = n.bshape[1];
                    std::size_t w = ca + cb;
                    if (n.a >= 0) {
                        std::vector<double>& da = reach(n.a);
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t i = 0; i < ca; ++i) da[r * ca + i] += g[r * w + i];
                    }
                    if (n.b >= 0) {
                        std::vector<double>& db = reach(n.b);
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t i = 0; i < cb; ++i) db[r * cb + i] += g[r * w + ca + i];
                    }
                }
                break;
            }
            case OpKind::SliceLast: {
                if (n.a >= 0) {
                    std::vector<double>& da = reach(n.a);
                    if (n.ashape.size() == 1) {
                        for (std::size_t i = 0; i < g.size(); ++i) da[n.begin + i] += g[i];
                    } else {
                        std::size_t rows = n.ashape[0], w = n.ashape[1], out_w = n.end - n.begin;
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t i = 0; i < out_w; ++i)
                                da[r * w + n.begin + i] += g[r * out_w + i];
                    }
                }
                break;
            }
            case OpKind::StackRows: {
                std::size_t cols = n.shape[1];
                std::size_t row0 = 0;
                for (std::size_t p = 0; p < n.stack_parents.size(); ++p) {
                    std::size_t nrows = n.stack_rows[p];
                    int parent = n.stack_parents[p];
                    if (parent >= 0) {
                        std::vector<double>& dp = reach(parent);
                        for (std::size_t i = 0; i < nrows * cols; ++i) dp[i] += g[row0 * cols + i];
                    }
                    row0 += nrows;
                }
                break;
            }
            case OpKind::Sigmoid: {
                if (n.a >= 0) {
                    std::vector<double>& da = reach(n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        double y = n.values[i];
                        da[i] += g[i] * y * (1.0 - y);
                    }
                }
                break;
            }
            case OpKind::Tanh: {
                if (n.a >= 0) {
                    std::vector<double>& da = reach(n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        double y = n.values[i];
                        da[i] += g[i] * (1.0 - y * y);
                    }
                }
                break;
            }
            case OpKind::Abs: {
                if (n.a >= 0) {
                    const double* av = operand_values(n, true);
                    std::vector<double>& da = reach(n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        double s = av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
                        da[i] += g[i] * s;
                    }
                }
                break;
            }
            case OpKind::Sum: {
                if (n.a >= 0) {
                    std::vector<double>& da = reach(n.a);
                    for (double& v : da) v += g[0];
                }
                break;
            }
            case OpKind::Mean: {
                if (n.a >= 0) {
                    std::vector<double>& da = reach(n.a);
                    double f = g[0] / static_cast<double>(da.size());
                    for (double& v : da) v += f;
                }
                break;
            }
        }
    }
}

} // namespace saf
