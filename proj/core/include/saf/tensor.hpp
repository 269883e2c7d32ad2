#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "saf/error.hpp"

namespace saf {

/// Dense 64-bit float tensor of rank 0 (scalar), 1 (vector) or 2 (matrix).
///
/// Plain value type: copying copies storage. `node` links the tensor to a
/// position on the Tape that produced it; -1 means the tensor is a constant
/// from the tape's point of view and receives no gradient.
struct Tensor {
    std::vector<std::size_t> shape;  // {} scalar, {n} vector, {rows, cols} matrix
    std::vector<double> values;      // row-major, size == product of shape
    std::vector<double> grad;        // empty until a backward pass delivers one
    int node = -1;
    std::uint64_t tape_id = 0;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape_);
    Tensor(std::vector<std::size_t> shape_, std::vector<double> values_);

    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
    static Tensor zeros(std::vector<std::size_t> shape_);

    std::size_t size() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    /// Rows/cols of a matrix; a vector counts as one row.
    std::size_t rows() const;
    std::size_t cols() const;

    double at(std::size_t i) const;
    double at(std::size_t r, std::size_t c) const;
    double& at(std::size_t i);
    double& at(std::size_t r, std::size_t c);
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

enum class OpKind : std::uint8_t {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    ConcatLast,
    SliceLast,
    StackRows,
    Sigmoid,
    Tanh,
    Abs,
    Sum,
    Mean,
};

const char* op_name(OpKind kind);

/// Records a single forward computation and replays it backwards.
///
/// One tape per forward/backward pair: there is no global graph, and a
/// tensor created on one tape cannot be consumed by another (mixing raises
/// ContractError).  Off-tape tensors (node == -1) are accepted by every op
/// as constants.
///
/// watch() registers a parameter as a differentiable leaf; after
/// backward(), gradients ACCUMULATE into the watched tensor's `grad` field
/// (existing contents are kept, absent grads are zero-initialised first).
/// The watched tensor must outlive the backward call.
///
/// A tape may be used from one thread at a time.  Concurrent computations
/// must each own a tape; watched parameters may be shared between threads
/// only if no two tapes watch the same tensor while either calls backward.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor watch(Tensor& parameter);

    /// matmul(a: r×k, b: k×c) -> r×c.  No implicit transposition.
    Tensor matmul(const Tensor& a, const Tensor& b);
    /// add: same shape, or matrix + vector (bias added to every row).
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    /// Elementwise product, same shape only.
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double factor);
    /// concat-last-axis: vectors end-to-end, matrices column-wise (equal rows).
    Tensor concat_last(const Tensor& a, const Tensor& b);
    /// slice-last-axis over [begin, end): vector elements or matrix columns.
    Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t end);
    /// Stacks inputs along the row axis; vectors count as single rows.
    /// All inputs share the same column width.
    Tensor stack_rows(const std::vector<Tensor>& parts);
    Tensor sigmoid(const Tensor& a);
    Tensor tanh(const Tensor& a);
    Tensor abs(const Tensor& a);
    /// Full reduction to a rank-0 scalar.
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);

    /// Reverse pass from a scalar loss recorded on this tape.  Every
    /// watched parameter reachable from the loss receives a gradient;
    /// unreachable parameters are left untouched.
    void backward(const Tensor& loss);

    std::size_t node_count() const { return nodes_.size(); }
    std::uint64_t id() const { return id_; }

private:
    struct Node {
        OpKind kind;
        int a = -1;
        int b = -1;
        std::vector<std::size_t> shape;
        std::vector<double> values;
        std::vector<std::size_t> ashape;
        std::vector<std::size_t> bshape;
        std::vector<double> aconst;  // operand snapshot when off-tape and needed by backward
        std::vector<double> bconst;
        double factor = 0.0;
        std::size_t begin = 0;
        std::size_t end = 0;
        std::vector<int> stack_parents;
        std::vector<std::size_t> stack_rows;
        Tensor* leaf = nullptr;
    };

    int push(Node node);
    Tensor result_of(int id) const;
    void check_operand(const Tensor& t, OpKind kind) const;
    void check_finite(const Node& node) const;
    const double* operand_values(const Node& node, bool first) const;

    std::uint64_t id_;
    std::vector<Node> nodes_;
};

} // namespace saf
