#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pertvi::ad {

class Expression;

/// Handle to one node of an Expression tape. Cheap to copy; only valid for
/// the expression that created it and only until the next clear().
struct Var {
  Expression* expr = nullptr;
  std::int32_t idx = -1;

  double value() const;
};

/// Domain violation during a forward pass (log of a non-positive value,
/// division by zero, ...). Carries the primitive name and tape position.
class EvalError : public std::runtime_error {
 public:
  EvalError(const std::string& primitive, std::int32_t node, const std::string& detail)
      : std::runtime_error("eval error in primitive '" + primitive + "' at node " +
                           std::to_string(node) + ": " + detail),
        primitive_(primitive),
        node_(node) {}

  const std::string& primitive() const { return primitive_; }
  std::int32_t node() const { return node_; }

 private:
  std::string primitive_;
  std::int32_t node_;
};

/// Named input values for Expression::eval. Scalar inputs are vectors of
/// length one.
using Inputs = std::map<std::string, std::vector<double>, std::less<>>;
using Gradients = std::map<std::string, std::vector<double>, std::less<>>;

/// A scalar expression recorded as a topologically ordered tape.
///
/// Build the structure once with input()/input_vector() and the arithmetic
/// ops, mark the result with set_output(), then call eval() as often as
/// needed with new input values; backward()/gradient() run a single reverse
/// sweep over the tape last evaluated. clear() drops all nodes but keeps
/// the allocated capacity, so a loop can rebuild a fresh tape per sample
/// without reallocating.
class Expression {
 public:
  Expression() = default;
  Expression(const Expression&) = delete;
  Expression& operator=(const Expression&) = delete;
  Expression(Expression&&) = default;
  Expression& operator=(Expression&&) = default;

  // -- structure ----------------------------------------------------------
  Var input(const std::string& name);
  std::vector<Var> input_vector(const std::string& name, std::size_t n);
  Var constant(double value);
  void set_output(Var v);
  Var output() const;

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var pow_int(Var a, int exponent);
  Var sqrt(Var a);
  Var sigmoid(Var a);
  Var log_sigmoid(Var a);
  Var sum(std::span<const Var> xs);
  Var dot(std::span<const Var> xs, std::span<const Var> ys);
  /// Dot product against fixed coefficients: sum_i coeffs[i] * xs[i].
  Var dot(std::span<const double> coeffs, std::span<const Var> xs);

  // -- evaluation ---------------------------------------------------------
  /// Forward pass with named inputs; every declared input must be bound
  /// with the declared length. Returns the output value and records the
  /// local partial of every node for a subsequent backward pass.
  double eval(const Inputs& inputs);
  /// Forward pass with inputs given by slot order (declaration order).
  double eval_slots(std::span<const double> slot_values);

  /// Reverse sweep over the last eval; fills one adjoint per node.
  void backward();
  /// d(output)/d(v) after backward(). Inputs that do not reach the output
  /// have adjoint exactly zero.
  double adjoint(Var v) const;
  /// Adjoints of every named input, keyed by name.
  Gradients gradient();

  // -- introspection ------------------------------------------------------
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t input_slot_count() const { return input_nodes_.size(); }
  bool evaluated() const { return evaluated_; }
  /// Value of a node from the last forward pass (constants are valid
  /// immediately).
  double value_of(Var v) const;

  /// Drop all nodes and inputs but keep allocated capacity.
  void clear();

 private:
  enum class Op : std::uint8_t {
    kConst,
    kInput,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kNeg,
    kExp,
    kLog,
    kPowInt,
    kSqrt,
    kSigmoid,
    kLogSigmoid,
    kSum,
    kDot,
    kLinComb,
  };

  struct Node {
    Op op;
    std::int32_t meta = 0;  // input slot for kInput, exponent for kPowInt
    std::uint32_t args_begin = 0;
    std::uint32_t args_end = 0;
    double aux = 0.0;  // constant value for kConst
    double value = 0.0;
  };

  struct NamedRange {
    std::string name;
    std::uint32_t first_slot;
    std::uint32_t count;
  };

  Var push(Op op, std::span<const Var> args, std::int32_t meta = 0, double aux = 0.0);
  Var push_binary(Op op, Var a, Var b);
  Var push_unary(Op op, Var a);
  void check_same_tape(Var v) const;
  void run_forward(std::span<const double> slot_values);

  std::vector<Node> nodes_;
  std::vector<std::int32_t> parents_;
  std::vector<double> weights_;  // local partials, parallel to parents_
  std::vector<double> adjoints_;
  std::vector<std::int32_t> input_nodes_;  // slot -> node index
  std::vector<NamedRange> named_inputs_;
  std::int32_t output_ = -1;
  bool evaluated_ = false;
  bool backward_done_ = false;
};

// Operator sugar. Mixed-mode operands create constant nodes.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);

Var exp(Var a);
Var log(Var a);
Var pow_int(Var a, int exponent);
Var sqrt(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);

/// Builds an expression from a vector of input Vars.
using ExprBuilder = std::function<Var(Expression&, std::span<const Var>)>;

/// Max over coordinates of |AD - central difference| / max(1, |AD|) at
/// `point`, comparing the reverse-mode gradient with a two-sided finite
/// difference of half-width `step`. Throws if a finite-difference value is
/// not finite.
double check_gradient(const ExprBuilder& build, std::span<const double> point, double step);

}  // namespace pertvi::ad
