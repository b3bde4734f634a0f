#include "pertvi/tape.hpp"

#include <cmath>

namespace pertvi::ad {

namespace {

bool slot_values_match(std::span<const double> values, std::size_t expected) {
  return values.size() == expected;
}

}  // namespace

double Var::value() const {
  if (expr == nullptr || idx < 0) {
    throw std::logic_error("Var::value on an unbound handle");
  }
  return expr->value_of(*this);
}

double Expression::value_of(Var v) const {
  check_same_tape(v);
  return nodes_[static_cast<std::size_t>(v.idx)].value;
}

void Expression::check_same_tape(Var v) const {
  if (v.expr != this || v.idx < 0 || static_cast<std::size_t>(v.idx) >= nodes_.size()) {
    throw std::logic_error("Var does not belong to this expression");
  }
}

Var Expression::push(Op op, std::span<const Var> args, std::int32_t meta, double aux) {
  for (const Var& a : args) check_same_tape(a);
  Node node;
  node.op = op;
  node.meta = meta;
  node.aux = aux;
  node.args_begin = static_cast<std::uint32_t>(parents_.size());
  for (const Var& a : args) parents_.push_back(a.idx);
  node.args_end = static_cast<std::uint32_t>(parents_.size());
  weights_.resize(parents_.size(), 0.0);
  nodes_.push_back(node);
  evaluated_ = false;
  backward_done_ = false;
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Expression::push_binary(Op op, Var a, Var b) {
  const Var args[2] = {a, b};
  return push(op, args);
}

Var Expression::push_unary(Op op, Var a) {
  const Var args[1] = {a};
  return push(op, args);
}

Var Expression::input(const std::string& name) {
  return input_vector(name, 1)[0];
}

std::vector<Var> Expression::input_vector(const std::string& name, std::size_t n) {
  for (const NamedRange& r : named_inputs_) {
    if (r.name == name) throw std::logic_error("duplicate input name: " + name);
  }
  NamedRange range{name, static_cast<std::uint32_t>(input_nodes_.size()),
                   static_cast<std::uint32_t>(n)};
  named_inputs_.push_back(range);
  std::vector<Var> vars;
  vars.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t slot = static_cast<std::int32_t>(input_nodes_.size());
    Var v = push(Op::kInput, {}, slot);
    input_nodes_.push_back(v.idx);
    vars.push_back(v);
  }
  return vars;
}

Var Expression::constant(double value) {
  return push(Op::kConst, {}, 0, value);
}

void Expression::set_output(Var v) {
  check_same_tape(v);
  output_ = v.idx;
}

Var Expression::output() const {
  if (output_ < 0) throw std::logic_error("expression output not set");
  return Var{const_cast<Expression*>(this), output_};
}

Var Expression::add(Var a, Var b) { return push_binary(Op::kAdd, a, b); }
Var Expression::sub(Var a, Var b) { return push_binary(Op::kSub, a, b); }
Var Expression::mul(Var a, Var b) { return push_binary(Op::kMul, a, b); }
Var Expression::div(Var a, Var b) { return push_binary(Op::kDiv, a, b); }
Var Expression::neg(Var a) { return push_unary(Op::kNeg, a); }
Var Expression::exp(Var a) { return push_unary(Op::kExp, a); }
Var Expression::log(Var a) { return push_unary(Op::kLog, a); }
Var Expression::sqrt(Var a) { return push_unary(Op::kSqrt, a); }
Var Expression::sigmoid(Var a) { return push_unary(Op::kSigmoid, a); }
Var Expression::log_sigmoid(Var a) { return push_unary(Op::kLogSigmoid, a); }

Var Expression::pow_int(Var a, int exponent) {
  const Var args[1] = {a};
  return push(Op::kPowInt, args, exponent);
}

Var Expression::sum(std::span<const Var> xs) {
  return push(Op::kSum, xs);
}

Var Expression::dot(std::span<const Var> xs, std::span<const Var> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("dot: size mismatch");
  if (xs.empty()) throw std::invalid_argument("dot: empty operands");
  std::vector<Var> args;
  args.reserve(xs.size() * 2);
  args.insert(args.end(), xs.begin(), xs.end());
  args.insert(args.end(), ys.begin(), ys.end());
  return push(Op::kDot, args);
}

Var Expression::dot(std::span<const double> coeffs, std::span<const Var> xs) {
  if (coeffs.size() != xs.size()) throw std::invalid_argument("dot: size mismatch");
  if (xs.empty()) throw std::invalid_argument("dot: empty operands");
  Var v = push(Op::kLinComb, xs);
  const Node& node = nodes_[static_cast<std::size_t>(v.idx)];
  for (std::uint32_t j = node.args_begin; j < node.args_end; ++j) {
    weights_[j] = coeffs[j - node.args_begin];
  }
  return v;
}

void Expression::run_forward(std::span<const double> slot_values) {
  const std::size_t n = nodes_.size();
  for (std::size_t i = 0; i < n; ++i) {
    Node& node = nodes_[i];
    const std::int32_t* args = parents_.data() + node.args_begin;
    double* w = weights_.data() + node.args_begin;
    switch (node.op) {
      case Op::kConst:
        node.value = node.aux;
        break;
      case Op::kInput:
        node.value = slot_values[static_cast<std::size_t>(node.meta)];
        break;
      case Op::kAdd:
        node.value = nodes_[args[0]].value + nodes_[args[1]].value;
        w[0] = 1.0;
        w[1] = 1.0;
        break;
      case Op::kSub:
        node.value = nodes_[args[0]].value - nodes_[args[1]].value;
        w[0] = 1.0;
        w[1] = -1.0;
        break;
      case Op::kMul: {
        const double a = nodes_[args[0]].value;
        const double b = nodes_[args[1]].value;
        node.value = a * b;
        w[0] = b;
        w[1] = a;
        break;
      }
      case Op::kDiv: {
        const double a = nodes_[args[0]].value;
        const double b = nodes_[args[1]].value;
        if (b == 0.0) {
          throw EvalError("divide", static_cast<std::int32_t>(i), "division by zero");
        }
        node.value = a / b;
        w[0] = 1.0 / b;
        w[1] = -a / (b * b);
        break;
      }
      case Op::kNeg:
        node.value = -nodes_[args[0]].value;
        w[0] = -1.0;
        break;
      case Op::kExp:
        node.value = std::exp(nodes_[args[0]].value);
        w[0] = node.value;
        break;
      case Op::kLog: {
        const double a = nodes_[args[0]].value;
        if (!(a > 0.0)) {
          throw EvalError("log", static_cast<std::int32_t>(i),
                          "argument " + std::to_string(a) + " is not positive");
        }
        node.value = std::log(a);
        w[0] = 1.0 / a;
        break;
      }
      case Op::kPowInt: {
        const double a = nodes_[args[0]].value;
        const int k = node.meta;
        if (k < 0 && a == 0.0) {
          throw EvalError("pow_int", static_cast<std::int32_t>(i),
                          "zero base with negative exponent");
        }
        node.value = std::pow(a, k);
        w[0] = (k == 0) ? 0.0 : static_cast<double>(k) * std::pow(a, k - 1);
        break;
      }
      case Op::kSqrt: {
        const double a = nodes_[args[0]].value;
        if (!(a > 0.0)) {
          throw EvalError("sqrt", static_cast<std::int32_t>(i),
                          "argument " + std::to_string(a) + " is not positive");
        }
        node.value = std::sqrt(a);
        w[0] = 0.5 / node.value;
        break;
      }
      case Op::kSigmoid: {
        const double a = nodes_[args[0]].value;
        const double s = (a >= 0.0) ? 1.0 / (1.0 + std::exp(-a))
                                    : std::exp(a) / (1.0 + std::exp(a));
        node.value = s;
        w[0] = s * (1.0 - s);
        break;
      }
      case Op::kLogSigmoid: {
        const double a = nodes_[args[0]].value;
        // log(1/(1+e^{-a})) computed without overflow on either side
        node.value = (a >= 0.0) ? -std::log1p(std::exp(-a)) : a - std::log1p(std::exp(a));
        const double s_neg = (a >= 0.0) ? std::exp(-a) / (1.0 + std::exp(-a))
                                        : 1.0 / (1.0 + std::exp(a));
        w[0] = s_neg;  // sigmoid(-a)
        break;
      }
      case Op::kSum: {
        double acc = 0.0;
        for (std::uint32_t j = node.args_begin; j < node.args_end; ++j) {
          acc += nodes_[parents_[j]].value;
          weights_[j] = 1.0;
        }
        node.value = acc;
        break;
      }
      case Op::kDot: {
        const std::uint32_t half = (node.args_end - node.args_begin) / 2;
        double acc = 0.0;
        for (std::uint32_t j = 0; j < half; ++j) {
          const double x = nodes_[args[j]].value;
          const double y = nodes_[args[half + j]].value;
          acc += x * y;
          w[j] = y;
          w[half + j] = x;
        }
        node.value = acc;
        break;
      }
      case Op::kLinComb: {
        double acc = 0.0;
        for (std::uint32_t j = node.args_begin; j < node.args_end; ++j) {
          acc += weights_[j] * nodes_[parents_[j]].value;
        }
        node.value = acc;
        break;
      }
    }
  }
  evaluated_ = true;
  backward_done_ = false;
}

double Expression::eval_slots(std::span<const double> slot_values) {
  if (output_ < 0) throw std::logic_error("expression output not set");
  if (!slot_values_match(slot_values, input_nodes_.size())) {
    throw std::invalid_argument("eval_slots: expected " + std::to_string(input_nodes_.size()) +
                                " input values, got " + std::to_string(slot_values.size()));
  }
  run_forward(slot_values);
  return nodes_[static_cast<std::size_t>(output_)].value;
}

double Expression::eval(const Inputs& inputs) {
  std::vector<double> slots(input_nodes_.size(), 0.0);
  std::size_t bound = 0;
  for (const NamedRange& r : named_inputs_) {
    auto it = inputs.find(r.name);
    if (it == inputs.end()) {
      throw std::invalid_argument("eval: input '" + r.name + "' not bound");
    }
    if (it->second.size() != r.count) {
      throw std::invalid_argument("eval: input '" + r.name + "' expects " +
                                  std::to_string(r.count) + " values, got " +
                                  std::to_string(it->second.size()));
    }
    for (std::uint32_t i = 0; i < r.count; ++i) slots[r.first_slot + i] = it->second[i];
    ++bound;
  }
  if (bound != inputs.size()) {
    throw std::invalid_argument("eval: unknown input name among bound values");
  }
  return eval_slots(slots);
}

void Expression::backward() {
  if (output_ < 0) throw std::logic_error("expression output not set");
  if (!evaluated_) throw std::logic_error("backward() called before eval()");
  adjoints_.assign(nodes_.size(), 0.0);
  adjoints_[static_cast<std::size_t>(output_)] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    const double a = adjoints_[i];
    if (a == 0.0) continue;
    const Node& node = nodes_[i];
    for (std::uint32_t j = node.args_begin; j < node.args_end; ++j) {
      adjoints_[static_cast<std::size_t>(parents_[j])] += a * weights_[j];
    }
  }
  backward_done_ = true;
}

double Expression::adjoint(Var v) const {
  check_same_tape(v);
  if (!backward_done_) throw std::logic_error("adjoint() called before backward()");
  return adjoints_[static_cast<std::size_t>(v.idx)];
}

Gradients Expression::gradient() {
  if (!evaluated_) throw std::logic_error("gradient() called before eval()");
  if (!backward_done_) backward();
  Gradients out;
  for (const NamedRange& r : named_inputs_) {
    std::vector<double> g(r.count, 0.0);
    for (std::uint32_t i = 0; i < r.count; ++i) {
      g[i] = adjoints_[static_cast<std::size_t>(input_nodes_[r.first_slot + i])];
    }
    out.emplace(r.name, std::move(g));
  }
  return out;
}

void Expression::clear() {
  nodes_.clear();
  parents_.clear();
  weights_.clear();
  adjoints_.clear();
  input_nodes_.clear();
  named_inputs_.clear();
  output_ = -1;
  evaluated_ = false;
  backward_done_ = false;
}

Var operator+(Var a, Var b) { return a.expr->add(a, b); }
Var operator-(Var a, Var b) { return a.expr->sub(a, b); }
Var operator*(Var a, Var b) { return a.expr->mul(a, b); }
Var operator/(Var a, Var b) { return a.expr->div(a, b); }
Var operator-(Var a) { return a.expr->neg(a); }
Var operator+(Var a, double b) { return a.expr->add(a, a.expr->constant(b)); }
Var operator+(double a, Var b) { return b.expr->add(b.expr->constant(a), b); }
Var operator-(Var a, double b) { return a.expr->sub(a, a.expr->constant(b)); }
Var operator-(double a, Var b) { return b.expr->sub(b.expr->constant(a), b); }
Var operator*(Var a, double b) { return a.expr->mul(a, a.expr->constant(b)); }
Var operator*(double a, Var b) { return b.expr->mul(b.expr->constant(a), b); }
Var operator/(Var a, double b) { return a.expr->div(a, a.expr->constant(b)); }
Var operator/(double a, Var b) { return b.expr->div(b.expr->constant(a), b); }

Var exp(Var a) { return a.expr->exp(a); }
Var log(Var a) { return a.expr->log(a); }
Var pow_int(Var a, int exponent) { return a.expr->pow_int(a, exponent); }
Var sqrt(Var a) { return a.expr->sqrt(a); }
Var sigmoid(Var a) { return a.expr->sigmoid(a); }
Var log_sigmoid(Var a) { return a.expr->log_sigmoid(a); }

double check_gradient(const ExprBuilder& build, std::span<const double> point, double step) {
  Expression expr;
  std::vector<Var> xs = expr.input_vector("x", point.size());
  Var out = build(expr, xs);
  expr.set_output(out);

  std::vector<double> values(point.begin(), point.end());
  expr.eval_slots(values);
  expr.backward();
  std::vector<double> ad(point.size(), 0.0);
  for (std::size_t i = 0; i < point.size(); ++i) ad[i] = expr.adjoint(xs[i]);

  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double fp = expr.eval_slots(values);
    values[i] = saved - step;
    const double fm = expr.eval_slots(values);
    values[i] = saved;
    const double fd = (fp - fm) / (2.0 * step);
    if (!std::isfinite(fd)) {
      throw std::runtime_error("check_gradient: non-finite finite difference at coordinate " +
                               std::to_string(i));
    }
    const double err = std::abs(ad[i] - fd) / std::max(1.0, std::abs(ad[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace pertvi::ad
