#pragma once

#include <span>
#include <stdexcept>
#include <string>

#include "pertvi/tape.hpp"

namespace pertvi {

enum class RegKind { kKL, kAlpha, kPerturbative };

/// Which concave regularizing function f defines the bound E_q[f(e^{-V})].
///
/// The checked factories enforce the ranges under which f is a valid bound
/// regularizer (alpha strictly inside (0,1); perturbative order odd). The
/// unchecked factory exists for diagnostics that deliberately probe invalid
/// members (even orders, alpha >= 1): those specs evaluate fine but fail
/// validate_regularizer and are rejected by the bound/fit entry points.
struct RegularizerSpec {
  RegKind kind = RegKind::kKL;
  double alpha = 0.0;  // Alpha only
  int order = 0;       // Perturbative only

  static RegularizerSpec kl() { return {RegKind::kKL, 0.0, 0}; }

  static RegularizerSpec alpha_divergence(double a) {
    if (!(a > 0.0 && a < 1.0)) {
      throw std::invalid_argument("alpha must lie strictly inside (0, 1); got " +
                                  std::to_string(a));
    }
    return {RegKind::kAlpha, a, 0};
  }

  static RegularizerSpec perturbative(int k) {
    if (k < 1 || k % 2 == 0) {
      throw std::invalid_argument("perturbative order must be a positive odd integer; got " +
                                  std::to_string(k));
    }
    if (k > 15) {
      throw std::invalid_argument("perturbative order capped at 15 (exact factorials)");
    }
    return {RegKind::kPerturbative, 0.0, k};
  }

  static RegularizerSpec unchecked(RegKind kind, double alpha, int order) {
    return {kind, alpha, order};
  }

  bool valid_for_bounds() const {
    switch (kind) {
      case RegKind::kKL:
        return true;
      case RegKind::kAlpha:
        return alpha > 0.0 && alpha < 1.0;
      case RegKind::kPerturbative:
        return order >= 1 && order <= 15 && order % 2 == 1;
    }
    return false;
  }

  std::string name() const;
};

/// Truncated exponential series sum_{k=0}^{order} u^k / k!, accumulated
/// Horner-style in u to limit cancellation. Requires order >= 1; works for
/// plain doubles and for tape variables.
template <class S>
S exp_series(S u, int order) {
  S t = u * (1.0 / order) + 1.0;
  for (int j = order - 1; j >= 1; --j) {
    t = u * t * (1.0 / j) + 1.0;
  }
  return t;
}

/// f(x) on the positive reals: KL -> log x; Alpha -> x^{1-alpha};
/// Perturbative -> e^{-v0} sum_{k<=K} (v0 + log x)^k / k!.
double f_value(const RegularizerSpec& spec, double v0, double x);

/// f(e^{-v}) computed directly in energy space, never forming e^{-v}:
/// KL -> -v; Alpha -> e^{-(1-alpha)v}; Perturbative -> e^{-v0} series(v0-v).
double f_of_energy(const RegularizerSpec& spec, double v0, double v);
ad::Var f_of_energy(const RegularizerSpec& spec, ad::Var v0, ad::Var v);

/// Grid self-check of the Jensen premises: f below the identity, midpoint
/// concavity, and (perturbative) the bound touching the identity at
/// x = e^{-v0}.
struct ValidityReport {
  double max_above_identity = 0.0;  // max over grid of f(x) - x
  double min_midpoint_gap = 0.0;    // min of f(mid) - (f(a)+f(b))/2 over adjacent pairs
  double touch_residual = 0.0;      // |f(e^{-v0}) - e^{-v0}|, perturbative only
  bool below_identity_ok = false;
  bool concave_ok = false;
  bool touch_ok = true;

  bool ok() const { return below_identity_ok && concave_ok && touch_ok; }
};

ValidityReport validate_regularizer(const RegularizerSpec& spec, double v0,
                                    std::span<const double> grid);

/// Log-spaced grid helper: n points covering [lo, hi].
std::vector<double> log_grid(double lo, double hi, std::size_t n);

}  // namespace pertvi
