#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bowen {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter or argument violates a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// The transfer-operator weights |F'|^{-t} are not summable (t <= 1).
class TNotSummable : public Error {
public:
    explicit TNotSummable(double t)
        : Error("t = " + std::to_string(t) + " is not in the summable range t > 1"), t_(t) {}
    double t() const noexcept { return t_; }

private:
    double t_;
};

/// A requested inverse branch has no validated solution at the given point.
class BranchMiss : public Error {
public:
    BranchMiss(int lift, int depth)
        : Error("inverse branch k = " + std::to_string(lift) + " missed at depth " +
                std::to_string(depth)),
          lift_(lift), depth_(depth) {}
    int lift() const noexcept { return lift_; }
    int depth() const noexcept { return depth_; }

private:
    int lift_;
    int depth_;
};

/// Numerical failure that the CLI maps to exit code 3.
class NumericalFailure : public Error {
public:
    using Error::Error;
};

/// A preimage tree grew past its node budget. Carries the partial sum reached.
class BudgetExceeded : public NumericalFailure {
public:
    BudgetExceeded(double partial_value, std::size_t budget)
        : NumericalFailure("node budget of " + std::to_string(budget) + " exceeded"),
          partial_(partial_value), budget_(budget) {}
    double partial_value() const noexcept { return partial_; }
    std::size_t budget() const noexcept { return budget_; }

private:
    double partial_;
    std::size_t budget_;
};

}  // namespace bowen
