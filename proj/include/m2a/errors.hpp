#pragma once

#include <stdexcept>
#include <string>

namespace m2a {

/// Operand shapes do not conform for the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite input, off-simplex probabilities and similar value-domain faults.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid user-facing parameter (schedule, policy, config field).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A frequency-mask budget larger than the region it must be drawn from.
class BudgetError : public ParameterError {
 public:
  BudgetError(std::size_t budget, std::size_t region_size)
      : ParameterError("mask budget k=" + std::to_string(budget) +
                       " exceeds region size |Omega|=" + std::to_string(region_size)),
        budget_(budget),
        region_size_(region_size) {}

  std::size_t budget() const noexcept { return budget_; }
  std::size_t region_size() const noexcept { return region_size_; }

 private:
  std::size_t budget_;
  std::size_t region_size_;
};

/// API misuse: missing gradients, wrong archive version, unreadable files.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace m2a
