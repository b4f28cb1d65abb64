#pragma once

#include <stdexcept>
#include <string>

namespace dagdp {

// Common base so callers can catch everything from this library at once.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Arithmetic left the domain of an operation (division by zero, ln of a
// nonpositive argument).
struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(what) {}
};

// A variable or structural index is outside the declared range.
struct IndexOutOfRange : Error {
  explicit IndexOutOfRange(const std::string& what) : Error(what) {}
};

// A proposition atom references a (stage, disjunct) pair outside the model.
struct InvalidAtom : Error {
  explicit InvalidAtom(const std::string& what) : Error(what) {}
};

// Requested collocation order is outside the supported range.
struct UnsupportedOrder : Error {
  explicit UnsupportedOrder(const std::string& what) : Error(what) {}
};

// Interpolation nodes passed to a differentiation matrix coincide.
struct DuplicateNodes : Error {
  explicit DuplicateNodes(const std::string& what) : Error(what) {}
};

// Exhaustive enumeration was asked for on a lattice above the guard size.
struct LatticeTooLarge : Error {
  explicit LatticeTooLarge(const std::string& what) : Error(what) {}
};

// A mode assignment violates the model's logic propositions.
struct InfeasibleConfiguration : Error {
  explicit InfeasibleConfiguration(const std::string& what) : Error(what) {}
};

// The requested external-variable scheme does not apply to this model.
struct UnsupportedScheme : Error {
  explicit UnsupportedScheme(const std::string& what) : Error(what) {}
};

// A lattice point lies outside the box of its external map.
struct OutOfBounds : Error {
  explicit OutOfBounds(const std::string& what) : Error(what) {}
};

// The starting lattice point of a search decodes to an infeasible assignment.
struct InfeasibleStart : Error {
  explicit InfeasibleStart(const std::string& what) : Error(what) {}
};

// A benchmark or CLI specification is malformed.
struct InvalidSpec : Error {
  explicit InvalidSpec(const std::string& what) : Error(what) {}
};

// Numerical integration produced a non-finite state.
struct NonFiniteState : Error {
  explicit NonFiniteState(const std::string& what) : Error(what) {}
};

}  // namespace dagdp
