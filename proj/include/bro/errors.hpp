#pragma once

#include <stdexcept>
#include <string>

namespace bro {

// Mismatched widths, lengths or parameter-tree layouts.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Values outside an operation's domain (non-finite input, |a| >= 1 for atanh, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline void require_domain(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

}  // namespace bro
