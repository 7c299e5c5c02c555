#pragma once

#include <stdexcept>
#include <string>

namespace uml {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied something outside an operation's domain.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Two classifier rows coincide, so a margin has no normal direction.
class DegenerateHead : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class RankDeficientFit : public Error {
 public:
  using Error::Error;
};

}  // namespace uml
