#pragma once

#include <stdexcept>

namespace ipsc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was given an id it does not know.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace ipsc
