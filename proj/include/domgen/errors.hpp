#pragma once

#include <stdexcept>
#include <string>

namespace domgen {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// config/shape/index/parse/validation -> 2, io -> 3, numeric -> 4.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

class shape_error : public error {
 public:
  explicit shape_error(const std::string& msg) : error(msg) {}
};

class index_error : public error {
 public:
  explicit index_error(const std::string& msg) : error(msg) {}
};

// Bad configuration, violated precondition, or failed dataset validation.
class config_error : public error {
 public:
  explicit config_error(const std::string& msg) : error(msg) {}
};

class parse_error : public error {
 public:
  explicit parse_error(const std::string& msg) : error(msg) {}
};

class io_error : public error {
 public:
  explicit io_error(const std::string& msg) : error(msg) {}
};

class numeric_error : public error {
 public:
  explicit numeric_error(const std::string& msg) : error(msg) {}
};

}  // namespace domgen
