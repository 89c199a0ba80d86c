/**
 * @file errors.hpp
 * @brief Error types shared across the toolkit.
 *
 * Two failure families map onto the CLI exit codes:
 * - ContractError (exit 2): a caller violated an operation's preconditions.
 * - FormatError   (exit 3): a file on disk is malformed.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace ck {

class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ck
