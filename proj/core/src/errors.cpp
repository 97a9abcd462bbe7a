#include "reina/errors.hpp"

namespace reina {

ConfigError::ConfigError(const std::string& field, const std::string& what)
    : Error("invalid config field '" + field + "': " + what), field_(field) {}

IoError::IoError(const std::string& path, const std::string& what)
    : Error(path + ": " + what), path_(path) {}

NumericError::NumericError(const std::string& term, long step, const std::string& what)
    : Error("non-finite value in term '" + term + "' at step " + std::to_string(step) + ": " +
            what),
      term_(term),
      step_(step) {}

}  // namespace reina
