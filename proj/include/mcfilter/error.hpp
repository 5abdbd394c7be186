#ifndef MCFILTER_ERROR_HPP
#define MCFILTER_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mcfilter {

/// Invalid model input: bad rate constants, unknown species, out-of-range voxels.
class ModelError : public std::invalid_argument {
public:
  explicit ModelError(const std::string &what) : std::invalid_argument(what) {}
};

/// Observed data that the filter specification cannot explain.
class ModelMismatch : public std::runtime_error {
public:
  explicit ModelMismatch(const std::string &what) : std::runtime_error(what) {}
};

/// The time step makes the channel probabilities sum above one.
class StepTooLarge : public std::domain_error {
public:
  explicit StepTooLarge(const std::string &what) : std::domain_error(what) {}
};

class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string &what) : std::runtime_error(what) {}
};

} // namespace mcfilter

#endif
