#include "factorrisk/error.hpp"

#include <utility>

namespace factorrisk {

Error::Error(std::string module, std::string code, const std::string& message, Context context)
    : std::runtime_error(module + "/" + code + ": " + message),
      module_(std::move(module)),
      code_(std::move(code)),
      context_(std::move(context)),
      message_(message) {}

}  // namespace factorrisk
