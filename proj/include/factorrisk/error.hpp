#pragma once

#include <map>
#include <stdexcept>
#include <string>

namespace factorrisk {

/// Exception carrying the originating module and a stable error code.
///
/// The CLI serializes these as `{module, code, message, context}`.
class Error : public std::runtime_error {
public:
    using Context = std::map<std::string, std::string>;

    Error(std::string module, std::string code, const std::string& message, Context context = {});

    const std::string& module() const noexcept { return module_; }
    const std::string& code() const noexcept { return code_; }
    const Context& context() const noexcept { return context_; }
    /// Message without the `module/code: ` prefix carried by what().
    const std::string& message() const noexcept { return message_; }

private:
    std::string module_;
    std::string code_;
    Context context_;
    std::string message_;
};

}  // namespace factorrisk
