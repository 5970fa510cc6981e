#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rpbg {

/// Error categories double as process exit codes for the CLI.
enum class ErrorKind : int {
    Config = 2,
    Data = 3,
    Numeric = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& what)
        : std::runtime_error(what), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }
    /// Short machine-greppable identifier, e.g. "E_FORMAT".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what, std::string code = "E_CONFIG")
        : Error(ErrorKind::Config, std::move(code), what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what, std::string code = "E_DATA")
        : Error(ErrorKind::Data, std::move(code), what) {}
};

struct FormatError : DataError {
    explicit FormatError(const std::string& what) : DataError(what, "E_FORMAT") {}
};

/// Missing or corrupt external asset (pretrained perceptual weights).
struct AssetError : ConfigError {
    explicit AssetError(const std::string& what) : ConfigError(what, "E_ASSET") {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what, std::string code = "E_NUMERIC")
        : Error(ErrorKind::Numeric, std::move(code), what) {}
};

/// Warnings go to stderr; tests may silence them.
void log_warn(std::string_view msg);
void log_info(std::string_view msg);
void set_log_quiet(bool quiet);

}  // namespace rpbg
