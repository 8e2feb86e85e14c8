#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace hoi {

// All failures surface as Error with a stable machine-parsable code prefix;
// the CLI prints what() verbatim as the single error line.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& msg)
        : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

inline Error shape_error(const std::string& msg) { return Error("E_SHAPE", msg); }
inline Error range_error(const std::string& msg) { return Error("E_RANGE", msg); }
inline Error format_error(const std::string& msg) { return Error("E_FORMAT", msg); }
inline Error config_error(const std::string& msg) { return Error("E_CONFIG", msg); }
inline Error usage_error(const std::string& msg) { return Error("E_USAGE", msg); }
inline Error io_error(const std::string& msg) { return Error("E_IO", msg); }
inline Error train_error(const std::string& msg) { return Error("E_TRAIN", msg); }
inline Error domain_error(const std::string& msg) { return Error("E_DOMAIN", msg); }
inline Error oracle_error(const std::string& msg) { return Error("E_ORACLE", msg); }

}  // namespace hoi
