#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace trustbench {

enum class ErrorCode {
    InvalidBitLength,
    InvalidRolloff,
    SymbolCountMismatch,
    InvalidSpec,
    IoError,
    ShapeError,
    FormatError,
    IntegrityError,
    InvalidFraction,
    TrainingDiverged,
    MissingLevel,
    InvalidBit,
    InvalidTrialCount,
    EmptyEvalSet,
    ConfigError,
    ValidationError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// FormatError carrying the byte offset at which decoding failed.
class FormatError : public Error {
public:
    FormatError(std::uint64_t offset, const std::string& message)
        : Error(ErrorCode::FormatError, message + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidBitLength: return "InvalidBitLength";
    case ErrorCode::InvalidRolloff: return "InvalidRolloff";
    case ErrorCode::SymbolCountMismatch: return "SymbolCountMismatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IntegrityError: return "IntegrityError";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::MissingLevel: return "MissingLevel";
    case ErrorCode::InvalidBit: return "InvalidBit";
    case ErrorCode::InvalidTrialCount: return "InvalidTrialCount";
    case ErrorCode::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ValidationError: return "ValidationError";
    }
    return "Unknown";
}

} // namespace trustbench
