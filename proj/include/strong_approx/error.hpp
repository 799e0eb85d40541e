#ifndef STRONG_APPROX_ERROR_HPP
#define STRONG_APPROX_ERROR_HPP

#include <stdexcept>
#include <string>

namespace strong_approx {

enum class ErrorCode {
	NonCommensurableSupport,
	NegativeMass,
	OrderTooHigh,
	SupportOverflow,
	ZeroMassCondition,
	OutOfDomain,
	NonPositive,
	NotCentered,
	DegenerateVariance,
	NotPowerOfTwo,
	VarianceMismatch,
	UnsupportedLaw,
	StepTooCoarse,
	LengthMismatch,
	BadPartition,
	SupportTooLargeForBruteForce,
	InsufficientData,
	DegenerateTau,
	InvalidArgument,
	IoError,
	ConfigError,
};

inline const char* error_name(ErrorCode code) {
	switch (code) {
	case ErrorCode::NonCommensurableSupport: return "NonCommensurableSupport";
	case ErrorCode::NegativeMass: return "NegativeMass";
	case ErrorCode::OrderTooHigh: return "OrderTooHigh";
	case ErrorCode::SupportOverflow: return "SupportOverflow";
	case ErrorCode::ZeroMassCondition: return "ZeroMassCondition";
	case ErrorCode::OutOfDomain: return "OutOfDomain";
	case ErrorCode::NonPositive: return "NonPositive";
	case ErrorCode::NotCentered: return "NotCentered";
	case ErrorCode::DegenerateVariance: return "DegenerateVariance";
	case ErrorCode::NotPowerOfTwo: return "NotPowerOfTwo";
	case ErrorCode::VarianceMismatch: return "VarianceMismatch";
	case ErrorCode::UnsupportedLaw: return "UnsupportedLaw";
	case ErrorCode::StepTooCoarse: return "StepTooCoarse";
	case ErrorCode::LengthMismatch: return "LengthMismatch";
	case ErrorCode::BadPartition: return "BadPartition";
	case ErrorCode::SupportTooLargeForBruteForce: return "SupportTooLargeForBruteForce";
	case ErrorCode::InsufficientData: return "InsufficientData";
	case ErrorCode::DegenerateTau: return "DegenerateTau";
	case ErrorCode::InvalidArgument: return "InvalidArgument";
	case ErrorCode::IoError: return "IoError";
	case ErrorCode::ConfigError: return "ConfigError";
	}
	return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
	Error(ErrorCode code, const std::string& what)
	    : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

	ErrorCode code() const noexcept { return code_; }

private:
	ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

} // namespace strong_approx

#endif
