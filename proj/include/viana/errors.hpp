#pragma once

#include <stdexcept>
#include <string>

namespace viana {

// Failure taxonomy for the laboratory.  Every throwing operation documents
// which of these it can raise; soft conditions (CriticalHit, resolution
// exhaustion) travel as flags on results instead of exceptions.
enum class errc {
    no_root_in_bracket,
    degenerate_parameter,
    invalid_parameter,
    domination_violated,
    class_degenerate,
    chain_degenerate,
    distortion_violated,
    scaling_broken,
    expansion_violated,
    resolution_exhausted,
    invalid_element,
    measurement_bug,
    growth_violated,
    no_segments,
    curve_not_admissible,
    frame_collapse,
    io_error,
    invalid_config,
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::no_root_in_bracket:   return "NoRootInBracket";
        case errc::degenerate_parameter: return "DegenerateParameter";
        case errc::invalid_parameter:    return "InvalidParameter";
        case errc::domination_violated:  return "DominationViolated";
        case errc::class_degenerate:     return "ClassDegenerate";
        case errc::chain_degenerate:     return "ChainDegenerate";
        case errc::distortion_violated:  return "DistortionViolated";
        case errc::scaling_broken:       return "ScalingBroken";
        case errc::expansion_violated:   return "ExpansionViolated";
        case errc::resolution_exhausted: return "ResolutionExhausted";
        case errc::invalid_element:      return "InvalidElement";
        case errc::measurement_bug:      return "MeasurementBug";
        case errc::growth_violated:      return "GrowthViolated";
        case errc::no_segments:          return "NoSegments";
        case errc::curve_not_admissible: return "CurveNotAdmissible";
        case errc::frame_collapse:       return "FrameCollapse";
        case errc::io_error:             return "IoError";
        case errc::invalid_config:       return "InvalidConfig";
    }
    return "Unknown";
}

class error : public std::runtime_error {
public:
    error(errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    errc code() const noexcept { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

} // namespace viana
