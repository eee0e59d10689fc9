#pragma once

#include <stdexcept>
#include <string>

namespace weblm {

enum class Errc {
  EmptyDocument,
  InvalidNode,
  SegmentTooLong,
  InvalidWindow,
  InvalidImage,
  ConfigError,
  AlignmentError,
  NumericsError,
  EmptySample,
  InvalidEpsilon,
  DataError,
  ChecksumError,
  IoError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::EmptyDocument: return "EmptyDocument";
    case Errc::InvalidNode: return "InvalidNode";
    case Errc::SegmentTooLong: return "SegmentTooLong";
    case Errc::InvalidWindow: return "InvalidWindow";
    case Errc::InvalidImage: return "InvalidImage";
    case Errc::ConfigError: return "ConfigError";
    case Errc::AlignmentError: return "AlignmentError";
    case Errc::NumericsError: return "NumericsError";
    case Errc::EmptySample: return "EmptySample";
    case Errc::InvalidEpsilon: return "InvalidEpsilon";
    case Errc::DataError: return "DataError";
    case Errc::ChecksumError: return "ChecksumError";
    case Errc::IoError: return "IoError";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace weblm
