#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace narrclf {

// Broad failure category; the CLI maps it onto its exit status.
enum class ErrorKind { Usage, Config, Data, Remote };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& what)
        : std::runtime_error(what), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    // Stable machine-readable tag, e.g. "UnknownSpeaker".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

#define NARRCLF_DEFINE_ERROR(Name, Kind)                                   \
    class Name : public Error {                                            \
    public:                                                                \
        explicit Name(const std::string& what)                             \
            : Error(ErrorKind::Kind, #Name, #Name ": " + what) {}          \
    };

NARRCLF_DEFINE_ERROR(ConfigError, Config)
NARRCLF_DEFINE_ERROR(TemplateError, Config)
NARRCLF_DEFINE_ERROR(ArtifactError, Data)
NARRCLF_DEFINE_ERROR(UnknownSpeaker, Data)
NARRCLF_DEFINE_ERROR(DuplicateId, Data)
NARRCLF_DEFINE_ERROR(InvalidTranscript, Data)
NARRCLF_DEFINE_ERROR(SplitError, Data)
NARRCLF_DEFINE_ERROR(InvalidArgument, Data)
NARRCLF_DEFINE_ERROR(VocabularyError, Data)
NARRCLF_DEFINE_ERROR(ScalerError, Data)
NARRCLF_DEFINE_ERROR(DimensionMismatch, Data)
NARRCLF_DEFINE_ERROR(SingleClass, Data)
NARRCLF_DEFINE_ERROR(DegenerateFolds, Data)
NARRCLF_DEFINE_ERROR(EvenVoteCount, Data)
NARRCLF_DEFINE_ERROR(MissingVote, Data)
NARRCLF_DEFINE_ERROR(DuplicateVote, Data)
NARRCLF_DEFINE_ERROR(MismatchedIds, Data)
NARRCLF_DEFINE_ERROR(EmptyInput, Data)
NARRCLF_DEFINE_ERROR(LengthMismatch, Data)

#undef NARRCLF_DEFINE_ERROR

// A JSONL record that failed to decode or validate; carries the 1-based line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(ErrorKind::Data, "ParseError",
                "ParseError: line " + std::to_string(line) + ": " + what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class PromptTooLong : public Error {
public:
    PromptTooLong(std::size_t estimate, std::size_t budget)
        : Error(ErrorKind::Data, "PromptTooLong",
                "PromptTooLong: estimated " + std::to_string(estimate) +
                    " tokens exceeds budget of " + std::to_string(budget)),
          estimate_(estimate) {}
    std::size_t estimate() const noexcept { return estimate_; }

private:
    std::size_t estimate_;
};

// Errors raised while classifying one transcript remotely carry its id.
class RemoteError : public Error {
public:
    RemoteError(std::string code, std::string transcript_id, const std::string& what)
        : Error(ErrorKind::Remote, code,
                code + " [" + transcript_id + "]: " + what),
          transcript_id_(std::move(transcript_id)) {}
    const std::string& transcript_id() const noexcept { return transcript_id_; }

private:
    std::string transcript_id_;
};

class TransportError : public RemoteError {
public:
    TransportError(std::string transcript_id, const std::string& what)
        : RemoteError("TransportError", std::move(transcript_id), what) {}
};

class ProtocolViolation : public RemoteError {
public:
    ProtocolViolation(std::string transcript_id, const std::string& what)
        : RemoteError("ProtocolViolation", std::move(transcript_id), what) {}
};

class UnparseableVerdict : public RemoteError {
public:
    UnparseableVerdict(std::string transcript_id, std::string raw)
        : RemoteError("UnparseableVerdict", std::move(transcript_id),
                      "reply does not start with YES or NO: \"" + raw + "\""),
          raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

}  // namespace narrclf
