#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace setrank {

using DocId = std::string;

/// One batch of documents as presented to a setwise judge. The order of
/// `doc_ids` is the presentation order; `round` identifies the call within a
/// run and doubles as the nonce that makes simulated judgments vary across
/// repeated presentations of the same documents.
struct Batch {
    std::vector<DocId> doc_ids;
    int round = 1;

    std::size_t size() const { return doc_ids.size(); }
};

/// Per-document binary relevance bits for one judged batch, aligned with the
/// batch's presentation order. `raw_output` is only populated by the remote
/// judge.
struct JudgeVerdict {
    std::vector<DocId> doc_ids;
    std::vector<int> bits;
    std::string raw_output;

    int bit_for(const DocId& id) const {
        for (std::size_t i = 0; i < doc_ids.size(); ++i) {
            if (doc_ids[i] == id) return bits[i];
        }
        throw std::out_of_range("verdict has no entry for doc '" + id + "'");
    }
};

/// Base class for judge-side failures. Carries the raw model output when one
/// exists so callers can log what could not be interpreted.
class JudgeError : public std::runtime_error {
public:
    explicit JudgeError(const std::string& msg, std::string raw = {})
        : std::runtime_error(msg), raw_output(std::move(raw)) {}

    std::string raw_output;
};

/// The judge produced text that does not follow the answer format.
class AnswerParseError : public JudgeError {
public:
    using JudgeError::JudgeError;
};

/// Remote transport failed (connection refused, reset, DNS, ...).
class TransportError : public JudgeError {
public:
    using JudgeError::JudgeError;
};

/// Remote call exceeded its deadline.
class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};

/// Remote endpoint answered with a non-success HTTP status.
class HttpStatusError : public TransportError {
public:
    HttpStatusError(int status_code, const std::string& msg, std::string raw = {})
        : TransportError(msg, std::move(raw)), status(status_code) {}

    int status;
};

}  // namespace setrank
