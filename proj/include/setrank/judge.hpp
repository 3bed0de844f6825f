#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "setrank/retrieval.hpp"
#include "setrank/rng.hpp"
#include "setrank/types.hpp"

namespace setrank {

// Fixed prompt text. The parser and the remote wire format are built around
// these exact strings; do not reflow them.
inline constexpr std::string_view kSystemPrompt =
    "Respond in the following format:\n"
    "<reasoning>\n"
    "Your detailed reasoning goes here...\n"
    "</reasoning>\n"
    "<answer>\n"
    "Relevant passages: title1, title2, ...\n"
    "(If no passages are relevant, respond with: \"Relevant passages: No relevant passages\")\n"
    "</answer>";

inline constexpr std::string_view kUserInstructions =
    "Identify all the relevant passages for answering the given query. "
    "Explain your reasoning step by step.";

inline constexpr std::string_view kNoRelevantMarker = "No relevant passages";

/// Setwise judge interface: one binary relevance bit per batch member.
class SetwiseJudge {
public:
    virtual ~SetwiseJudge() = default;
    virtual JudgeVerdict judge_batch(const std::string& query, const Batch& batch) = 0;
};

/// Generative model for the simulated judge. Judgment probability of a
/// document is its base rate plus a per-slot presentation offset plus a
/// coupling on how many of its batch neighbours are themselves relevant,
/// clamped to [0,1]. Zero bias and zero gain reduce it to independent
/// Bernoulli(base_theta) arms.
struct SimulatedJudgeModel {
    std::unordered_map<DocId, double> base_theta;
    std::vector<double> positional_bias;
    double compositional_gain = 0.0;
    double relevance_threshold = 0.5;
    std::uint64_t seed = 0;

    double theta_of(const DocId& id) const {
        auto it = base_theta.find(id);
        if (it == base_theta.end()) {
            throw std::invalid_argument("simulated judge has no base_theta for doc '" + id + "'");
        }
        return it->second;
    }

    static SimulatedJudgeModel from_json(const nlohmann::json& j) {
        SimulatedJudgeModel m;
        for (const auto& [id, theta] : j.at("base_theta").items()) {
            m.base_theta[id] = theta.get<double>();
        }
        m.positional_bias = j.at("positional_bias").get<std::vector<double>>();
        m.compositional_gain = j.at("compositional_gain").get<double>();
        m.relevance_threshold = j.at("relevance_threshold").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        return m;
    }

    static SimulatedJudgeModel load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open judge model file: " + path);
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }
};

/// Judgment probability of `doc` within `batch` under the model:
/// clamp(base_theta + positional_bias[slot] + gain * frac_other_relevant, 0, 1).
/// frac_other_relevant is the fraction of the other batch members whose
/// base_theta exceeds the relevance threshold.
inline double simulate_judgment_prob(const SimulatedJudgeModel& model, const DocId& doc,
                                     const Batch& batch) {
    std::size_t slot = batch.doc_ids.size();
    for (std::size_t i = 0; i < batch.doc_ids.size(); ++i) {
        if (batch.doc_ids[i] == doc) {
            slot = i;
            break;
        }
    }
    if (slot == batch.doc_ids.size()) {
        throw std::invalid_argument("doc '" + doc + "' is not in the batch");
    }
    const double base = model.theta_of(doc);
    const double bias = slot < model.positional_bias.size() ? model.positional_bias[slot] : 0.0;
    double frac = 0.0;
    if (batch.doc_ids.size() > 1) {
        int above = 0;
        for (std::size_t i = 0; i < batch.doc_ids.size(); ++i) {
            if (i == slot) continue;
            if (model.theta_of(batch.doc_ids[i]) > model.relevance_threshold) ++above;
        }
        frac = static_cast<double>(above) / static_cast<double>(batch.doc_ids.size() - 1);
    }
    return std::clamp(base + bias + model.compositional_gain * frac, 0.0, 1.0);
}

/// Simulated setwise judge. Verdicts are a pure function of
/// (model seed, batch round, doc id, batch contents): the same call repeated
/// returns the same bits, distinct rounds give fresh Bernoulli draws, and
/// calls are safe to issue concurrently. The per-document uniform is derived
/// from (seed, round, doc id) alone, so two batches in the same round give
/// each shared document the same draw under possibly different probabilities.
class SimulatedJudge : public SetwiseJudge {
public:
    explicit SimulatedJudge(SimulatedJudgeModel model) : model_(std::move(model)) {}

    const SimulatedJudgeModel& model() const { return model_; }

    JudgeVerdict judge_batch(const std::string& /*query*/, const Batch& batch) override {
        JudgeVerdict v;
        v.doc_ids = batch.doc_ids;
        v.bits.reserve(batch.doc_ids.size());
        for (const auto& id : batch.doc_ids) {
            const double p = simulate_judgment_prob(model_, id, batch);
            const double u = unit_from_hash(
                mix_seed(model_.seed, static_cast<std::uint64_t>(batch.round), fnv1a(id)));
            v.bits.push_back(u < p ? 1 : 0);
        }
        return v;
    }

private:
    SimulatedJudgeModel model_;
};

/// Prompt payload for the remote judge. system_text and user_text are the
/// fixed strings above; passages are (title, body) in presentation order.
struct PromptBundle {
    std::string system_text;
    std::string user_text;
    std::string query;
    std::vector<std::pair<std::string, std::string>> passages;
};

/// Assembles the judge prompt for one batch. Titles are the answer keys, so
/// every batch member needs a non-empty title that is unique within the
/// batch.
inline PromptBundle format_prompt(const std::string& query, const Batch& batch,
                                  const Corpus& docs) {
    if (query.empty()) throw std::invalid_argument("query text is empty");
    if (batch.doc_ids.empty()) throw std::invalid_argument("batch is empty");
    PromptBundle bundle;
    bundle.system_text = std::string(kSystemPrompt);
    bundle.user_text = std::string(kUserInstructions);
    bundle.query = query;
    std::vector<std::string> seen;
    for (const auto& id : batch.doc_ids) {
        const Document& doc = docs.doc(id);
        if (doc.title.empty()) {
            throw std::invalid_argument("doc '" + id + "' has no title; titles are the answer keys");
        }
        for (const auto& t : seen) {
            if (t == doc.title) {
                throw std::invalid_argument("duplicate title within batch: '" + doc.title + "'");
            }
        }
        seen.push_back(doc.title);
        bundle.passages.emplace_back(doc.title, doc.body);
    }
    return bundle;
}

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
    return lower(a) == lower(b);
}

/// Removes well-formed <reasoning>...</reasoning> spans; their content plays
/// no part in parsing.
inline std::string strip_reasoning(std::string text) {
    for (;;) {
        const auto open = text.find("<reasoning>");
        if (open == std::string::npos) break;
        const auto close = text.find("</reasoning>", open);
        if (close == std::string::npos) break;
        text.erase(open, close + std::string_view("</reasoning>").size() - open);
    }
    return text;
}

}  // namespace detail

/// Result of parsing one judge completion: one bit per batch title, plus any
/// answer tokens that matched no title (ignored for bits, kept for
/// reporting).
struct ParsedAnswer {
    std::vector<int> bits;
    std::vector<std::string> unmatched;
};

/// Parses the <answer> block of a judge completion against the batch's
/// titles. Titles match case-insensitively after trimming; the exact marker
/// phrase "No relevant passages" yields all zeros. Missing or out-of-order
/// answer tags raise AnswerParseError.
inline ParsedAnswer parse_answer_block(const std::string& raw,
                                       const std::vector<std::string>& batch_titles) {
    for (std::size_t i = 0; i < batch_titles.size(); ++i) {
        for (std::size_t j = i + 1; j < batch_titles.size(); ++j) {
            if (detail::iequals(detail::trim(batch_titles[i]), detail::trim(batch_titles[j]))) {
                throw std::invalid_argument("batch titles are not unique: '" + batch_titles[i] + "'");
            }
        }
    }
    const std::string text = detail::strip_reasoning(raw);
    const auto open = text.find("<answer>");
    if (open == std::string::npos) {
        throw AnswerParseError("missing <answer> tag", raw);
    }
    const auto close = text.find("</answer>", open);
    if (close == std::string::npos) {
        throw AnswerParseError("missing </answer> tag", raw);
    }
    std::string span = detail::trim(
        std::string_view(text).substr(open + 8, close - open - 8));

    static constexpr std::string_view kPrefix = "relevant passages:";
    if (detail::lower(span).rfind(kPrefix, 0) == 0) {
        span = detail::trim(std::string_view(span).substr(kPrefix.size()));
    }

    ParsedAnswer out;
    out.bits.assign(batch_titles.size(), 0);
    if (detail::iequals(span, kNoRelevantMarker) || span.empty()) {
        return out;
    }

    std::size_t start = 0;
    while (start <= span.size()) {
        const auto comma = span.find(',', start);
        const std::string token = detail::trim(
            std::string_view(span).substr(start, comma == std::string::npos ? std::string::npos
                                                                            : comma - start));
        start = comma == std::string::npos ? span.size() + 1 : comma + 1;
        if (token.empty()) continue;
        bool matched = false;
        for (std::size_t i = 0; i < batch_titles.size(); ++i) {
            if (detail::iequals(token, detail::trim(batch_titles[i]))) {
                out.bits[i] = 1;
                matched = true;
                break;
            }
        }
        if (!matched) out.unmatched.push_back(token);
    }
    return out;
}

}  // namespace setrank
