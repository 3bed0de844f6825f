#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <unordered_map>
#include <vector>

#include "setrank/retrieval.hpp"
#include "setrank/rng.hpp"
#include "setrank/types.hpp"

namespace setrank {

/// Beta posterior over one document's contextual relevance. The prior is
/// Beta(1,1); alpha and beta stay >= 1 and alpha + beta == 2 + observations
/// after every completed update.
struct PosteriorState {
    double alpha = 1.0;
    double beta = 1.0;
    std::int64_t observations = 0;

    double mean() const { return alpha / (alpha + beta); }
};

inline double posterior_mean(const PosteriorState& s) { return s.mean(); }

/// One Beta(alpha, beta) draw from the caller's stream. Identical seed and
/// state give identical draws.
inline double sample_theta(const PosteriorState& s, Rng& rng) {
    return rng.next_beta(s.alpha, s.beta);
}

/// Belief state over a candidate list: one PosteriorState per candidate,
/// keyed by document id, with the first-stage order retained for
/// tie-breaking. Single-writer; updates are additive counts and therefore
/// commute, so verdicts within a flush window may be applied in any order.
class PosteriorTable {
public:
    PosteriorTable() = default;

    /// Builds the uniform-prior table for a candidate list. Rejects
    /// duplicate ids, naming the offender.
    static PosteriorTable init_priors(const CandidateList& candidates) {
        PosteriorTable table;
        table.doc_order_.reserve(candidates.size());
        for (const auto& [id, score] : candidates.entries) {
            if (table.slot_of_.count(id)) {
                throw std::invalid_argument("duplicate candidate id '" + id + "'");
            }
            table.slot_of_.emplace(id, table.doc_order_.size());
            table.doc_order_.push_back(id);
        }
        table.states_.assign(table.doc_order_.size(), PosteriorState{});
        return table;
    }

    std::size_t size() const { return doc_order_.size(); }
    const std::vector<DocId>& doc_order() const { return doc_order_; }

    bool contains(const DocId& id) const { return slot_of_.count(id) > 0; }

    const PosteriorState& state(const DocId& id) const { return states_[slot(id)]; }
    const PosteriorState& state_at(std::size_t i) const { return states_[i]; }

    double mean_of(const DocId& id) const { return states_[slot(id)].mean(); }

    /// Applies one verdict: for each judged id, alpha += r, beta += (1-r),
    /// observations += 1. Unjudged documents are untouched.
    void update(const JudgeVerdict& verdict) {
        if (verdict.doc_ids.size() != verdict.bits.size()) {
            throw std::invalid_argument("verdict ids and bits differ in length");
        }
        // Validate before mutating so a bad verdict cannot half-apply.
        for (std::size_t i = 0; i < verdict.doc_ids.size(); ++i) {
            slot(verdict.doc_ids[i]);
            if (verdict.bits[i] != 0 && verdict.bits[i] != 1) {
                throw std::invalid_argument("verdict bit outside {0,1} for doc '" +
                                            verdict.doc_ids[i] + "'");
            }
        }
        for (std::size_t i = 0; i < verdict.doc_ids.size(); ++i) {
            PosteriorState& s = states_[slot(verdict.doc_ids[i])];
            s.alpha += static_cast<double>(verdict.bits[i]);
            s.beta += static_cast<double>(1 - verdict.bits[i]);
            s.observations += 1;
        }
    }

    /// Applies accumulated success/failure counts for one document (the
    /// delayed-update flush path).
    void apply_counts(std::size_t i, std::int64_t successes, std::int64_t failures) {
        states_[i].alpha += static_cast<double>(successes);
        states_[i].beta += static_cast<double>(failures);
        states_[i].observations += successes + failures;
    }

    /// Final ranking: ids by posterior mean descending, ties broken by
    /// first-stage order. Always a permutation of all candidates.
    std::vector<DocId> ranking() const {
        std::vector<std::size_t> idx(doc_order_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return states_[a].mean() > states_[b].mean();
        });
        std::vector<DocId> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(doc_order_[i]);
        return out;
    }

    /// Flat snapshot: doc_id, alpha, beta, observations, mean.
    void write_csv(std::ostream& out) const {
        out << "doc_id,alpha,beta,observations,mean\n";
        char buf[128];
        for (std::size_t i = 0; i < doc_order_.size(); ++i) {
            const PosteriorState& s = states_[i];
            std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%lld,%.10g", s.alpha, s.beta,
                          static_cast<long long>(s.observations), s.mean());
            out << doc_order_[i] << ',' << buf << '\n';
        }
    }

private:
    std::size_t slot(const DocId& id) const {
        auto it = slot_of_.find(id);
        if (it == slot_of_.end()) {
            throw std::invalid_argument("verdict names unknown doc '" + id + "'");
        }
        return it->second;
    }

    std::vector<DocId> doc_order_;
    std::unordered_map<DocId, std::size_t> slot_of_;
    std::vector<PosteriorState> states_;
};

}  // namespace setrank
