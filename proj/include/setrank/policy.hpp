#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "setrank/bandit.hpp"
#include "setrank/judge.hpp"
#include "setrank/retrieval.hpp"
#include "setrank/rng.hpp"
#include "setrank/types.hpp"

namespace setrank {

/// Batch-to-verdict callable the run loops drive. Implementations raise
/// JudgeError (or a subclass) on failure; the loops never retry silently.
using BatchJudge = std::function<JudgeVerdict(const Batch&)>;

struct PolicyConfig {
    int budget_T = 100;
    int explore_Tf = 0;
    int batch_size = 10;
    int flush_tau = 1;  // TS-SetRank-T only
    std::uint64_t seed = 0;

    void validate(std::size_t num_candidates) const {
        if (budget_T < 0) throw std::invalid_argument("budget T must be >= 0");
        if (explore_Tf < 0 || explore_Tf > budget_T) {
            throw std::invalid_argument("exploration rounds T_f must lie in [0, T]");
        }
        if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
        if (static_cast<std::size_t>(batch_size) > num_candidates) {
            throw std::invalid_argument("batch size exceeds candidate count");
        }
        if (flush_tau < 1) throw std::invalid_argument("flush interval tau must be >= 1");
    }
};

struct TraceRecord {
    int round = 0;
    std::string phase;  // "uniform" | "thompson" | "heapify"
    Batch batch;
    JudgeVerdict verdict;
    std::int64_t judge_calls_so_far = 0;
};

struct SnapshotEntry {
    DocId doc_id;
    double posterior_mean;
};

/// Full record of one policy run: every judged batch, ranked snapshots at the
/// requested rounds, and the judge-call count (always equal to the number of
/// recorded batches). A judge failure aborts the run and is recorded here
/// rather than thrown away.
struct RunTrace {
    std::vector<TraceRecord> records;
    std::map<int, std::vector<SnapshotEntry>> snapshots;
    std::int64_t judge_calls = 0;
    std::optional<int> failed_round;
    std::string failure_reason;

    /// One JSON object per round: {round, phase, batch, verdict_bits,
    /// judge_calls_so_far}.
    void write_jsonl(std::ostream& out) const {
        for (const auto& rec : records) {
            nlohmann::ordered_json j;
            j["round"] = rec.round;
            j["phase"] = rec.phase;
            j["batch"] = rec.batch.doc_ids;
            j["verdict_bits"] = rec.verdict.bits;
            j["judge_calls_so_far"] = rec.judge_calls_so_far;
            out << j.dump() << '\n';
        }
        if (failed_round) {
            nlohmann::ordered_json j;
            j["failed_round"] = *failed_round;
            j["error"] = failure_reason;
            out << j.dump() << '\n';
        }
    }

    /// CSV: round, rank, doc_id, posterior_mean.
    void write_snapshots_csv(std::ostream& out) const {
        out << "round,rank,doc_id,posterior_mean\n";
        char buf[64];
        for (const auto& [round, ranked] : snapshots) {
            for (std::size_t i = 0; i < ranked.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.10g", ranked[i].posterior_mean);
                out << round << ',' << (i + 1) << ',' << ranked[i].doc_id << ',' << buf << '\n';
            }
        }
    }

    std::string jsonl() const {
        std::ostringstream os;
        write_jsonl(os);
        return os.str();
    }

    std::string snapshots_csv() const {
        std::ostringstream os;
        write_snapshots_csv(os);
        return os.str();
    }
};

struct RunResult {
    std::vector<DocId> ranking;
    RunTrace trace;
    PosteriorTable posterior;

    bool ok() const { return !trace.failed_round.has_value(); }
};

/// Draws b distinct documents uniformly without replacement; the drawn order
/// is the presentation order.
inline Batch sample_uniform_batch(const CandidateList& candidates, int b, Rng& rng,
                                  int round = 1) {
    if (b < 1) throw std::invalid_argument("batch size must be >= 1");
    if (static_cast<std::size_t>(b) > candidates.size()) {
        throw std::invalid_argument("batch size exceeds candidate count");
    }
    const auto idx = rng.sample_indices(candidates.size(), static_cast<std::size_t>(b));
    Batch batch;
    batch.round = round;
    batch.doc_ids.reserve(idx.size());
    for (std::size_t i : idx) batch.doc_ids.push_back(candidates.entries[i].first);
    return batch;
}

/// Thompson selection: one Beta draw per candidate (in first-stage order),
/// then the b documents with the largest draws, presented in descending draw
/// order. Draw ties fall back to first-stage order.
inline Batch thompson_select_batch(const PosteriorTable& table, int b, Rng& rng,
                                   int round = 1) {
    if (b < 1) throw std::invalid_argument("batch size must be >= 1");
    if (static_cast<std::size_t>(b) > table.size()) {
        throw std::invalid_argument("batch size exceeds candidate count");
    }
    std::vector<std::pair<double, std::size_t>> draws;
    draws.reserve(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        draws.emplace_back(sample_theta(table.state_at(i), rng), i);
    }
    std::stable_sort(draws.begin(), draws.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    Batch batch;
    batch.round = round;
    batch.doc_ids.reserve(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) batch.doc_ids.push_back(table.doc_order()[draws[i].second]);
    return batch;
}

namespace detail {

inline void take_snapshot(RunTrace& trace, int round, const PosteriorTable& table,
                          std::span<const int> snapshot_rounds) {
    for (int r : snapshot_rounds) {
        if (r != round) continue;
        std::vector<SnapshotEntry> ranked;
        const auto ids = table.ranking();
        ranked.reserve(ids.size());
        for (const auto& id : ids) ranked.push_back({id, table.mean_of(id)});
        trace.snapshots[round] = std::move(ranked);
        break;
    }
}

}  // namespace detail

/// TS-SetRank: T_f rounds of uniform batches, then Thompson-selected batches,
/// with the posterior updated immediately after every verdict. Runs exactly
/// T judge calls unless the judge fails, in which case the round is aborted
/// and recorded in the trace.
inline RunResult run_ts_setrank(const CandidateList& candidates, const BatchJudge& judge,
                                const PolicyConfig& cfg,
                                std::span<const int> snapshot_rounds = {}) {
    cfg.validate(candidates.size());
    RunResult result;
    result.posterior = PosteriorTable::init_priors(candidates);
    Rng rng(cfg.seed);
    for (int t = 1; t <= cfg.budget_T; ++t) {
        const bool explore = t <= cfg.explore_Tf;
        Batch batch = explore ? sample_uniform_batch(candidates, cfg.batch_size, rng, t)
                              : thompson_select_batch(result.posterior, cfg.batch_size, rng, t);
        JudgeVerdict verdict;
        try {
            verdict = judge(batch);
        } catch (const JudgeError& e) {
            result.trace.failed_round = t;
            result.trace.failure_reason = e.what();
            break;
        }
        result.posterior.update(verdict);
        result.trace.judge_calls += 1;
        result.trace.records.push_back(
            {t, explore ? "uniform" : "thompson", std::move(batch), std::move(verdict),
             result.trace.judge_calls});
        detail::take_snapshot(result.trace, t, result.posterior, snapshot_rounds);
    }
    result.ranking = result.posterior.ranking();
    return result;
}

/// TS-SetRank-T: identical batch selection, but verdicts accumulate in
/// per-document success/failure counters that flush into the posterior on a
/// schedule. Counters flush at the end of round T_f (so Phase II starts from
/// all Phase-I evidence), whenever (t - T_f) mod tau == 0 during Phase II,
/// and once more after round T. With tau == 1 the trace is identical to
/// run_ts_setrank for any seed and judge; between flushes the posterior, and
/// therefore any snapshot, is unchanged.
inline RunResult run_ts_setrank_t(const CandidateList& candidates, const BatchJudge& judge,
                                  const PolicyConfig& cfg,
                                  std::span<const int> snapshot_rounds = {}) {
    cfg.validate(candidates.size());
    RunResult result;
    result.posterior = PosteriorTable::init_priors(candidates);
    const std::size_t n = result.posterior.size();
    std::vector<std::int64_t> successes(n, 0), failures(n, 0);
    std::unordered_map<DocId, std::size_t> slot;
    for (std::size_t i = 0; i < n; ++i) slot.emplace(result.posterior.doc_order()[i], i);

    const auto flush = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            if (successes[i] == 0 && failures[i] == 0) continue;
            result.posterior.apply_counts(i, successes[i], failures[i]);
            successes[i] = 0;
            failures[i] = 0;
        }
    };

    Rng rng(cfg.seed);
    for (int t = 1; t <= cfg.budget_T; ++t) {
        const bool explore = t <= cfg.explore_Tf;
        Batch batch = explore ? sample_uniform_batch(candidates, cfg.batch_size, rng, t)
                              : thompson_select_batch(result.posterior, cfg.batch_size, rng, t);
        JudgeVerdict verdict;
        try {
            verdict = judge(batch);
        } catch (const JudgeError& e) {
            result.trace.failed_round = t;
            result.trace.failure_reason = e.what();
            break;
        }
        for (std::size_t i = 0; i < verdict.doc_ids.size(); ++i) {
            auto it = slot.find(verdict.doc_ids[i]);
            if (it == slot.end()) {
                throw std::invalid_argument("verdict names unknown doc '" + verdict.doc_ids[i] + "'");
            }
            if (verdict.bits[i] == 1) {
                ++successes[it->second];
            } else if (verdict.bits[i] == 0) {
                ++failures[it->second];
            } else {
                throw std::invalid_argument("verdict bit outside {0,1}");
            }
        }
        if (t == cfg.explore_Tf || (t > cfg.explore_Tf && (t - cfg.explore_Tf) % cfg.flush_tau == 0)) {
            flush();
        }
        result.trace.judge_calls += 1;
        result.trace.records.push_back(
            {t, explore ? "uniform" : "thompson", std::move(batch), std::move(verdict),
             result.trace.judge_calls});
        detail::take_snapshot(result.trace, t, result.posterior, snapshot_rounds);
    }
    flush();
    result.ranking = result.posterior.ranking();
    return result;
}

/// Heapify baseline: builds a binary max-heap over the candidates where each
/// comparison is one judge call on the triplet (parent, left, right). The
/// winner is the first batch member judged relevant in presentation order;
/// if none is, the incumbent parent wins. After the build, top_k documents
/// are extracted with a re-sift after each extraction; the returned ranking
/// is the extraction order followed by the remaining documents in
/// first-stage order. Every triplet call counts toward judge_calls.
inline RunResult run_heapify(const CandidateList& candidates, const BatchJudge& judge,
                             int top_k) {
    if (top_k < 0 || static_cast<std::size_t>(top_k) > candidates.size()) {
        throw std::invalid_argument("top_k must lie in [0, N]");
    }
    RunResult result;
    result.posterior = PosteriorTable::init_priors(candidates);
    const auto ids = candidates.ids();
    std::vector<std::size_t> heap(ids.size());
    for (std::size_t i = 0; i < heap.size(); ++i) heap[i] = i;
    std::size_t heap_size = heap.size();
    bool aborted = false;

    // One judge call per triplet: returns the heap position of the winner.
    const auto winner_of = [&](std::size_t pos, std::size_t left,
                               std::size_t right) -> std::size_t {
        Batch batch;
        batch.round = static_cast<int>(result.trace.judge_calls + 1);
        batch.doc_ids.push_back(ids[heap[pos]]);
        batch.doc_ids.push_back(ids[heap[left]]);
        if (right < heap_size) batch.doc_ids.push_back(ids[heap[right]]);
        JudgeVerdict verdict = judge(batch);
        result.trace.judge_calls += 1;
        std::size_t win = pos;
        for (std::size_t i = 0; i < verdict.bits.size(); ++i) {
            if (verdict.bits[i] == 1) {
                win = i == 0 ? pos : (i == 1 ? left : right);
                break;
            }
        }
        result.trace.records.push_back({batch.round, "heapify", std::move(batch),
                                        std::move(verdict), result.trace.judge_calls});
        return win;
    };

    const auto sift_down = [&](std::size_t pos) {
        for (;;) {
            const std::size_t left = 2 * pos + 1;
            if (left >= heap_size) return;
            const std::size_t right = left + 1;
            std::size_t win;
            try {
                win = winner_of(pos, left, right);
            } catch (const JudgeError& e) {
                result.trace.failed_round = static_cast<int>(result.trace.judge_calls + 1);
                result.trace.failure_reason = e.what();
                aborted = true;
                return;
            }
            if (win == pos) return;
            std::swap(heap[pos], heap[win]);
            pos = win;
        }
    };

    // Floyd build: one sift per internal node, bottom-up.
    if (heap_size > 1) {
        for (std::size_t i = heap_size / 2; i-- > 0 && !aborted;) sift_down(i);
    }

    std::vector<std::size_t> extracted;
    for (int k = 0; k < top_k && heap_size > 0 && !aborted; ++k) {
        extracted.push_back(heap[0]);
        heap[0] = heap[heap_size - 1];
        --heap_size;
        if (heap_size > 1) sift_down(0);
    }

    std::vector<bool> taken(ids.size(), false);
    for (std::size_t s : extracted) taken[s] = true;
    result.ranking.reserve(ids.size());
    for (std::size_t s : extracted) result.ranking.push_back(ids[s]);
    for (std::size_t s = 0; s < ids.size(); ++s) {
        if (!taken[s]) result.ranking.push_back(ids[s]);
    }
    return result;
}

/// Best achievable per-round surrogate reward: the sum of the b largest true
/// relevance probabilities.
inline double surrogate_optimal_batch(const std::unordered_map<DocId, double>& truth, int b) {
    if (b < 0 || static_cast<std::size_t>(b) > truth.size()) {
        throw std::invalid_argument("b must lie in [0, |truth|]");
    }
    std::vector<double> thetas;
    thetas.reserve(truth.size());
    for (const auto& [id, theta] : truth) thetas.push_back(theta);
    std::sort(thetas.begin(), thetas.end(), std::greater<>());
    double sum = 0.0;
    for (int i = 0; i < b; ++i) sum += thetas[static_cast<std::size_t>(i)];
    return sum;
}

}  // namespace setrank
