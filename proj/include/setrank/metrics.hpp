#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "setrank/policy.hpp"
#include "setrank/types.hpp"

namespace setrank {

/// Graded ground-truth judgments. Absent (query, doc) pairs mean grade 0.
class Qrels {
public:
    void add(const std::string& query_id, const DocId& doc_id, int grade) {
        if (grade < 0) throw std::invalid_argument("relevance grades must be >= 0");
        judgments_[query_id][doc_id] = grade;
    }

    int grade(const std::string& query_id, const DocId& doc_id) const {
        auto q = judgments_.find(query_id);
        if (q == judgments_.end()) return 0;
        auto d = q->second.find(doc_id);
        return d == q->second.end() ? 0 : d->second;
    }

    const std::unordered_map<DocId, int>* for_query(const std::string& query_id) const {
        auto q = judgments_.find(query_id);
        return q == judgments_.end() ? nullptr : &q->second;
    }

    std::vector<DocId> relevant_docs(const std::string& query_id) const {
        std::vector<DocId> out;
        if (const auto* m = for_query(query_id)) {
            for (const auto& [id, g] : *m) {
                if (g > 0) out.push_back(id);
            }
            std::sort(out.begin(), out.end());
        }
        return out;
    }

    /// Tab-separated with a header row: query-id, corpus-id, score.
    static Qrels load_tsv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open qrels file: " + path);
        Qrels qrels;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (lineno == 1 || line.empty()) continue;  // header
            std::istringstream ss(line);
            std::string qid, did, score;
            if (!std::getline(ss, qid, '\t') || !std::getline(ss, did, '\t') ||
                !std::getline(ss, score, '\t')) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": expected query-id<TAB>corpus-id<TAB>score");
            }
            qrels.add(qid, did, std::stoi(score));
        }
        return qrels;
    }

private:
    std::unordered_map<std::string, std::unordered_map<DocId, int>> judgments_;
};

namespace detail {

inline double dcg_gain(int grade) { return std::pow(2.0, grade) - 1.0; }

}  // namespace detail

/// nDCG@k with exponential gain (2^rel - 1) and log2(i+1) discount. The
/// ideal DCG is computed over all judged documents for the query, not just
/// those present in the ranking. Returns 0 when the query has no relevant
/// documents.
inline double ndcg_at_k(const std::vector<DocId>& ranking, const Qrels& qrels,
                        const std::string& query_id, int k) {
    if (k < 1) throw std::invalid_argument("ndcg_at_k requires k >= 1");
    double dcg = 0.0;
    const std::size_t limit = std::min<std::size_t>(ranking.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) {
        const int g = qrels.grade(query_id, ranking[i]);
        if (g > 0) dcg += detail::dcg_gain(g) / std::log2(static_cast<double>(i) + 2.0);
    }
    std::vector<int> grades;
    if (const auto* judged = qrels.for_query(query_id)) {
        for (const auto& [id, g] : *judged) {
            if (g > 0) grades.push_back(g);
        }
    }
    if (grades.empty()) return 0.0;
    std::sort(grades.begin(), grades.end(), std::greater<>());
    double idcg = 0.0;
    const std::size_t ideal_limit = std::min<std::size_t>(grades.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < ideal_limit; ++i) {
        idcg += detail::dcg_gain(grades[i]) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

/// Running cumulative surrogate regret over a trace: per round,
/// (best possible batch theta-sum) - (selected batch theta-sum), summed.
/// Non-decreasing by optimality of the top-b set.
inline std::vector<double> cumulative_regret(const RunTrace& trace,
                                             const std::unordered_map<DocId, double>& truth,
                                             int b) {
    const double optimum = surrogate_optimal_batch(truth, b);
    std::vector<double> running;
    running.reserve(trace.records.size());
    double total = 0.0;
    for (const auto& rec : trace.records) {
        if (rec.batch.doc_ids.size() != static_cast<std::size_t>(b)) {
            throw std::invalid_argument("trace batch size does not match b");
        }
        double got = 0.0;
        for (const auto& id : rec.batch.doc_ids) {
            auto it = truth.find(id);
            if (it == truth.end()) {
                throw std::invalid_argument("truth map is missing doc '" + id + "'");
            }
            got += it->second;
        }
        total += optimum - got;
        running.push_back(total);
    }
    return running;
}

/// F-beta agreement between predicted and gold sets. Empty prediction or
/// gold, or zero precision and recall, give 0.
inline double f_beta(const std::set<DocId>& predicted, const std::set<DocId>& gold,
                     double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    if (predicted.empty() || gold.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& id : predicted) inter += gold.count(id);
    const double p = static_cast<double>(inter) / static_cast<double>(predicted.size());
    const double r = static_cast<double>(inter) / static_cast<double>(gold.size());
    if (p == 0.0 && r == 0.0) return 0.0;
    const double b2 = beta * beta;
    return (1.0 + b2) * p * r / (b2 * p + r);
}

/// Per-regime judgment statistics in the style of the variability table:
/// accuracy and per-query variance, each averaged across queries.
struct RegimeStats {
    std::string regime;  // "intrinsic" | "positional" | "total"
    double mean_accuracy = 0.0;
    double mean_per_query_variance = 0.0;
    int queries = 0;
};

struct ExcludedQuery {
    std::string query_id;
    std::string reason;
};

struct VarianceDecomposition {
    std::vector<RegimeStats> stats;
    std::vector<ExcludedQuery> excluded;
};

/// Per query and regime: accuracy is the mean of the outcome bits and
/// variance their population variance; both are then averaged across
/// queries. Queries with fewer than two trials in any regime are excluded
/// and reported.
inline VarianceDecomposition variance_decomposition(
    const std::map<std::string, std::map<std::string, std::vector<int>>>& trials_by_regime) {
    VarianceDecomposition out;
    std::set<std::string> bad_queries;
    for (const auto& [regime, per_query] : trials_by_regime) {
        for (const auto& [query_id, bits] : per_query) {
            if (bits.size() < 2) bad_queries.insert(query_id);
        }
    }
    for (const auto& q : bad_queries) {
        out.excluded.push_back({q, "fewer than 2 trials in some regime"});
    }
    for (const auto& [regime, per_query] : trials_by_regime) {
        RegimeStats rs;
        rs.regime = regime;
        double acc_sum = 0.0, var_sum = 0.0;
        int used = 0;
        for (const auto& [query_id, bits] : per_query) {
            if (bad_queries.count(query_id)) continue;
            double mean = 0.0;
            for (int b : bits) mean += b;
            mean /= static_cast<double>(bits.size());
            double var = 0.0;
            for (int b : bits) var += (b - mean) * (b - mean);
            var /= static_cast<double>(bits.size());
            acc_sum += mean;
            var_sum += var;
            ++used;
        }
        rs.queries = used;
        if (used > 0) {
            rs.mean_accuracy = acc_sum / used;
            rs.mean_per_query_variance = var_sum / used;
        }
        out.stats.push_back(rs);
    }
    return out;
}

struct ContextualShare {
    double positional_share = 0.0;
    double compositional_share = 0.0;
    bool defined = false;  // false when total variance is zero
};

/// Share heuristic over the three regime variances:
/// positional = (var_pos - var_int)/var_total,
/// compositional = (var_total - var_pos)/var_total. This mirrors the
/// empirical decomposition used for the variability table; the sources are
/// not fully independent, so treat shares as a heuristic, not an identity.
inline ContextualShare contextual_share(double var_intrinsic, double var_positional,
                                        double var_total) {
    ContextualShare s;
    if (var_total == 0.0) return s;
    s.positional_share = (var_positional - var_intrinsic) / var_total;
    s.compositional_share = (var_total - var_positional) / var_total;
    s.defined = true;
    return s;
}

inline ContextualShare contextual_share(const std::vector<RegimeStats>& stats) {
    std::optional<double> vi, vp, vt;
    for (const auto& s : stats) {
        if (s.regime == "intrinsic") vi = s.mean_per_query_variance;
        if (s.regime == "positional") vp = s.mean_per_query_variance;
        if (s.regime == "total") vt = s.mean_per_query_variance;
    }
    if (!vi || !vp || !vt) {
        throw std::invalid_argument("contextual_share needs all three regimes");
    }
    return contextual_share(*vi, *vp, *vt);
}

}  // namespace setrank
