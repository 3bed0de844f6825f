#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "setrank/types.hpp"

namespace setrank {

struct Document {
    std::string title;
    std::string body;
};

/// Document collection in insertion order. Ids are unique; the insertion
/// order is kept because downstream tie-breaking refers to it.
class Corpus {
public:
    void add(DocId id, Document doc) {
        if (docs_.count(id)) throw std::invalid_argument("duplicate document id '" + id + "'");
        order_.push_back(id);
        docs_.emplace(std::move(id), std::move(doc));
    }

    bool contains(const DocId& id) const { return docs_.count(id) > 0; }

    const Document& doc(const DocId& id) const {
        auto it = docs_.find(id);
        if (it == docs_.end()) throw std::out_of_range("unknown document id '" + id + "'");
        return it->second;
    }

    const std::vector<DocId>& ids() const { return order_; }
    std::size_t size() const { return order_.size(); }

private:
    std::vector<DocId> order_;
    std::unordered_map<DocId, Document> docs_;
};

/// Lowercases and splits on any run of non-alphanumeric characters. No
/// stemming. Stopwords are dropped when a list is supplied.
inline std::vector<std::string> tokenize(std::string_view text,
                                         const std::set<std::string>* stopwords = nullptr) {
    std::vector<std::string> terms;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            if (!stopwords || !stopwords->count(cur)) terms.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty() && (!stopwords || !stopwords->count(cur))) terms.push_back(cur);
    return terms;
}

/// Reads a JSON-lines corpus file with fields `_id`, `title`, `text`.
/// Malformed lines and duplicate ids are reported with their line number.
inline Corpus ingest_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed JSON: " + e.what());
        }
        if (!rec.contains("_id")) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing field '_id'");
        }
        if (!rec.contains("text")) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing field 'text'");
        }
        Document doc;
        doc.title = rec.value("title", "");
        doc.body = rec["text"].get<std::string>();
        try {
            corpus.add(rec["_id"].get<std::string>(), std::move(doc));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return corpus;
}

struct Query {
    std::string id;
    std::string text;
};

/// Reads a JSON-lines query file with fields `_id`, `text`.
inline std::vector<Query> ingest_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open queries file: " + path);
    std::vector<Query> queries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed JSON: " + e.what());
        }
        if (!rec.contains("_id") || !rec.contains("text")) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": query record needs '_id' and 'text'");
        }
        queries.push_back({rec["_id"].get<std::string>(), rec["text"].get<std::string>()});
    }
    return queries;
}

struct Bm25Params {
    double k1 = 1.5;
    double b_len = 0.75;
};

/// Ordered first-stage retrieval output: (doc id, score) pairs with
/// non-increasing scores and unique ids.
struct CandidateList {
    std::string query_id;
    std::vector<std::pair<DocId, double>> entries;

    std::vector<DocId> ids() const {
        std::vector<DocId> out;
        out.reserve(entries.size());
        for (const auto& [id, score] : entries) out.push_back(id);
        return out;
    }

    std::size_t size() const { return entries.size(); }
};

/// Term -> postings inverted index with BM25 scoring. Immutable after build;
/// scoring and retrieval are read-only.
class InvertedIndex {
public:
    static InvertedIndex build(const Corpus& corpus) {
        if (corpus.size() == 0) throw std::invalid_argument("cannot index an empty corpus");
        InvertedIndex index;
        index.doc_ids_ = corpus.ids();
        index.doc_lengths_.resize(index.doc_ids_.size());
        std::uint64_t total_tokens = 0;
        for (std::size_t slot = 0; slot < index.doc_ids_.size(); ++slot) {
            const Document& doc = corpus.doc(index.doc_ids_[slot]);
            const auto terms = tokenize(doc.title + " " + doc.body);
            index.doc_lengths_[slot] = terms.size();
            total_tokens += terms.size();
            std::unordered_map<std::string, int> tf;
            for (const auto& t : terms) ++tf[t];
            for (const auto& [term, freq] : tf) {
                index.postings_[term].emplace_back(slot, freq);
            }
            index.slot_of_.emplace(index.doc_ids_[slot], slot);
        }
        for (auto& [term, plist] : index.postings_) {
            std::sort(plist.begin(), plist.end());
        }
        index.avgdl_ = static_cast<double>(total_tokens) / static_cast<double>(index.doc_ids_.size());
        return index;
    }

    double avgdl() const { return avgdl_; }
    std::size_t num_docs() const { return doc_ids_.size(); }

    std::size_t doc_length(const DocId& id) const { return doc_lengths_[slot(id)]; }

    std::size_t vocabulary_size() const { return postings_.size(); }

    // idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)); always non-negative.
    double idf(const std::string& term) const {
        auto it = postings_.find(term);
        if (it == postings_.end()) return 0.0;
        const double df = static_cast<double>(it->second.size());
        const double n = static_cast<double>(num_docs());
        return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    }

    /// BM25 score of one document against pre-tokenized query terms.
    double bm25_score(const std::vector<std::string>& query_terms, const DocId& id,
                      const Bm25Params& params = {}) const {
        const std::size_t s = slot(id);
        double score = 0.0;
        for (const auto& term : query_terms) {
            auto it = postings_.find(term);
            if (it == postings_.end()) continue;
            const auto& plist = it->second;
            auto pit = std::lower_bound(plist.begin(), plist.end(),
                                        std::make_pair(s, 0),
                                        [](const auto& a, const auto& b) { return a.first < b.first; });
            if (pit == plist.end() || pit->first != s) continue;
            score += term_contribution(term, static_cast<double>(pit->second), s, params);
        }
        return score;
    }

    /// Scores every document sharing at least one query term and returns up
    /// to n of them by descending score; ties break by ascending doc id.
    /// Zero-score documents are excluded.
    CandidateList retrieve_top_n(const std::string& query_text, int n,
                                 const Bm25Params& params = {}) const {
        if (n < 1) throw std::invalid_argument("retrieve_top_n requires n >= 1");
        const auto query_terms = tokenize(query_text);
        std::vector<double> scores(num_docs(), 0.0);
        std::vector<bool> touched(num_docs(), false);
        for (const auto& term : query_terms) {
            auto it = postings_.find(term);
            if (it == postings_.end()) continue;
            for (const auto& [s, tf] : it->second) {
                scores[s] += term_contribution(term, static_cast<double>(tf), s, params);
                touched[s] = true;
            }
        }
        std::vector<std::size_t> hit;
        for (std::size_t s = 0; s < scores.size(); ++s) {
            if (touched[s] && scores[s] > 0.0) hit.push_back(s);
        }
        std::sort(hit.begin(), hit.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return doc_ids_[a] < doc_ids_[b];
        });
        if (hit.size() > static_cast<std::size_t>(n)) hit.resize(static_cast<std::size_t>(n));
        CandidateList out;
        out.entries.reserve(hit.size());
        for (std::size_t s : hit) out.entries.emplace_back(doc_ids_[s], scores[s]);
        return out;
    }

private:
    std::size_t slot(const DocId& id) const {
        auto it = slot_of_.find(id);
        if (it == slot_of_.end()) throw std::out_of_range("document not in index: '" + id + "'");
        return it->second;
    }

    double term_contribution(const std::string& term, double tf, std::size_t doc_slot,
                             const Bm25Params& params) const {
        const double dl = static_cast<double>(doc_lengths_[doc_slot]);
        const double norm = params.k1 * (1.0 - params.b_len + params.b_len * dl / avgdl_);
        return idf(term) * (tf * (params.k1 + 1.0)) / (tf + norm);
    }

    std::vector<DocId> doc_ids_;
    std::unordered_map<DocId, std::size_t> slot_of_;
    std::vector<std::size_t> doc_lengths_;
    std::unordered_map<std::string, std::vector<std::pair<std::size_t, int>>> postings_;
    double avgdl_ = 0.0;
};

/// TSV export of a candidate list: query_id, rank, doc_id, score.
inline void write_candidates_tsv(std::ostream& out, const CandidateList& cands) {
    out << "query_id\trank\tdoc_id\tscore\n";
    char buf[64];
    for (std::size_t i = 0; i < cands.entries.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.10g", cands.entries[i].second);
        out << cands.query_id << '\t' << (i + 1) << '\t' << cands.entries[i].first << '\t' << buf
            << '\n';
    }
}

}  // namespace setrank
