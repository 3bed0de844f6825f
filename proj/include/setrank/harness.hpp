#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "setrank/bandit.hpp"
#include "setrank/judge.hpp"
#include "setrank/metrics.hpp"
#include "setrank/policy.hpp"
#include "setrank/remote.hpp"
#include "setrank/retrieval.hpp"
#include "setrank/rng.hpp"

namespace setrank {

/// One cell of the policy grid. `tau` > 0 selects the delayed-update loop;
/// the name "heapify" selects the heap baseline (its T is ignored and top_k
/// documents are extracted).
struct PolicySpec {
    std::string name;
    int T = 100;
    int T_f = 0;
    int b = 10;
    int tau = 0;
    int top_k = 10;

    bool is_heapify() const { return name == "heapify" || name == "Heapify"; }
};

struct ExperimentConfig {
    std::string corpus;
    std::string queries;
    std::string qrels;
    double k1 = 1.5;
    double b_len = 0.75;
    int N_cap = 100;
    std::vector<PolicySpec> policies;
    std::string judge_simulated_model;  // path to a judge model json
    std::string judge_remote_endpoint;  // or a remote endpoint URL
    std::vector<std::uint64_t> seeds;
    std::vector<int> snapshot_rounds;
    std::string output_dir;
    std::optional<int> query_sample;  // evaluate a seeded uniform sample of queries
    std::uint64_t query_sample_seed = 0;
    int ndcg_k = 10;

    void validate() const {
        if (policies.empty()) throw std::invalid_argument("config needs at least one policy");
        if (seeds.empty()) throw std::invalid_argument("config needs at least one seed");
        for (const auto& p : policies) {
            if (p.is_heapify()) continue;
            for (int r : snapshot_rounds) {
                if (r > p.T) {
                    throw std::invalid_argument("snapshot round " + std::to_string(r) +
                                                " exceeds budget of policy '" + p.name + "'");
                }
            }
        }
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig cfg;
        cfg.corpus = j.at("corpus").get<std::string>();
        cfg.queries = j.at("queries").get<std::string>();
        cfg.qrels = j.at("qrels").get<std::string>();
        cfg.k1 = j.value("k1", 1.5);
        cfg.b_len = j.value("b_len", 0.75);
        cfg.N_cap = j.value("N_cap", 100);
        for (const auto& p : j.at("policies")) {
            PolicySpec spec;
            spec.name = p.at("name").get<std::string>();
            spec.T = p.value("T", 100);
            spec.T_f = p.value("T_f", 0);
            spec.b = p.value("b", 10);
            spec.tau = p.value("tau", 0);
            spec.top_k = p.value("top_k", 10);
            cfg.policies.push_back(std::move(spec));
        }
        if (j.contains("judge")) {
            const auto& judge = j.at("judge");
            cfg.judge_simulated_model = judge.value("simulated_model", "");
            cfg.judge_remote_endpoint = judge.value("remote_endpoint", "");
        }
        cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        cfg.snapshot_rounds = j.value("snapshot_rounds", std::vector<int>{});
        cfg.output_dir = j.value("output_dir", "");
        if (j.contains("query_sample")) cfg.query_sample = j.at("query_sample").get<int>();
        cfg.query_sample_seed = j.value("query_sample_seed", std::uint64_t{0});
        return cfg;
    }

    static ExperimentConfig from_json_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file: " + path);
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["corpus"] = corpus;
        j["queries"] = queries;
        j["qrels"] = qrels;
        j["k1"] = k1;
        j["b_len"] = b_len;
        j["N_cap"] = N_cap;
        j["policies"] = nlohmann::ordered_json::array();
        for (const auto& p : policies) {
            j["policies"].push_back({{"name", p.name},
                                     {"T", p.T},
                                     {"T_f", p.T_f},
                                     {"b", p.b},
                                     {"tau", p.tau}});
        }
        j["judge"] = {{"simulated_model", judge_simulated_model},
                      {"remote_endpoint", judge_remote_endpoint}};
        j["seeds"] = seeds;
        j["snapshot_rounds"] = snapshot_rounds;
        j["output_dir"] = output_dir;
        if (query_sample) j["query_sample"] = *query_sample;
        j["query_sample_seed"] = query_sample_seed;
        return j;
    }
};

struct CellFailure {
    std::string query_id;
    std::string policy;
    std::uint64_t seed = 0;
    std::string error;
};

struct AggregateResult {
    struct Row {
        std::string policy;
        std::string snapshot;  // round number, or "final" for heapify
        double mean = 0.0;
        double stddev = 0.0;
        int runs = 0;
    };
    std::vector<Row> rows;
    std::map<std::string, std::int64_t> judge_calls;  // per policy, across all runs
    std::vector<CellFailure> failures;
};

struct RunArtifact {
    std::string stem;  // query__policy__seedN
    std::string jsonl;
    std::string snapshots_csv;
};

struct ExperimentOutput {
    AggregateResult aggregate;
    std::vector<RunArtifact> artifacts;
};

namespace detail {

inline std::string sanitize_component(std::string s) {
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') {
            c = '-';
        }
    }
    return s;
}

inline std::vector<Query> select_queries(std::vector<Query> all, const ExperimentConfig& cfg) {
    if (!cfg.query_sample || static_cast<std::size_t>(*cfg.query_sample) >= all.size()) {
        return all;
    }
    Rng rng(mix_seed(cfg.query_sample_seed, fnv1a("query-sample")));
    auto idx = rng.sample_indices(all.size(), static_cast<std::size_t>(*cfg.query_sample));
    std::sort(idx.begin(), idx.end());  // keep file order among the sampled queries
    std::vector<Query> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(all[i]);
    return out;
}

inline std::uint64_t run_stream_seed(std::uint64_t master, const std::string& query_id,
                                     const std::string& policy_name, std::size_t seed_index) {
    return mix_seed(master, fnv1a(query_id), fnv1a(policy_name),
                    static_cast<std::uint64_t>(seed_index));
}

struct LoadedInstance {
    Corpus corpus;
    std::vector<Query> queries;
    Qrels qrels;
    InvertedIndex index;
    SimulatedJudgeModel model;  // only when the judge is simulated
    bool simulated = true;
};

inline LoadedInstance load_instance(const ExperimentConfig& cfg) {
    LoadedInstance inst;
    inst.corpus = ingest_corpus(cfg.corpus);
    inst.queries = select_queries(ingest_queries(cfg.queries), cfg);
    inst.qrels = Qrels::load_tsv(cfg.qrels);
    inst.index = InvertedIndex::build(inst.corpus);
    if (!cfg.judge_simulated_model.empty()) {
        inst.model = SimulatedJudgeModel::load(cfg.judge_simulated_model);
        inst.simulated = true;
    } else if (!cfg.judge_remote_endpoint.empty()) {
        inst.simulated = false;
    } else {
        throw std::invalid_argument("config needs judge.simulated_model or judge.remote_endpoint");
    }
    return inst;
}

inline double population_stddev(const std::vector<double>& xs, double mean) {
    if (xs.empty()) return 0.0;
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace detail

/// Runs the full (query x policy x seed) grid: retrieve top-N, run the
/// policy, score nDCG@k at every snapshot, aggregate across queries then
/// across seeds. Failures are isolated per cell and listed in the result.
/// Fully deterministic given the config.
inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    auto inst = detail::load_instance(cfg);

    ExperimentOutput out;
    // accum[policy][snapshot][seed_index] -> per-query ndcg values
    std::map<std::string, std::map<std::string, std::map<std::size_t, std::vector<double>>>> accum;

    for (const auto& query : inst.queries) {
        CandidateList cands;
        try {
            cands = inst.index.retrieve_top_n(query.text, cfg.N_cap, {cfg.k1, cfg.b_len});
            cands.query_id = query.id;
            if (cands.entries.empty()) throw std::runtime_error("no documents matched the query");
        } catch (const std::exception& e) {
            out.aggregate.failures.push_back({query.id, "first-stage", 0, e.what()});
            continue;
        }
        for (const auto& policy : cfg.policies) {
            for (std::size_t j = 0; j < cfg.seeds.size(); ++j) {
                const std::uint64_t run_seed =
                    detail::run_stream_seed(cfg.seeds[j], query.id, policy.name, j);
                try {
                    std::unique_ptr<SetwiseJudge> judge;
                    if (inst.simulated) {
                        SimulatedJudgeModel model = inst.model;
                        model.seed = mix_seed(inst.model.seed, run_seed, fnv1a("judge"));
                        judge = std::make_unique<SimulatedJudge>(std::move(model));
                    } else {
                        RemoteJudgeConfig rcfg;
                        rcfg.endpoint = cfg.judge_remote_endpoint;
                        if (const char* key = std::getenv("SETRANK_JUDGE_API_KEY")) {
                            rcfg.api_key = key;
                        }
                        judge = std::make_unique<RemoteJudge>(rcfg, inst.corpus);
                    }
                    BatchJudge judge_fn = [&](const Batch& batch) {
                        return judge->judge_batch(query.text, batch);
                    };

                    RunResult run;
                    if (policy.is_heapify()) {
                        run = run_heapify(cands, judge_fn, policy.top_k);
                    } else {
                        PolicyConfig pc;
                        pc.budget_T = policy.T;
                        pc.explore_Tf = policy.tau > 0 || policy.T_f > 0 ? policy.T_f : 0;
                        pc.batch_size = policy.b;
                        pc.flush_tau = policy.tau > 0 ? policy.tau : 1;
                        pc.seed = run_seed;
                        run = policy.tau > 0
                                  ? run_ts_setrank_t(cands, judge_fn, pc, cfg.snapshot_rounds)
                                  : run_ts_setrank(cands, judge_fn, pc, cfg.snapshot_rounds);
                    }
                    out.aggregate.judge_calls[policy.name] += run.trace.judge_calls;
                    if (!run.ok()) {
                        out.aggregate.failures.push_back(
                            {query.id, policy.name, cfg.seeds[j],
                             "judge failed at round " + std::to_string(*run.trace.failed_round) +
                                 ": " + run.trace.failure_reason});
                    } else if (policy.is_heapify()) {
                        const double v = ndcg_at_k(run.ranking, inst.qrels, query.id, cfg.ndcg_k);
                        accum[policy.name]["final"][j].push_back(v);
                    } else {
                        for (const auto& [round, ranked] : run.trace.snapshots) {
                            std::vector<DocId> ranking;
                            ranking.reserve(ranked.size());
                            for (const auto& e : ranked) ranking.push_back(e.doc_id);
                            const double v = ndcg_at_k(ranking, inst.qrels, query.id, cfg.ndcg_k);
                            accum[policy.name][std::to_string(round)][j].push_back(v);
                        }
                    }
                    RunArtifact artifact;
                    artifact.stem = detail::sanitize_component(query.id) + "__" +
                                    detail::sanitize_component(policy.name) + "__seed" +
                                    std::to_string(j);
                    artifact.jsonl = run.trace.jsonl();
                    artifact.snapshots_csv = run.trace.snapshots_csv();
                    out.artifacts.push_back(std::move(artifact));
                } catch (const std::exception& e) {
                    out.aggregate.failures.push_back({query.id, policy.name, cfg.seeds[j], e.what()});
                }
            }
        }
    }

    // Aggregate: per (policy, snapshot), mean over queries per seed, then
    // mean and population stddev across seeds.
    for (const auto& policy : cfg.policies) {
        auto pit = accum.find(policy.name);
        if (pit == accum.end()) continue;
        std::vector<std::string> snapshot_keys;
        for (const auto& [key, by_seed] : pit->second) snapshot_keys.push_back(key);
        std::sort(snapshot_keys.begin(), snapshot_keys.end(), [](const auto& a, const auto& b) {
            if (a == "final") return false;
            if (b == "final") return true;
            return std::stoi(a) < std::stoi(b);
        });
        for (const auto& key : snapshot_keys) {
            const auto& by_seed = pit->second.at(key);
            std::vector<double> seed_means;
            int runs = 0;
            for (const auto& [j, values] : by_seed) {
                if (values.empty()) continue;
                double m = 0.0;
                for (double v : values) m += v;
                seed_means.push_back(m / static_cast<double>(values.size()));
                runs += static_cast<int>(values.size());
            }
            if (seed_means.empty()) continue;
            double mean = 0.0;
            for (double m : seed_means) mean += m;
            mean /= static_cast<double>(seed_means.size());
            out.aggregate.rows.push_back(
                {policy.name, key, mean, detail::population_stddev(seed_means, mean), runs});
        }
    }
    return out;
}

/// Creates the output directory tree and verifies it is writable. Call this
/// before any computation so an unwritable path fails fast.
inline void prepare_output_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "curves", ec);
    fs::create_directories(fs::path(dir) / "traces", ec);
    const fs::path probe = fs::path(dir) / ".write-probe";
    std::ofstream test(probe);
    if (!test) throw std::runtime_error("output directory is not writable: " + dir);
    test.close();
    fs::remove(probe, ec);
}

/// Writes summary.csv, curves/*.csv, traces/*.jsonl (+ snapshot CSVs),
/// failures.csv when any, and manifest.json. Everything except the manifest
/// timestamp is a pure function of the config.
inline void emit_results(const ExperimentOutput& output, const ExperimentConfig& cfg,
                         const std::string& dir) {
    namespace fs = std::filesystem;
    prepare_output_dir(dir);

    {
        std::ofstream summary(fs::path(dir) / "summary.csv");
        summary << "policy,snapshot,mean,std\n";
        for (const auto& row : output.aggregate.rows) {
            summary << row.policy << ',' << row.snapshot << ','
                    << detail::format_double(row.mean) << ','
                    << detail::format_double(row.stddev) << '\n';
        }
    }
    {
        std::ofstream calls(fs::path(dir) / "calls.csv");
        calls << "policy,total_judge_calls\n";
        for (const auto& [policy, total] : output.aggregate.judge_calls) {
            calls << policy << ',' << total << '\n';
        }
    }
    for (const auto& policy : cfg.policies) {
        std::ofstream curve(fs::path(dir) / "curves" /
                            (detail::sanitize_component(policy.name) + ".csv"));
        curve << "snapshot,mean,std\n";
        for (const auto& row : output.aggregate.rows) {
            if (row.policy != policy.name) continue;
            curve << row.snapshot << ',' << detail::format_double(row.mean) << ','
                  << detail::format_double(row.stddev) << '\n';
        }
    }
    for (const auto& artifact : output.artifacts) {
        std::ofstream jsonl(fs::path(dir) / "traces" / (artifact.stem + ".jsonl"));
        jsonl << artifact.jsonl;
        std::ofstream snaps(fs::path(dir) / "traces" / (artifact.stem + ".snapshots.csv"));
        snaps << artifact.snapshots_csv;
    }
    if (!output.aggregate.failures.empty()) {
        std::ofstream fails(fs::path(dir) / "failures.csv");
        fails << "query_id,policy,seed,error\n";
        for (const auto& f : output.aggregate.failures) {
            std::string err = f.error;
            for (char& c : err) {
                if (c == ',' || c == '\n') c = ';';
            }
            fails << f.query_id << ',' << f.policy << ',' << f.seed << ',' << err << '\n';
        }
    }
    {
        nlohmann::ordered_json manifest;
        char hashbuf[32];
        std::snprintf(hashbuf, sizeof(hashbuf), "%016llx",
                      static_cast<unsigned long long>(fnv1a(cfg.to_json().dump())));
        manifest["config_hash"] = hashbuf;
        manifest["seeds"] = cfg.seeds;
        if (cfg.query_sample) {
            manifest["query_sample"] = *cfg.query_sample;
            manifest["query_sample_seed"] = cfg.query_sample_seed;
        }
        std::time_t now = std::time(nullptr);
        char timebuf[32];
        std::strftime(timebuf, sizeof(timebuf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        manifest["created_at"] = timebuf;
        std::ofstream mf(fs::path(dir) / "manifest.json");
        mf << manifest.dump(2) << '\n';
    }
}

// ---------------------------------------------------------------------------
// RQ1: judgment-variability regimes
// ---------------------------------------------------------------------------

struct Rq1QueryRow {
    std::string query_id;
    std::string regime;
    double accuracy = 0.0;
    double variance = 0.0;
};

struct Rq1Result {
    std::vector<RegimeStats> regimes;
    std::vector<Rq1QueryRow> per_query;
    std::vector<ExcludedQuery> excluded;
    ContextualShare shares;
};

/// For each query: pick one relevant document d+ (seeded), fix a batch of d+
/// plus b-1 distractors drawn from the top-N, and judge `trials` batches
/// under three regimes: intrinsic (fixed documents, fixed order — the
/// construction order, d+ first), positional (fixed documents, per-trial
/// shuffle) and total (per-trial resampled distractors, same shuffle).
/// Trial k of every regime shares its random numbers — the shuffle, the
/// resampling stream and the judge's per-document draw all key off the trial
/// index — so regime differences reflect batch construction rather than
/// sampling luck.
inline Rq1Result rq1_variance_experiment(const ExperimentConfig& cfg, int trials = 30) {
    cfg.validate();
    if (cfg.judge_simulated_model.empty()) {
        throw std::invalid_argument("rq1 requires a simulated judge model");
    }
    auto inst = detail::load_instance(cfg);
    const int b = cfg.policies.front().b;
    const std::uint64_t master = cfg.seeds.front();

    Rq1Result result;
    std::map<std::string, std::map<std::string, std::vector<int>>> trials_by_regime;

    for (const auto& query : inst.queries) {
        CandidateList cands = inst.index.retrieve_top_n(query.text, cfg.N_cap, {cfg.k1, cfg.b_len});
        cands.query_id = query.id;
        std::vector<DocId> rel;
        for (const auto& [id, score] : cands.entries) {
            if (inst.qrels.grade(query.id, id) > 0) rel.push_back(id);
        }
        if (rel.empty()) {
            result.excluded.push_back({query.id, "no relevant document in the top-N"});
            continue;
        }
        if (cands.size() < static_cast<std::size_t>(b)) {
            result.excluded.push_back({query.id, "fewer candidates than the batch size"});
            continue;
        }
        Rng pick(mix_seed(master, fnv1a(query.id), fnv1a("dplus")));
        const DocId dplus = rel[pick.below(rel.size())];

        std::vector<DocId> pool;
        for (const auto& [id, score] : cands.entries) {
            if (id != dplus) pool.push_back(id);
        }

        Rng fixed_rng(mix_seed(master, fnv1a(query.id), fnv1a("fixed")));
        const auto fixed_idx = fixed_rng.sample_indices(pool.size(), static_cast<std::size_t>(b - 1));
        std::vector<DocId> fixed_docs{dplus};
        for (std::size_t i : fixed_idx) fixed_docs.push_back(pool[i]);

        SimulatedJudgeModel model = inst.model;
        model.seed = mix_seed(inst.model.seed, master, fnv1a(query.id));
        SimulatedJudge judge(model);

        for (int k = 1; k <= trials; ++k) {
            std::vector<std::size_t> sigma(static_cast<std::size_t>(b));
            for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = i;
            Rng shuffle_rng(mix_seed(master, fnv1a(query.id), static_cast<std::uint64_t>(k),
                                     fnv1a("shuffle")));
            shuffle_rng.shuffle(sigma);

            Rng resample_rng(mix_seed(master, fnv1a(query.id), static_cast<std::uint64_t>(k),
                                      fnv1a("resample")));
            const auto res_idx =
                resample_rng.sample_indices(pool.size(), static_cast<std::size_t>(b - 1));
            std::vector<DocId> resampled_docs{dplus};
            for (std::size_t i : res_idx) resampled_docs.push_back(pool[i]);

            const auto permute = [&](const std::vector<DocId>& docs) {
                std::vector<DocId> out(docs.size());
                for (std::size_t i = 0; i < docs.size(); ++i) out[i] = docs[sigma[i]];
                return out;
            };

            Batch intrinsic{fixed_docs, k};
            Batch positional{permute(fixed_docs), k};
            Batch total{permute(resampled_docs), k};

            trials_by_regime["intrinsic"][query.id].push_back(
                judge.judge_batch(query.text, intrinsic).bit_for(dplus));
            trials_by_regime["positional"][query.id].push_back(
                judge.judge_batch(query.text, positional).bit_for(dplus));
            trials_by_regime["total"][query.id].push_back(
                judge.judge_batch(query.text, total).bit_for(dplus));
        }
    }

    auto decomp = variance_decomposition(trials_by_regime);
    result.regimes = decomp.stats;
    for (const auto& ex : decomp.excluded) result.excluded.push_back(ex);

    std::set<std::string> skip;
    for (const auto& ex : result.excluded) skip.insert(ex.query_id);
    for (const auto& [regime, per_query] : trials_by_regime) {
        for (const auto& [query_id, bits] : per_query) {
            if (skip.count(query_id)) continue;
            double mean = 0.0;
            for (int v : bits) mean += v;
            mean /= static_cast<double>(bits.size());
            double var = 0.0;
            for (int v : bits) var += (v - mean) * (v - mean);
            var /= static_cast<double>(bits.size());
            result.per_query.push_back({query_id, regime, mean, var});
        }
    }

    bool have_all = true;
    for (const auto& s : result.regimes) have_all = have_all && s.queries > 0;
    if (result.regimes.size() == 3 && have_all) {
        result.shares = contextual_share(result.regimes);
    }
    return result;
}

/// Writes the RQ1 tables: regime means, per-query rows, shares, exclusions.
inline void emit_rq1(const Rq1Result& result, const std::string& dir) {
    namespace fs = std::filesystem;
    prepare_output_dir(dir);
    {
        std::ofstream out(fs::path(dir) / "rq1_regimes.csv");
        out << "regime,mean_accuracy,mean_per_query_variance,queries\n";
        for (const auto& s : result.regimes) {
            out << s.regime << ',' << detail::format_double(s.mean_accuracy) << ','
                << detail::format_double(s.mean_per_query_variance) << ',' << s.queries << '\n';
        }
    }
    {
        std::ofstream out(fs::path(dir) / "rq1_queries.csv");
        out << "query_id,regime,accuracy,variance\n";
        for (const auto& row : result.per_query) {
            out << row.query_id << ',' << row.regime << ','
                << detail::format_double(row.accuracy) << ','
                << detail::format_double(row.variance) << '\n';
        }
    }
    {
        std::ofstream out(fs::path(dir) / "rq1_shares.csv");
        out << "positional_share,compositional_share,defined\n";
        out << detail::format_double(result.shares.positional_share) << ','
            << detail::format_double(result.shares.compositional_share) << ','
            << (result.shares.defined ? "true" : "false") << '\n';
    }
    if (!result.excluded.empty()) {
        std::ofstream out(fs::path(dir) / "rq1_excluded.csv");
        out << "query_id,reason\n";
        for (const auto& ex : result.excluded) out << ex.query_id << ',' << ex.reason << '\n';
    }
}

// ---------------------------------------------------------------------------
// RQ3: convergence of uniform sampling
// ---------------------------------------------------------------------------

struct ConvergenceCurve {
    std::vector<std::pair<int, double>> points;  // (calls, mean ndcg)
    std::optional<int> plateau_calls;            // first grid point below the gain threshold
    double gain_threshold = 0.005;
};

/// Sweeps pure uniform sampling up to max_calls, snapshotting every `step`
/// calls. The point at 0 calls is the first-stage ranking. The plateau is
/// the first grid point whose marginal gain over the previous one falls
/// below the threshold.
inline ConvergenceCurve rq3_convergence_sweep(const ExperimentConfig& cfg, int max_calls,
                                              int step = 50, double gain_threshold = 0.005) {
    cfg.validate();
    if (max_calls < 0) throw std::invalid_argument("max_calls must be >= 0");
    if (step < 1) throw std::invalid_argument("step must be >= 1");
    auto inst = detail::load_instance(cfg);
    const int b = cfg.policies.front().b;

    std::vector<int> grid;
    for (int c = step; c <= max_calls; c += step) grid.push_back(c);
    if (!grid.empty() && grid.back() != max_calls) grid.push_back(max_calls);

    std::map<int, std::vector<double>> by_calls;  // calls -> ndcg values over (query, seed)
    std::vector<double> first_stage;

    for (const auto& query : inst.queries) {
        CandidateList cands = inst.index.retrieve_top_n(query.text, cfg.N_cap, {cfg.k1, cfg.b_len});
        cands.query_id = query.id;
        if (cands.entries.empty()) continue;
        first_stage.push_back(ndcg_at_k(cands.ids(), inst.qrels, query.id, cfg.ndcg_k));
        if (max_calls == 0) continue;
        for (std::size_t j = 0; j < cfg.seeds.size(); ++j) {
            const std::uint64_t run_seed =
                detail::run_stream_seed(cfg.seeds[j], query.id, "uniform-sweep", j);
            SimulatedJudgeModel model = inst.model;
            model.seed = mix_seed(inst.model.seed, run_seed, fnv1a("judge"));
            SimulatedJudge judge(model);
            BatchJudge judge_fn = [&](const Batch& batch) {
                return judge.judge_batch(query.text, batch);
            };
            PolicyConfig pc;
            pc.budget_T = max_calls;
            pc.explore_Tf = max_calls;  // pure uniform
            pc.batch_size = b;
            pc.seed = run_seed;
            const RunResult run = run_ts_setrank(cands, judge_fn, pc, grid);
            for (const auto& [round, ranked] : run.trace.snapshots) {
                std::vector<DocId> ranking;
                ranking.reserve(ranked.size());
                for (const auto& e : ranked) ranking.push_back(e.doc_id);
                by_calls[round].push_back(ndcg_at_k(ranking, inst.qrels, query.id, cfg.ndcg_k));
            }
        }
    }

    ConvergenceCurve curve;
    curve.gain_threshold = gain_threshold;
    double base = 0.0;
    for (double v : first_stage) base += v;
    if (!first_stage.empty()) base /= static_cast<double>(first_stage.size());
    curve.points.emplace_back(0, base);
    for (int c : grid) {
        const auto& values = by_calls[c];
        double mean = 0.0;
        for (double v : values) mean += v;
        if (!values.empty()) mean /= static_cast<double>(values.size());
        curve.points.emplace_back(c, mean);
    }
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const double gain = curve.points[i].second - curve.points[i - 1].second;
        if (gain < gain_threshold) {
            curve.plateau_calls = curve.points[i].first;
            break;
        }
    }
    return curve;
}

inline void emit_rq3(const ConvergenceCurve& curve, const std::string& dir) {
    namespace fs = std::filesystem;
    prepare_output_dir(dir);
    {
        std::ofstream out(fs::path(dir) / "rq3_curve.csv");
        out << "calls,mean_ndcg\n";
        for (const auto& [calls, mean] : curve.points) {
            out << calls << ',' << detail::format_double(mean) << '\n';
        }
    }
    {
        std::ofstream out(fs::path(dir) / "rq3_plateau.csv");
        out << "plateau_calls,gain_threshold\n";
        if (curve.plateau_calls) {
            out << *curve.plateau_calls << ',' << detail::format_double(curve.gain_threshold)
                << '\n';
        } else {
            out << "none," << detail::format_double(curve.gain_threshold) << '\n';
        }
    }
}

}  // namespace setrank
