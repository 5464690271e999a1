#include "ficl/harness.hpp"

#include "ficl/pca.hpp"
#include "ficl/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ficl {

namespace {

const PromptTemplate& default_tpl() {
    static const PromptTemplate tpl = PromptTemplate::default_template();
    return tpl;
}

const CharVocab& default_vocab() {
    static const CharVocab vocab;
    return vocab;
}

std::string trim_ws(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

AttentionConfig eval_cfg(const EvalOptions& opts) {
    AttentionConfig cfg;
    cfg.scale_scores = opts.scale_scores;
    cfg.interbatch_demo_only = opts.interbatch_demo_only;
    switch (opts.method) {
        case EvalMethod::ICL:
        case EvalMethod::EarlyStop:
            cfg.variant = AttentionVariant::Standard;
            break;
        case EvalMethod::Filtering:
            cfg.variant = AttentionVariant::Filtering;
            cfg.p = opts.p;
            break;
        case EvalMethod::FocusICL:
            cfg.variant = AttentionVariant::Hierarchical;
            cfg.p = opts.p;
            cfg.batch_size = opts.batch_size;
            break;
    }
    cfg.validate();
    return cfg;
}

// one generation; hierarchical configs degrade to flat filtering when the
// demonstration list is empty (nothing to batch)
std::string answer_of(const ModelWeights& w, const std::vector<Demo>& demos,
                      const std::string& query, const AttentionConfig& cfg, double temperature,
                      int max_new, uint64_t gen_seed) {
    PromptLayout layout = assemble_icl(demos, query, default_tpl(), default_vocab());
    AttentionConfig use = cfg;
    std::optional<BatchPartition> part;
    if (use.variant == AttentionVariant::Hierarchical) {
        if (demos.empty()) {
            use.variant = AttentionVariant::Filtering;
        } else {
            part = partition(layout, use.batch_size);
        }
    }
    SeededRng rng(gen_seed);
    const std::vector<Token> out =
        generate(layout, part ? &*part : nullptr, use, w, temperature, rng, max_new);
    return trim_ws(default_vocab().detokenize(out));
}

struct MassStats {
    double lambda = 0.0;
    double query_mass = 0.0;
    std::vector<double> layer_lambda;
};

MassStats mass_at(const ForwardTrace& tr, int t) {
    MassStats m;
    m.layer_lambda.assign(static_cast<size_t>(tr.n_layers), 0.0);
    for (int l = 0; l < tr.n_layers; ++l) {
        double acc = 0.0;
        for (int h = 0; h < tr.n_heads; ++h) {
            acc += tr.stat(l, h, t).lambda;
        }
        m.layer_lambda[static_cast<size_t>(l)] = acc / tr.n_heads;
        m.lambda += acc;
    }
    m.lambda /= static_cast<double>(tr.n_layers) * tr.n_heads;
    m.query_mass = 1.0 - m.lambda;
    return m;
}

// forward pass + attention stats for one prompt configuration
ForwardTrace stats_forward(const ModelWeights& w, const std::vector<Demo>& demos,
                           const std::string& query, const AttentionConfig& cfg,
                           const std::vector<int>& outcome_positions = {},
                           std::vector<std::pair<int, int>> hidden = {}) {
    PromptLayout layout = assemble_icl(demos, query, default_tpl(), default_vocab());
    AttentionConfig use = cfg;
    std::optional<BatchPartition> part;
    if (use.variant == AttentionVariant::Hierarchical) {
        if (demos.empty()) {
            use.variant = AttentionVariant::Filtering;
        } else {
            part = partition(layout, use.batch_size);
        }
    }
    TraceSpec spec;
    spec.attention_stats = true;
    spec.outcome_positions = outcome_positions;
    spec.hidden_states = std::move(hidden);
    return forward(layout, part ? &*part : nullptr, use, w, spec);
}

} // namespace

std::string method_name(EvalMethod m) {
    switch (m) {
        case EvalMethod::ICL: return "icl";
        case EvalMethod::EarlyStop: return "earlystop";
        case EvalMethod::Filtering: return "filtering";
        case EvalMethod::FocusICL: return "focusicl";
    }
    return "?";
}

EvalMethod method_from_name(const std::string& name) {
    if (name == "icl") return EvalMethod::ICL;
    if (name == "earlystop") return EvalMethod::EarlyStop;
    if (name == "filtering") return EvalMethod::Filtering;
    if (name == "focusicl") return EvalMethod::FocusICL;
    throw std::invalid_argument("unknown eval method: " + name);
}

std::vector<CountATask> select_demo_prefix(std::span<const CountATask> pool, int n, uint64_t seed) {
    if (n > static_cast<int>(pool.size())) {
        throw std::invalid_argument("select_demo_prefix: pool too small");
    }
    std::vector<int> order(pool.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = static_cast<int>(i);
    }
    SeededRng rng(seed);
    rng.shuffle(order);
    std::vector<CountATask> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        out.push_back(pool[static_cast<size_t>(order[static_cast<size_t>(i)])]);
    }
    return out;
}

EvalReport evaluate(const ModelWeights& w, std::span<const CountATask> tasks,
                    std::span<const CountATask> val_tasks, std::span<const CountATask> pool,
                    const EvalOptions& opts) {
    if (tasks.empty() || pool.empty()) {
        throw std::invalid_argument("evaluate: empty tasks or demonstration pool");
    }
    if (opts.runs < 1 || opts.n_demos < 0) {
        throw std::invalid_argument("evaluate: bad options");
    }
    if (opts.method == EvalMethod::EarlyStop && val_tasks.empty()) {
        throw std::invalid_argument("evaluate: EarlyStop needs a validation split");
    }
    {
        std::set<std::string> pool_queries;
        for (const auto& d : pool) {
            pool_queries.insert(d.query);
        }
        for (const auto& t : tasks) {
            if (pool_queries.count(t.query) != 0) {
                throw std::invalid_argument("evaluate: demonstration pool overlaps evaluation tasks");
            }
        }
    }
    const AttentionConfig cfg = eval_cfg(opts);

    std::vector<int> es_counts = opts.earlystop_counts;
    if (opts.method == EvalMethod::EarlyStop && es_counts.empty()) {
        for (int c = 1; c < opts.n_demos; c *= 2) {
            es_counts.push_back(c);
        }
        es_counts.push_back(opts.n_demos);
    }
    std::sort(es_counts.begin(), es_counts.end());
    es_counts.erase(std::unique(es_counts.begin(), es_counts.end()), es_counts.end());

    EvalReport report;
    report.opts = opts;
    switch (opts.method) {
        case EvalMethod::ICL: report.method_tag = "ICL"; break;
        case EvalMethod::EarlyStop: report.method_tag = "EarlyStop"; break;
        case EvalMethod::Filtering:
            report.method_tag = "Filtering(p=" + fmt_double_short(opts.p) + ")";
            break;
        case EvalMethod::FocusICL:
            report.method_tag = "FocusICL(p=" + fmt_double_short(opts.p) +
                                ",B=" + std::to_string(opts.batch_size) + ")";
            break;
    }

    int amax = 0;
    for (const auto& t : tasks) amax = std::max(amax, t.answer);
    for (const auto& t : pool) amax = std::max(amax, t.answer);
    report.baseline_uniform = 1.0 / (amax + 1);

    report.runs.resize(static_cast<size_t>(opts.runs));
#pragma omp parallel for schedule(dynamic) num_threads(opts.jobs) if (opts.jobs > 1)
    for (int r = 0; r < opts.runs; ++r) {
        const uint64_t run_seed = derive_seed(opts.seed, "eval-run-" + std::to_string(r));
        const std::vector<CountATask> selected =
            select_demo_prefix(pool, opts.n_demos, derive_seed(run_seed, "demos"));
        const std::vector<Demo> demos = to_demos(selected);

        int used = opts.n_demos;
        if (opts.method == EvalMethod::EarlyStop) {
            AttentionConfig plain;
            double best_acc = -1.0;
            for (int c : es_counts) {
                if (c > opts.n_demos) {
                    continue;
                }
                const std::vector<Demo> prefix(demos.begin(), demos.begin() + c);
                int correct = 0;
                for (size_t i = 0; i < val_tasks.size(); ++i) {
                    const std::string got = answer_of(
                        w, prefix, val_tasks[i].query, plain, opts.temperature, opts.max_new,
                        derive_seed(run_seed, "val-c" + std::to_string(c) + "-t" + std::to_string(i)));
                    if (got == val_tasks[i].response) {
                        ++correct;
                    }
                }
                const double acc = static_cast<double>(correct) / val_tasks.size();
                if (acc > best_acc) {
                    best_acc = acc;
                    used = c;
                }
            }
        }

        const std::vector<Demo> use_demos(demos.begin(), demos.begin() + used);
        int correct = 0;
        for (size_t i = 0; i < tasks.size(); ++i) {
            const std::string got =
                answer_of(w, use_demos, tasks[i].query, cfg, opts.temperature, opts.max_new,
                          derive_seed(run_seed, "gen-t" + std::to_string(i)));
            if (got == tasks[i].response) {
                ++correct;
            }
        }
        EvalRun& out = report.runs[static_cast<size_t>(r)];
        out.run = r;
        out.seed = run_seed;
        out.correct = correct;
        out.total = static_cast<int>(tasks.size());
        out.accuracy = static_cast<double>(correct) / tasks.size();
        out.used_demos = used;
    }
    double mean = 0.0;
    for (const auto& r : report.runs) {
        mean += r.accuracy;
    }
    report.mean_accuracy = mean / opts.runs;
    return report;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json runs_json = nlohmann::json::array();
    for (const auto& r : runs) {
        runs_json.push_back({{"run", r.run},
                             {"seed", r.seed},
                             {"correct", r.correct},
                             {"total", r.total},
                             {"accuracy", r.accuracy},
                             {"used_demos", r.used_demos}});
    }
    return nlohmann::json{{"schema_version", kReportSchemaVersion},
                          {"method", method_tag},
                          {"config",
                           {{"method", method_name(opts.method)},
                            {"n_demos", opts.n_demos},
                            {"runs", opts.runs},
                            {"temperature", opts.temperature},
                            {"max_new", opts.max_new},
                            {"seed", opts.seed},
                            {"p", opts.p},
                            {"batch_size", opts.batch_size}}},
                          {"runs", runs_json},
                          {"mean_accuracy", mean_accuracy},
                          {"baseline_uniform", baseline_uniform}};
}

std::string EvalReport::to_csv() const {
    CsvWriter csv;
    csv.comment("schema_version=" + std::to_string(kReportSchemaVersion));
    csv.comment("method=" + method_tag);
    csv.comment("seed=" + std::to_string(opts.seed));
    csv.comment("n_demos=" + std::to_string(opts.n_demos));
    csv.comment("temperature=" + fmt_double_short(opts.temperature));
    csv.header({"run", "seed", "used_demos", "correct", "total", "accuracy"});
    for (const auto& r : runs) {
        csv.row({std::to_string(r.run), std::to_string(r.seed), std::to_string(r.used_demos),
                 std::to_string(r.correct), std::to_string(r.total), fmt_double(r.accuracy)});
    }
    csv.comment("mean_accuracy=" + fmt_double(mean_accuracy));
    csv.comment("baseline_uniform=" + fmt_double(baseline_uniform));
    return csv.str();
}

// ---------------------------------------------------------------------------
// dispersion
// ---------------------------------------------------------------------------

DispersionReport dispersion_sweep(const ModelWeights& w, const CountATask& probe_task,
                                  std::span<const CountATask> pool, std::span<const int> n_values,
                                  const AttentionConfig& cfg, uint64_t seed) {
    if (n_values.empty()) {
        throw std::invalid_argument("dispersion_sweep: empty n list");
    }
    for (size_t i = 1; i < n_values.size(); ++i) {
        if (n_values[i] <= n_values[i - 1]) {
            throw std::invalid_argument("dispersion_sweep: n values must be ascending");
        }
    }
    cfg.validate();
    const int n_max = n_values.back();
    const std::vector<CountATask> all_demos =
        select_demo_prefix(pool, n_max, derive_seed(seed, "dispersion"));
    const std::vector<Demo> demos_max = to_demos(all_demos);

    DispersionReport report;
    const bool nested_applicable = cfg.variant == AttentionVariant::Standard && n_max >= 1;

    // per-N forward passes (run columns)
    for (int n : n_values) {
        const std::vector<Demo> demos(demos_max.begin(), demos_max.begin() + n);
        const ForwardTrace tr = stats_forward(w, demos, probe_task.query, cfg);
        const MassStats m = mass_at(tr, tr.n_tokens - 1);
        DispersionRow row;
        row.n = n;
        row.lambda_run = m.lambda;
        row.query_mass_run = m.query_mass;
        row.layer_lambda_run = m.layer_lambda;
        row.lambda_nested = kTraceNan;
        row.query_mass_nested = kTraceNan;
        report.rows.push_back(std::move(row));
    }

    if (nested_applicable) {
        // one more pass at n_max recording the raw scores at the last prompt
        // position; every smaller n is evaluated against this fixed query
        PromptLayout layout = assemble_icl(demos_max, probe_task.query, default_tpl(), default_vocab());
        TraceSpec spec;
        spec.outcome_positions = {layout.size() - 1};
        const ForwardTrace tr = forward(layout, nullptr, cfg, w, spec);
        const int L = tr.n_layers;
        const int H = tr.n_heads;
        for (size_t ri = 0; ri < report.rows.size(); ++ri) {
            const int n = report.rows[ri].n;
            long double sum_lambda = 0.0L;
            report.rows[ri].layer_lambda_nested.assign(static_cast<size_t>(L), 0.0);
            for (int l = 0; l < L; ++l) {
                long double layer_acc = 0.0L;
                for (int h = 0; h < H; ++h) {
                    const RecordedOutcome& rec =
                        tr.outcomes[static_cast<size_t>(l) * H + static_cast<size_t>(h)];
                    // included rows: query side always, demonstrations 1..n
                    long double max_s = -1e4932L;
                    for (size_t i = 0; i < rec.outcome.rows.size(); ++i) {
                        const SegmentLabel lbl = layout.labels[static_cast<size_t>(rec.outcome.rows[i])];
                        const int ord = is_demo_label(lbl) ? lbl.demo : 0;
                        if (ord > n) continue;
                        max_s = std::max(max_s, static_cast<long double>(rec.outcome.scores[i]));
                    }
                    long double demo_sum = 0.0L;
                    long double query_sum = 0.0L;
                    for (size_t i = 0; i < rec.outcome.rows.size(); ++i) {
                        const SegmentLabel lbl = layout.labels[static_cast<size_t>(rec.outcome.rows[i])];
                        const int ord = is_demo_label(lbl) ? lbl.demo : 0;
                        if (ord > n) continue;
                        const long double e = expl(static_cast<long double>(rec.outcome.scores[i]) - max_s);
                        if (ord > 0) {
                            demo_sum += e;
                        } else {
                            query_sum += e;
                        }
                    }
                    const long double lam = demo_sum / (demo_sum + query_sum);
                    layer_acc += lam;
                    sum_lambda += lam;
                }
                report.rows[ri].layer_lambda_nested[static_cast<size_t>(l)] =
                    static_cast<double>(layer_acc / H);
            }
            report.rows[ri].lambda_nested = static_cast<double>(sum_lambda / (L * H));
            report.rows[ri].query_mass_nested = 1.0 - report.rows[ri].lambda_nested;
        }
    }
    return report;
}

nlohmann::json DispersionReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j{{"n", r.n},
                         {"lambda_run", r.lambda_run},
                         {"query_mass_run", r.query_mass_run},
                         {"layer_lambda_run", r.layer_lambda_run}};
        if (!std::isnan(r.lambda_nested)) {
            j["lambda_nested"] = r.lambda_nested;
            j["query_mass_nested"] = r.query_mass_nested;
            j["layer_lambda_nested"] = r.layer_lambda_nested;
        }
        rows_json.push_back(std::move(j));
    }
    return nlohmann::json{{"schema_version", kReportSchemaVersion}, {"rows", rows_json}};
}

std::string DispersionReport::to_csv() const {
    CsvWriter csv;
    csv.header({"n", "lambda_nested", "query_mass_nested", "lambda_run", "query_mass_run"});
    for (const auto& r : rows) {
        csv.row({std::to_string(r.n), fmt_double(r.lambda_nested), fmt_double(r.query_mass_nested),
                 fmt_double(r.lambda_run), fmt_double(r.query_mass_run)});
    }
    return csv.str();
}

// ---------------------------------------------------------------------------
// blank-space padding
// ---------------------------------------------------------------------------

PadReport padding_experiment(const ModelWeights& w, std::span<const CountATask> tasks,
                             std::span<const CountATask> pool, int n_demos,
                             std::span<const int> space_counts, uint64_t seed,
                             double temperature, int max_new) {
    if (tasks.empty()) {
        throw std::invalid_argument("padding_experiment: no tasks");
    }
    std::vector<int> ks(space_counts.begin(), space_counts.end());
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    if (ks.empty() || ks.front() != 0) {
        throw std::invalid_argument("padding_experiment: space counts must include 0");
    }
    const std::vector<CountATask> selected =
        select_demo_prefix(pool, n_demos, derive_seed(seed, "pad"));
    const std::vector<Demo> demos = to_demos(selected);
    const AttentionConfig plain; // standard attention throughout
    const int k_max = ks.back();

    PadReport report;
    for (int k : ks) {
        const std::vector<Demo> padded = pad_with_spaces(demos, k);
        PadRow row;
        row.spaces = k;
        int correct = 0;
        for (size_t i = 0; i < tasks.size(); ++i) {
            const std::string got = answer_of(
                w, padded, tasks[i].query, plain, temperature, max_new,
                derive_seed(seed, "pad-k" + std::to_string(k) + "-t" + std::to_string(i)));
            if (got == tasks[i].response) {
                ++correct;
            }
        }
        row.accuracy = static_cast<double>(correct) / tasks.size();
        const ForwardTrace tr = stats_forward(w, padded, tasks[0].query, plain);
        row.query_mass_run = mass_at(tr, tr.n_tokens - 1).query_mass;
        report.rows.push_back(row);
    }

    // counterfactual column from the max-k run: drop all but the first k pad
    // tokens of every demonstration from the competitor set
    {
        const std::vector<Demo> padded = pad_with_spaces(demos, k_max);
        PromptLayout layout = assemble_icl(padded, tasks[0].query, default_tpl(), default_vocab());
        TraceSpec spec;
        spec.outcome_positions = {layout.size() - 1};
        const ForwardTrace tr = forward(layout, nullptr, plain, w, spec);

        // pad rank per token: 0-based index inside the trailing pad block of
        // its demonstration's response, -1 elsewhere
        std::vector<int> pad_rank(static_cast<size_t>(layout.size()), -1);
        for (const TokenSpan& span : layout.response_spans) {
            for (int t = span.end - k_max; t < span.end; ++t) {
                pad_rank[static_cast<size_t>(t)] = t - (span.end - k_max);
            }
        }
        const int L = tr.n_layers;
        const int H = tr.n_heads;
        for (size_t ri = 0; ri < report.rows.size(); ++ri) {
            const int k = report.rows[ri].spaces;
            long double acc = 0.0L;
            for (int l = 0; l < L; ++l) {
                for (int h = 0; h < H; ++h) {
                    const RecordedOutcome& rec =
                        tr.outcomes[static_cast<size_t>(l) * H + static_cast<size_t>(h)];
                    long double max_s = -1e4932L;
                    for (size_t i = 0; i < rec.outcome.rows.size(); ++i) {
                        const int rank = pad_rank[static_cast<size_t>(rec.outcome.rows[i])];
                        if (rank >= k) continue;
                        max_s = std::max(max_s, static_cast<long double>(rec.outcome.scores[i]));
                    }
                    long double demo_sum = 0.0L;
                    long double query_sum = 0.0L;
                    for (size_t i = 0; i < rec.outcome.rows.size(); ++i) {
                        const int rank = pad_rank[static_cast<size_t>(rec.outcome.rows[i])];
                        if (rank >= k) continue;
                        const SegmentLabel lbl = layout.labels[static_cast<size_t>(rec.outcome.rows[i])];
                        const long double e = expl(static_cast<long double>(rec.outcome.scores[i]) - max_s);
                        if (is_demo_label(lbl)) {
                            demo_sum += e;
                        } else {
                            query_sum += e;
                        }
                    }
                    acc += query_sum / (demo_sum + query_sum);
                }
            }
            report.rows[ri].query_mass_nested = static_cast<double>(acc / (L * H));
        }
    }

    for (size_t i = 1; i < report.rows.size(); ++i) {
        if (!(report.rows[i].query_mass_nested < report.rows[i - 1].query_mass_nested)) {
            throw std::runtime_error("padding_experiment: nested query mass failed to decrease");
        }
    }
    report.run_mass_monotone = true;
    for (size_t i = 1; i < report.rows.size(); ++i) {
        if (!(report.rows[i].query_mass_run < report.rows[i - 1].query_mass_run)) {
            report.run_mass_monotone = false;
        }
    }
    return report;
}

nlohmann::json PadReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"spaces", r.spaces},
                             {"accuracy", r.accuracy},
                             {"query_mass_run", r.query_mass_run},
                             {"query_mass_nested", r.query_mass_nested}});
    }
    return nlohmann::json{{"schema_version", kReportSchemaVersion},
                          {"run_mass_monotone", run_mass_monotone},
                          {"rows", rows_json}};
}

std::string PadReport::to_csv() const {
    CsvWriter csv;
    csv.header({"spaces", "accuracy", "query_mass_nested", "query_mass_run"});
    for (const auto& r : rows) {
        csv.row({std::to_string(r.spaces), fmt_double(r.accuracy),
                 fmt_double(r.query_mass_nested), fmt_double(r.query_mass_run)});
    }
    return csv.str();
}

// ---------------------------------------------------------------------------
// PCA probe
// ---------------------------------------------------------------------------

PcaReport pca_probe(const ModelWeights& w, const CountATask& probe_task,
                    std::span<const CountATask> pool, std::span<const int> n_values,
                    const AttentionConfig& cfg, uint64_t seed) {
    if (n_values.size() < 3) {
        throw std::invalid_argument("pca_probe: need at least 3 demonstration counts");
    }
    for (size_t i = 1; i < n_values.size(); ++i) {
        if (n_values[i] <= n_values[i - 1]) {
            throw std::invalid_argument("pca_probe: n values must be ascending");
        }
    }
    const int n_max = n_values.back();
    const std::vector<CountATask> all_demos =
        select_demo_prefix(pool, n_max, derive_seed(seed, "pca"));
    const std::vector<Demo> demos_max = to_demos(all_demos);
    const int penultimate = w.cfg.n_layers - 1;

    std::vector<std::vector<double>> states;
    for (int n : n_values) {
        const std::vector<Demo> demos(demos_max.begin(), demos_max.begin() + n);
        PromptLayout layout = assemble_icl(demos, probe_task.query, default_tpl(), default_vocab());
        AttentionConfig use = cfg;
        std::optional<BatchPartition> part;
        if (use.variant == AttentionVariant::Hierarchical) {
            if (demos.empty()) {
                use.variant = AttentionVariant::Filtering;
            } else {
                part = partition(layout, use.batch_size);
            }
        }
        TraceSpec spec;
        spec.hidden_states = {{penultimate, layout.size() - 1}};
        const ForwardTrace tr = forward(layout, part ? &*part : nullptr, use, w, spec);
        states.push_back(tr.hidden.at({penultimate, layout.size() - 1}));
    }

    PcaReport report;
    bool all_equal = true;
    for (size_t i = 1; i < states.size(); ++i) {
        if (states[i] != states[0]) {
            all_equal = false;
            break;
        }
    }
    if (all_equal) {
        report.degenerate = true;
        for (size_t i = 0; i < n_values.size(); ++i) {
            report.rows.push_back({n_values[i], 0.0, 0.0});
        }
        return report;
    }
    const PcaResult pca = pca_top2(states);
    for (size_t i = 0; i < n_values.size(); ++i) {
        report.rows.push_back({n_values[i], pca.projections[i][0], pca.projections[i][1]});
    }
    return report;
}

nlohmann::json PcaReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"n", r.n}, {"pc1", r.pc1}, {"pc2", r.pc2}});
    }
    return nlohmann::json{{"schema_version", kReportSchemaVersion},
                          {"degenerate", degenerate},
                          {"rows", rows_json}};
}

std::string PcaReport::to_csv() const {
    CsvWriter csv;
    csv.header({"n", "pc1", "pc2"});
    for (const auto& r : rows) {
        csv.row({std::to_string(r.n), fmt_double(r.pc1), fmt_double(r.pc2)});
    }
    return csv.str();
}

// ---------------------------------------------------------------------------
// cost model
// ---------------------------------------------------------------------------

CostEstimate cost_model(long long n, long long b, long long l) {
    if (n < 1 || b < 1 || l < 1) {
        throw std::invalid_argument("cost_model: arguments must be >= 1");
    }
    if (b > n) {
        throw std::invalid_argument("cost_model: B must not exceed N");
    }
    CostEstimate c;
    c.n = n;
    c.b = b;
    c.l = l;
    c.cost_icl = static_cast<double>(n) * n * l * l;
    c.cost_focus = static_cast<double>(n) * b * l * l;
    c.ratio = static_cast<double>(b) / static_cast<double>(n);
    return c;
}

nlohmann::json CostEstimate::to_json() const {
    return nlohmann::json{{"n", n},         {"b", b},
                          {"l", l},         {"cost_icl", cost_icl},
                          {"cost_focusicl", cost_focus}, {"ratio", ratio}};
}

uint64_t measure_demo_encoding_macs(const ModelWeights& w, const PromptLayout& layout,
                                    const BatchPartition* part, const AttentionConfig& cfg) {
    uint64_t macs = 0;
    TraceSpec spec;
    spec.demo_macs = &macs;
    forward(layout, part, cfg, w, spec);
    return macs;
}

} // namespace ficl
