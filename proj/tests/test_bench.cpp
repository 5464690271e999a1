#include "ficl/harness.hpp"

#include <doctest.h>

#include <cmath>

using namespace ficl;

namespace {

ModelConfig bench_config() {
    ModelConfig cfg;
    cfg.vocab_size = CharVocab().size();
    cfg.d_model = 32;
    cfg.n_heads = 2;
    cfg.n_layers = 2;
    cfg.max_positions = 2048;
    cfg.seed = 21;
    return cfg;
}

const ModelWeights& bench_weights() {
    static const ModelWeights w = init_weights(bench_config());
    return w;
}

struct Sets {
    std::vector<CountATask> pool, tasks, val;
};

Sets small_sets(uint64_t seed, int pool_n = 16, int task_n = 6, int val_n = 4) {
    SeededRng rng(seed);
    CountAGenOptions gen;
    gen.len_lo = 2;
    gen.len_hi = 3;
    const std::vector<CountATask> all = gen_counta(rng, pool_n + task_n + val_n + 8, gen);
    Sets s;
    // dedup by query so the pool/tasks stay disjoint
    std::vector<CountATask> unique;
    for (const auto& t : all) {
        bool seen = false;
        for (const auto& u : unique) {
            if (u.query == t.query) seen = true;
        }
        if (!seen) unique.push_back(t);
    }
    REQUIRE(static_cast<int>(unique.size()) >= pool_n + task_n + val_n);
    s.pool.assign(unique.begin(), unique.begin() + pool_n);
    s.tasks.assign(unique.begin() + pool_n, unique.begin() + pool_n + task_n);
    s.val.assign(unique.begin() + pool_n + task_n, unique.begin() + pool_n + task_n + val_n);
    return s;
}

} // namespace

TEST_CASE("gen_counta answers are re-derivable by character counting") {
    SeededRng rng(1);
    const std::vector<CountATask> tasks = gen_counta(rng, 100);
    for (const auto& t : tasks) {
        CHECK(t.answer == count_a(t));
        CHECK(t.response == std::to_string(t.answer));
        CHECK(t.query.rfind("Candidates: ", 0) == 0);
    }
    // deterministic given the seed
    SeededRng r2(1);
    const std::vector<CountATask> again = gen_counta(r2, 100);
    for (size_t i = 0; i < tasks.size(); ++i) {
        CHECK(tasks[i].query == again[i].query);
    }
}

TEST_CASE("gen_counta honors fixed lengths and answer caps") {
    SeededRng rng(2);
    CountAGenOptions gen;
    gen.len_lo = 4;
    gen.len_hi = 4;
    gen.max_answer = 9;
    const std::vector<CountATask> tasks = gen_counta(rng, 50, gen);
    for (const auto& t : tasks) {
        CHECK(t.answer <= 9);
        for (const auto& c : t.candidates) {
            CHECK(c.size() == 4);
        }
    }
    CountATask zero;
    zero.candidates = {"BCD", "BCD", "BCD", "BCD", "BCD"};
    CHECK(count_a(zero) == 0);
}

TEST_CASE("cost model reproduces the analytic values") {
    const CostEstimate c = cost_model(4, 2, 3);
    CHECK(c.cost_icl == 144.0);
    CHECK(c.cost_focus == 72.0);
    CHECK(c.ratio == 0.5);
    CHECK(cost_model(4, 4, 3).ratio == 1.0);
    CHECK_THROWS(cost_model(4, 5, 3));
}

TEST_CASE("measured demonstration-encoding MACs track B:N") {
    SeededRng rng(31);
    CountAGenOptions gen;
    gen.len_lo = 4;
    gen.len_hi = 4;
    gen.max_answer = 9; // equal token length per demonstration
    const int n = 8, b = 2;
    const std::vector<CountATask> tasks = gen_counta(rng, n + 1, gen);
    const std::vector<Demo> demos = to_demos(std::span(tasks).subspan(0, n));
    const PromptTemplate tpl = PromptTemplate::default_template();
    const CharVocab vocab;
    PromptLayout flat = assemble_icl(demos, tasks.back().query, tpl, vocab);

    AttentionConfig std_cfg;
    const uint64_t icl = measure_demo_encoding_macs(bench_weights(), flat, nullptr, std_cfg);
    const BatchPartition part = partition(flat, b);
    AttentionConfig hier;
    hier.variant = AttentionVariant::Hierarchical;
    hier.batch_size = b;
    const uint64_t focus = measure_demo_encoding_macs(bench_weights(), flat, &part, hier);
    CHECK(icl > 0);
    const double ratio = static_cast<double>(focus) / static_cast<double>(icl);
    const double expect = static_cast<double>(b) / n;
    CHECK(ratio >= 0.8 * expect);
    CHECK(ratio <= 1.2 * expect);
}

TEST_CASE("filtering p=0 and focusicl T=1,p=0 reproduce ICL's report exactly") {
    const Sets s = small_sets(41);
    EvalOptions base;
    base.method = EvalMethod::ICL;
    base.n_demos = 3;
    base.runs = 2;
    base.seed = 5;
    base.max_new = 6;
    const EvalReport icl = evaluate(bench_weights(), s.tasks, s.val, s.pool, base);

    EvalOptions filt = base;
    filt.method = EvalMethod::Filtering;
    filt.p = 0.0;
    const EvalReport f = evaluate(bench_weights(), s.tasks, s.val, s.pool, filt);

    EvalOptions focus = base;
    focus.method = EvalMethod::FocusICL;
    focus.p = 0.0;
    focus.batch_size = 3; // B = N -> one batch
    const EvalReport h = evaluate(bench_weights(), s.tasks, s.val, s.pool, focus);

    CHECK(icl.mean_accuracy == f.mean_accuracy);
    CHECK(icl.mean_accuracy == h.mean_accuracy);
    for (size_t i = 0; i < icl.runs.size(); ++i) {
        CHECK(icl.runs[i].correct == f.runs[i].correct);
        CHECK(icl.runs[i].correct == h.runs[i].correct);
    }
}

TEST_CASE("evaluate is reproducible and rejects overlapping pools") {
    const Sets s = small_sets(43);
    EvalOptions opts;
    opts.method = EvalMethod::ICL;
    opts.n_demos = 2;
    opts.runs = 2;
    opts.seed = 9;
    opts.max_new = 6;
    const EvalReport a = evaluate(bench_weights(), s.tasks, s.val, s.pool, opts);
    const EvalReport b = evaluate(bench_weights(), s.tasks, s.val, s.pool, opts);
    CHECK(a.to_json().dump() == b.to_json().dump());
    CHECK(a.to_csv() == b.to_csv());
    CHECK(a.baseline_uniform > 0.0);

    opts.jobs = 2;
    const EvalReport c = evaluate(bench_weights(), s.tasks, s.val, s.pool, opts);
    CHECK(a.to_json().dump() == c.to_json().dump());

    std::vector<CountATask> overlapping = s.pool;
    overlapping.push_back(s.tasks[0]);
    CHECK_THROWS_WITH(evaluate(bench_weights(), s.tasks, s.val, overlapping, opts),
                      doctest::Contains("overlaps"));
}

TEST_CASE("earlystop picks a swept count") {
    const Sets s = small_sets(47, 12, 4, 3);
    EvalOptions opts;
    opts.method = EvalMethod::EarlyStop;
    opts.n_demos = 4;
    opts.runs = 1;
    opts.seed = 2;
    opts.max_new = 6;
    const EvalReport r = evaluate(bench_weights(), s.tasks, s.val, s.pool, opts);
    CHECK((r.runs[0].used_demos == 1 || r.runs[0].used_demos == 2 || r.runs[0].used_demos == 4));
    EvalOptions no_val = opts;
    CHECK_THROWS(evaluate(bench_weights(), s.tasks, {}, s.pool, no_val));
}

TEST_CASE("dispersion sweep: lambda 0 at N=0, nested column non-decreasing") {
    const Sets s = small_sets(53, 20, 1, 0);
    const std::vector<int> ns{0, 2, 4, 8};
    AttentionConfig cfg;
    const DispersionReport rep =
        dispersion_sweep(bench_weights(), s.tasks[0], s.pool, ns, cfg, 71);
    REQUIRE(rep.rows.size() == ns.size());
    CHECK(rep.rows[0].lambda_run == 0.0);
    CHECK(rep.rows[0].lambda_nested == 0.0);
    for (size_t i = 1; i < rep.rows.size(); ++i) {
        CHECK(rep.rows[i].lambda_nested >= rep.rows[i - 1].lambda_nested);
        for (size_t l = 0; l < rep.rows[i].layer_lambda_nested.size(); ++l) {
            CHECK(rep.rows[i].layer_lambda_nested[l] >= rep.rows[i - 1].layer_lambda_nested[l]);
        }
    }
    // the largest-N row's nested value equals the run value (same pass)
    const DispersionRow& last = rep.rows.back();
    CHECK(std::fabs(last.lambda_nested - last.lambda_run) <= 1e-9);
    for (const auto& r : rep.rows) {
        CHECK(std::fabs(r.lambda_run + r.query_mass_run - 1.0) <= 1e-9);
    }
}

TEST_CASE("focusicl keeps at least standard's query mass on identical inputs") {
    const Sets s = small_sets(59, 20, 1, 0);
    const std::vector<int> ns{0, 4, 8};
    AttentionConfig std_cfg;
    const DispersionReport base =
        dispersion_sweep(bench_weights(), s.tasks[0], s.pool, ns, std_cfg, 77);
    AttentionConfig focus;
    focus.variant = AttentionVariant::Hierarchical;
    focus.p = 0.4;
    focus.batch_size = 2;
    const DispersionReport better =
        dispersion_sweep(bench_weights(), s.tasks[0], s.pool, ns, focus, 77);
    for (size_t i = 0; i < ns.size(); ++i) {
        CHECK(better.rows[i].query_mass_run >= base.rows[i].query_mass_run - 1e-12);
    }
}

TEST_CASE("padding experiment: k=0 identity and monotone nested mass") {
    const Sets s = small_sets(61, 12, 3, 0);
    const std::vector<int> ks{0, 2, 8};
    const PadReport rep =
        padding_experiment(bench_weights(), s.tasks, s.pool, 3, ks, 13, 0.0, 6);
    REQUIRE(rep.rows.size() == 3);
    for (size_t i = 1; i < rep.rows.size(); ++i) {
        CHECK(rep.rows[i].query_mass_nested < rep.rows[i - 1].query_mass_nested);
    }
    // k = 0 row matches a run of the experiment without any padding at all
    const std::vector<int> only_zero{0};
    const PadReport plain =
        padding_experiment(bench_weights(), s.tasks, s.pool, 3, only_zero, 13, 0.0, 6);
    CHECK(rep.rows[0].accuracy == plain.rows[0].accuracy);
    CHECK(rep.rows[0].query_mass_run == plain.rows[0].query_mass_run);

    CHECK_THROWS(padding_experiment(bench_weights(), s.tasks, s.pool, 3,
                                    std::vector<int>{4, 8}, 13, 0.0, 6));
}

TEST_CASE("pca probe emits one labeled point per N and zeroes the degenerate case") {
    const Sets s = small_sets(67, 16, 1, 0);
    const std::vector<int> ns{0, 2, 4, 6};
    AttentionConfig cfg;
    const PcaReport rep = pca_probe(bench_weights(), s.tasks[0], s.pool, ns, cfg, 3);
    REQUIRE(rep.rows.size() == ns.size());
    CHECK_FALSE(rep.degenerate);
    for (size_t i = 0; i < ns.size(); ++i) {
        CHECK(rep.rows[i].n == ns[i]);
        CHECK(std::isfinite(rep.rows[i].pc1));
        CHECK(std::isfinite(rep.rows[i].pc2));
    }

    // all-zero weights produce identical hidden states for every prompt
    const ModelWeights zero = zeros_like(bench_config());
    const PcaReport degen = pca_probe(zero, s.tasks[0], s.pool, ns, cfg, 3);
    CHECK(degen.degenerate);
    for (const auto& r : degen.rows) {
        CHECK(r.pc1 == 0.0);
        CHECK(r.pc2 == 0.0);
    }

    CHECK_THROWS(pca_probe(bench_weights(), s.tasks[0], s.pool, std::vector<int>{1, 2}, cfg, 3));
}
