// focusicl — experiment driver for the attention-competition laboratory:
// train the toy model, evaluate ICL variants on CountA, search (p, B) by
// response perplexity, and run the dispersion / padding / PCA / cost probes.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "ficl/harness.hpp"
#include "ficl/hypersearch.hpp"
#include "ficl/io.hpp"
#include "ficl/report.hpp"
#include "ficl/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <set>

using namespace ficl;

namespace {

// pool, test tasks and validation tasks drawn from one seeded stream with
// duplicate queries discarded, so the pool never overlaps the tasks
struct TaskSets {
    std::vector<CountATask> pool;
    std::vector<CountATask> tasks;
    std::vector<CountATask> val;
};

TaskSets make_task_sets(uint64_t seed, int pool_n, int task_n, int val_n,
                        const CountAGenOptions& gen = {}) {
    SeededRng rng(derive_seed(seed, "tasks"));
    std::set<std::string> seen;
    std::vector<CountATask> unique;
    const int want = pool_n + task_n + val_n;
    while (static_cast<int>(unique.size()) < want) {
        for (CountATask& t : gen_counta(rng, want, gen)) {
            if (static_cast<int>(unique.size()) == want) {
                break;
            }
            if (seen.insert(t.query).second) {
                unique.push_back(std::move(t));
            }
        }
    }
    TaskSets sets;
    sets.pool.assign(unique.begin(), unique.begin() + pool_n);
    sets.tasks.assign(unique.begin() + pool_n, unique.begin() + pool_n + task_n);
    sets.val.assign(unique.begin() + pool_n + task_n, unique.end());
    return sets;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t next = s.find(',', pos);
        if (next == std::string::npos) {
            next = s.size();
        }
        out.push_back(std::stoi(s.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t next = s.find(',', pos);
        if (next == std::string::npos) {
            next = s.size();
        }
        out.push_back(std::stod(s.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

std::string config_comment_block(const std::vector<std::pair<std::string, std::string>>& kv) {
    std::string out;
    out += "# schema_version=" + std::to_string(kReportSchemaVersion) + "\n";
    for (const auto& [k, v] : kv) {
        out += "# " + k + "=" + v + "\n";
    }
    return out;
}

nlohmann::json config_json(const std::vector<std::pair<std::string, std::string>>& kv) {
    nlohmann::json j;
    for (const auto& [k, v] : kv) {
        j[k] = v;
    }
    return j;
}

void emit(const std::string& path, const std::string& format, const nlohmann::json& json_doc,
          const std::string& csv_doc) {
    if (format == "json") {
        atomic_write_file(path, json_doc.dump(2) + "\n");
    } else {
        atomic_write_file(path, csv_doc);
    }
    std::cerr << "wrote " << path << "\n";
}

struct CommonModelArgs {
    std::string weights_path;
    uint64_t seed = 0;
    std::string out_path;
    std::string format = "json";
};

void add_common(CLI::App* cmd, CommonModelArgs& args, bool need_weights = true) {
    auto* w = cmd->add_option("--weights", args.weights_path, "weight file from `train`");
    if (need_weights) {
        w->required();
    }
    cmd->add_option("--seed", args.seed, "master seed (all randomness derives from it)");
    cmd->add_option("--out", args.out_path, "output report path")->required();
    cmd->add_option("--format", args.format, "report format")
        ->check(CLI::IsMember({"json", "csv"}));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-competition laboratory for many-shot in-context learning"};
    app.require_subcommand(1);

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train the toy decoder on generated CountA data");
    std::string train_out;
    std::string model_config_path;
    std::string config_out;
    ModelConfig train_cfg;
    TrainOptions train_opts;
    int train_samples = 64;
    int demos_per_sample = 2;
    train_cmd->add_option("--out", train_out, "weight file to write")->required();
    train_cmd->add_option("--model-config", model_config_path, "key=value model config file");
    train_cmd->add_option("--config-out", config_out, "also write the config as text");
    train_cmd->add_option("--d-model", train_cfg.d_model);
    train_cmd->add_option("--heads", train_cfg.n_heads);
    train_cmd->add_option("--layers", train_cfg.n_layers);
    train_cmd->add_option("--max-positions", train_cfg.max_positions);
    train_cmd->add_option("--steps", train_opts.steps);
    train_cmd->add_option("--lr", train_opts.lr);
    train_cmd->add_option("--batch", train_opts.batch);
    train_cmd->add_option("--samples", train_samples, "CountA training samples");
    train_cmd->add_option("--demos-per-sample", demos_per_sample,
                          "max demonstrations prefixed to each training prompt");
    uint64_t train_seed = 0;
    train_cmd->add_option("--seed", train_seed);

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "accuracy of an ICL variant on CountA");
    CommonModelArgs eval_common;
    add_common(eval_cmd, eval_common);
    std::string eval_variant = "icl";
    EvalOptions eval_opts;
    int eval_tasks = 20, eval_val = 10, eval_pool = 64;
    bool eval_p_set = false, eval_b_set = false;
    eval_cmd->add_option("--variant", eval_variant, "icl|filtering|focusicl|earlystop")
        ->check(CLI::IsMember({"icl", "filtering", "focusicl", "earlystop"}));
    eval_cmd->add_option("--p", eval_opts.p, "filtering threshold")
        ->each([&](const std::string&) { eval_p_set = true; });
    eval_cmd->add_option("--batch-size", eval_opts.batch_size, "hierarchical batch size B")
        ->each([&](const std::string&) { eval_b_set = true; });
    eval_cmd->add_option("--n", eval_opts.n_demos, "demonstrations per prompt");
    eval_cmd->add_option("--runs", eval_opts.runs);
    eval_cmd->add_option("--temperature", eval_opts.temperature);
    eval_cmd->add_option("--max-new", eval_opts.max_new);
    eval_cmd->add_option("--tasks", eval_tasks);
    eval_cmd->add_option("--val-tasks", eval_val);
    eval_cmd->add_option("--pool", eval_pool);
    eval_cmd->add_option("--jobs", eval_opts.jobs, "parallel independent runs");

    // ---- search ----
    auto* search_cmd = app.add_subcommand("search", "perplexity-driven (p, B) selection");
    CommonModelArgs search_common;
    std::string search_candidates = "0,0.1,0.2,0.3,0.4";
    int search_n = 16, search_runs = 5, search_pool = 64, search_jobs = 1;
    std::string mock_ppl_path;
    add_common(search_cmd, search_common, /*need_weights=*/false);
    search_cmd->add_option("--weights", search_common.weights_path, "weight file (omit with --mock-ppl)");
    search_cmd->add_option("--p-candidates", search_candidates, "comma-separated thresholds");
    search_cmd->add_option("--n", search_n, "demonstrations per search prompt");
    search_cmd->add_option("--runs", search_runs);
    search_cmd->add_option("--pool", search_pool);
    search_cmd->add_option("--jobs", search_jobs);
    search_cmd->add_option("--mock-ppl", mock_ppl_path,
                           "JSON {candidates:[...], rows:[[...]]} scripted perplexities");

    // ---- probe ----
    auto* probe_cmd = app.add_subcommand("probe", "mechanism probes");
    probe_cmd->require_subcommand(1);

    auto* disp_cmd = probe_cmd->add_subcommand("dispersion", "query attention vs demonstration count");
    CommonModelArgs disp_common;
    add_common(disp_cmd, disp_common);
    std::string disp_n = "0,4,8";
    std::string disp_variant = "icl";
    double disp_p = 0.0;
    int disp_b = 1, disp_pool = 64;
    disp_cmd->add_option("--n", disp_n, "comma-separated demonstration counts (ascending)");
    disp_cmd->add_option("--variant", disp_variant)->check(CLI::IsMember({"icl", "focusicl"}));
    disp_cmd->add_option("--p", disp_p);
    disp_cmd->add_option("--batch-size", disp_b);
    disp_cmd->add_option("--pool", disp_pool);

    auto* pad_cmd = probe_cmd->add_subcommand("pad", "blank-space padding experiment");
    CommonModelArgs pad_common;
    add_common(pad_cmd, pad_common);
    std::string pad_spaces = "0,4,16,64";
    int pad_n = 8, pad_tasks = 10, pad_pool = 64;
    double pad_temp = 0.1;
    pad_cmd->add_option("--spaces", pad_spaces, "comma-separated pad widths (must include 0)");
    pad_cmd->add_option("--n", pad_n, "demonstrations per prompt");
    pad_cmd->add_option("--tasks", pad_tasks);
    pad_cmd->add_option("--pool", pad_pool);
    pad_cmd->add_option("--temperature", pad_temp);

    auto* pca_cmd = probe_cmd->add_subcommand("pca", "hidden-state drift vs demonstration count");
    CommonModelArgs pca_common;
    add_common(pca_cmd, pca_common);
    std::string pca_n = "0,2,4,6";
    std::string pca_variant = "icl";
    double pca_p = 0.0;
    int pca_b = 1, pca_pool = 64;
    pca_cmd->add_option("--n", pca_n, "comma-separated demonstration counts (>= 3 values)");
    pca_cmd->add_option("--variant", pca_variant)->check(CLI::IsMember({"icl", "focusicl"}));
    pca_cmd->add_option("--p", pca_p);
    pca_cmd->add_option("--batch-size", pca_b);
    pca_cmd->add_option("--pool", pca_pool);

    auto* cost_cmd = probe_cmd->add_subcommand("cost", "demonstration-encoding cost model");
    long long cost_n = 4, cost_b = 2, cost_l = 3;
    bool cost_measure = false;
    std::string cost_weights;
    uint64_t cost_seed = 0;
    std::string cost_out;
    cost_cmd->add_option("--n", cost_n)->required();
    cost_cmd->add_option("--b", cost_b)->required();
    cost_cmd->add_option("--l", cost_l)->required();
    cost_cmd->add_flag("--measure", cost_measure, "also count score MACs on an instrumented run");
    cost_cmd->add_option("--weights", cost_weights, "weights for --measure");
    cost_cmd->add_option("--seed", cost_seed);
    cost_cmd->add_option("--out", cost_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e); // --help
        }
        app.exit(e);
        return 2;
    }

    try {
        if (*train_cmd) {
            if (!model_config_path.empty()) {
                const ModelConfig file_cfg = ModelConfig::load_text(model_config_path);
                train_cfg = file_cfg;
            }
            train_cfg.seed = train_seed;
            train_opts.seed = train_seed;
            train_cfg.validate();
            ModelWeights w = init_weights(train_cfg);

            SeededRng rng(derive_seed(train_seed, "train-corpus"));
            CountAGenOptions gen;
            gen.len_lo = 3;
            gen.len_hi = 5;
            const std::vector<CountATask> samples = gen_counta(rng, train_samples, gen);
            const PromptTemplate tpl = PromptTemplate::default_template();
            const CharVocab vocab;
            std::vector<PromptLayout> corpus;
            for (size_t i = 0; i < samples.size(); ++i) {
                const int nd = demos_per_sample > 0
                                   ? static_cast<int>(rng.next_below(
                                         static_cast<uint64_t>(demos_per_sample) + 1))
                                   : 0;
                std::vector<Demo> demos;
                for (int j = 0; j < nd; ++j) {
                    demos.push_back(to_demo(samples[rng.next_below(samples.size())]));
                }
                PromptLayout layout = assemble_icl(demos, samples[i].query, tpl, vocab);
                append_response_text(layout, " " + samples[i].response + "\n", vocab);
                corpus.push_back(std::move(layout));
            }
            const TrainStats stats = train_toy(w, corpus, train_opts);
            save_weights(w, train_out);
            if (!config_out.empty()) {
                atomic_write_file(config_out, train_cfg.to_text());
            }
            if (!stats.step_losses.empty()) {
                std::cerr << "trained " << train_opts.steps << " steps, loss "
                          << fmt_double_short(stats.step_losses.front()) << " -> "
                          << fmt_double_short(stats.step_losses.back()) << " (smoothed "
                          << fmt_double_short(stats.initial_smoothed) << " -> "
                          << fmt_double_short(stats.final_smoothed) << ")\n";
            }
            std::cerr << "wrote " << train_out << "\n";
            return 0;
        }

        if (*eval_cmd) {
            eval_opts.method = method_from_name(eval_variant);
            eval_opts.seed = eval_common.seed;
            const bool wants_p = eval_opts.method == EvalMethod::Filtering ||
                                 eval_opts.method == EvalMethod::FocusICL;
            const bool wants_b = eval_opts.method == EvalMethod::FocusICL;
            if (eval_p_set && !wants_p) {
                std::cerr << "error: --p only applies to filtering/focusicl\n";
                return 2;
            }
            if (eval_b_set && !wants_b) {
                std::cerr << "error: --batch-size only applies to focusicl\n";
                return 2;
            }
            const ModelWeights w = load_weights(eval_common.weights_path);
            const TaskSets sets = make_task_sets(eval_common.seed, eval_pool, eval_tasks, eval_val);
            const EvalReport report = evaluate(w, sets.tasks, sets.val, sets.pool, eval_opts);
            const auto kv = std::vector<std::pair<std::string, std::string>>{
                {"command", "eval"},
                {"weights", eval_common.weights_path},
                {"seed", std::to_string(eval_common.seed)}};
            nlohmann::json j = report.to_json();
            j["invocation"] = config_json(kv);
            emit(eval_common.out_path, eval_common.format, j,
                 config_comment_block(kv) + report.to_csv());
            std::cout << report.method_tag << " mean_accuracy=" << fmt_double_short(report.mean_accuracy)
                      << " over " << report.runs.size() << " runs\n";
            return 0;
        }

        if (*search_cmd) {
            const std::vector<double> candidates = parse_double_list(search_candidates);
            SeededRng pool_rng(derive_seed(search_common.seed, "search-pool"));
            const std::vector<CountATask> pool_tasks = gen_counta(pool_rng, search_pool);
            const std::vector<Demo> pool = to_demos(pool_tasks);

            std::optional<ModelWeights> weights;
            std::unique_ptr<PplEvaluator> evaluator;
            const PromptTemplate tpl = PromptTemplate::default_template();
            const CharVocab vocab;
            if (!mock_ppl_path.empty()) {
                const nlohmann::json mock = nlohmann::json::parse(read_file(mock_ppl_path));
                std::vector<double> mock_cands = mock.at("candidates").get<std::vector<double>>();
                const auto rows = mock.at("rows").get<std::vector<std::vector<double>>>();
                if (rows.size() != mock_cands.size() || rows.empty()) {
                    throw std::runtime_error("mock ppl: rows must match candidates");
                }
                Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
                for (size_t i = 0; i < rows.size(); ++i) {
                    for (size_t j = 0; j < rows[i].size(); ++j) {
                        m.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
                    }
                }
                evaluator = std::make_unique<ScriptedPplEvaluator>(std::move(mock_cands), std::move(m));
            } else {
                if (search_common.weights_path.empty()) {
                    std::cerr << "error: search needs --weights or --mock-ppl\n";
                    return 2;
                }
                weights = load_weights(search_common.weights_path);
                evaluator = std::make_unique<ModelPplEvaluator>(*weights, tpl, vocab);
            }
            const PplTable table = build_ppl_table(candidates, *evaluator, pool, search_n,
                                                   search_runs, search_common.seed, search_jobs);
            const HyperSearchResult result = select_hyperparameters(table);
            nlohmann::json j{{"schema_version", kReportSchemaVersion},
                             {"config",
                              {{"command", "search"},
                               {"seed", search_common.seed},
                               {"n", search_n},
                               {"runs", search_runs},
                               {"candidates", candidates},
                               {"mock", !mock_ppl_path.empty()}}},
                             {"result", result.to_json()}};
            atomic_write_file(search_common.out_path, j.dump(2) + "\n");
            std::cerr << "wrote " << search_common.out_path << "\n";
            std::cout << "chosen p=" << fmt_double_short(result.chosen_p)
                      << " B=" << result.chosen_b << (result.fallback_b ? " (fallback B=N)" : "")
                      << "\n";
            return 0;
        }

        if (*disp_cmd) {
            const ModelWeights w = load_weights(disp_common.weights_path);
            const std::vector<int> ns = parse_int_list(disp_n);
            const TaskSets sets = make_task_sets(disp_common.seed, disp_pool, 1, 0);
            AttentionConfig cfg;
            if (disp_variant == "focusicl") {
                cfg.variant = AttentionVariant::Hierarchical;
                cfg.p = disp_p;
                cfg.batch_size = disp_b;
            }
            const DispersionReport report =
                dispersion_sweep(w, sets.tasks[0], sets.pool, ns, cfg, disp_common.seed);
            const auto kv = std::vector<std::pair<std::string, std::string>>{
                {"command", "probe dispersion"},
                {"variant", disp_variant},
                {"seed", std::to_string(disp_common.seed)}};
            nlohmann::json j = report.to_json();
            j["invocation"] = config_json(kv);
            emit(disp_common.out_path, disp_common.format, j,
                 config_comment_block(kv) + report.to_csv());
            return 0;
        }

        if (*pad_cmd) {
            const ModelWeights w = load_weights(pad_common.weights_path);
            const std::vector<int> ks = parse_int_list(pad_spaces);
            const TaskSets sets = make_task_sets(pad_common.seed, pad_pool, pad_tasks, 0);
            const PadReport report = padding_experiment(w, sets.tasks, sets.pool, pad_n, ks,
                                                        pad_common.seed, pad_temp);
            const auto kv = std::vector<std::pair<std::string, std::string>>{
                {"command", "probe pad"},
                {"n", std::to_string(pad_n)},
                {"seed", std::to_string(pad_common.seed)}};
            nlohmann::json j = report.to_json();
            j["invocation"] = config_json(kv);
            emit(pad_common.out_path, pad_common.format, j,
                 config_comment_block(kv) + report.to_csv());
            return 0;
        }

        if (*pca_cmd) {
            const ModelWeights w = load_weights(pca_common.weights_path);
            const std::vector<int> ns = parse_int_list(pca_n);
            const TaskSets sets = make_task_sets(pca_common.seed, pca_pool, 1, 0);
            AttentionConfig cfg;
            if (pca_variant == "focusicl") {
                cfg.variant = AttentionVariant::Hierarchical;
                cfg.p = pca_p;
                cfg.batch_size = pca_b;
            }
            const PcaReport report =
                pca_probe(w, sets.tasks[0], sets.pool, ns, cfg, pca_common.seed);
            const auto kv = std::vector<std::pair<std::string, std::string>>{
                {"command", "probe pca"},
                {"variant", pca_variant},
                {"seed", std::to_string(pca_common.seed)}};
            nlohmann::json j = report.to_json();
            j["invocation"] = config_json(kv);
            emit(pca_common.out_path, pca_common.format, j,
                 config_comment_block(kv) + report.to_csv());
            return 0;
        }

        if (*cost_cmd) {
            const CostEstimate est = cost_model(cost_n, cost_b, cost_l);
            nlohmann::json j{{"schema_version", kReportSchemaVersion}, {"analytic", est.to_json()}};
            if (cost_measure) {
                if (cost_weights.empty()) {
                    std::cerr << "error: --measure needs --weights\n";
                    return 2;
                }
                const ModelWeights w = load_weights(cost_weights);
                SeededRng rng(derive_seed(cost_seed, "cost"));
                CountAGenOptions gen;
                gen.len_lo = 4;
                gen.len_hi = 4;
                gen.max_answer = 9; // equal token length per demonstration
                const std::vector<CountATask> demo_tasks =
                    gen_counta(rng, static_cast<int>(cost_n) + 1, gen);
                const std::vector<Demo> demos =
                    to_demos(std::span(demo_tasks).subspan(0, static_cast<size_t>(cost_n)));
                const PromptTemplate tpl = PromptTemplate::default_template();
                const CharVocab vocab;
                PromptLayout flat = assemble_icl(demos, demo_tasks.back().query, tpl, vocab);
                AttentionConfig std_cfg;
                const uint64_t icl_macs = measure_demo_encoding_macs(w, flat, nullptr, std_cfg);
                PromptLayout hier_layout = flat;
                const BatchPartition part = partition(hier_layout, static_cast<int>(cost_b));
                AttentionConfig hier_cfg;
                hier_cfg.variant = AttentionVariant::Hierarchical;
                hier_cfg.batch_size = static_cast<int>(cost_b);
                const uint64_t focus_macs =
                    measure_demo_encoding_macs(w, hier_layout, &part, hier_cfg);
                j["measured"] = {{"icl_macs", icl_macs},
                                 {"focusicl_macs", focus_macs},
                                 {"ratio", static_cast<double>(focus_macs) /
                                               static_cast<double>(icl_macs)}};
            }
            atomic_write_file(cost_out, j.dump(2) + "\n");
            std::cerr << "wrote " << cost_out << "\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
