#include "ficl/counta.hpp"
#include "ficl/train.hpp"

#include <doctest.h>

#include <cmath>

using namespace ficl;

namespace {

const CharVocab& vocab() {
    static const CharVocab v;
    return v;
}

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.vocab_size = vocab().size();
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_layers = 2;
    cfg.max_positions = 128;
    cfg.seed = 3;
    return cfg;
}

std::vector<PromptLayout> tiny_corpus(int n, uint64_t seed) {
    SeededRng rng(seed);
    CountAGenOptions gen;
    gen.len_lo = 2;
    gen.len_hi = 3;
    const std::vector<CountATask> tasks = gen_counta(rng, n, gen);
    const PromptTemplate tpl = PromptTemplate::default_template();
    std::vector<PromptLayout> corpus;
    for (const CountATask& t : tasks) {
        PromptLayout layout = assemble_icl({}, t.query, tpl, vocab());
        append_response_text(layout, " " + t.response + "\n", vocab());
        corpus.push_back(std::move(layout));
    }
    return corpus;
}

} // namespace

TEST_CASE("zero training steps leave the weights untouched") {
    ModelWeights w = init_weights(micro_config());
    const ModelWeights before = w;
    TrainOptions opts;
    opts.steps = 0;
    const TrainStats stats = train_toy(w, tiny_corpus(4, 1), opts);
    CHECK(stats.step_losses.empty());
    bool same = true;
    for_each_tensor(w, [&](const std::string& name, std::vector<double>& d) {
        for_each_tensor(const_cast<ModelWeights&>(before),
                        [&](const std::string& n2, std::vector<double>& d2) {
                            if (n2 == name && d != d2) same = false;
                        });
    });
    CHECK(same);
}

TEST_CASE("analytic gradients match central finite differences") {
    const ModelWeights w = init_weights(micro_config());
    const PromptLayout layout = tiny_corpus(1, 5)[0];

    ModelWeights grad = zeros_like(w.cfg);
    const double loss0 = loss_and_grad(w, layout, grad);
    CHECK(std::fabs(loss0 - loss_only(w, layout)) <= 1e-9);

    // flatten tensor access
    std::vector<std::vector<double>*> wt, gt;
    ModelWeights& mw = const_cast<ModelWeights&>(w);
    for_each_tensor(mw, [&](const std::string&, std::vector<double>& d) { wt.push_back(&d); });
    for_each_tensor(grad, [&](const std::string&, std::vector<double>& d) { gt.push_back(&d); });

    SeededRng rng(77);
    const double h = 1e-4;
    int checked = 0;
    int guard = 0;
    while (checked < 10 && guard++ < 500) {
        const size_t ti = rng.next_below(wt.size());
        if (wt[ti]->empty()) continue;
        const size_t pi = rng.next_below(wt[ti]->size());
        const double analytic = (*gt[ti])[pi];
        const double orig = (*wt[ti])[pi];
        // skip parameters the prompt never touches (unused embedding rows):
        // both sides are ~0 there and the relative error is vacuous
        if (std::fabs(analytic) < 1e-12) continue;
        (*wt[ti])[pi] = orig + h;
        const double up = loss_only(w, layout);
        (*wt[ti])[pi] = orig - h;
        const double down = loss_only(w, layout);
        (*wt[ti])[pi] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double rel = std::fabs(analytic - numeric) /
                           std::max({1e-8, std::fabs(analytic), std::fabs(numeric)});
        CHECK(rel <= 1e-4);
        ++checked;
    }
    CHECK(checked == 10);
}

TEST_CASE("a short training run reduces the smoothed loss deterministically") {
    const std::vector<PromptLayout> corpus = tiny_corpus(12, 9);
    TrainOptions opts;
    opts.steps = 30;
    opts.lr = 0.2;
    opts.batch = 2;
    opts.seed = 4;

    ModelWeights w1 = init_weights(micro_config());
    const TrainStats s1 = train_toy(w1, corpus, opts);
    CHECK(s1.final_smoothed < s1.initial_smoothed);

    ModelWeights w2 = init_weights(micro_config());
    const TrainStats s2 = train_toy(w2, corpus, opts);
    CHECK(s1.step_losses == s2.step_losses);
    bool same = true;
    std::vector<std::vector<double>*> t1, t2;
    for_each_tensor(w1, [&](const std::string&, std::vector<double>& d) { t1.push_back(&d); });
    for_each_tensor(w2, [&](const std::string&, std::vector<double>& d) { t2.push_back(&d); });
    for (size_t i = 0; i < t1.size(); ++i) {
        if (*t1[i] != *t2[i]) same = false;
    }
    CHECK(same);
}

TEST_CASE("divergent learning rates abort with a diagnostic") {
    ModelWeights w = init_weights(micro_config());
    TrainOptions opts;
    opts.steps = 50;
    opts.lr = 1e6;
    opts.clip_norm = 1e9; // let it blow up
    CHECK_THROWS_WITH(train_toy(w, tiny_corpus(4, 11), opts), doctest::Contains("diverged"));
}
