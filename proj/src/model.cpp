#include "ficl/model.hpp"

#include "ficl/io.hpp"
#include "ficl/nnops.hpp"
#include "ficl/softmax.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ficl {

void ModelConfig::validate() const {
    if (vocab_size < 2) throw std::invalid_argument("model config: vocab_size must be >= 2");
    if (d_model < 1 || n_heads < 1 || n_layers < 1 || max_positions < 1) {
        throw std::invalid_argument("model config: dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("model config: d_model must be divisible by n_heads");
    }
}

std::string ModelConfig::to_text() const {
    std::ostringstream ss;
    ss << "vocab_size = " << vocab_size << "\n"
       << "d_model = " << d_model << "\n"
       << "n_heads = " << n_heads << "\n"
       << "n_layers = " << n_layers << "\n"
       << "max_positions = " << max_positions << "\n"
       << "seed = " << seed << "\n";
    return ss.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("model config: bad line: " + line);
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "vocab_size") cfg.vocab_size = std::stoi(val);
        else if (key == "d_model") cfg.d_model = std::stoi(val);
        else if (key == "n_heads") cfg.n_heads = std::stoi(val);
        else if (key == "n_layers") cfg.n_layers = std::stoi(val);
        else if (key == "max_positions") cfg.max_positions = std::stoi(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else throw std::invalid_argument("model config: unknown key: " + key);
    }
    cfg.validate();
    return cfg;
}

ModelConfig ModelConfig::load_text(const std::string& path) {
    return from_text(read_file(path));
}

ModelWeights zeros_like(const ModelConfig& cfg) {
    cfg.validate();
    ModelWeights w;
    w.cfg = cfg;
    w.tok_emb = Matrix(cfg.vocab_size, cfg.d_model);
    w.pos_emb = Matrix(cfg.max_positions, cfg.d_model);
    w.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& l : w.layers) {
        l.ln1_g.assign(static_cast<size_t>(cfg.d_model), 0.0);
        l.ln1_b.assign(static_cast<size_t>(cfg.d_model), 0.0);
        l.ln2_g.assign(static_cast<size_t>(cfg.d_model), 0.0);
        l.ln2_b.assign(static_cast<size_t>(cfg.d_model), 0.0);
        l.wq = Matrix(cfg.d_model, cfg.d_model);
        l.wk = Matrix(cfg.d_model, cfg.d_model);
        l.wv = Matrix(cfg.d_model, cfg.d_model);
        l.wo = Matrix(cfg.d_model, cfg.d_model);
        l.w1 = Matrix(cfg.d_model, cfg.d_ff());
        l.b1.assign(static_cast<size_t>(cfg.d_ff()), 0.0);
        l.w2 = Matrix(cfg.d_ff(), cfg.d_model);
        l.b2.assign(static_cast<size_t>(cfg.d_model), 0.0);
    }
    w.lnf_g.assign(static_cast<size_t>(cfg.d_model), 0.0);
    w.lnf_b.assign(static_cast<size_t>(cfg.d_model), 0.0);
    w.unembed = Matrix(cfg.d_model, cfg.vocab_size);
    return w;
}

ModelWeights init_weights(const ModelConfig& cfg) {
    ModelWeights w = zeros_like(cfg);
    SeededRng rng(derive_seed(cfg.seed, "init"));
    constexpr double kStd = 0.08;
    for_each_tensor(w, [&](const std::string& name, std::vector<double>& data) {
        const bool is_gamma = name.size() >= 2 && name.compare(name.size() - 2, 2, "_g") == 0;
        const bool is_bias = (name.size() >= 2 && name.compare(name.size() - 2, 2, "_b") == 0) ||
                             name.ends_with("b1") || name.ends_with("b2");
        if (is_gamma) {
            std::fill(data.begin(), data.end(), 1.0);
        } else if (is_bias) {
            std::fill(data.begin(), data.end(), 0.0);
        } else {
            for (double& x : data) {
                x = kStd * rng.next_normal();
            }
        }
    });
    return w;
}

size_t param_count(const ModelConfig& cfg) {
    ModelWeights w = zeros_like(cfg);
    size_t n = 0;
    for_each_tensor(w, [&](const std::string&, std::vector<double>& d) { n += d.size(); });
    return n;
}

namespace {

constexpr char kMagic[8] = {'F', 'I', 'C', 'L', 'W', 'T', '0', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_i32(std::string& buf, int32_t v) { put_u32(buf, static_cast<uint32_t>(v)); }
void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<uint64_t>(v)); }

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    void need(size_t n) const {
        if (pos + n > buf.size()) {
            throw std::runtime_error("weight file: truncated");
        }
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
};

ModelConfig read_header(Reader& r) {
    r.need(sizeof(kMagic));
    if (std::memcmp(r.buf.data(), kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("weight file: bad magic");
    }
    r.pos = sizeof(kMagic);
    const uint32_t version = r.u32();
    if (version != kVersion) {
        throw std::runtime_error("weight file: unsupported version " + std::to_string(version));
    }
    ModelConfig cfg;
    cfg.vocab_size = r.i32();
    cfg.d_model = r.i32();
    cfg.n_heads = r.i32();
    cfg.n_layers = r.i32();
    cfg.max_positions = r.i32();
    cfg.seed = r.u64();
    cfg.validate();
    return cfg;
}

} // namespace

void save_weights(const ModelWeights& w, const std::string& path) {
    std::string buf;
    buf.reserve(64 + param_count(w.cfg) * 8);
    buf.append(kMagic, sizeof(kMagic));
    put_u32(buf, kVersion);
    put_i32(buf, w.cfg.vocab_size);
    put_i32(buf, w.cfg.d_model);
    put_i32(buf, w.cfg.n_heads);
    put_i32(buf, w.cfg.n_layers);
    put_i32(buf, w.cfg.max_positions);
    put_u64(buf, w.cfg.seed);
    size_t count = 0;
    for_each_tensor(const_cast<ModelWeights&>(w),
                    [&](const std::string&, std::vector<double>& d) { count += d.size(); });
    put_u64(buf, count);
    for_each_tensor(const_cast<ModelWeights&>(w), [&](const std::string&, std::vector<double>& d) {
        for (double x : d) put_f64(buf, x);
    });
    atomic_write_file(path, buf);
}

ModelWeights load_weights(const std::string& path) {
    const std::string buf = read_file(path);
    Reader r{buf};
    const ModelConfig cfg = read_header(r);
    const uint64_t count = r.u64();
    if (count != param_count(cfg)) {
        throw std::runtime_error("weight file: parameter count does not match config");
    }
    ModelWeights w = zeros_like(cfg);
    for_each_tensor(w, [&](const std::string&, std::vector<double>& d) {
        for (double& x : d) x = r.f64();
    });
    if (r.pos != buf.size()) {
        throw std::runtime_error("weight file: trailing data");
    }
    for_each_tensor(w, [&](const std::string& name, std::vector<double>& d) {
        check_finite(std::span<const double>(d.data(), d.size()), name.c_str());
    });
    return w;
}

ModelConfig peek_weights_config(const std::string& path) {
    const std::string buf = read_file(path);
    Reader r{buf};
    return read_header(r);
}

void ensure_config_match(const ModelConfig& expected, const ModelConfig& actual) {
    auto fail = [](const char* field) {
        throw std::runtime_error(std::string("model config mismatch: field ") + field);
    };
    if (expected.vocab_size != actual.vocab_size) fail("vocab_size");
    if (expected.d_model != actual.d_model) fail("d_model");
    if (expected.n_heads != actual.n_heads) fail("n_heads");
    if (expected.n_layers != actual.n_layers) fail("n_layers");
    if (expected.max_positions != actual.max_positions) fail("max_positions");
}

// ---------------------------------------------------------------------------
// forward runner
// ---------------------------------------------------------------------------

namespace {

// Incremental decoder evaluation over a growing token sequence. K/V per layer
// are cached so generation appends one position at a time; an appended
// position computes exactly the values a one-shot pass over the final
// sequence would, so teacher forcing and sampling agree bit-for-bit.
class Runner {
public:
    Runner(const PromptLayout& layout, const BatchPartition* part, const AttentionConfig& cfg,
           const ModelWeights& w, const TraceSpec& spec, int capacity)
        : layout_(layout), part_(part), cfg_(cfg), w_(w), spec_(spec), capacity_(capacity) {
        const ModelConfig& mc = w.cfg;
        mc.validate();
        cfg_.validate();
        if ((part_ != nullptr) != (cfg_.variant == AttentionVariant::Hierarchical)) {
            throw std::invalid_argument(
                "forward: partition must be supplied exactly for the hierarchical variant");
        }
        kcache_.reserve(static_cast<size_t>(mc.n_layers));
        vcache_.reserve(static_cast<size_t>(mc.n_layers));
        for (int l = 0; l < mc.n_layers; ++l) {
            kcache_.emplace_back(capacity_, mc.d_model);
            vcache_.emplace_back(capacity_, mc.d_model);
        }
        iota_.resize(static_cast<size_t>(capacity_));
        for (int i = 0; i < capacity_; ++i) iota_[static_cast<size_t>(i)] = i;
        demo_ord_.assign(static_cast<size_t>(capacity_), 0);
        response_flag_.assign(static_cast<size_t>(capacity_), 0);

        trace_.n_layers = mc.n_layers;
        trace_.n_heads = mc.n_heads;
        trace_.logprobs.assign(static_cast<size_t>(capacity_), kTraceNan);
        if (spec_.attention_stats) {
            trace_.stats.assign(static_cast<size_t>(mc.n_layers) * mc.n_heads * capacity_, {});
        }
        if (spec_.full_logits) {
            trace_.logits = Matrix(capacity_, mc.vocab_size);
        }
        if (!spec_.outcome_positions.empty()) {
            trace_.outcomes.assign(static_cast<size_t>(mc.n_layers) * mc.n_heads *
                                       spec_.outcome_positions.size(),
                                   {});
        }
        int threads = 1;
#ifdef _OPENMP
        threads = omp_get_max_threads();
#endif
        ctx_.resize(static_cast<size_t>(threads));
    }

    void extend(int end);

    std::span<const double> last_logits() const { return trace_.last_logits; }

    ForwardTrace take_trace() {
        trace_.n_tokens = n_;
        return std::move(trace_);
    }

    int processed() const { return n_; }

private:
    struct ThreadCtx {
        attn::Scratch scratch;
        std::vector<attn::Stats> stats;
        std::vector<std::vector<double>> bouts;
        std::vector<double> lin_demo, lin_query;
    };

    int target_outcome_slot(int t) const {
        for (size_t i = 0; i < spec_.outcome_positions.size(); ++i) {
            if (spec_.outcome_positions[i] == t) return static_cast<int>(i);
        }
        return -1;
    }

    const PromptLayout& layout_;
    const BatchPartition* part_;
    AttentionConfig cfg_;
    const ModelWeights& w_;
    TraceSpec spec_;
    int capacity_;
    int n_ = 0;

    std::vector<Matrix> kcache_, vcache_;
    std::vector<int32_t> iota_;
    std::vector<int32_t> demo_ord_;
    std::vector<uint8_t> response_flag_;
    std::vector<ThreadCtx> ctx_;
    std::vector<double> prev_logits_;
    ForwardTrace trace_;
};

void Runner::extend(int end) {
    const ModelConfig& mc = w_.cfg;
    const int n0 = n_;
    const int m = end - n0;
    if (m <= 0) return;
    if (end > capacity_ || end > layout_.size()) {
        throw std::invalid_argument("forward: extend beyond capacity");
    }
    const int H = mc.n_heads;
    const int dh = mc.d_head();

    // embeddings (token + remapped position)
    Matrix x(m, mc.d_model);
    for (int i = 0; i < m; ++i) {
        const int t = n0 + i;
        const Token tok = layout_.tokens[static_cast<size_t>(t)];
        if (tok.id < 0 || tok.id >= mc.vocab_size) {
            throw std::invalid_argument("forward: token id out of vocabulary");
        }
        const int pos = part_ != nullptr ? part_->position_of(t)
                                         : layout_.positions[static_cast<size_t>(t)];
        if (pos < 0 || pos >= mc.max_positions) {
            throw std::invalid_argument("forward: position overflow at index " +
                                        std::to_string(t) + " (position " + std::to_string(pos) +
                                        ", max " + std::to_string(mc.max_positions) + ")");
        }
        const auto te = w_.tok_emb.row(tok.id);
        const auto pe = w_.pos_emb.row(pos);
        auto out = x.row(i);
        for (int j = 0; j < mc.d_model; ++j) {
            out[static_cast<size_t>(j)] = te[static_cast<size_t>(j)] + pe[static_cast<size_t>(j)];
        }
        const SegmentLabel lbl = layout_.labels[static_cast<size_t>(t)];
        demo_ord_[static_cast<size_t>(t)] = is_demo_label(lbl) ? lbl.demo : 0;
        response_flag_[static_cast<size_t>(t)] = is_response_label(lbl) ? 1 : 0;
    }

    auto capture_hidden = [&](int level, const Matrix& h) {
        for (const auto& [lvl, t] : spec_.hidden_states) {
            if (lvl == level && t >= n0 && t < end) {
                const auto row = h.row(t - n0);
                trace_.hidden[{lvl, t}] = std::vector<double>(row.begin(), row.end());
            }
        }
    };
    capture_hidden(0, x);

    const bool filtering_active = cfg_.variant == AttentionVariant::Filtering ||
                                  cfg_.variant == AttentionVariant::Hierarchical;

    for (int l = 0; l < mc.n_layers; ++l) {
        const LayerWeights& lw = w_.layers[static_cast<size_t>(l)];
        const Matrix a = layernorm_rows(x, lw.ln1_g, lw.ln1_b);
        const Matrix q = matmul(a, lw.wq);
        const Matrix k = matmul(a, lw.wk);
        const Matrix v = matmul(a, lw.wv);
        // append K/V rows to the layer cache
        for (int i = 0; i < m; ++i) {
            std::copy(k.row(i).begin(), k.row(i).end(), kcache_[static_cast<size_t>(l)].row(n0 + i).begin());
            std::copy(v.row(i).begin(), v.row(i).end(), vcache_[static_cast<size_t>(l)].row(n0 + i).begin());
        }

        Matrix attn_out(m, mc.d_model);
        uint64_t macs = 0;

#pragma omp parallel for collapse(2) schedule(dynamic, 8) reduction(+ : macs)
        for (int h = 0; h < H; ++h) {
            for (int i = 0; i < m; ++i) {
                int tid = 0;
#ifdef _OPENMP
                tid = omp_get_thread_num();
#endif
                ThreadCtx& tc = ctx_[static_cast<size_t>(tid)];
                const int t = n0 + i;
                const int32_t target_ord = demo_ord_[static_cast<size_t>(t)];
                const double p_eff =
                    (filtering_active && response_flag_[static_cast<size_t>(t)]) ? cfg_.p : 0.0;

                attn::RowView view;
                view.keys = &kcache_[static_cast<size_t>(l)];
                view.values = &vcache_[static_cast<size_t>(l)];
                view.key_col = h * dh;
                view.val_col = h * dh;
                view.d_k = dh;
                view.d_v = dh;
                view.demo_ord = demo_ord_;
                view.demo_max = target_ord > 0 ? target_ord - 1
                                               : std::numeric_limits<int32_t>::max();
                const std::span<const double> qvec(q.row(i).data() + h * dh,
                                                   static_cast<size_t>(dh));
                std::span<double> out(attn_out.row(i).data() + h * dh, static_cast<size_t>(dh));

                const int slot = trace_.outcomes.empty() ? -1 : target_outcome_slot(t);
                RecordedOutcome* rec = nullptr;
                if (slot >= 0) {
                    rec = &trace_.outcomes[(static_cast<size_t>(l) * H + h) *
                                               spec_.outcome_positions.size() +
                                           static_cast<size_t>(slot)];
                    rec->layer = l;
                    rec->head = h;
                    rec->position = t;
                }

                PositionAttnStats pstats;
                const int batch_of_t = part_ != nullptr ? part_->batch_of(t) : -1;

                if (cfg_.variant == AttentionVariant::Linear) {
                    tc.lin_demo.assign(static_cast<size_t>(dh), 0.0);
                    tc.lin_query.assign(static_cast<size_t>(dh), 0.0);
                    view.segs[0] = std::span<const int32_t>(iota_).subspan(0, static_cast<size_t>(t + 1));
                    view.n_segs = 1;
                    attn::attend_linear(qvec, view, cfg_.scale_scores, tc.lin_demo, tc.lin_query,
                                        tc.scratch);
                    for (int d = 0; d < dh; ++d) {
                        out[static_cast<size_t>(d)] =
                            tc.lin_demo[static_cast<size_t>(d)] + tc.lin_query[static_cast<size_t>(d)];
                    }
                } else if (part_ == nullptr || batch_of_t >= 0) {
                    // flat causal prefix, or a demonstration token confined to
                    // its own batch
                    const int begin = batch_of_t >= 0
                                          ? part_->batch_spans[static_cast<size_t>(batch_of_t)].begin
                                          : 0;
                    view.segs[0] = std::span<const int32_t>(iota_).subspan(
                        static_cast<size_t>(begin), static_cast<size_t>(t + 1 - begin));
                    view.n_segs = 1;
                    const attn::Stats st = attn::attend(qvec, view, p_eff, cfg_.scale_scores, out,
                                                        tc.scratch, rec ? &rec->outcome : nullptr);
                    pstats.lambda = st.lambda;
                    pstats.query_mass = 1.0 - st.lambda;
                    pstats.masked = st.masked;
                    if (spec_.demo_macs != nullptr && target_ord > 0) {
                        macs += static_cast<uint64_t>(st.demo_tokens) * static_cast<uint64_t>(dh);
                    }
                } else {
                    // query-side token under hierarchical attention: one
                    // intra-batch attention per batch, then the weighted
                    // inter-batch sum (sequential, fixed batch order)
                    const int T = part_->batch_count;
                    tc.stats.resize(static_cast<size_t>(T));
                    if (static_cast<int>(tc.bouts.size()) < T) tc.bouts.resize(static_cast<size_t>(T));
                    if (rec != nullptr) {
                        rec->per_batch.resize(static_cast<size_t>(T));
                    }
                    for (int b = 0; b < T; ++b) {
                        const TokenSpan bs = part_->batch_spans[static_cast<size_t>(b)];
                        view.segs[0] = std::span<const int32_t>(iota_).subspan(
                            static_cast<size_t>(bs.begin), static_cast<size_t>(bs.size()));
                        view.segs[1] = std::span<const int32_t>(iota_).subspan(
                            static_cast<size_t>(part_->query_begin),
                            static_cast<size_t>(t + 1 - part_->query_begin));
                        view.n_segs = 2;
                        tc.bouts[static_cast<size_t>(b)].assign(static_cast<size_t>(dh), 0.0);
                        tc.stats[static_cast<size_t>(b)] = attn::attend(
                            qvec, view, p_eff, cfg_.scale_scores, tc.bouts[static_cast<size_t>(b)],
                            tc.scratch, rec ? &rec->per_batch[static_cast<size_t>(b)] : nullptr);
                    }
                    const std::vector<double> bw =
                        attn::interbatch_weights({tc.stats.data(), static_cast<size_t>(T)},
                                                 cfg_.interbatch_demo_only);
                    for (int d = 0; d < dh; ++d) {
                        out[static_cast<size_t>(d)] = bw[0] * tc.bouts[0][static_cast<size_t>(d)];
                    }
                    for (int b = 1; b < T; ++b) {
                        for (int d = 0; d < dh; ++d) {
                            out[static_cast<size_t>(d)] +=
                                bw[static_cast<size_t>(b)] * tc.bouts[static_cast<size_t>(b)][static_cast<size_t>(d)];
                        }
                    }
                    for (int b = 0; b < T; ++b) {
                        pstats.lambda += bw[static_cast<size_t>(b)] * tc.stats[static_cast<size_t>(b)].lambda;
                        pstats.query_mass +=
                            bw[static_cast<size_t>(b)] * (1.0 - tc.stats[static_cast<size_t>(b)].lambda);
                        pstats.masked += tc.stats[static_cast<size_t>(b)].masked;
                    }
                    if (rec != nullptr) {
                        rec->batch_weights = bw;
                    }
                }

                if (spec_.attention_stats) {
                    trace_.stats[(static_cast<size_t>(l) * H + h) * capacity_ +
                                 static_cast<size_t>(t)] = pstats;
                }
            }
        }
        if (spec_.demo_macs != nullptr) {
            *spec_.demo_macs += macs;
        }

        add_inplace(x, matmul(attn_out, lw.wo));
        const Matrix b = layernorm_rows(x, lw.ln2_g, lw.ln2_b);
        const Matrix f = gelu_rows(affine(b, lw.w1, lw.b1));
        add_inplace(x, affine(f, lw.w2, lw.b2));
        capture_hidden(l + 1, x);
    }

    const Matrix xf = layernorm_rows(x, w_.lnf_g, w_.lnf_b);
    const Matrix logits = matmul(xf, w_.unembed);

    // score each token from its predecessor's logits row
    for (int i = 0; i < m; ++i) {
        const int t = n0 + i;
        if (t + 1 < end) {
            trace_.logprobs[static_cast<size_t>(t + 1)] =
                log_softmax_at(logits.row(i), layout_.tokens[static_cast<size_t>(t + 1)].id);
        }
    }
    if (n0 > 0 && !prev_logits_.empty()) {
        trace_.logprobs[static_cast<size_t>(n0)] =
            log_softmax_at(prev_logits_, layout_.tokens[static_cast<size_t>(n0)].id);
    }
    if (spec_.full_logits) {
        for (int i = 0; i < m; ++i) {
            std::copy(logits.row(i).begin(), logits.row(i).end(), trace_.logits.row(n0 + i).begin());
        }
    }
    trace_.last_logits.assign(logits.row(m - 1).begin(), logits.row(m - 1).end());
    prev_logits_ = trace_.last_logits;
    n_ = end;
}

} // namespace

ForwardTrace forward(const PromptLayout& layout, const BatchPartition* part,
                     const AttentionConfig& cfg, const ModelWeights& w, const TraceSpec& spec) {
    if (layout.size() == 0) {
        throw std::invalid_argument("forward: empty layout");
    }
    Runner runner(layout, part, cfg, w, spec, layout.size());
    runner.extend(layout.size());
    return runner.take_trace();
}

std::vector<Token> generate(PromptLayout& layout, const BatchPartition* part,
                            const AttentionConfig& cfg, const ModelWeights& w,
                            double temperature, SeededRng& rng, int max_new, int stop_token) {
    if (temperature < 0.0) {
        throw std::invalid_argument("generate: temperature must be >= 0");
    }
    if (layout.size() == 0) {
        throw std::invalid_argument("generate: empty layout");
    }
    if (max_new < 1) {
        return {};
    }
    Runner runner(layout, part, cfg, w, TraceSpec{}, layout.size() + max_new);
    runner.extend(layout.size());
    std::vector<Token> out;
    for (int step = 0; step < max_new; ++step) {
        const std::span<const double> logits = runner.last_logits();
        int tok = 0;
        if (temperature == 0.0) {
            for (int i = 1; i < static_cast<int>(logits.size()); ++i) {
                if (logits[static_cast<size_t>(i)] > logits[static_cast<size_t>(tok)]) {
                    tok = i;
                }
            }
        } else {
            std::vector<double> scaled(logits.size());
            for (size_t i = 0; i < logits.size(); ++i) {
                scaled[i] = logits[i] / temperature;
            }
            const std::vector<double> probs = softmax(scaled);
            const double u = rng.next_double();
            double cum = 0.0;
            tok = static_cast<int>(probs.size()) - 1;
            for (size_t i = 0; i < probs.size(); ++i) {
                cum += probs[i];
                if (u < cum) {
                    tok = static_cast<int>(i);
                    break;
                }
            }
        }
        append_response_token(layout, Token{tok});
        out.push_back(Token{tok});
        if (tok == stop_token || step + 1 == max_new) {
            break;
        }
        runner.extend(layout.size());
    }
    return out;
}

double perplexity_from_logprobs(std::span<const double> logprobs, TokenSpan span) {
    if (span.empty()) {
        throw std::invalid_argument("perplexity: empty response span");
    }
    if (span.begin < 1 || span.end > static_cast<int>(logprobs.size())) {
        throw std::invalid_argument("perplexity: span out of range (needs a preceding context)");
    }
    double nll = 0.0;
    for (int t = span.begin; t < span.end; ++t) {
        const double lp = logprobs[static_cast<size_t>(t)];
        if (std::isnan(lp)) {
            throw std::invalid_argument("perplexity: span token has no recorded log-probability");
        }
        nll -= lp;
    }
    return std::exp(nll / span.size());
}

double perplexity(const PromptLayout& layout, const BatchPartition* part,
                  const AttentionConfig& cfg, const ModelWeights& w, TokenSpan span) {
    const ForwardTrace trace = forward(layout, part, cfg, w);
    return perplexity_from_logprobs(trace.logprobs, span);
}

std::vector<double> response_perplexities(const PromptLayout& layout, const AttentionConfig& cfg,
                                          const ModelWeights& w) {
    if (cfg.variant == AttentionVariant::Hierarchical) {
        throw std::invalid_argument("response_perplexities: flat variants only");
    }
    const ForwardTrace trace = forward(layout, nullptr, cfg, w);
    std::vector<double> out;
    out.reserve(layout.response_spans.size());
    for (const TokenSpan& span : layout.response_spans) {
        out.push_back(perplexity_from_logprobs(trace.logprobs, span));
    }
    return out;
}

} // namespace ficl
