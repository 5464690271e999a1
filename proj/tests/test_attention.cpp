#include "ficl/attention.hpp"
#include "ficl/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace ficl;

namespace {

AttentionInput make_input(int demo_rows, int query_rows, int d, SeededRng& rng,
                          double score_scale = 1.0) {
    AttentionInput in;
    const int rows = demo_rows + query_rows;
    in.query_vec.resize(static_cast<size_t>(d));
    for (double& x : in.query_vec) x = score_scale * rng.next_normal();
    in.keys = Matrix(rows, d);
    in.values = Matrix(rows, d);
    for (size_t i = 0; i < in.keys.size(); ++i) {
        in.keys.data()[i] = rng.next_normal();
        in.values.data()[i] = rng.next_normal();
    }
    in.is_demo.assign(static_cast<size_t>(rows), 0);
    for (int r = 0; r < demo_rows; ++r) in.is_demo[static_cast<size_t>(r)] = 1;
    in.visible.assign(static_cast<size_t>(rows), 1);
    return in;
}

} // namespace

TEST_CASE("standard attention: single visible position returns its value row") {
    SeededRng rng(20);
    AttentionInput in = make_input(0, 3, 4, rng);
    in.visible = {0, 1, 0};
    const AttentionOutcome out = standard_attention(in);
    REQUIRE(out.rows.size() == 1);
    CHECK(out.weights[0] == 1.0);
    for (int d = 0; d < 4; ++d) {
        CHECK(out.output[static_cast<size_t>(d)] == in.values.at(1, d));
    }
}

TEST_CASE("standard attention: orthogonal keys give uniform weights") {
    AttentionInput in;
    in.query_vec = {1.0, 0.0, 0.0};
    in.keys = Matrix(4, 3);
    in.values = Matrix(4, 3);
    for (int r = 0; r < 4; ++r) {
        in.keys.at(r, 1) = 1.0 + r; // orthogonal to the query
        in.values.at(r, 0) = r;
    }
    in.is_demo.assign(4, 0);
    in.visible.assign(4, 1);
    const AttentionOutcome out = standard_attention(in);
    for (double w : out.weights) {
        CHECK(w == 0.25);
    }
}

TEST_CASE("standard attention matches the extended-precision oracle") {
    AttentionInput in;
    in.query_vec = {0.5, -1.0};
    in.keys = Matrix(3, 2, {1.0, 0.5, -0.25, 2.0, 0.75, -0.5});
    in.values = Matrix(3, 2, {2.0, -1.0, 0.5, 3.0, -2.0, 1.5});
    in.is_demo = {1, 1, 0};
    in.visible = {1, 1, 1};
    const AttentionOutcome out = standard_attention(in);
    const auto ref = oracle::attention_ld(in.query_vec, in.keys, in.values, {0, 1, 2});
    for (int d = 0; d < 2; ++d) {
        CHECK(std::fabs(out.output[static_cast<size_t>(d)] -
                        static_cast<double>(ref[static_cast<size_t>(d)])) <= 1e-12);
    }
    double wsum = 0.0;
    for (double w : out.weights) wsum += w;
    CHECK(std::fabs(wsum - 1.0) <= 1e-9);
    // lambda equals the demonstration share of the weights
    CHECK(std::fabs(out.lambda - (out.weights[0] + out.weights[1])) <= 1e-12);
    CHECK_THROWS(standard_attention(AttentionInput{{1.0}, Matrix(1, 1), Matrix(1, 1), {0}, {0}}));
}

TEST_CASE("linear attention: empty demo block equals query-only result") {
    SeededRng rng(21);
    const AttentionInput in = make_input(0, 5, 4, rng);
    const LinearOutcome out = linear_attention(in);
    for (int d = 0; d < 4; ++d) {
        CHECK(out.demo_part[static_cast<size_t>(d)] == 0.0);
        CHECK(out.output[static_cast<size_t>(d)] == out.query_part[static_cast<size_t>(d)]);
    }
}

TEST_CASE("linear attention is additive over the demo/query split, exactly") {
    SeededRng rng(22);
    for (int rep = 0; rep < 200; ++rep) {
        const int nd = 1 + static_cast<int>(rng.next_below(6));
        const int nq = 1 + static_cast<int>(rng.next_below(6));
        const AttentionInput in = make_input(nd, nq, 4, rng);
        const LinearOutcome whole = linear_attention(in);

        AttentionInput demo_only = in;
        AttentionInput query_only = in;
        for (int r = 0; r < nd + nq; ++r) {
            demo_only.visible[static_cast<size_t>(r)] = r < nd;
            query_only.visible[static_cast<size_t>(r)] = r >= nd;
        }
        const LinearOutcome a = linear_attention(demo_only);
        const LinearOutcome b = linear_attention(query_only);
        for (int d = 0; d < 4; ++d) {
            CHECK(whole.output[static_cast<size_t>(d)] ==
                  a.output[static_cast<size_t>(d)] + b.output[static_cast<size_t>(d)]);
        }
    }
}

TEST_CASE("linear attention matches the two-step matmul composition") {
    SeededRng rng(23);
    const AttentionInput in = make_input(2, 2, 3, rng);
    const LinearOutcome out = linear_attention(in);
    // (q K^T) V through the matrix kernel
    Matrix q(1, 3, std::vector<double>(in.query_vec));
    const Matrix scores = matmul(q, transpose(in.keys));
    const Matrix ref = matmul(scores, in.values);
    for (int d = 0; d < 3; ++d) {
        CHECK(std::fabs(out.output[static_cast<size_t>(d)] - ref.at(0, d)) <= 1e-12);
    }
}

TEST_CASE("lambda decomposition: empty demo block gives lambda 0") {
    SeededRng rng(24);
    const AttentionInput in = make_input(0, 4, 4, rng);
    const LambdaParts parts = lambda_decompose(in);
    CHECK(parts.lambda == 0.0);
    for (double x : parts.demo_part) {
        CHECK(x == 0.0);
    }
}

TEST_CASE("lambda decomposition: identical score multisets give lambda 0.5") {
    SeededRng rng(25);
    AttentionInput in = make_input(2, 2, 4, rng);
    // query rows copy the demo keys so both exponential sums coincide
    for (int d = 0; d < 4; ++d) {
        in.keys.at(2, d) = in.keys.at(0, d);
        in.keys.at(3, d) = in.keys.at(1, d);
    }
    const LambdaParts parts = lambda_decompose(in);
    CHECK(std::fabs(parts.lambda - 0.5) <= 1e-9);
}

TEST_CASE("lambda decomposition identity against standard attention") {
    SeededRng rng(26);
    for (int rep = 0; rep < 500; ++rep) {
        const int nd = 1 + static_cast<int>(rng.next_below(8));
        const int nq = 1 + static_cast<int>(rng.next_below(8));
        const AttentionInput in = make_input(nd, nq, 6, rng);
        const LambdaParts parts = lambda_decompose(in);
        const AttentionOutcome full = standard_attention(in);
        for (int d = 0; d < 6; ++d) {
            const double merged = (1.0 - parts.lambda) * parts.query_part[static_cast<size_t>(d)] +
                                  parts.lambda * parts.demo_part[static_cast<size_t>(d)];
            CHECK(std::fabs(merged - full.output[static_cast<size_t>(d)]) <= 1e-9);
        }
        CHECK(std::fabs(parts.lambda - full.lambda) <= 1e-9);
    }
}

TEST_CASE("appending a demonstration key strictly increases lambda") {
    SeededRng rng(27);
    for (int rep = 0; rep < 300; ++rep) {
        const int nd = 1 + static_cast<int>(rng.next_below(6));
        const int nq = 1 + static_cast<int>(rng.next_below(6));
        const AttentionInput in = make_input(nd, nq, 4, rng);
        const double before = lambda_decompose(in).lambda;

        AttentionInput grown = in;
        Matrix keys(in.keys.rows() + 1, 4);
        Matrix values(in.values.rows() + 1, 4);
        std::copy(in.keys.data(), in.keys.data() + in.keys.size(), keys.data());
        std::copy(in.values.data(), in.values.data() + in.values.size(), values.data());
        for (int d = 0; d < 4; ++d) {
            keys.at(in.keys.rows(), d) = rng.next_normal();
            values.at(in.values.rows(), d) = rng.next_normal();
        }
        grown.keys = std::move(keys);
        grown.values = std::move(values);
        grown.is_demo.push_back(1);
        grown.visible.push_back(1);
        const double after = lambda_decompose(grown).lambda;
        CHECK(after > before);
    }
}

TEST_CASE("filtering with p=0 is bit-identical to standard attention") {
    SeededRng rng(28);
    for (int rep = 0; rep < 50; ++rep) {
        const AttentionInput in = make_input(4, 3, 4, rng);
        const AttentionOutcome a = standard_attention(in);
        const AttentionOutcome b = filtering_attention(in, 0.0);
        CHECK(a.output == b.output);
        CHECK(a.weights == b.weights);
        CHECK(a.lambda == b.lambda);
    }
}

TEST_CASE("filtering masks the k lowest-scoring demonstration rows") {
    // demo scores 1, 5, 2, 9 with an identity-ish construction
    AttentionInput in;
    in.query_vec = {1.0};
    in.keys = Matrix(5, 1, {1.0, 5.0, 2.0, 9.0, 3.0});
    in.values = Matrix(5, 1, {10.0, 20.0, 30.0, 40.0, 50.0});
    in.is_demo = {1, 1, 1, 1, 0};
    in.visible = {1, 1, 1, 1, 1};
    const AttentionOutcome out = filtering_attention(in, 0.5); // floor(0.5*4) = 2
    CHECK(out.masked == std::vector<uint8_t>{1, 0, 1, 0, 0});  // scores 1 and 2
    CHECK(out.weights[0] == 0.0);
    CHECK(out.weights[2] == 0.0);
    // equals standard attention over the surviving rows
    AttentionInput kept = in;
    kept.visible = {0, 1, 0, 1, 1};
    const AttentionOutcome ref = standard_attention(kept);
    for (size_t d = 0; d < out.output.size(); ++d) {
        CHECK(std::fabs(out.output[d] - ref.output[d]) <= 1e-12);
    }
    // small p rounds down to zero masks
    const AttentionOutcome none = filtering_attention(in, 0.2); // floor(0.8) = 0
    CHECK(none.masked == std::vector<uint8_t>{0, 0, 0, 0, 0});
}

TEST_CASE("filtering never masks query rows, ties break toward the lowest index") {
    AttentionInput in;
    in.query_vec = {1.0};
    in.keys = Matrix(4, 1, {2.0, 2.0, 2.0, -5.0}); // three tied demo scores, low query score
    in.values = Matrix(4, 1, {1.0, 2.0, 3.0, 4.0});
    in.is_demo = {1, 1, 1, 0};
    in.visible = {1, 1, 1, 1};
    const AttentionOutcome out = filtering_attention(in, 0.5); // floor(1.5) = 1
    CHECK(out.masked == std::vector<uint8_t>{1, 0, 0, 0});
    // the query row survives arbitrarily large thresholds
    const AttentionOutcome hard = filtering_attention(in, 0.99);
    CHECK(hard.masked[3] == 0);
}

TEST_CASE("filtering nesting across thresholds") {
    SeededRng rng(29);
    for (int rep = 0; rep < 100; ++rep) {
        const AttentionInput in = make_input(8, 3, 4, rng);
        std::set<int> prev;
        for (double p : {0.0, 0.1, 0.2, 0.3, 0.4}) {
            const AttentionOutcome out = filtering_attention(in, p);
            std::set<int> cur;
            for (size_t i = 0; i < out.masked.size(); ++i) {
                if (out.masked[i]) cur.insert(out.rows[i]);
            }
            for (int r : prev) {
                CHECK(cur.count(r) == 1);
            }
            prev = std::move(cur);
        }
    }
}

TEST_CASE("filtering that would mask every demonstration row caps at m-1") {
    SeededRng rng(30);
    AttentionInput in = make_input(3, 0, 4, rng); // all rows demonstrations
    const AttentionOutcome out = filtering_attention(in, 1.0);
    CHECK(out.mask_capped);
    int masked = 0;
    for (uint8_t m : out.masked) masked += m;
    CHECK(masked == 2);
}

TEST_CASE("hierarchical with one batch is bit-identical to filtering") {
    SeededRng rng(31);
    for (int rep = 0; rep < 30; ++rep) {
        const AttentionInput in = make_input(5, 3, 4, rng);
        const HierarchicalOutcome h = hierarchical_attention({&in, 1}, 0.2);
        const AttentionOutcome f = filtering_attention(in, 0.2);
        CHECK(h.batch_weights == std::vector<double>{1.0});
        CHECK(h.output == f.output);
    }
}

TEST_CASE("two identical batches get weight 0.5 each") {
    SeededRng rng(32);
    const AttentionInput in = make_input(4, 2, 4, rng);
    const std::vector<AttentionInput> batches{in, in};
    const HierarchicalOutcome h = hierarchical_attention(batches, 0.0);
    CHECK(std::fabs(h.batch_weights[0] - 0.5) <= 1e-12);
    CHECK(std::fabs(h.batch_weights[1] - 0.5) <= 1e-12);
    const AttentionOutcome intra = standard_attention(in);
    for (size_t d = 0; d < h.output.size(); ++d) {
        CHECK(std::fabs(h.output[d] - intra.output[d]) <= 1e-12);
    }
}

TEST_CASE("hierarchical T=2 handcrafted case matches the extended-precision oracle") {
    // batch 1: two demo rows + one query row; batch 2: one demo row + the
    // same query row; p = 0.4 masks floor(0.4*2)=0 and floor(0.4*1)=0, so use
    // p = 0.5 on batch 1 to exercise the mask in the oracle too
    AttentionInput b1;
    b1.query_vec = {1.0, -0.5};
    b1.keys = Matrix(3, 2, {0.8, 0.1, -0.3, 0.9, 0.2, -0.7});
    b1.values = Matrix(3, 2, {1.0, 2.0, -1.0, 0.5, 0.25, -0.75});
    b1.is_demo = {1, 1, 0};
    b1.visible = {1, 1, 1};
    AttentionInput b2;
    b2.query_vec = b1.query_vec;
    b2.keys = Matrix(2, 2, {1.2, -0.4, 0.2, -0.7});
    b2.values = Matrix(2, 2, {0.1, -0.2, 0.25, -0.75});
    b2.is_demo = {1, 0};
    b2.visible = {1, 1};
    const std::vector<AttentionInput> batches{b1, b2};
    const double p = 0.5;
    const HierarchicalOutcome got = hierarchical_attention(batches, p);

    // literal long-double evaluation of the intra/inter-batch formulas
    long double s_total = 0.0L;
    std::vector<long double> s_batch;
    std::vector<std::vector<long double>> h_batch;
    for (const AttentionInput& b : batches) {
        std::vector<long double> scores;
        for (int r = 0; r < b.keys.rows(); ++r) {
            long double s = 0.0L;
            for (int d = 0; d < 2; ++d) {
                s += static_cast<long double>(b.query_vec[static_cast<size_t>(d)]) * b.keys.at(r, d);
            }
            scores.push_back(s);
        }
        // mask the floor(p*m) lowest demo scores
        std::vector<int> demo_rows;
        for (int r = 0; r < b.keys.rows(); ++r) {
            if (b.is_demo[static_cast<size_t>(r)]) demo_rows.push_back(r);
        }
        const int k = static_cast<int>(std::floor(p * demo_rows.size()));
        std::sort(demo_rows.begin(), demo_rows.end(), [&](int x, int y) {
            return scores[static_cast<size_t>(x)] != scores[static_cast<size_t>(y)]
                       ? scores[static_cast<size_t>(x)] < scores[static_cast<size_t>(y)]
                       : x < y;
        });
        std::set<int> maskset(demo_rows.begin(), demo_rows.begin() + k);
        long double sum_e = 0.0L;
        std::vector<long double> e(scores.size(), 0.0L);
        for (size_t r = 0; r < scores.size(); ++r) {
            if (maskset.count(static_cast<int>(r)) == 0) {
                e[r] = expl(scores[r]);
                sum_e += e[r];
            }
        }
        std::vector<long double> h(2, 0.0L);
        for (size_t r = 0; r < scores.size(); ++r) {
            for (int d = 0; d < 2; ++d) {
                h[static_cast<size_t>(d)] += e[r] / sum_e * b.values.at(static_cast<int>(r), d);
            }
        }
        s_batch.push_back(sum_e);
        h_batch.push_back(std::move(h));
        s_total += sum_e;
    }
    for (int d = 0; d < 2; ++d) {
        long double ref = 0.0L;
        for (size_t i = 0; i < batches.size(); ++i) {
            ref += h_batch[i][static_cast<size_t>(d)] * (s_batch[i] / s_total);
        }
        CHECK(std::fabs(got.output[static_cast<size_t>(d)] - static_cast<double>(ref)) <= 1e-9);
    }
    for (size_t i = 0; i < batches.size(); ++i) {
        CHECK(std::fabs(got.batch_weights[i] - static_cast<double>(s_batch[i] / s_total)) <= 1e-9);
    }
}

TEST_CASE("hierarchical batch weights sum to 1 and output is order-invariant") {
    SeededRng rng(33);
    for (int rep = 0; rep < 100; ++rep) {
        const int T = 2 + static_cast<int>(rng.next_below(4));
        std::vector<AttentionInput> batches;
        for (int i = 0; i < T; ++i) {
            batches.push_back(make_input(1 + static_cast<int>(rng.next_below(5)),
                                         1 + static_cast<int>(rng.next_below(3)), 4, rng));
        }
        const HierarchicalOutcome a = hierarchical_attention(batches, 0.1);
        double wsum = 0.0;
        for (double w : a.batch_weights) {
            CHECK(w >= 0.0);
            wsum += w;
        }
        CHECK(std::fabs(wsum - 1.0) <= 1e-9);
        CHECK(std::fabs(a.lambda + a.query_mass - 1.0) <= 1e-9);

        std::vector<AttentionInput> shuffled = batches;
        rng.shuffle(shuffled);
        const HierarchicalOutcome b = hierarchical_attention(shuffled, 0.1);
        for (size_t d = 0; d < a.output.size(); ++d) {
            CHECK(std::fabs(a.output[d] - b.output[d]) <= 1e-9);
        }
    }
    CHECK_THROWS(hierarchical_attention({}, 0.0));
}
