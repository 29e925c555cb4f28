#include "doctest.h"
#include "oracles.hpp"
#include "prospectr/nn.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace prospectr;
using namespace prospectr::nn;

namespace {
std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_SUITE("nn") {

TEST_CASE("linear: identity weights pass through, zero input gives bias") {
    Rng rng(60);
    Linear<float> lin(4, 4, rng);
    std::fill(lin.w.data().begin(), lin.w.data().end(), 0.0f);
    for (int i = 0; i < 4; ++i) lin.w.data()[static_cast<size_t>(i * 4 + i)] = 1.0f;
    std::fill(lin.b.data().begin(), lin.b.data().end(), 0.0f);

    Tensor x = Tensor::randn({3, 4}, rng);
    Tensor y = lin.forward(x);
    for (size_t i = 0; i < x.data().size(); ++i)
        CHECK(y.data()[i] == doctest::Approx(x.data()[i]));

    for (int i = 0; i < 4; ++i) lin.b.data()[static_cast<size_t>(i)] = static_cast<float>(i);
    Tensor z = lin.forward(Tensor::zeros({2, 4}));
    for (int64_t r = 0; r < 2; ++r)
        for (int64_t c = 0; c < 4; ++c)
            CHECK(z.data()[static_cast<size_t>(r * 4 + c)] == static_cast<float>(c));
}

TEST_CASE("linear: random case equals naive matmul oracle") {
    Rng rng(61);
    Linear<float> lin(5, 3, rng);
    Tensor x = Tensor::randn({4, 5}, rng);
    Tensor y = lin.forward(x);
    auto mm = oracles::matmul(x.data(), lin.w.data(), 4, 5, 3);
    for (int64_t r = 0; r < 4; ++r)
        for (int64_t c = 0; c < 3; ++c)
            CHECK(y.data()[static_cast<size_t>(r * 3 + c)] ==
                  doctest::Approx(mm[static_cast<size_t>(r * 3 + c)] +
                                  lin.b.data()[static_cast<size_t>(c)]));
    // rank-3 input goes through the same math
    Tensor x3 = Tensor::randn({2, 4, 5}, rng);
    Tensor y3 = lin.forward(x3);
    CHECK(y3.shape() == Shape{2, 4, 3});
}

TEST_CASE("attention: single token gets weight one") {
    Rng rng(62);
    const int64_t d = 8;
    MultiHeadAttention<float> mha(d, 2, rng);
    Tensor x = Tensor::randn({1, 1, d}, rng);
    Tensor out = mha.forward(x);
    // softmax over one token is 1, so output = wo(wv(x))
    Tensor expect = mha.wo.forward(mha.wv.forward(reshape(x, {1, d})));
    for (size_t i = 0; i < out.data().size(); ++i)
        CHECK(out.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-5));
}

TEST_CASE("attention: identical tokens give identical rows") {
    Rng rng(63);
    MultiHeadAttention<float> mha(16, 4, rng);
    Tensor one = Tensor::randn({1, 1, 16}, rng);
    Tensor x = broadcast_to(one, {1, 3, 16});
    Tensor out = mha.forward(x);
    for (int64_t t = 1; t < 3; ++t)
        for (int64_t c = 0; c < 16; ++c)
            CHECK(out.data()[static_cast<size_t>(t * 16 + c)] ==
                  doctest::Approx(out.data()[static_cast<size_t>(c)]).epsilon(1e-5));
}

TEST_CASE("attention: two-token case matches brute-force formula") {
    Rng rng(64);
    const int64_t d = 6, h = 2, dh = d / h;
    MultiHeadAttention<float> mha(d, h, rng);
    Tensor x = Tensor::randn({1, 2, d}, rng);
    Tensor out = mha.forward(x);

    // direct evaluation with plain loops
    auto apply_linear = [&](const Linear<float>& lin, const std::vector<float>& in) {
        std::vector<float> r(static_cast<size_t>(2 * d), 0.0f);
        for (int64_t t = 0; t < 2; ++t)
            for (int64_t o = 0; o < d; ++o) {
                double acc = lin.b.data()[static_cast<size_t>(o)];
                for (int64_t i = 0; i < d; ++i)
                    acc += in[static_cast<size_t>(t * d + i)] *
                           lin.w.data()[static_cast<size_t>(i * d + o)];
                r[static_cast<size_t>(t * d + o)] = static_cast<float>(acc);
            }
        return r;
    };
    auto q = apply_linear(mha.wq, x.data());
    auto k = apply_linear(mha.wk, x.data());
    auto v = apply_linear(mha.wv, x.data());
    std::vector<float> merged(static_cast<size_t>(2 * d));
    for (int64_t head = 0; head < h; ++head) {
        for (int64_t t = 0; t < 2; ++t) {
            double logits[2];
            for (int64_t u = 0; u < 2; ++u) {
                double acc = 0;
                for (int64_t i = 0; i < dh; ++i)
                    acc += q[static_cast<size_t>(t * d + head * dh + i)] *
                           k[static_cast<size_t>(u * d + head * dh + i)];
                logits[u] = acc / std::sqrt(static_cast<double>(dh));
            }
            const double mx = std::max(logits[0], logits[1]);
            const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
            const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
            for (int64_t i = 0; i < dh; ++i)
                merged[static_cast<size_t>(t * d + head * dh + i)] =
                    static_cast<float>(a0 * v[static_cast<size_t>(0 * d + head * dh + i)] +
                                       a1 * v[static_cast<size_t>(1 * d + head * dh + i)]);
        }
    }
    auto expect = apply_linear(mha.wo, merged);
    for (size_t i = 0; i < expect.size(); ++i)
        CHECK(out.data()[i] == doctest::Approx(expect[i]).epsilon(1e-4));
}

TEST_CASE("attention: heads must divide dim") {
    Rng rng(65);
    CHECK_THROWS_AS(MultiHeadAttention<float>(10, 3, rng), ConfigError);
}

TEST_CASE("attention: -inf bias masks padding tokens") {
    Rng rng(66);
    const int64_t d = 8, n = 4;
    MultiHeadAttention<float> mha(d, 2, rng);
    Tensor x = Tensor::randn({1, n, d}, rng);

    // mask the last two tokens out of everyone's attention
    Tensor bias = Tensor::zeros({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 2; j < n; ++j)
            bias.data()[static_cast<size_t>(i * n + j)] = -1e30f;
    Tensor masked = mha.forward(x, &bias);

    // reference: run attention on just the first two tokens
    Tensor x2 = slice(x, 1, 0, 2);
    Tensor ref = mha.forward(x2);
    for (int64_t t = 0; t < 2; ++t)
        for (int64_t c = 0; c < d; ++c)
            CHECK(masked.data()[static_cast<size_t>(t * d + c)] ==
                  doctest::Approx(ref.data()[static_cast<size_t>(t * d + c)]).epsilon(1e-5));
}

TEST_CASE("batchnorm: train output has zero mean unit variance") {
    Rng rng(67);
    BatchNorm1d<float> bn(5);
    Tensor x = Tensor::randn({16, 5}, rng, 3.0f);
    Tensor y = bn.forward(x, true);
    for (int64_t c = 0; c < 5; ++c) {
        double mu = 0, ss = 0;
        for (int64_t r = 0; r < 16; ++r) mu += y.data()[static_cast<size_t>(r * 5 + c)];
        mu /= 16.0;
        for (int64_t r = 0; r < 16; ++r) {
            const double dv = y.data()[static_cast<size_t>(r * 5 + c)] - mu;
            ss += dv * dv;
        }
        CHECK(std::fabs(mu) < 1e-5);
        CHECK(std::fabs(ss / 16.0 - 1.0) < 1e-4);
    }
}

TEST_CASE("batchnorm: eval with unit running stats is identity") {
    Rng rng(68);
    BatchNorm1d<float> bn(4);
    Tensor x = Tensor::randn({3, 4}, rng);
    Tensor y = bn.forward(x, false);
    for (size_t i = 0; i < x.data().size(); ++i)
        CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-4));
}

TEST_CASE("batchnorm: running stats follow the hand EMA after two batches") {
    Rng rng(69);
    BatchNorm1d<float> bn(2);
    Tensor b1 = Tensor::from_data({2, 2}, {1, 10, 3, 14});  // col means {2,12}, var {1,4}
    Tensor b2 = Tensor::from_data({2, 2}, {5, 0, 7, 2});    // col means {6,1}, var {1,1}
    bn.forward(b1, true);
    bn.forward(b2, true);
    // EMA with momentum .1 from (0,1): mean: .9*(.9*0+.1*2)+.1*6, var: .9*(.9*1+.1*1)+.1*1
    CHECK(bn.running_mean[0] == doctest::Approx(0.9 * 0.2 + 0.6).epsilon(1e-5));
    CHECK(bn.running_mean[1] == doctest::Approx(0.9 * 1.2 + 0.1).epsilon(1e-5));
    CHECK(bn.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-5));
    CHECK(bn.running_var[1] == doctest::Approx(0.9 * (0.9 + 0.4) + 0.1).epsilon(1e-5));
}

TEST_CASE("batchnorm: B=1 train is a contract error") {
    BatchNorm1d<float> bn(3);
    Tensor x = Tensor::zeros({1, 3});
    CHECK_THROWS_AS(bn.forward(x, true), ContractError);
}

TEST_CASE("dropout: p=0 and inactive are identity") {
    Rng rng(70);
    Tensor x = Tensor::randn({4, 4}, rng);
    Rng s1(1);
    CHECK(dropout(x, 0.0f, true, s1).data() == x.data());
    Rng s2(1);
    CHECK(dropout(x, 0.5f, false, s2).data() == x.data());
}

TEST_CASE("dropout: deterministic under the same stream") {
    Rng rng(71);
    Tensor x = Tensor::randn({8, 8}, rng);
    Rng s1(99), s2(99);
    Tensor a = dropout(x, 0.5f, true, s1);
    Tensor b = dropout(x, 0.5f, true, s2);
    CHECK(a.data() == b.data());
}

TEST_CASE("dropout: expectation matches input within 3 sigma") {
    Tensor x = Tensor::filled({1}, 1.0f);
    const float p = 0.3f;
    const int n = 10000;
    Rng stream(123);
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += dropout(x, p, true, stream).data()[0];
    const double mean = sum / n;
    // each draw is 0 or 1/(1-p); var = p/(1-p)
    const double sigma = std::sqrt(static_cast<double>(p) / (1.0 - p) / n);
    CHECK(std::fabs(mean - 1.0) < 3.0 * sigma);
}

TEST_CASE("patch embed: token counts and zero-input behavior") {
    Rng rng(72);
    PatchEmbed<float> pe(3, 16, 4, 32, rng);
    CHECK(pe.n_patches() == 16);
    Tensor x = Tensor::zeros({2, 3, 16, 16});
    Tensor tok = pe.forward(x);
    CHECK(tok.shape() == Shape{2, 16, 32});
    // zero input: tokens are position embedding plus projection bias
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t t = 0; t < 16; ++t)
            for (int64_t c = 0; c < 32; ++c)
                CHECK(tok.data()[static_cast<size_t>((b * 16 + t) * 32 + c)] ==
                      doctest::Approx(pe.pos.data()[static_cast<size_t>(t * 32 + c)] +
                                      pe.proj.b.data()[static_cast<size_t>(c)]));

    PatchEmbed<float> whole(3, 8, 8, 16, rng);
    CHECK(whole.n_patches() == 1);
    CHECK_THROWS_AS(PatchEmbed<float>(3, 16, 5, 32, rng), ConfigError);
}

TEST_CASE("patchify and unpatchify invert each other") {
    Rng rng(73);
    Tensor x = Tensor::randn({2, 3, 8, 8}, rng);
    Tensor tok = patchify(x, 4);
    CHECK(tok.shape() == Shape{2, 4, 48});
    Tensor back = unpatchify(tok, 3, 8, 4);
    CHECK(back.data() == x.data());
}

TEST_CASE("every layer grad-checks on small shapes") {
    Rng rng(74);
    // double engine for tight finite-difference tolerances
    Linear<double> lin(4, 3, rng);
    Tensor64 x0 = Tensor64::randn({2, 4}, rng);
    CHECK(grad_check<double>(
              [&](const Tensor64& x) { return sum(lin.forward(x)); }, x0, 1e-6, 1e-6)
              .pass);
    CHECK(grad_check<double>(
              [&](const Tensor64& w) {
                  return sum(add(matmul(x0, w), lin.b));
              },
              lin.w, 1e-6, 1e-6)
              .pass);

    LayerNorm<double> ln(6);
    Tensor64 xl = Tensor64::randn({3, 6}, rng);
    CHECK(grad_check<double>(
              [&](const Tensor64& x) { return sum(mul(ln.forward(x), x)); }, xl, 1e-6, 1e-6)
              .pass);

    MultiHeadAttention<double> mha(8, 2, rng);
    Tensor64 xa = Tensor64::randn({2, 3, 8}, rng);
    CHECK(grad_check<double>(
              [&](const Tensor64& x) { return sum(mul(mha.forward(x), x)); }, xa, 1e-6, 1e-5)
              .pass);

    TransformerBlock<double> blk(8, 2, 2, rng);
    CHECK(grad_check<double>(
              [&](const Tensor64& x) { return mean(mul(blk.forward(x), x)); }, xa, 1e-6, 1e-5)
              .pass);

    // batchnorm in train mode (through batch statistics)
    BatchNorm1d<double> bn(4);
    Tensor64 xb = Tensor64::randn({5, 4}, rng);
    CHECK(grad_check<double>(
              [&](const Tensor64& x) {
                  BatchNorm1d<double> local(4);
                  return sum(mul(local.forward(x, true), x));
              },
              xb, 1e-6, 1e-5)
              .pass);

    PatchEmbed<double> pe(2, 4, 2, 8, rng);
    Tensor64 xp = Tensor64::randn({2, 2, 4, 4}, rng);
    CHECK(grad_check<double>(
              [&](const Tensor64& x) { return sum(mul(pe.forward(x), pe.forward(x))); }, xp,
              1e-6, 1e-5)
              .pass);

    PReLU<double> pr(0.25);
    CHECK(grad_check<double>(
              [&](const Tensor64& x) { return sum(pr.forward(x)); }, xl, 1e-6, 1e-6)
              .pass);
}

TEST_CASE("parameter counts: 55 for a 10->5 linear; ViT encoder near the 4.75M anchor") {
    Rng rng(75);
    Linear<float> lin(10, 5, rng);
    ParamList<float> pl;
    lin.collect("lin", pl);
    CHECK(count_params(pl) == 55);

    // 6-block, D=256, heads 8, mlp ratio 4, patch 4, 24 bands
    ParamList<float> enc;
    PatchEmbed<float> pe(24, 16, 4, 256, rng);
    pe.collect("embed", enc);
    std::vector<TransformerBlock<float>> blocks;
    for (int i = 0; i < 6; ++i) blocks.emplace_back(256, 8, 4, rng);
    for (int i = 0; i < 6; ++i) blocks[static_cast<size_t>(i)].collect("b" + std::to_string(i), enc);
    const int64_t n = count_params(enc);
    // per block: 2*512 (ln) + 4*(256*256+256) (attn) + 256*1024+1024 + 1024*256+256
    const int64_t per_block = 2 * 512 + 4 * (256 * 256 + 256) + (256 * 1024 + 1024) +
                              (1024 * 256 + 256);
    CHECK(n == 6 * per_block + (4 * 4 * 24 * 256 + 256));
    CHECK(std::fabs(static_cast<double>(n) - 4.75e6) / 4.75e6 < 0.15);

    // counts do not depend on batch size or content (only on construction)
    ParamList<float> enc2;
    PatchEmbed<float> pe2(24, 16, 4, 256, rng);
    pe2.collect("embed", enc2);
    for (int i = 0; i < 6; ++i) {
        TransformerBlock<float> b(256, 8, 4, rng);
        b.collect("b" + std::to_string(i), enc2);
    }
    CHECK(count_params(enc2) == n);
}

TEST_CASE("adam converges on a quadratic") {
    Rng rng(76);
    Tensor w = Tensor::randn({4}, rng, 2.0f, true);
    ParamList<float> params = {{"w", w}};
    Adam<float> opt(params, 0.1f);
    for (int step = 0; step < 300; ++step) {
        opt.zero_grad();
        Tensor target = Tensor::from_data({4}, {1, -2, 3, 0.5f});
        Tensor diff = sub(w, target);
        sum(mul(diff, diff)).backward();
        opt.step();
    }
    CHECK(w.data()[0] == doctest::Approx(1.0f).epsilon(1e-2));
    CHECK(w.data()[1] == doctest::Approx(-2.0f).epsilon(1e-2));
}

TEST_CASE("checkpoint round trip, arch mismatch, corruption") {
    Rng rng(77);
    Linear<float> lin(6, 4, rng);
    BatchNorm1d<float> bn(4);
    bn.running_mean[2] = 0.75f;
    ParamList<float> params;
    lin.collect("lin", params);
    bn.collect("bn", params);
    std::vector<StateRef<float>> state;
    bn.collect_state("bn", state);

    const std::string path = tmp_path("model.ckpt");
    save_checkpoint(path, "clf", R"({"in":6,"out":4})", params, state);

    Linear<float> lin2(6, 4, rng);
    BatchNorm1d<float> bn2(4);
    ParamList<float> params2;
    lin2.collect("lin", params2);
    bn2.collect("bn", params2);
    std::vector<StateRef<float>> state2;
    bn2.collect_state("bn", state2);
    load_checkpoint(path, "clf", R"({"in":6,"out":4})", params2, state2);
    CHECK(lin2.w.data() == lin.w.data());
    CHECK(lin2.b.data() == lin.b.data());
    CHECK(bn2.running_mean[2] == 0.75f);

    CHECK_THROWS_AS(load_checkpoint(path, "mae", R"({"in":6,"out":4})", params2, state2),
                    ConfigError);
    CHECK_THROWS_AS(load_checkpoint(path, "clf", R"({"in":7,"out":4})", params2, state2),
                    ConfigError);

    // flip one byte inside a tensor blob
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(0, std::ios::end);
        f.seekp(static_cast<std::streamoff>(f.tellg()) - 10);
        char junk = 0x77;
        f.write(&junk, 1);
    }
    CHECK_THROWS_AS(load_checkpoint(path, "clf", R"({"in":6,"out":4})", params2, state2),
                    DataError);
    std::remove(path.c_str());
}

TEST_CASE("params fingerprint is order-stable and sensitive") {
    Rng rng(78);
    Linear<float> lin(3, 3, rng);
    ParamList<float> p;
    lin.collect("lin", p);
    const uint64_t h1 = params_fingerprint(p);
    CHECK(h1 == params_fingerprint(p));
    lin.w.data()[0] += 1.0f;
    CHECK(h1 != params_fingerprint(p));
}

TEST_CASE("cosine schedule endpoints") {
    CHECK(nn::cosine_lr(1.0f, 0, 100) == doctest::Approx(1.0f));
    CHECK(nn::cosine_lr(1.0f, 99, 100) == doctest::Approx(0.0f).epsilon(1e-6));
    CHECK(nn::cosine_lr(2.0f, 50, 101) == doctest::Approx(1.0f));
}

}  // TEST_SUITE
