#include "scatterflow/grad.hpp"
#include "scatterflow/rng.hpp"

#include <cmath>
#include <functional>

#include "doctest.h"

using namespace sf::grad;

namespace {

Array random_array(int size, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    sf::NormalRng rng(seed);
    Array a(size);
    for (int i = 0; i < size; ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

// Central finite differences on every coordinate of every leaf against the
// tape gradient. `build` mounts the leaves and returns a scalar.
void check_gradient(const std::function<Value(Tape&, std::vector<Value>&)>& build,
                    const std::vector<std::pair<Array, Shape>>& leaves, double tol = 1e-6,
                    double h = 1e-6) {
    Tape t;
    std::vector<Value> vs;
    for (const auto& [data, shape] : leaves) vs.push_back(t.leaf(data, shape, true));
    Value out = build(t, vs);
    REQUIRE(out.data().size() == 1);
    auto grads = t.backward(out);

    auto eval = [&](int leaf, int coord, double delta) {
        Tape t2;
        std::vector<Value> vs2;
        for (std::size_t l = 0; l < leaves.size(); ++l) {
            Array d = leaves[l].first;
            if (static_cast<int>(l) == leaf) d[coord] += delta;
            vs2.push_back(t2.leaf(d, leaves[l].second, true));
        }
        return build(t2, vs2).scalar();
    };
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        const Array& g = grads[vs[l].idx];
        REQUIRE(g.size() == leaves[l].first.size());
        for (int i = 0; i < leaves[l].first.size(); ++i) {
            double fd = (eval(l, i, h) - eval(l, i, -h)) / (2.0 * h);
            double scale = std::max({std::abs(fd), std::abs(g[i]), 1.0});
            CHECK(std::abs(g[i] - fd) / scale < tol);
        }
    }
}

}  // namespace

TEST_CASE("elementwise primitives match finite differences") {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        Array a = random_array(6, 100 + trial), b = random_array(6, 200 + trial, 0.5, 2.0);
        check_gradient(
            [](Tape&, std::vector<Value>& v) {
                Value s = add(mul(v[0], v[1]), sub(v[0], div(v[0], v[1])));
                s = add(s, scale(neg(v[0]), 0.7));
                s = add(s, offset(tanh(v[0]), 0.1));
                s = add(s, exp(scale(v[0], 0.3)));
                s = add(s, log(v[1]));
                s = add(s, leaky_relu(v[0], 0.2));
                return add(sum(s), mean(mul(s, s)));
            },
            {{a, {6}}, {b, {6}}});
    }
}

TEST_CASE("matrix primitives match finite differences") {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        Array a = random_array(12, 300 + trial);
        Array b = random_array(12, 400 + trial);
        Array sq = random_array(16, 500 + trial) + Array::LinSpaced(16, 0.0, 15.0) / 4.0;
        // keep the square factor well conditioned
        for (int i = 0; i < 4; ++i) sq[i * 4 + i] += 3.0;
        check_gradient(
            [](Tape&, std::vector<Value>& v) {
                Value m = matmul(v[0], v[1]);                       // (3,4)x(4,3)
                Value w = matmul(transpose(v[0]), transpose(v[1]));  // (4,3)x(3,4)
                Value inv = matinv(v[2]);
                Value ld = logdet_abs(v[2]);
                return add(add(sum(m), sum(mul(w, inv))), ld);
            },
            {{a, {3, 4}}, {b, {4, 3}}, {sq, {4, 4}}}, 1e-6, 1e-5);
    }
}

TEST_CASE("image primitives match finite differences") {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        Array x = random_array(2 * 4 * 4 * 4, 600 + trial);   // (2,4,4,4)
        Array w = random_array(4 * 2 * 3 * 3, 700 + trial);   // (co=2, ci=4, 3, 3)
        Array bias = random_array(2, 800 + trial);
        Array w11 = random_array(4 * 4, 900 + trial);
        Array aff = random_array(4, 1000 + trial, 0.5, 1.5);
        Array sh = random_array(4, 1100 + trial);
        check_gradient(
            [](Tape&, std::vector<Value>& v) {
                Value y = conv2d(v[0], v[1], v[2]);
                Value z = conv1x1(v[0], v[3]);
                Value cs = channel_scale_shift(v[0], v[4], v[5]);
                Value sl = concat_channels(slice_channels(v[0], 0, 2),
                                           slice_channels(v[0], 2, 4));
                Value dts = depth_to_space(v[0]);
                Value std = space_to_depth(dts);
                Value r = reshape(mul(sl, std), {2, 64});
                return add(add(sum(y), sum(mul(z, cs))), sum(mul(r, r)));
            },
            {{x, {2, 4, 4, 4}},
             {w, {2, 4, 3, 3}},
             {bias, {2}},
             {w11, {4, 4}},
             {aff, {4}},
             {sh, {4}}});
    }
}

TEST_CASE("serial and parallel convolution kernels agree") {
    sf::NormalRng rng(42);
    const int bs = 3, ci = 5, co = 4, h = 9, w = 7;
    Array x = random_array(bs * ci * h * w, 1);
    Array wt = random_array(co * ci * 3 * 3, 2);
    Array b = random_array(co, 3);
    Array out_s, out_p;
    conv2d_forward_serial(x, wt, b, bs, ci, co, h, w, out_s);
    conv2d_forward_omp(x, wt, b, bs, ci, co, h, w, out_p);
    REQUIRE(out_s.size() == out_p.size());
    // summation order differs (scalar loop vs gemm), so exact zero is too strict
    CHECK((out_s - out_p).abs().maxCoeff() < 1e-12);
    (void)rng;
}

TEST_CASE("custom scalar primitives splice external gradients into the tape") {
    Array x = random_array(5, 77);
    Tape t;
    Value v = t.leaf(x, {5}, true);
    Value doubled = scale(v, 2.0);
    double val = doubled.data().square().sum();
    Array g = 2.0 * doubled.data();
    Value out = custom_scalar(doubled, val, g, "sqsum");
    auto grads = t.backward(out);
    CHECK((grads[v.idx] - 8.0 * x).abs().maxCoeff() < 1e-12);
}

TEST_CASE("adam takes bias-corrected steps and converges on a quadratic") {
    Array x = random_array(4, 5, 2.0, 3.0);
    AdamState state;
    std::vector<Array*> params{&x};
    // first step magnitude is the learning rate regardless of gradient scale
    Array g0 = 100.0 * Array::Ones(4);
    Array before = x;
    adam_step(params, {g0}, state, 0.1);
    CHECK((before - x - 0.1).abs().maxCoeff() < 1e-9);
    for (int i = 0; i < 2000; ++i) adam_step(params, {2.0 * x}, state, 0.05);
    CHECK(x.abs().maxCoeff() < 1e-3);
}

TEST_CASE("inactive branches never allocate gradients") {
    Tape t;
    Value a = t.leaf(Array::Ones(3), {3}, true);
    Value c = t.leaf(Array::Ones(3), {3}, false);
    Value dead = mul(c, c);
    Value out = sum(add(a, dead));
    auto grads = t.backward(out);
    CHECK(grads[a.idx].size() == 3);
    CHECK(grads[dead.idx].size() == 0);
}
