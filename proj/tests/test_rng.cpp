#include "doctest.h"
#include "prospectr/rng.hpp"

#include <cmath>
#include <map>
#include <vector>

using namespace prospectr;

TEST_SUITE("rng") {

TEST_CASE("same seed, same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    CHECK(same == 0);
}

TEST_CASE("split is pure and independent") {
    Rng root(7);
    Rng c1 = root.split(0);
    Rng c2 = root.split(1);
    Rng c1_again = root.split(0);
    CHECK(c1.next_u64() == c1_again.next_u64());
    CHECK(c1.next_u64() != c2.next_u64());
    // splitting does not advance the parent
    Rng fresh(7);
    CHECK(root.next_u64() == fresh.next_u64());
}

TEST_CASE("uniform range and rough moments") {
    Rng r(3);
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::fabs(mean - 0.5) < 0.005);
    CHECK(std::fabs(var - 1.0 / 12.0) < 0.005);
}

TEST_CASE("normal rough moments") {
    Rng r(4);
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sum += z;
        sum2 += z * z;
    }
    CHECK(std::fabs(sum / n) < 0.02);
    CHECK(std::fabs(sum2 / n - 1.0) < 0.03);
}

TEST_CASE("below covers range without bias holes") {
    Rng r(5);
    std::map<uint64_t, int> counts;
    for (int i = 0; i < 7000; ++i) ++counts[r.below(7)];
    CHECK(counts.size() == 7);
    for (const auto& [k, v] : counts) {
        CHECK(k < 7);
        CHECK(v > 700);
    }
}

TEST_CASE("sample_without_replacement distinct") {
    Rng r(6);
    auto s = r.sample_without_replacement(50, 20);
    CHECK(s.size() == 20);
    std::vector<bool> seen(50, false);
    for (int64_t v : s) {
        CHECK(v >= 0);
        CHECK(v < 50);
        CHECK(!seen[static_cast<size_t>(v)]);
        seen[static_cast<size_t>(v)] = true;
    }
}

}  // TEST_SUITE
