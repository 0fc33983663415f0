#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "nomos/rng.hpp"

using nomos::Rng;

// Reference values from an independent Python xoshiro256** / SplitMix64.
TEST_CASE("xoshiro256** stream matches reference") {
    Rng a(0);
    CHECK(a.next() == 0x99ec5f36cb75f2b4ULL);
    CHECK(a.next() == 0xbf6e1f784956452aULL);
    CHECK(a.next() == 0x1a5f849d4933e6e0ULL);
    Rng b(42);
    CHECK(b.next() == 0x15780b2e0c2ec716ULL);
    CHECK(b.next() == 0x6104d9866d113a7eULL);
}

TEST_CASE("derived streams match reference and are independent of siblings") {
    Rng d = Rng::derive(7, 1, 2, 3);
    CHECK(d.next() == 0xff2507068d369f2fULL);
    CHECK(d.next() == 0x48e20c6ff01c0be1ULL);

    Rng sibling = Rng::derive(7, 1, 2, 4);
    for (int i = 0; i < 100; ++i) sibling.next();
    CHECK(Rng::derive(7, 1, 2, 3).next() == 0xff2507068d369f2fULL);
    CHECK(Rng::derive(7, 1, 2, 3).next() != Rng::derive(7, 1, 3, 2).next());
}

TEST_CASE("uniform double matches reference") {
    Rng r(5);
    CHECK(r.uniform() == 0.2884112281702357);
    CHECK(r.uniform() == 0.6020823331320106);
}

TEST_CASE("below stays in range and is roughly uniform") {
    Rng r(11);
    std::vector<int> hist(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto x = r.below(7);
        REQUIRE(x < 7);
        ++hist[x];
    }
    for (int h : hist) CHECK(std::abs(h - 10000) < 500);
    CHECK(r.below(0) == 0);
    CHECK(r.below(1) == 0);
}

TEST_CASE("normal has zero mean and unit variance") {
    Rng r(3);
    double sum = 0, sq = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(sq / n - mean * mean - 1.0) < 0.02);
}

TEST_CASE("shuffle is a seeded permutation") {
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    auto a = v, b = v;
    Rng r1(9), r2(9);
    nomos::shuffle(a, r1);
    nomos::shuffle(b, r2);
    CHECK(a == b);
    CHECK(a != v);
    std::sort(a.begin(), a.end());
    CHECK(a == v);
}
