#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <optional>
#include <set>

#include "helpers.hpp"
#include "sws/error.hpp"
#include "sws/expand.hpp"

using namespace sws;
using testing::random_tensor;
using testing::tiny_config;

namespace {

// Literal floor-and-leftover rule: base_m = max(1, floor(L_ds * L_m / L)),
// leftover one each in group-priority order. Returns nothing when the
// minimum-one bumps overshoot or the leftover exceeds M.
std::optional<std::vector<int>> floor_rule(int depth, const std::vector<int>& sizes, const InitOrder& order) {
    const int m = int(sizes.size());
    const int total = std::accumulate(sizes.begin(), sizes.end(), 0);
    std::vector<int> out(m);
    for (int i = 0; i < m; ++i) out[i] = std::max(1, depth * sizes[i] / total);
    int left = depth - std::accumulate(out.begin(), out.end(), 0);
    if (left < 0 || left > m) return std::nullopt;
    // Independent restatement of the grouping.
    const int front = (m + 2) / 3;
    const int last = std::min((m + 2) / 3, m - front);
    std::vector<int> group(m);
    for (int i = 0; i < m; ++i) group[i] = i < front ? 0 : (i >= m - last ? 2 : 1);
    std::vector<int> seq;
    for (Region r : order.priority) {
        const int g = r == Region::kFront ? 0 : (r == Region::kMid ? 1 : 2);
        for (int i = 0; i < m; ++i)
            if (group[i] == g) seq.push_back(i);
    }
    for (int k = 0; k < left; ++k) ++out[seq[k]];
    return out;
}

LearngenePack make_pack(const std::vector<int>& sizes, std::uint64_t seed) {
    int depth = std::accumulate(sizes.begin(), sizes.end(), 0);
    const auto plan = custom_plan(sizes);
    const auto aux = build_aux<float>(tiny_config(depth), plan, seed);
    return extract_learngene(aux, plan, {});
}

}  // namespace

TEST_CASE("init orders parse") {
    CHECK(InitOrder::parse("front-mid-last") == InitOrder{});
    CHECK(InitOrder::parse("Last-Front-Mid").to_string() == "last-front-mid");
    CHECK_THROWS_AS(InitOrder::parse("front-front-last"), ValidationError);
    CHECK_THROWS_AS(InitOrder::parse("front-mid"), ValidationError);
    CHECK(parse_strategy("cyclic-contiguous") == Strategy::kCyclicContiguous);
    CHECK(parse_strategy("cyclic-roundrobin") == Strategy::kCyclicRoundRobin);
    CHECK(parse_strategy("random") == Strategy::kRandom);
    CHECK_THROWS_AS(parse_strategy("zigzag"), ValidationError);
}

TEST_CASE("stage priority groups") {
    CHECK(stage_priority(5, InitOrder{}) == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK(stage_priority(5, InitOrder::parse("front-last-mid")) == std::vector<std::size_t>{0, 1, 3, 4, 2});
    CHECK(stage_priority(5, InitOrder::parse("mid-last-front")) == std::vector<std::size_t>{2, 3, 4, 0, 1});
    CHECK(stage_priority(1, InitOrder::parse("last-mid-front")) == std::vector<std::size_t>{0});
    CHECK(stage_priority(4, InitOrder::parse("last-mid-front")) == std::vector<std::size_t>{2, 3, 0, 1});
}

TEST_CASE("stage_partition examples") {
    const auto plan = balanced_plan(16, 5);
    CHECK(stage_partition(16, plan, {}) == std::vector<int>{3, 3, 4, 3, 3});
    CHECK(stage_partition(12, plan, {}) == std::vector<int>{3, 2, 3, 2, 2});
    CHECK(stage_partition(5, plan, {}) == std::vector<int>{1, 1, 1, 1, 1});
    CHECK_THROWS_AS(stage_partition(4, plan, {}), ValidationError);
}

TEST_CASE("stage_partition agrees with the floor rule on uniform plans and the worked example") {
    const auto oracle = floor_rule(12, {3, 3, 4, 3, 3}, {});
    REQUIRE(oracle);
    CHECK(*oracle == std::vector<int>{3, 2, 3, 2, 2});
    CHECK(stage_partition(12, balanced_plan(16, 5), {}) == *oracle);

    const std::vector<std::string> orders{"front-mid-last", "front-last-mid", "mid-front-last",
                                          "mid-last-front", "last-front-mid", "last-mid-front"};
    for (int m = 1; m <= 7; ++m) {
        for (int per = 1; per <= 4; ++per) {
            const std::vector<int> sizes(m, per);
            for (const auto& o : orders) {
                const auto order = InitOrder::parse(o);
                for (int depth = m; depth <= m * per + 3 * m; ++depth) {
                    const auto expected = floor_rule(depth, sizes, order);
                    if (!expected) continue;
                    CHECK(stage_partition(depth, custom_plan(sizes), order) == *expected);
                }
            }
        }
    }
}

TEST_CASE("stage_partition contract and monotonicity over many plans") {
    SplitMix64 rng(99);
    const std::vector<std::string> orders{"front-mid-last", "last-mid-front", "mid-front-last"};
    for (int trial = 0; trial < 200; ++trial) {
        const int m = 1 + int(rng.below(7));
        std::vector<int> sizes(m);
        for (auto& s : sizes) s = 1 + int(rng.below(6));
        const auto plan = custom_plan(sizes);
        const auto order = InitOrder::parse(orders[trial % orders.size()]);
        CHECK(stage_partition(plan.depth(), plan, order) == sizes);
        std::vector<int> prev;
        for (int depth = m; depth <= 3 * plan.depth(); ++depth) {
            const auto cur = stage_partition(depth, plan, order);
            CHECK(std::accumulate(cur.begin(), cur.end(), 0) == depth);
            CHECK(*std::min_element(cur.begin(), cur.end()) >= 1);
            if (!prev.empty()) {
                int changed = 0, delta = 0;
                for (int i = 0; i < m; ++i) {
                    if (cur[i] != prev[i]) {
                        ++changed;
                        delta = cur[i] - prev[i];
                    }
                }
                CHECK(changed == 1);
                CHECK(delta == 1);
            }
            prev = cur;
        }
    }
}

TEST_CASE("the floor rule alone is not monotone, which the partition avoids") {
    const std::vector<int> sizes{3, 3, 4, 3, 3};
    const auto a = floor_rule(10, sizes, {});
    const auto b = floor_rule(11, sizes, {});
    REQUIRE(a);
    REQUIRE(b);
    int changed = 0;
    for (int i = 0; i < 5; ++i) changed += (*a)[i] != (*b)[i];
    CHECK(changed > 1);
}

TEST_CASE("assignments") {
    const auto plan = balanced_plan(16, 5);
    DescendantSpec spec;
    spec.depth = 16;
    CHECK(assignment(plan, spec) ==
          std::vector<std::size_t>{0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 4, 4, 4});

    spec.strategy = Strategy::kCyclicRoundRobin;
    spec.depth = 5;
    CHECK(assignment(balanced_plan(3, 3), spec) == std::vector<std::size_t>{0, 1, 2, 0, 1});
    spec.depth = 2;
    CHECK(assignment(balanced_plan(3, 3), spec) == std::vector<std::size_t>{0, 1});

    spec.strategy = Strategy::kRandom;
    spec.depth = 12;
    spec.seed = 5;
    const auto r1 = assignment(plan, spec);
    CHECK(r1 == assignment(plan, spec));
    spec.seed = 6;
    CHECK(r1 != assignment(plan, spec));
    for (auto v : r1) CHECK(v < 5);

    spec.strategy = Strategy::kCyclicContiguous;
    spec.depth = 3;
    CHECK_THROWS_AS(assignment(plan, spec), ValidationError);
    spec.depth = 0;
    spec.strategy = Strategy::kRandom;
    CHECK_THROWS_AS(assignment(plan, spec), ValidationError);
}

TEST_CASE("assignment report and CSV") {
    const auto pack = make_pack({3, 3, 4, 3, 3}, 1);
    DescendantSpec spec;
    spec.depth = 16;
    const auto report = assignment_report(pack, spec);
    std::vector<int> genes;
    for (auto [pos, gene] : report) genes.push_back(gene);
    CHECK(genes == std::vector<int>{1, 1, 1, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 5, 5, 5});
    CHECK(report.front().first == 1);
    CHECK(report.back().first == 16);
    const auto csv = assignment_csv(report);
    CHECK(csv.rfind("position,learngene_index\n1,1\n2,1\n", 0) == 0);
}

TEST_CASE("identity expansion reproduces the tied model bitwise") {
    const std::vector<int> sizes{2, 3, 1};
    const auto plan = custom_plan(sizes);
    const auto aux = build_aux<float>(tiny_config(6), plan, 2);
    const auto pack = extract_learngene(aux, plan, {});
    DescendantSpec spec;
    spec.depth = 6;
    const auto des = init_descendant(pack, spec);
    CHECK(des.layers.size() == 6);
    CHECK_FALSE(des.is_tied());
    for (std::uint64_t b = 0; b < 5; ++b) {
        auto x = random_tensor<float>({3, 1, 8, 8}, 30 + b, 0, 1, false);
        CHECK(testing::bit_equal(forward_logits(aux, x), forward_logits(des, x)));
    }
}

TEST_CASE("the descendant realizes the reported mapping tensor by tensor") {
    const auto pack = make_pack({2, 2, 2}, 3);
    for (auto strategy : {Strategy::kCyclicContiguous, Strategy::kCyclicRoundRobin, Strategy::kRandom}) {
        DescendantSpec spec;
        spec.depth = 8;
        spec.strategy = strategy;
        spec.seed = 17;
        spec.order = InitOrder::parse("last-mid-front");
        const auto des = init_descendant(pack, spec);
        const auto report = assignment_report(pack, spec);
        REQUIRE(report.size() == 8);
        for (auto [pos, gene] : report) {
            std::vector<Tensor> got, want;
            des.at_position(pos - 1).for_each([&](const char*, const Tensor& t) { got.push_back(t); });
            pack.layer_sets[gene - 1].for_each([&](const char*, const Tensor& t) { want.push_back(t); });
            for (std::size_t k = 0; k < got.size(); ++k) {
                CHECK(testing::bit_equal(got[k], want[k]));
                CHECK_FALSE(got[k].shares_storage(want[k]));
            }
        }
        CHECK(testing::bit_equal(des.pos_embed, pack.pos_embed));
        CHECK(testing::bit_equal(des.norm_gamma, pack.norm_gamma));
        CHECK(testing::bit_equal(des.head_weight, pack.head_weight));
    }
}

TEST_CASE("descendant positions are independent") {
    const auto pack = make_pack({2, 2}, 4);
    DescendantSpec spec;
    spec.depth = 6;
    auto des = init_descendant(pack, spec);
    const auto snapshot = clone_model(des);
    for (auto& v : des.at_position(0).qkv_weight.data()) v += 1.0f;
    for (std::size_t pos = 1; pos < 6; ++pos)
        CHECK(testing::bit_equal(des.at_position(pos).qkv_weight, snapshot.at_position(pos).qkv_weight));
    CHECK(des.at_position(1).qkv_weight.data()[0] == pack.layer_sets[0].qkv_weight.data()[0]);
}

TEST_CASE("strategies agree when all learngene layers are equal") {
    auto pack = make_pack({1, 2, 2}, 5);
    for (std::size_t m = 1; m < pack.layer_sets.size(); ++m) pack.layer_sets[m] = pack.layer_sets[0].clone();
    auto x = random_tensor<float>({2, 1, 8, 8}, 6, 0, 1, false);
    std::vector<Tensor> outs;
    for (auto strategy : {Strategy::kCyclicContiguous, Strategy::kCyclicRoundRobin, Strategy::kRandom}) {
        DescendantSpec spec;
        spec.depth = 7;
        spec.strategy = strategy;
        spec.seed = 9;
        outs.push_back(forward_logits(init_descendant(pack, spec), x));
    }
    CHECK(testing::bit_equal(outs[0], outs[1]));
    CHECK(testing::bit_equal(outs[0], outs[2]));
}

TEST_CASE("class-count change re-initializes only the head") {
    const auto pack = make_pack({2, 2}, 6);
    DescendantSpec spec;
    spec.depth = 4;
    spec.classes = 7;
    spec.seed = 11;
    const auto des = init_descendant(pack, spec);
    CHECK(des.config.classes == 7);
    CHECK(des.head_weight.shape() == Shape{16, 7});
    for (float v : des.head_bias.data()) CHECK(v == 0.0f);
    CHECK(testing::bit_equal(des.patch_weight, pack.patch_weight));
    const auto again = init_descendant(pack, spec);
    CHECK(testing::bit_equal(des.head_weight, again.head_weight));
    spec.allow_head_reinit = false;
    CHECK_THROWS_AS(init_descendant(pack, spec), ValidationError);
}

TEST_CASE("simple-LG expansion treats each vanilla layer as a stage") {
    const auto vanilla = build_model<float>(tiny_config(3), 7);
    DescendantSpec spec;
    spec.depth = 3;
    const auto same = simple_lg_expand(vanilla, spec);
    auto x = random_tensor<float>({2, 1, 8, 8}, 8, 0, 1, false);
    CHECK(testing::bit_equal(forward_logits(vanilla, x), forward_logits(same, x)));

    spec.depth = 7;
    const auto grown = simple_lg_expand(vanilla, spec);
    CHECK(grown.depth() == 7);
    CHECK_FALSE(grown.is_tied());
    CHECK_NOTHROW(grown.validate());
    CHECK(pack_from_untied(vanilla).plan == balanced_plan(3, 3));

    const auto aux = build_aux<float>(tiny_config(4), balanced_plan(4, 2), 1);
    CHECK_THROWS_AS(simple_lg_expand(aux, spec), ValidationError);
}
