#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sws/sharing.hpp"

namespace sws {

enum class Region { kFront, kMid, kLast };

/// Priority over the front / mid / last thirds of the stage list.
struct InitOrder {
    std::array<Region, 3> priority{Region::kFront, Region::kMid, Region::kLast};

    /// "front-mid-last", "front-last-mid", ... (case-insensitive)
    static InitOrder parse(const std::string& text);
    std::string to_string() const;
    void validate() const;

    bool operator==(const InitOrder&) const = default;
};

enum class Strategy { kCyclicContiguous, kCyclicRoundRobin, kRandom };

Strategy parse_strategy(const std::string& text);
std::string to_string(Strategy strategy);

struct DescendantSpec {
    int depth = 1;
    Strategy strategy = Strategy::kCyclicContiguous;
    InitOrder order;
    std::uint64_t seed = 0;
    int classes = 0;  // 0 keeps the pack's class count
    bool allow_head_reinit = true;

    void validate(int stages) const;
};

/// Stage indices ordered by the init order's group priority; ascending
/// within a group. Groups: front = first ceil(M/3), last = last ceil(M/3)
/// of what remains, mid = the rest.
std::vector<std::size_t> stage_priority(int stages, const InitOrder& order);

/// Layer count per stage for a descendant of the given depth. Every stage
/// starts with one layer; each further layer goes to the stage with the
/// largest L_m / (count_m + 1/2), ties broken by stage_priority. The result
/// is exactly plan.sizes() at depth plan.depth(), and growing the depth by
/// one adds one layer to exactly one stage.
std::vector<int> stage_partition(int depth, const StagePlan& plan, const InitOrder& order);

/// 0-based learngene index for every descendant position.
std::vector<std::size_t> assignment(const StagePlan& plan, const DescendantSpec& spec);

/// (position, learngene index), both 1-based.
std::vector<std::pair<int, int>> assignment_report(const LearngenePack& pack, const DescendantSpec& spec);
std::string assignment_csv(const std::vector<std::pair<int, int>>& report);

/// Untied descendant: every position owns a copy of its assigned learngene
/// layer; shared components are copied; the head is copied or, when the
/// class count changes, re-initialized from spec.seed.
Model init_descendant(const LearngenePack& pack, const DescendantSpec& spec);

/// Simple-LG baseline: the layers of an ordinary (untied) depth-M model act
/// as M single-layer stages and go through the same expansion.
Model simple_lg_expand(const Model& vanilla, const DescendantSpec& spec);

/// Pseudo learngene pack made from an untied model, one stage per layer.
LearngenePack pack_from_untied(const Model& model);

}  // namespace sws
