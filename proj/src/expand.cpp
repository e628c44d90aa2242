#include "sws/expand.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "sws/error.hpp"
#include "sws/rng.hpp"

namespace sws {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

const char* region_name(Region r) {
    switch (r) {
        case Region::kFront: return "front";
        case Region::kMid: return "mid";
        case Region::kLast: return "last";
    }
    return "?";
}

}  // namespace

InitOrder InitOrder::parse(const std::string& text) {
    InitOrder order;
    std::stringstream ss(lower(text));
    std::string item;
    std::size_t n = 0;
    while (std::getline(ss, item, '-')) {
        if (n == 3) throw ValidationError("init order '" + text + "' has more than three groups");
        if (item == "front") order.priority[n] = Region::kFront;
        else if (item == "mid" || item == "middle") order.priority[n] = Region::kMid;
        else if (item == "last") order.priority[n] = Region::kLast;
        else throw ValidationError("init order '" + text + "': unknown group '" + item + "'");
        ++n;
    }
    if (n != 3) throw ValidationError("init order '" + text + "' must list front, mid and last");
    order.validate();
    return order;
}

std::string InitOrder::to_string() const {
    return std::string(region_name(priority[0])) + "-" + region_name(priority[1]) + "-" + region_name(priority[2]);
}

void InitOrder::validate() const {
    for (Region r : {Region::kFront, Region::kMid, Region::kLast}) {
        if (std::count(priority.begin(), priority.end(), r) != 1) {
            throw ValidationError("init order must contain front, mid and last exactly once");
        }
    }
}

Strategy parse_strategy(const std::string& text) {
    const auto t = lower(text);
    if (t == "cyclic" || t == "cyclic-contiguous") return Strategy::kCyclicContiguous;
    if (t == "cyclic-roundrobin" || t == "roundrobin" || t == "round-robin") return Strategy::kCyclicRoundRobin;
    if (t == "random") return Strategy::kRandom;
    throw ValidationError("unknown init strategy '" + text + "'");
}

std::string to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::kCyclicContiguous: return "cyclic-contiguous";
        case Strategy::kCyclicRoundRobin: return "cyclic-roundrobin";
        case Strategy::kRandom: return "random";
    }
    return "?";
}

void DescendantSpec::validate(int stages) const {
    if (depth < 1) throw ValidationError("descendant depth must be >= 1");
    if (classes < 0) throw ValidationError("descendant class count must be >= 0");
    order.validate();
    if (strategy == Strategy::kCyclicContiguous && depth < stages) {
        throw ValidationError("cyclic-contiguous initialization needs depth >= " + std::to_string(stages) +
                              " (one layer per stage), got " + std::to_string(depth));
    }
}

std::vector<std::size_t> stage_priority(int stages, const InitOrder& order) {
    order.validate();
    const auto m = static_cast<std::size_t>(stages);
    const std::size_t third = (m + 2) / 3;
    const std::size_t front = std::min(third, m);
    const std::size_t last = std::min(third, m - front);
    std::vector<std::size_t> out;
    for (Region r : order.priority) {
        std::size_t begin = 0, end = 0;
        if (r == Region::kFront) { begin = 0; end = front; }
        if (r == Region::kMid) { begin = front; end = m - last; }
        if (r == Region::kLast) { begin = m - last; end = m; }
        for (std::size_t s = begin; s < end; ++s) out.push_back(s);
    }
    return out;
}

std::vector<int> stage_partition(int depth, const StagePlan& plan, const InitOrder& order) {
    const int stages = plan.stages();
    if (depth < stages) {
        throw ValidationError("cannot spread " + std::to_string(stages) + " stages over depth " + std::to_string(depth));
    }
    const auto priority = stage_priority(stages, order);
    std::vector<std::size_t> rank(priority.size());
    for (std::size_t i = 0; i < priority.size(); ++i) rank[priority[i]] = i;

    const auto& sizes = plan.sizes();
    std::vector<int> counts(sizes.size(), 1);
    for (int placed = stages; placed < depth; ++placed) {
        std::size_t best = priority[0];
        for (std::size_t s = 0; s < sizes.size(); ++s) {
            // sizes[s] / (counts[s] + 1/2) compared exactly in integers.
            const long long lhs = static_cast<long long>(sizes[s]) * (2LL * counts[best] + 1);
            const long long rhs = static_cast<long long>(sizes[best]) * (2LL * counts[s] + 1);
            if (lhs > rhs || (lhs == rhs && rank[s] < rank[best])) best = s;
        }
        ++counts[best];
    }
    return counts;
}

std::vector<std::size_t> assignment(const StagePlan& plan, const DescendantSpec& spec) {
    const int stages = plan.stages();
    spec.validate(stages);
    const auto depth = static_cast<std::size_t>(spec.depth);
    const auto m = static_cast<std::size_t>(stages);
    std::vector<std::size_t> out;
    out.reserve(depth);
    switch (spec.strategy) {
        case Strategy::kCyclicContiguous: {
            const auto counts = stage_partition(spec.depth, plan, spec.order);
            for (std::size_t s = 0; s < counts.size(); ++s) out.insert(out.end(), static_cast<std::size_t>(counts[s]), s);
            break;
        }
        case Strategy::kCyclicRoundRobin:
            for (std::size_t i = 0; i < depth; ++i) out.push_back(i % m);
            break;
        case Strategy::kRandom: {
            SplitMix64 rng(spec.seed);
            for (std::size_t i = 0; i < depth; ++i) out.push_back(static_cast<std::size_t>(rng.below(m)));
            break;
        }
    }
    return out;
}

std::vector<std::pair<int, int>> assignment_report(const LearngenePack& pack, const DescendantSpec& spec) {
    const auto a = assignment(pack.plan, spec);
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < a.size(); ++i) out.emplace_back(static_cast<int>(i) + 1, static_cast<int>(a[i]) + 1);
    return out;
}

std::string assignment_csv(const std::vector<std::pair<int, int>>& report) {
    std::string s = "position,learngene_index\n";
    for (const auto& [pos, gene] : report) s += std::to_string(pos) + "," + std::to_string(gene) + "\n";
    return s;
}

Model init_descendant(const LearngenePack& pack, const DescendantSpec& spec) {
    pack.validate();
    const auto genes = assignment(pack.plan, spec);

    Model out;
    out.config = pack.config;
    out.config.depth = spec.depth;
    const int classes = spec.classes == 0 ? pack.config.classes : spec.classes;
    out.config.classes = classes;

    auto& src = const_cast<LearngenePack&>(pack);
    std::vector<Tensor> shared;
    src.for_each_shared([&](const char*, Tensor& t) { shared.push_back(t.clone()); });
    std::size_t i = 0;
    out.for_each_shared([&](const char*, Tensor& t) { t = shared[i++]; });

    if (classes != pack.config.classes) {
        if (!spec.allow_head_reinit) {
            throw ValidationError("descendant has " + std::to_string(classes) + " classes, learngene head has " +
                                  std::to_string(pack.config.classes) + " and re-initialization is not allowed");
        }
        SplitMix64 rng(spec.seed);
        const auto d = static_cast<std::size_t>(pack.config.width);
        const auto c = static_cast<std::size_t>(classes);
        std::vector<float> w(d * c);
        for (auto& v : w) v = static_cast<float>(rng.truncated_normal(0.02));
        out.head_weight = Tensor::from_values({d, c}, std::move(w));
        out.head_bias = Tensor::zeros({c});
    }

    for (std::size_t pos = 0; pos < genes.size(); ++pos) {
        out.layers.push_back(pack.layer_sets.at(genes[pos]).clone());
        out.layer_index.push_back(pos);
    }
    out.set_requires_grad(false);
    out.validate();
    return out;
}

LearngenePack pack_from_untied(const Model& model) {
    if (model.is_tied()) throw ValidationError("expected an untied model");
    model.validate();
    LearngenePack pack;
    pack.config = model.config;
    pack.plan = StagePlan::custom(std::vector<int>(model.depth(), 1));
    pack.provenance.note = "untied";
    for (std::size_t pos = 0; pos < model.depth(); ++pos) pack.layer_sets.push_back(model.at_position(pos).clone());
    auto& src = const_cast<Model&>(model);
    std::vector<Tensor> shared;
    src.for_each_shared([&](const char*, Tensor& t) { shared.push_back(t.clone().set_requires_grad(false)); });
    std::size_t i = 0;
    pack.for_each_shared([&](const char*, Tensor& t) { t = shared[i++]; });
    for (auto& layer : pack.layer_sets) layer.for_each([](const char*, Tensor& t) { t.set_requires_grad(false); });
    return pack;
}

Model simple_lg_expand(const Model& vanilla, const DescendantSpec& spec) {
    return init_descendant(pack_from_untied(vanilla), spec);
}

}  // namespace sws
