#include "somnoscope/sequence.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

namespace somnoscope {

std::vector<NightSequence> assemble_nights(std::span<const NightEvents> nights, std::span<const NightLabel> labels) {
    std::unordered_map<std::string, Label> by_id;
    for (const auto& l : labels) by_id.emplace(l.night_id, l.satisfaction);

    std::vector<NightSequence> out;
    std::unordered_map<std::string, bool> present;
    for (const auto& n : nights) {
        if (static_cast<Eigen::Index>(n.index_in_night.size()) != n.features.cols()) {
            throw std::invalid_argument("night " + n.night_id + ": index/feature count mismatch");
        }
        present[n.night_id] = true;
        auto it = by_id.find(n.night_id);
        if (it == by_id.end()) continue;
        if (n.features.cols() == 0) throw std::invalid_argument("night " + n.night_id + " has no events");

        std::vector<Eigen::Index> order(n.index_in_night.size());
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](auto a, auto b) { return n.index_in_night[a] < n.index_in_night[b]; });
        NightSequence seq;
        seq.night_id = n.night_id;
        seq.label = it->second;
        seq.events.resize(n.features.rows(), n.features.cols());
        for (std::size_t t = 0; t < order.size(); ++t) {
            seq.events.col(static_cast<Eigen::Index>(t)) = n.features.col(order[t]);
            seq.source_index.push_back(n.index_in_night[order[t]]);
        }
        out.push_back(std::move(seq));
    }
    for (const auto& l : labels) {
        if (!present.count(l.night_id)) throw std::invalid_argument("label for unknown night: " + l.night_id);
    }
    return out;
}

std::vector<Eigen::Index> subsample_positions(Eigen::Index length, Eigen::Index n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("subsample size must be >= 1");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(length));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    if (n >= length) return idx;
    // partial Fisher-Yates: the first n slots become a uniform n-subset
    for (Eigen::Index i = 0; i < n; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, length - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(n));
    std::sort(idx.begin(), idx.end());
    return idx;
}

NightSequence subsample(const NightSequence& night, Eigen::Index n, Rng& rng) {
    const auto pos = subsample_positions(night.length(), n, rng);
    if (static_cast<Eigen::Index>(pos.size()) == night.length()) return night;
    NightSequence out;
    out.night_id = night.night_id;
    out.label = night.label;
    out.events.resize(night.dim(), static_cast<Eigen::Index>(pos.size()));
    out.source_index.reserve(pos.size());
    for (std::size_t t = 0; t < pos.size(); ++t) {
        out.events.col(static_cast<Eigen::Index>(t)) = night.events.col(pos[t]);
        out.source_index.push_back(night.source_index.empty() ? pos[t] : night.source_index[pos[t]]);
    }
    return out;
}

std::vector<NightSequence> augment(std::span<const NightSequence> nights, const AugmentConfig& config) {
    config.validate();
    std::vector<NightSequence> out;
    out.reserve(nights.size() * static_cast<std::size_t>(config.factor));
    for (const auto& night : nights) {
        Rng rng(derive_seed(config.seed, night.night_id));
        for (int r = 0; r < config.factor; ++r) out.push_back(subsample(night, config.sample_size, rng));
    }
    return out;
}

std::vector<FoldSplit> make_folds(std::span<const Label> labels, int k, int repeats, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("need at least 2 folds");
    if (labels.size() < static_cast<std::size_t>(k)) throw std::invalid_argument("fewer nights than folds");

    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == Label::satisfied ? pos : neg).push_back(i);
    const bool stratify = pos.size() >= static_cast<std::size_t>(k) && neg.size() >= static_cast<std::size_t>(k);

    std::vector<FoldSplit> splits;
    for (int r = 0; r < repeats; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        std::vector<int> fold_of(labels.size());
        if (stratify) {
            // deal each class round-robin, continuing where the previous class
            // stopped so fold sizes stay balanced
            auto p = pos, q = neg;
            std::shuffle(p.begin(), p.end(), rng);
            std::shuffle(q.begin(), q.end(), rng);
            std::size_t slot = 0;
            for (auto i : p) fold_of[i] = static_cast<int>(slot++ % static_cast<std::size_t>(k));
            // the second class fills folds from the smallest upward
            std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
            for (auto i : p) ++counts[static_cast<std::size_t>(fold_of[i])];
            std::vector<int> fill(static_cast<std::size_t>(k));
            std::iota(fill.begin(), fill.end(), 0);
            std::stable_sort(fill.begin(), fill.end(), [&](int a, int b) { return counts[a] < counts[b]; });
            slot = 0;
            for (auto i : q) fold_of[i] = fill[slot++ % static_cast<std::size_t>(k)];
        } else {
            std::vector<std::size_t> all(labels.size());
            std::iota(all.begin(), all.end(), std::size_t{0});
            std::shuffle(all.begin(), all.end(), rng);
            for (std::size_t s = 0; s < all.size(); ++s) fold_of[all[s]] = static_cast<int>(s % static_cast<std::size_t>(k));
        }
        for (int f = 0; f < k; ++f) {
            FoldSplit split;
            split.repeat = r;
            split.fold = f;
            for (std::size_t i = 0; i < labels.size(); ++i) (fold_of[i] == f ? split.test : split.train).push_back(i);
            splits.push_back(std::move(split));
        }
    }
    return splits;
}

std::array<NightSequence, 3> segment_thirds(const NightSequence& night) {
    const Eigen::Index l = night.length();
    if (l < 3) throw std::invalid_argument("segmenting needs at least 3 events");
    const Eigen::Index base = l / 3, rem = l % 3;
    std::array<NightSequence, 3> parts;
    Eigen::Index start = 0;
    for (int s = 0; s < 3; ++s) {
        const Eigen::Index len = base + (s < rem ? 1 : 0);
        auto& p = parts[static_cast<std::size_t>(s)];
        p.night_id = night.night_id;
        p.label = night.label;
        p.events = night.events.middleCols(start, len);
        if (!night.source_index.empty()) {
            p.source_index.assign(night.source_index.begin() + start, night.source_index.begin() + start + len);
        } else {
            for (Eigen::Index t = start; t < start + len; ++t) p.source_index.push_back(t);
        }
        start += len;
    }
    return parts;
}

std::vector<NightSequence> select(std::span<const NightSequence> nights, std::span<const std::size_t> indices) {
    std::vector<NightSequence> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(nights[i]);
    return out;
}

} // namespace somnoscope
