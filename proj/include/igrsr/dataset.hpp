#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "igrsr/common.hpp"

namespace igrsr {

// ---------------------------------------------------------------------------
// InteractionDataset: dense users with chronologically ordered item sequences.
// Item ids live in 1..item_count; 0 is reserved for padding.
// ---------------------------------------------------------------------------

struct InteractionDataset {
    std::size_t user_count = 0;
    std::size_t item_count = 0;                 // vocabulary size, pad excluded
    std::vector<std::vector<int>> sequences;    // [user_count], ids in 1..item_count
    std::vector<std::string> user_ids;          // dense user -> raw id
    std::vector<std::string> item_ids;          // dense item (1-based) -> raw id; [0] = "<pad>"
    std::vector<std::vector<int>> user_intents; // synthetic ground truth; empty otherwise

    std::size_t interaction_count() const {
        std::size_t n = 0;
        for (const auto& s : sequences) n += s.size();
        return n;
    }

    // Semantic equality over raw labels, so two datasets ingested through
    // different id assignments still compare equal when they describe the
    // same interactions.
    friend bool operator==(const InteractionDataset& a, const InteractionDataset& b) {
        if (a.user_count != b.user_count || a.item_count != b.item_count) return false;
        if (a.user_ids != b.user_ids) return false;
        for (std::size_t u = 0; u < a.user_count; ++u) {
            const auto& sa = a.sequences[u];
            const auto& sb = b.sequences[u];
            if (sa.size() != sb.size()) return false;
            for (std::size_t i = 0; i < sa.size(); ++i)
                if (a.item_ids[static_cast<std::size_t>(sa[i])] !=
                    b.item_ids[static_cast<std::size_t>(sb[i])])
                    return false;
        }
        return true;
    }
};

enum class IngestFormat { Tsv, Jsonl };

namespace detail {

struct RawEvent {
    std::string user;
    std::string item;
    long long ts;
    std::size_t order;  // input position, tie-break for equal timestamps
};

// Iterative k-core: drop users and items with fewer than `k` interactions
// until stable, then build dense ids by first appearance and per-user
// chronological sequences.
inline InteractionDataset build_dataset(std::vector<RawEvent> events, std::size_t k_core) {
    bool changed = true;
    std::vector<bool> alive(events.size(), true);
    while (changed) {
        changed = false;
        std::unordered_map<std::string, std::size_t> user_n, item_n;
        for (std::size_t i = 0; i < events.size(); ++i) {
            if (!alive[i]) continue;
            ++user_n[events[i].user];
            ++item_n[events[i].item];
        }
        for (std::size_t i = 0; i < events.size(); ++i) {
            if (!alive[i]) continue;
            if (user_n[events[i].user] < k_core || item_n[events[i].item] < k_core) {
                alive[i] = false;
                changed = true;
            }
        }
    }

    InteractionDataset ds;
    ds.item_ids.push_back("<pad>");
    std::unordered_map<std::string, int> user_map, item_map;
    std::vector<std::vector<RawEvent>> per_user;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (!alive[i]) continue;
        auto [uit, unew] = user_map.try_emplace(events[i].user,
                                                static_cast<int>(per_user.size()));
        if (unew) {
            per_user.emplace_back();
            ds.user_ids.push_back(events[i].user);
        }
        per_user[static_cast<std::size_t>(uit->second)].push_back(events[i]);
    }
    for (auto& evs : per_user) {
        std::stable_sort(evs.begin(), evs.end(), [](const RawEvent& a, const RawEvent& b) {
            return a.ts != b.ts ? a.ts < b.ts : a.order < b.order;
        });
        std::vector<int> seq;
        seq.reserve(evs.size());
        for (const auto& e : evs) {
            auto [iit, inew] = item_map.try_emplace(e.item,
                                                    static_cast<int>(ds.item_ids.size()));
            if (inew) ds.item_ids.push_back(e.item);
            seq.push_back(iit->second);
        }
        ds.sequences.push_back(std::move(seq));
    }
    ds.user_count = ds.sequences.size();
    ds.item_count = ds.item_ids.size() - 1;

    if (ds.user_count == 0)
        throw EmptyDatasetError("no users survive " + std::to_string(k_core) +
                                "-core filtering");
    return ds;
}

inline std::vector<RawEvent> parse_tsv(std::istream& in) {
    std::vector<RawEvent> events;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t t1 = line.find('\t');
        std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw ParseError("expected user<TAB>item<TAB>timestamp", line_no);
        std::string user = line.substr(0, t1);
        std::string item = line.substr(t1 + 1, t2 - t1 - 1);
        std::string ts_str = line.substr(t2 + 1);
        if (user.empty() || item.empty()) throw ParseError("empty user or item id", line_no);
        char* end = nullptr;
        long long ts = std::strtoll(ts_str.c_str(), &end, 10);
        if (end == ts_str.c_str() || (*end != '\0' && *end != '\r'))
            throw ParseError("bad timestamp '" + ts_str + "'", line_no);
        events.push_back({std::move(user), std::move(item), ts, events.size()});
    }
    return events;
}

inline std::vector<RawEvent> parse_jsonl(std::istream& in) {
    std::vector<RawEvent> events;
    std::string line;
    std::size_t line_no = 0;
    auto as_string = [](const nlohmann::json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object())
            throw ParseError("invalid JSON object", line_no);
        if (!obj.contains("user") || !obj.contains("item") || !obj.contains("ts"))
            throw ParseError("missing user/item/ts key", line_no);
        if (!obj["ts"].is_number()) throw ParseError("ts must be a number", line_no);
        events.push_back({as_string(obj["user"]), as_string(obj["item"]),
                          obj["ts"].get<long long>(), events.size()});
    }
    return events;
}

}  // namespace detail

// Parses an interaction log, applies iterative 5-core filtering, densifies
// ids and sorts each user's events chronologically.
inline InteractionDataset ingest(const std::string& path, IngestFormat format,
                                 std::size_t k_core = 5) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    auto events = format == IngestFormat::Tsv ? detail::parse_tsv(in)
                                              : detail::parse_jsonl(in);
    if (events.empty()) throw EmptyDatasetError(path + " contains no interactions");
    return detail::build_dataset(std::move(events), k_core);
}

// ---------------------------------------------------------------------------
// Serialized dataset container (versioned JSON, see README).
// ---------------------------------------------------------------------------

inline void save_dataset(const InteractionDataset& ds, const std::string& path) {
    nlohmann::json j;
    j["version"] = 1;
    j["user_ids"] = ds.user_ids;
    j["item_ids"] = ds.item_ids;
    j["sequences"] = ds.sequences;
    if (!ds.user_intents.empty()) j["user_intents"] = ds.user_intents;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump() << "\n";
}

inline InteractionDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("version"))
        throw ParseError("not a dataset container: " + path, 1);
    if (j["version"].get<int>() != 1)
        throw ParseError("unsupported dataset version", 1);
    InteractionDataset ds;
    ds.user_ids = j["user_ids"].get<std::vector<std::string>>();
    ds.item_ids = j["item_ids"].get<std::vector<std::string>>();
    ds.sequences = j["sequences"].get<std::vector<std::vector<int>>>();
    if (j.contains("user_intents"))
        ds.user_intents = j["user_intents"].get<std::vector<std::vector<int>>>();
    ds.user_count = ds.sequences.size();
    ds.item_count = ds.item_ids.empty() ? 0 : ds.item_ids.size() - 1;
    for (const auto& seq : ds.sequences) {
        if (seq.size() < 3) throw ParseError("sequence shorter than 3", 1);
        for (int id : seq)
            if (id < 1 || static_cast<std::size_t>(id) > ds.item_count)
                throw ParseError("item id out of range", 1);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Leave-one-out splits. Targets are 0-based positions into the user sequence:
// test = n-1, val = n-2, and train every position in [1, n-3]. The input of
// an instance is everything strictly before its target, so no target position
// ever appears in two splits and the held-out items never serve as training
// labels.
// ---------------------------------------------------------------------------

struct Instance {
    int user;
    std::size_t target_pos;
};

struct SplitIndex {
    std::vector<Instance> train;
    std::vector<Instance> val;
    std::vector<Instance> test;
};

inline SplitIndex leave_one_out_split(const InteractionDataset& ds) {
    SplitIndex idx;
    for (std::size_t u = 0; u < ds.user_count; ++u) {
        const std::size_t n = ds.sequences[u].size();
        if (n < 3) throw LengthError("sequence shorter than 3 cannot be split");
        for (std::size_t t = 1; t + 2 < n; ++t)
            idx.train.push_back({static_cast<int>(u), t});
        idx.val.push_back({static_cast<int>(u), n - 2});
        idx.test.push_back({static_cast<int>(u), n - 1});
    }
    return idx;
}

// ---------------------------------------------------------------------------
// Batches: left-padded to n_max, one target per row.
// ---------------------------------------------------------------------------

struct Batch {
    std::size_t rows = 0;
    std::size_t width = 0;
    std::vector<int> items;             // rows x width, 0 = pad
    std::vector<std::size_t> lengths;   // true (post-truncation) lengths
    std::vector<int> targets;
    std::vector<int> users;

    const int* row(std::size_t r) const { return items.data() + r * width; }
};

inline std::vector<Batch> make_batches(const std::vector<Instance>& instances,
                                       const InteractionDataset& ds, std::size_t n_max,
                                       std::size_t batch_size, std::uint64_t shuffle_seed) {
    if (n_max < 1) throw LengthError("n_max must be at least 1");
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(shuffle_seed);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1],
                  order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t rows = std::min(batch_size, order.size() - start);
        Batch b;
        b.rows = rows;
        b.width = n_max;
        b.items.assign(rows * n_max, 0);
        b.lengths.resize(rows);
        b.targets.resize(rows);
        b.users.resize(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const Instance& inst = instances[order[start + r]];
            const auto& seq = ds.sequences[static_cast<std::size_t>(inst.user)];
            const std::size_t avail = inst.target_pos;  // items before the target
            const std::size_t len = std::min(avail, n_max);
            for (std::size_t i = 0; i < len; ++i)
                b.items[r * n_max + (n_max - len + i)] =
                    seq[avail - len + i];  // most recent n_max, left-padded
            b.lengths[r] = len;
            b.targets[r] = seq[inst.target_pos];
            b.users[r] = inst.user;
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

// ---------------------------------------------------------------------------
// Behavioral noise: replace ceil(ratio * (n-1)) non-final positions per
// sequence with uniformly random other items. The held-out test target (the
// final position) is never touched and lengths never change.
// ---------------------------------------------------------------------------

inline InteractionDataset inject_noise(const InteractionDataset& ds, double ratio,
                                       std::uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("noise ratio must be in [0, 1]");
    InteractionDataset out = ds;
    if (ratio == 0.0 || ds.item_count < 2) return out;
    Rng rng(derive_seed(seed, "noise"));
    for (auto& seq : out.sequences) {
        const std::size_t n = seq.size();
        const std::size_t eligible = n - 1;
        const std::size_t count =
            static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(eligible)));
        // sample `count` distinct positions via partial Fisher-Yates
        std::vector<std::size_t> pos(eligible);
        for (std::size_t i = 0; i < eligible; ++i) pos[i] = i;
        for (std::size_t i = 0; i < count; ++i)
            std::swap(pos[i], pos[static_cast<std::size_t>(rng.uniform_int(
                                  static_cast<std::int64_t>(i),
                                  static_cast<std::int64_t>(eligible) - 1))]);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t p = pos[i];
            int replacement = seq[p];
            while (replacement == seq[p])
                replacement = static_cast<int>(
                    rng.uniform_int(1, static_cast<std::int64_t>(ds.item_count)));
            seq[p] = replacement;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic intent-driven data: items split into disjoint pools, one pool per
// latent intent; each user draws 1-2 intents and samples from their pools
// with a small uniform-noise floor. Ground-truth intents are kept for
// diagnostics. The result is run through the same k-core pipeline as real
// data so it honors every ingest invariant.
// ---------------------------------------------------------------------------

struct SynthSpec {
    std::size_t users = 2000;
    std::size_t items = 500;
    std::size_t intent_count = 4;
    std::size_t len_min = 5;
    std::size_t len_max = 30;
    double noise = 0.1;           // probability of a uniform off-intent draw
    std::size_t min_intents_per_user = 1;
    std::size_t max_intents_per_user = 2;
    double zipf_s = 1.0;          // within-pool popularity skew (0 = uniform)
    // interactions come in bursts of one intent; this is the per-step
    // probability of hopping to another of the user's pools
    double pool_switch_prob = 0.25;
    // fraction of in-pool draws that follow a personal rotation of the
    // popularity profile instead of the global one; same-pool users then
    // differ in taste and ranking stays personal
    double taste_blend = 0.5;
};

inline InteractionDataset generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.intent_count == 0 || spec.items % spec.intent_count != 0)
        throw ConfigError("item count must divide evenly into intent pools");
    if (spec.len_min < 3 || spec.len_max < spec.len_min)
        throw ConfigError("invalid synthetic sequence length range");
    const std::size_t pool_size = spec.items / spec.intent_count;

    // within-pool popularity: cumulative Zipf weights over local ranks
    std::vector<double> pop_cdf(pool_size);
    double mass = 0.0;
    for (std::size_t r = 0; r < pool_size; ++r) {
        mass += spec.zipf_s == 0.0
                    ? 1.0
                    : 1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_s);
        pop_cdf[r] = mass;
    }
    for (auto& v : pop_cdf) v /= mass;

    Rng rng(derive_seed(seed, "synthetic"));
    std::vector<detail::RawEvent> events;
    std::vector<std::vector<int>> intents_by_user(spec.users);
    if (spec.min_intents_per_user < 1 || spec.min_intents_per_user > spec.max_intents_per_user)
        throw ConfigError("invalid intents-per-user range");
    for (std::size_t u = 0; u < spec.users; ++u) {
        const std::size_t n_int = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(spec.min_intents_per_user),
                            static_cast<std::int64_t>(spec.max_intents_per_user)));
        std::vector<int> pools;
        while (pools.size() < std::min(n_int, spec.intent_count)) {
            int p = static_cast<int>(
                rng.uniform_int(0, static_cast<std::int64_t>(spec.intent_count) - 1));
            if (std::find(pools.begin(), pools.end(), p) == pools.end()) pools.push_back(p);
        }
        intents_by_user[u] = pools;
        const std::size_t taste_offset =
            spec.taste_blend > 0.0
                ? static_cast<std::size_t>(
                      rng.uniform_int(0, static_cast<std::int64_t>(pool_size) - 1))
                : 0;
        const std::size_t len = static_cast<std::size_t>(rng.uniform_int(
            static_cast<std::int64_t>(spec.len_min), static_cast<std::int64_t>(spec.len_max)));
        std::size_t active = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(pools.size()) - 1));
        for (std::size_t i = 0; i < len; ++i) {
            if (pools.size() > 1 && rng.uniform() < spec.pool_switch_prob)
                active = (active + 1 + static_cast<std::size_t>(rng.uniform_int(
                                          0, static_cast<std::int64_t>(pools.size()) - 2))) %
                         pools.size();
            int item;
            if (rng.uniform() < spec.noise) {
                item = static_cast<int>(
                    rng.uniform_int(1, static_cast<std::int64_t>(spec.items)));
            } else {
                const int pool = pools[active];
                const double u = rng.uniform();
                std::size_t rank = static_cast<std::size_t>(
                    std::lower_bound(pop_cdf.begin(), pop_cdf.end(), u) - pop_cdf.begin());
                if (rank >= pool_size) rank = pool_size - 1;
                if (rng.uniform() < spec.taste_blend)
                    rank = (rank + taste_offset) % pool_size;
                item = pool * static_cast<int>(pool_size) + 1 + static_cast<int>(rank);
            }
            events.push_back({"u" + std::to_string(u), "i" + std::to_string(item),
                              static_cast<long long>(i), events.size()});
        }
    }

    InteractionDataset ds = detail::build_dataset(std::move(events), 5);
    ds.user_intents.resize(ds.user_count);
    for (std::size_t u = 0; u < ds.user_count; ++u) {
        // raw user ids are "u<idx>"; recover the generator index for labels
        const std::size_t gen_idx = std::stoul(ds.user_ids[u].substr(1));
        ds.user_intents[u] = intents_by_user[gen_idx];
    }
    return ds;
}

}  // namespace igrsr
