#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "igrsr/common.hpp"
#include "igrsr/dataset.hpp"

namespace igrsr {

// One record per epoch. wall_s is informational only and excluded from the
// determinism contract.
struct EpochRecord {
    std::size_t epoch = 0;
    double rec_loss = 0.0;
    double icr_loss = 0.0;
    double total_loss = 0.0;
    double val_recall10 = 0.0;
    double val_ndcg10 = 0.0;
    std::size_t icr_forward_count = 0;
    double wall_s = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_recall10 = 0.0;
};

inline bool logs_equal_deterministic(const TrainLog& a, const TrainLog& b) {
    if (a.epochs.size() != b.epochs.size() || a.best_epoch != b.best_epoch ||
        a.best_val_recall10 != b.best_val_recall10)
        return false;
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        const auto& x = a.epochs[i];
        const auto& y = b.epochs[i];
        if (x.epoch != y.epoch || x.rec_loss != y.rec_loss || x.icr_loss != y.icr_loss ||
            x.total_loss != y.total_loss || x.val_recall10 != y.val_recall10 ||
            x.val_ndcg10 != y.val_ndcg10 || x.icr_forward_count != y.icr_forward_count)
            return false;
    }
    return true;
}

// Desk-scale throttle: keep at most `cap` most-recent training instances per
// user (0 = keep all).
inline std::vector<Instance> cap_instances(const std::vector<Instance>& instances,
                                           std::size_t cap) {
    if (cap == 0) return instances;
    std::map<int, std::vector<Instance>> per_user;
    for (const auto& inst : instances) per_user[inst.user].push_back(inst);
    std::vector<Instance> out;
    for (auto& [user, list] : per_user) {
        std::sort(list.begin(), list.end(),
                  [](const Instance& a, const Instance& b) { return a.target_pos > b.target_pos; });
        const std::size_t keep = std::min(cap, list.size());
        for (std::size_t i = 0; i < keep; ++i) out.push_back(list[i]);
    }
    return out;
}

// Deterministic validation subset for per-epoch early stopping (0 = all).
inline std::vector<Instance> val_view(const std::vector<Instance>& val, std::size_t subset) {
    if (subset == 0 || subset >= val.size()) return val;
    return std::vector<Instance>(val.begin(),
                                 val.begin() + static_cast<std::ptrdiff_t>(subset));
}

inline void check_loss_finite(double loss, const Batch& batch, std::size_t epoch,
                              const std::string& model_name) {
    if (std::isfinite(loss)) return;
    std::string users = "";
    for (std::size_t r = 0; r < std::min<std::size_t>(batch.rows, 8); ++r)
        users += (r ? "," : "") + std::to_string(batch.users[r]);
    throw TrainingDivergedError(model_name + ": non-finite loss at epoch " +
                                std::to_string(epoch) + " (batch users " + users + ")");
}

}  // namespace igrsr
