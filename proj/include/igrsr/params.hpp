#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "igrsr/tensor.hpp"

namespace igrsr {

// ---------------------------------------------------------------------------
// ParamStore: insertion-ordered named parameter tensors. trainable == the
// tensor's requires_grad flag; frozen tensors never reach the optimizer.
// ---------------------------------------------------------------------------

class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t, bool trainable) {
        if (map_.count(name)) throw Error("duplicate parameter name: " + name);
        t.set_requires_grad(trainable);
        names_.push_back(name);
        return map_.emplace(name, std::move(t)).first->second;
    }

    bool has(const std::string& name) const { return map_.count(name) != 0; }

    Tensor& get(const std::string& name) {
        auto it = map_.find(name);
        if (it == map_.end()) throw Error("unknown parameter: " + name);
        return it->second;
    }
    const Tensor& get(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw Error("unknown parameter: " + name);
        return it->second;
    }

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }

    std::vector<Tensor> trainable_tensors() const {
        std::vector<Tensor> out;
        for (const auto& n : names_) {
            const Tensor& t = map_.at(n);
            if (t.requires_grad()) out.push_back(t);
        }
        return out;
    }

    std::vector<std::pair<std::string, Tensor>> trainable_named() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (const auto& n : names_) {
            const Tensor& t = map_.at(n);
            if (t.requires_grad()) out.emplace_back(n, t);
        }
        return out;
    }

    std::size_t scalar_count(bool trainable_only = false) const {
        std::size_t n = 0;
        for (const auto& name : names_) {
            const Tensor& t = map_.at(name);
            if (!trainable_only || t.requires_grad()) n += t.numel();
        }
        return n;
    }

    // Checksum over names, flags and raw value bytes, in insertion order.
    // Bit-identical values give bit-identical checksums.
    std::uint64_t checksum() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& name : names_) {
            const Tensor& t = map_.at(name);
            h = fnv1a(name, h);
            const std::uint8_t flag = t.requires_grad() ? 1 : 0;
            h = fnv1a(&flag, 1, h);
            h = fnv1a(t.values(), h);
        }
        return h;
    }

    void zero_grads() {
        for (const auto& name : names_) map_.at(name).zero_grad();
    }

    // Deep copy: fresh buffers, same names and flags.
    ParamStore clone() const {
        ParamStore out;
        for (const auto& name : names_) {
            const Tensor& t = map_.at(name);
            out.add(name, Tensor::from(t.shape(), t.values()), t.requires_grad());
        }
        return out;
    }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, Tensor> map_;
};

// ---------------------------------------------------------------------------
// Checkpoint container: versioned binary with a metadata block (config
// fingerprint etc.), then shapes, trainable flags and raw doubles per tensor.
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kCheckpointMagic[8] = {'I', 'G', 'R', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError("checkpoint truncated");
    return v;
}
inline void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& in) {
    std::string s(read_u64(in), '\0');
    in.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in) throw IoError("checkpoint truncated");
    return s;
}

}  // namespace detail

using CheckpointMeta = std::map<std::string, std::string>;

inline void save_checkpoint(const ParamStore& params, const CheckpointMeta& meta,
                            const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    std::uint32_t version = detail::kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    detail::write_u64(out, meta.size());
    for (const auto& [k, v] : meta) {
        detail::write_string(out, k);
        detail::write_string(out, v);
    }
    detail::write_u64(out, params.names().size());
    for (const auto& name : params.names()) {
        const Tensor& t = params.get(name);
        detail::write_string(out, name);
        const std::uint8_t flag = t.requires_grad() ? 1 : 0;
        out.write(reinterpret_cast<const char*>(&flag), 1);
        detail::write_u64(out, t.shape().size());
        for (auto d : t.shape()) detail::write_u64(out, d);
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + path);
}

inline std::pair<ParamStore, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError(path + " is not a checkpoint");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != detail::kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));

    CheckpointMeta meta;
    const std::uint64_t meta_n = detail::read_u64(in);
    for (std::uint64_t i = 0; i < meta_n; ++i) {
        std::string k = detail::read_string(in);
        meta[k] = detail::read_string(in);
    }
    ParamStore params;
    const std::uint64_t tensor_n = detail::read_u64(in);
    for (std::uint64_t i = 0; i < tensor_n; ++i) {
        std::string name = detail::read_string(in);
        std::uint8_t flag = 0;
        in.read(reinterpret_cast<char*>(&flag), 1);
        std::vector<std::size_t> shape(detail::read_u64(in));
        for (auto& d : shape) d = detail::read_u64(in);
        std::vector<double> data(Tensor::shape_numel(shape));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!in) throw IoError("checkpoint truncated");
        params.add(name, Tensor::from(std::move(shape), std::move(data)), flag != 0);
    }
    return {std::move(params), std::move(meta)};
}

}  // namespace igrsr
