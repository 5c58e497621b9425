#pragma once

#include <optional>
#include <sstream>

#include "sdfc/io/sdf_file.hpp"
#include "sdfc/nn/conv.hpp"
#include "sdfc/nn/optim.hpp"

namespace sdfc::io {

// Checkpoint file: magic "SDCK", version u32, architecture descriptor string,
// named parameter tensors, named batch-norm running stats, optional optimizer
// moments, RNG state, step counter. Loading verifies the descriptor and every
// tensor shape, so a checkpoint cannot silently attach to the wrong model.
inline constexpr char kCkptMagic[4] = {'S', 'D', 'C', 'K'};
inline constexpr std::uint32_t kCkptVersion = 1;

namespace detail {

inline void write_string(std::ostream& os, const std::string& s) {
    write_pod(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    std::uint32_t len = 0;
    read_pod(is, len);
    if (len > (1u << 20)) throw FormatError("checkpoint: implausible string length");
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw FormatError("checkpoint: truncated string");
    return s;
}

inline void write_tensor(std::ostream& os, const nn::Tensor& t) {
    write_pod(os, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_pod(os, static_cast<std::int32_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

inline nn::Tensor read_tensor(std::istream& is) {
    std::uint32_t rank = 0;
    read_pod(is, rank);
    if (rank > 8) throw FormatError("checkpoint: implausible tensor rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) {
        std::int32_t v = 0;
        read_pod(is, v);
        d = v;
    }
    nn::Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is) throw FormatError("checkpoint: truncated tensor data");
    return t;
}

}  // namespace detail

struct OptimizerSnapshot {
    std::vector<nn::Tensor> first_moments;
    std::vector<nn::Tensor> second_moments;
    long adam_step = 0;
};

struct Checkpoint {
    std::string descriptor;
    std::vector<std::pair<std::string, nn::Tensor>> tensors;
    std::vector<std::pair<std::string, std::pair<nn::Tensor, nn::Tensor>>> bn_stats;
    std::optional<OptimizerSnapshot> optimizer;
    std::string rng_state;  // opaque Rng blob
    long step = 0;
};

inline Checkpoint snapshot(const std::string& descriptor, const nn::ParamStore& params,
                           const std::vector<std::pair<std::string, nn::BatchNormState>>& bn,
                           const nn::Adam* adam, const Rng* rng, long step) {
    Checkpoint ck;
    ck.descriptor = descriptor;
    for (const auto& [name, v] : params.entries()) ck.tensors.emplace_back(name, v->value);
    for (const auto& [name, st] : bn)
        ck.bn_stats.emplace_back(name, std::make_pair(st.running_mean, st.running_var));
    if (adam) {
        OptimizerSnapshot o;
        o.first_moments = adam->first_moments();
        o.second_moments = adam->second_moments();
        o.adam_step = adam->step_count();
        ck.optimizer = std::move(o);
    }
    if (rng) {
        std::ostringstream ss;
        rng->save(ss);
        ck.rng_state = ss.str();
    }
    ck.step = step;
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    AtomicFileWriter w(path);
    std::ostream& os = w.stream();
    os.write(kCkptMagic, 4);
    detail::write_pod(os, kCkptVersion);
    detail::write_string(os, ck.descriptor);

    detail::write_pod(os, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        detail::write_string(os, name);
        detail::write_tensor(os, t);
    }
    detail::write_pod(os, static_cast<std::uint32_t>(ck.bn_stats.size()));
    for (const auto& [name, rv] : ck.bn_stats) {
        detail::write_string(os, name);
        detail::write_tensor(os, rv.first);
        detail::write_tensor(os, rv.second);
    }
    const std::uint8_t has_opt = ck.optimizer ? 1 : 0;
    detail::write_pod(os, has_opt);
    if (ck.optimizer) {
        detail::write_pod(os, static_cast<std::uint32_t>(ck.optimizer->first_moments.size()));
        for (const auto& t : ck.optimizer->first_moments) detail::write_tensor(os, t);
        for (const auto& t : ck.optimizer->second_moments) detail::write_tensor(os, t);
        detail::write_pod(os, static_cast<std::int64_t>(ck.optimizer->adam_step));
    }
    detail::write_string(os, ck.rng_state);
    detail::write_pod(os, static_cast<std::int64_t>(ck.step));
    w.commit();
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    detail::expect_magic(is, kCkptMagic, kCkptVersion, "checkpoint");

    Checkpoint ck;
    ck.descriptor = detail::read_string(is);
    std::uint32_t n = 0;
    detail::read_pod(is, n);
    if (n > (1u << 20)) throw FormatError("checkpoint: implausible tensor count");
    ck.tensors.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = detail::read_string(is);
        ck.tensors.emplace_back(std::move(name), detail::read_tensor(is));
    }
    detail::read_pod(is, n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = detail::read_string(is);
        nn::Tensor rm = detail::read_tensor(is);
        nn::Tensor rv = detail::read_tensor(is);
        ck.bn_stats.emplace_back(std::move(name), std::make_pair(std::move(rm), std::move(rv)));
    }
    std::uint8_t has_opt = 0;
    detail::read_pod(is, has_opt);
    if (has_opt) {
        OptimizerSnapshot o;
        std::uint32_t cnt = 0;
        detail::read_pod(is, cnt);
        o.first_moments.reserve(cnt);
        for (std::uint32_t i = 0; i < cnt; ++i) o.first_moments.push_back(detail::read_tensor(is));
        o.second_moments.reserve(cnt);
        for (std::uint32_t i = 0; i < cnt; ++i) o.second_moments.push_back(detail::read_tensor(is));
        std::int64_t astep = 0;
        detail::read_pod(is, astep);
        o.adam_step = static_cast<long>(astep);
        ck.optimizer = std::move(o);
    }
    ck.rng_state = detail::read_string(is);
    std::int64_t step = 0;
    detail::read_pod(is, step);
    ck.step = static_cast<long>(step);
    return ck;
}

/// Copies checkpoint tensors into a live model. Throws CheckpointMismatch if
/// the descriptor, any name, or any shape disagrees.
inline void restore(const Checkpoint& ck, const std::string& expected_descriptor,
                    nn::ParamStore& params,
                    std::vector<std::pair<std::string, nn::BatchNormState>>& bn,
                    nn::Adam* adam = nullptr, Rng* rng = nullptr) {
    if (ck.descriptor != expected_descriptor)
        throw CheckpointMismatch("checkpoint architecture '" + ck.descriptor +
                                 "' does not match model '" + expected_descriptor + "'");
    const auto& entries = params.entries();
    if (entries.size() != ck.tensors.size())
        throw CheckpointMismatch("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, v] = entries[i];
        const auto& [ck_name, t] = ck.tensors[i];
        if (name != ck_name) throw CheckpointMismatch("parameter name mismatch: " + name + " vs " + ck_name);
        if (!v->value.same_shape(t)) throw CheckpointMismatch("parameter shape mismatch: " + name);
        v->value = t;
    }
    if (bn.size() != ck.bn_stats.size()) throw CheckpointMismatch("batch-norm state count mismatch");
    for (std::size_t i = 0; i < bn.size(); ++i) {
        if (bn[i].first != ck.bn_stats[i].first)
            throw CheckpointMismatch("batch-norm name mismatch: " + bn[i].first);
        bn[i].second.running_mean = ck.bn_stats[i].second.first;
        bn[i].second.running_var = ck.bn_stats[i].second.second;
    }
    if (adam && ck.optimizer) {
        if (ck.optimizer->first_moments.size() != adam->first_moments().size())
            throw CheckpointMismatch("optimizer state count mismatch");
        adam->first_moments() = ck.optimizer->first_moments;
        adam->second_moments() = ck.optimizer->second_moments;
        adam->set_step_count(ck.optimizer->adam_step);
    }
    if (rng && !ck.rng_state.empty()) {
        std::istringstream ss(ck.rng_state);
        rng->load(ss);
    }
}

}  // namespace sdfc::io
