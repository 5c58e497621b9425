#pragma once

#include <map>

#include "sdfc/nn/autograd.hpp"

namespace sdfc::nn {

/// Insertion-ordered named parameter collection. Models register their
/// parameters here; the optimizer and the checkpoint writer walk it.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init) {
        if (index_.count(name)) throw UsageError("duplicate parameter name: " + name);
        Var v = parameter(std::move(init));
        index_[name] = params_.size();
        params_.emplace_back(name, v);
        return v;
    }

    const std::vector<std::pair<std::string, Var>>& entries() const { return params_; }

    Var find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return nullptr;
        return params_[it->second].second;
    }

    std::size_t total_count() const {
        std::size_t n = 0;
        for (const auto& [name, v] : params_) n += v->value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, v] : params_) v->zero_grad();
    }

private:
    std::vector<std::pair<std::string, Var>> params_;
    std::map<std::string, std::size_t> index_;
};

/// Learning-rate schedule: plain cosine annealing, or linear warmup from zero
/// followed by cosine annealing to ~zero at total_steps.
struct LrSchedule {
    enum class Kind { Constant, Cosine, WarmupCosine };

    Kind kind = Kind::Constant;
    double base = 1e-3;
    long warmup_steps = 0;
    long total_steps = 1;

    static LrSchedule constant(double base) { return {Kind::Constant, base, 0, 1}; }
    static LrSchedule cosine(double base, long total) { return {Kind::Cosine, base, 0, total}; }
    static LrSchedule warmup_cosine(double base, long warmup, long total) {
        return {Kind::WarmupCosine, base, warmup, total};
    }

    double at(long step) const {
        constexpr double kPi = 3.14159265358979323846;
        switch (kind) {
            case Kind::Constant:
                return base;
            case Kind::Cosine: {
                const long t = std::min(step, total_steps);
                return 0.5 * base * (1.0 + std::cos(kPi * static_cast<double>(t) / static_cast<double>(std::max<long>(total_steps, 1))));
            }
            case Kind::WarmupCosine: {
                if (step < warmup_steps)
                    return base * static_cast<double>(step) / static_cast<double>(std::max<long>(warmup_steps, 1));
                const long span = std::max<long>(total_steps - warmup_steps, 1);
                const long t = std::min(step - warmup_steps, span);
                return 0.5 * base * (1.0 + std::cos(kPi * static_cast<double>(t) / static_cast<double>(span)));
            }
        }
        return base;
    }
};

/// Temporarily clears requires_grad on every parameter in a store, so graphs
/// built inside the scope treat them as constants (no weight gradients).
class FreezeParams {
public:
    explicit FreezeParams(const ParamStore& store) {
        for (const auto& [name, v] : store.entries())
            if (v->requires_grad) {
                v->requires_grad = false;
                frozen_.push_back(v.get());
            }
    }
    ~FreezeParams() {
        for (Node* p : frozen_) p->requires_grad = true;
    }
    FreezeParams(const FreezeParams&) = delete;
    FreezeParams& operator=(const FreezeParams&) = delete;

private:
    std::vector<Node*> frozen_;
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with the standard bias-corrected update.
class Adam {
public:
    using Options = AdamOptions;

    explicit Adam(std::vector<Var> params, Options opts = {})
        : params_(std::move(params)), opts_(opts) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const Var& p : params_) {
            m_.emplace_back(Tensor::zeros(p->value.shape()));
            v_.emplace_back(Tensor::zeros(p->value.shape()));
        }
    }

    explicit Adam(const ParamStore& store, Options opts = {})
        : Adam(vars_of(store), opts) {}

    long step_count() const { return step_; }
    void set_step_count(long s) { step_ = s; }

    /// One update using the given learning rate. Parameters with no gradient
    /// accumulated this step are left untouched.
    void step(double lr) {
        ++step_;
        const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Node& p = *params_[i];
            if (!p.grad.defined() || p.grad.numel() != p.value.numel()) continue;
            float* w = p.value.data();
            const float* g = p.grad.data();
            float* m = m_[i].data();
            float* v = v_[i].data();
            const float b1 = static_cast<float>(opts_.beta1);
            const float b2 = static_cast<float>(opts_.beta2);
            for (std::size_t j = 0; j < p.value.numel(); ++j) {
                m[j] = b1 * m[j] + (1.0f - b1) * g[j];
                v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                w[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + opts_.eps));
            }
        }
    }

    void zero_grad() {
        for (Var& p : params_) p->zero_grad();
    }

    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }

private:
    static std::vector<Var> vars_of(const ParamStore& store) {
        std::vector<Var> out;
        out.reserve(store.entries().size());
        for (const auto& [name, v] : store.entries()) out.push_back(v);
        return out;
    }

    std::vector<Var> params_;
    Options opts_;
    std::vector<Tensor> m_, v_;
    long step_ = 0;
};

}  // namespace sdfc::nn
