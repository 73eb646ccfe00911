#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sted/autograd.hpp"
#include "sted/random.hpp"

namespace sted {

// Named parameter registry. std::map keeps iteration order stable, which
// the optimizer and checkpoint code rely on for determinism.
struct ParamMap {
    std::map<std::string, Var> params;

    void add(const std::string& name, const Var& v) {
        auto [it, ok] = params.emplace(name, v);
        if (!ok) throw std::invalid_argument("duplicate parameter name: " + name);
    }
    Var& at(const std::string& name) { return params.at(name); }
    const Var& at(const std::string& name) const { return params.at(name); }
    size_t size() const { return params.size(); }

    void zero_grad() {
        for (auto& [name, v] : params) v.zero_grad();
    }
};

// 2-D convolution layer, stride 1, same padding.
struct Conv2d {
    Var w, b;
    int in_ch = 0, out_ch = 0, ksize = 0;

    Conv2d() = default;
    // Kaiming fan-in init scaled for the default leaky slope; zero bias.
    // init_scale shrinks the weight std (0 gives an exact zero init).
    Conv2d(Rng& rng, int cin, int cout, int k, bool zero_init = false, real init_scale = 1.0);

    Var operator()(const Var& x) const { return conv2d(x, w, b); }

    void collect(ParamMap& pm, const std::string& prefix) const {
        pm.add(prefix + ".w", w);
        pm.add(prefix + ".b", b);
    }
};

// Adam with global-norm gradient clipping. One shared step counter so the
// bias correction matches a single-optimizer setup.
struct Adam {
    real beta1 = 0.9;
    real beta2 = 0.999;
    real eps = 1e-8;
    real clip_norm = 10.0;

    struct State {
        Tensor m, v;
    };
    std::map<std::string, State> state;
    int64_t t = 0;

    // returns the pre-clip global gradient norm
    real step(ParamMap& pm, real lr);
    real step(ParamMap& pm, const std::function<real(const std::string&)>& lr_of);
};

real global_grad_norm(ParamMap& pm);

}  // namespace sted
