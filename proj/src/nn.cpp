#include "sted/nn.hpp"

#include <cmath>

namespace sted {

Conv2d::Conv2d(Rng& rng, int cin, int cout, int k, bool zero_init, real init_scale)
    : in_ch(cin), out_ch(cout), ksize(k) {
    Tensor wt({cout, cin, k, k});
    if (!zero_init) {
        const real fan_in = static_cast<real>(cin) * k * k;
        const real std = init_scale * std::sqrt(real(2) / fan_in);
        for (int64_t i = 0; i < wt.numel(); ++i) wt[i] = rng.normal(0, std);
    }
    w = Var(std::move(wt), true);
    b = Var(Tensor({cout}), true);
}

real global_grad_norm(ParamMap& pm) {
    real sq = 0;
    for (auto& [name, v] : pm.params) {
        const Tensor& g = v.grad();
        for (int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
    }
    return std::sqrt(sq);
}

real Adam::step(ParamMap& pm, real lr) {
    return step(pm, [lr](const std::string&) { return lr; });
}

real Adam::step(ParamMap& pm, const std::function<real(const std::string&)>& lr_of) {
    const real norm = global_grad_norm(pm);
    const real scale = (clip_norm > 0 && norm > clip_norm) ? clip_norm / norm : real(1);
    ++t;
    const real bc1 = 1 - std::pow(beta1, static_cast<real>(t));
    const real bc2 = 1 - std::pow(beta2, static_cast<real>(t));
    for (auto& [name, v] : pm.params) {
        State& st = state[name];
        Tensor& val = v.val();
        const Tensor& g = v.grad();
        const real lr = lr_of(name);
        if (st.m.numel() == 0) {
            st.m = Tensor(val.shape());
            st.v = Tensor(val.shape());
        }
        for (int64_t i = 0; i < val.numel(); ++i) {
            const real gi = g[i] * scale;
            st.m[i] = beta1 * st.m[i] + (1 - beta1) * gi;
            st.v[i] = beta2 * st.v[i] + (1 - beta2) * gi * gi;
            const real mhat = st.m[i] / bc1;
            const real vhat = st.v[i] / bc2;
            val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
    return norm;
}

}  // namespace sted
