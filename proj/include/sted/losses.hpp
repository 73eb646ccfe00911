#pragma once

#include <string>
#include <vector>

#include "sted/autograd.hpp"
#include "sted/nn.hpp"

namespace sted::losses {

struct LossWeights {
    real lambda1 = 1.0;     // reconstruction
    real lambda2 = 0.002;   // perceptual
    real lambda3 = 0.0005;  // disparity smoothness
};

// Frozen feature network for the perceptual loss. The layout mirrors a VGG
// feature stack truncated after the third conv block (8 convs, 2 max-pools,
// features taken after the final activation). `plan` gives the conv widths;
// -1 entries are 2x2 max-pools. Weights come either from a checkpoint file
// or from a seeded random init; they are frozen either way and receive no
// gradient.
struct PerceptualConfig {
    std::vector<int> plan = {8, 8, -1, 16, 16, -1, 24, 24, 24};
    int in_channels = 3;
    uint64_t seed = 1234;
    std::string weights_path;  // optional checkpoint base path
};

class PerceptualExtractor {
public:
    PerceptualExtractor() = default;
    explicit PerceptualExtractor(const PerceptualConfig& cfg);

    Var operator()(const Var& x) const;
    bool ready() const { return !convs_.empty(); }
    const PerceptualConfig& config() const { return cfg_; }

private:
    PerceptualConfig cfg_;
    std::vector<Conv2d> convs_;
    std::vector<int> steps_;  // conv index, or -1 for pool
};

// (1/M) sum_m mean |pred_m - gt_m|
Var l_dblr(const std::vector<Var>& pred, const std::vector<Var>& gt);

// (1/M) sum_m mean (phi(pred_m) - phi(gt_m))^2
Var l_perc(const std::vector<Var>& pred, const std::vector<Var>& gt,
           const PerceptualExtractor& extractor);

// anisotropic total variation of the disparity map
Var l_tv(const Var& disp);

struct LossBreakdown {
    Var total;
    real dblr = 0;
    real perc = 0;
    real tv = 0;
};

LossBreakdown total_loss(const std::vector<Var>& pred, const std::vector<Var>& gt,
                         const Var& disp, const LossWeights& w,
                         const PerceptualExtractor& extractor);

}  // namespace sted::losses
