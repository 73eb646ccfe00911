#include "sted/losses.hpp"

#include <stdexcept>

#include "sted/serialize.hpp"

namespace sted::losses {

PerceptualExtractor::PerceptualExtractor(const PerceptualConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.seed);
    int cin = cfg.in_channels;
    for (int width : cfg.plan) {
        if (width == -1) {
            steps_.push_back(-1);
            continue;
        }
        steps_.push_back(static_cast<int>(convs_.size()));
        convs_.emplace_back(rng, cin, width, 3);
        cin = width;
    }
    if (!cfg.weights_path.empty()) {
        ParamMap pm;
        for (size_t i = 0; i < convs_.size(); ++i)
            convs_[i].collect(pm, "perc.conv" + std::to_string(i));
        serialize::assign_params(pm, serialize::load_checkpoint(cfg.weights_path));
    }
    // frozen: gradients flow through but never into these weights
    for (Conv2d& c : convs_) {
        c.w.node()->requires_grad = false;
        c.w.node()->needs_grad = false;
        c.b.node()->requires_grad = false;
        c.b.node()->needs_grad = false;
    }
}

Var PerceptualExtractor::operator()(const Var& x) const {
    if (!ready()) throw std::logic_error("PerceptualExtractor: not initialized");
    Var h = x;
    for (int s : steps_) {
        if (s == -1) {
            h = max_pool2(h);
        } else {
            h = relu(convs_[static_cast<size_t>(s)](h));
        }
    }
    return h;
}

namespace {

void check_pair(const std::vector<Var>& pred, const std::vector<Var>& gt, const char* op) {
    if (pred.empty() || pred.size() != gt.size())
        throw std::invalid_argument(std::string(op) + ": frame count mismatch");
    for (size_t i = 0; i < pred.size(); ++i)
        if (!pred[i].val().same_shape(gt[i].val()))
            throw std::invalid_argument(std::string(op) + ": frame shape mismatch");
}

}  // namespace

Var l_dblr(const std::vector<Var>& pred, const std::vector<Var>& gt) {
    check_pair(pred, gt, "l_dblr");
    Var acc;
    for (size_t m = 0; m < pred.size(); ++m) {
        Var term = mean_all(abs(sub(pred[m], gt[m])));
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scale(acc, real(1) / static_cast<real>(pred.size()));
}

Var l_perc(const std::vector<Var>& pred, const std::vector<Var>& gt,
           const PerceptualExtractor& extractor) {
    check_pair(pred, gt, "l_perc");
    if (!extractor.ready()) throw std::logic_error("l_perc: extractor unset");
    Var acc;
    for (size_t m = 0; m < pred.size(); ++m) {
        Var term = mean_all(square(sub(extractor(pred[m]), extractor(gt[m]))));
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scale(acc, real(1) / static_cast<real>(pred.size()));
}

Var l_tv(const Var& disp) { return tv_loss(disp); }

LossBreakdown total_loss(const std::vector<Var>& pred, const std::vector<Var>& gt,
                         const Var& disp, const LossWeights& w,
                         const PerceptualExtractor& extractor) {
    LossBreakdown out;
    Var dblr = l_dblr(pred, gt);
    out.dblr = dblr.val()[0];
    Var total = scale(dblr, w.lambda1);
    if (w.lambda2 != 0) {
        Var perc = l_perc(pred, gt, extractor);
        out.perc = perc.val()[0];
        total = add(total, scale(perc, w.lambda2));
    }
    if (w.lambda3 != 0 && disp.defined()) {
        Var tv = l_tv(disp);
        out.tv = tv.val()[0];
        total = add(total, scale(tv, w.lambda3));
    }
    out.total = total;
    return out;
}

}  // namespace sted::losses
