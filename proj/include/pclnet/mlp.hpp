#pragma once

#include "pclnet/graph.hpp"
#include "pclnet/optim.hpp"

#include <string>
#include <vector>

namespace pclnet {

enum class Act { None, Gelu, Relu };
enum class Mode { Train, Eval };

// One block: FC, then LN -> activation -> BN -> dropout, each optional.
// The ordering fixes the ambiguity in configurations that list both norms.
struct LayerSpec {
    int in = 0;
    int out = 0;
    bool layer_norm = false;
    bool batch_norm = false;
    Act act = Act::None;
    double dropout = 0.0;
};

struct MLPConfig {
    std::vector<LayerSpec> layers; // empty = identity featurizer
    std::uint64_t seed = 0;

    void validate(int input_dim) const {
        int d = input_dim;
        for (const auto& l : layers) {
            if (l.in != d) throw ConfigError("mlp: layer dims do not chain");
            if (l.dropout < 0.0 || l.dropout >= 1.0) throw ConfigError("mlp: dropout must be in [0,1)");
            d = l.out;
        }
    }

    int out_dim(int input_dim) const {
        return layers.empty() ? input_dim : layers.back().out;
    }
};

// convenience builder: hidden widths + per-layer tags, used by the presets
inline MLPConfig mlp_chain(int in, const std::vector<int>& widths, Act act, bool ln, bool bn,
                           double dropout, bool last_act = true, std::uint64_t seed = 0) {
    MLPConfig cfg;
    cfg.seed = seed;
    int d = in;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        LayerSpec l;
        l.in = d;
        l.out = widths[i];
        l.layer_norm = ln;
        l.batch_norm = bn;
        bool last = (i + 1 == widths.size());
        l.act = (last && !last_act) ? Act::None : act;
        l.dropout = last ? 0.0 : dropout;
        cfg.layers.push_back(l);
        d = widths[i];
    }
    return cfg;
}

class Featurizer {
public:
    Featurizer() = default;

    Featurizer(MLPConfig cfg, int input_dim, std::string name = "mlp")
        : cfg_(std::move(cfg)), input_dim_(input_dim), name_(std::move(name)),
          drop_rng_(cfg_.seed, 0x5eed) {
        cfg_.validate(input_dim_);
        Rng init(cfg_.seed, 0x1417);
        int idx = 0;
        for (const auto& spec : cfg_.layers) {
            LayerParams lp;
            double bound = std::sqrt(6.0 / static_cast<double>(spec.in + spec.out));
            Mat w(spec.in, spec.out);
            for (long i = 0; i < w.rows(); ++i)
                for (long j = 0; j < w.cols(); ++j) w(i, j) = init.uniform(-bound, bound);
            std::string tag = name_ + ".l" + std::to_string(idx);
            lp.w = ad::param(std::move(w), tag + ".w");
            lp.b = ad::param(Mat::Zero(1, spec.out), tag + ".b");
            if (spec.layer_norm) {
                lp.ln_g = ad::param(Mat::Ones(1, spec.out), tag + ".ln_g");
                lp.ln_b = ad::param(Mat::Zero(1, spec.out), tag + ".ln_b");
            }
            if (spec.batch_norm) {
                lp.bn_g = ad::param(Mat::Ones(1, spec.out), tag + ".bn_g");
                lp.bn_b = ad::param(Mat::Zero(1, spec.out), tag + ".bn_b");
            }
            layers_.push_back(std::move(lp));
            ++idx;
        }
    }

    // rows are samples
    ad::NodePtr forward(const ad::NodePtr& x, Mode mode) {
        require(x->cols() == input_dim_, name_ + ": input has " + std::to_string(x->cols()) +
                                             " cols, expected " + std::to_string(input_dim_));
        ad::NodePtr h = x;
        const bool train = (mode == Mode::Train);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& spec = cfg_.layers[i];
            auto& lp = layers_[i];
            h = ad::add_rowvec(ad::matmul(h, lp.w), lp.b);
            if (spec.layer_norm) h = ad::layer_norm(h, lp.ln_g, lp.ln_b);
            switch (spec.act) {
                case Act::Gelu: h = ad::gelu(h); break;
                case Act::Relu: h = ad::relu(h); break;
                case Act::None: break;
            }
            if (spec.batch_norm) h = ad::batch_norm(h, lp.bn_g, lp.bn_b, lp.bn_state, train);
            if (spec.dropout > 0.0) h = ad::dropout(h, spec.dropout, drop_rng_, train);
        }
        return h;
    }

    ad::NodePtr forward(const Mat& x, Mode mode) { return forward(ad::constant(x), mode); }

    // eval-mode forward returning a plain matrix, no graph
    Mat eval(const Mat& x) { return forward(ad::constant(x), Mode::Eval)->value; }

    std::vector<ad::NodePtr> params() const {
        std::vector<ad::NodePtr> out;
        for (const auto& lp : layers_) {
            out.push_back(lp.w);
            out.push_back(lp.b);
            if (lp.ln_g) { out.push_back(lp.ln_g); out.push_back(lp.ln_b); }
            if (lp.bn_g) { out.push_back(lp.bn_g); out.push_back(lp.bn_b); }
        }
        return out;
    }

    int out_dim() const { return cfg_.out_dim(input_dim_); }
    int in_dim() const { return input_dim_; }
    const MLPConfig& config() const { return cfg_; }
    const std::string& name() const { return name_; }

    // running statistics included so eval after load matches eval before save
    std::vector<std::pair<std::string, Mat*>> state_entries() {
        bn_mats_.clear();
        std::vector<std::pair<std::string, Mat*>> out;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& lp = layers_[i];
            std::string tag = "l" + std::to_string(i);
            out.push_back({tag + ".w", &lp.w->value});
            out.push_back({tag + ".b", &lp.b->value});
            if (lp.ln_g) {
                out.push_back({tag + ".ln_g", &lp.ln_g->value});
                out.push_back({tag + ".ln_b", &lp.ln_b->value});
            }
            if (lp.bn_g) {
                out.push_back({tag + ".bn_g", &lp.bn_g->value});
                out.push_back({tag + ".bn_b", &lp.bn_b->value});
                if (!lp.bn_state.initialized) {
                    lp.bn_state.running_mean = Vec::Zero(lp.bn_g->cols());
                    lp.bn_state.running_var = Vec::Ones(lp.bn_g->cols());
                    lp.bn_state.initialized = true;
                }
                bn_mats_.push_back(std::make_unique<Mat>(lp.bn_state.running_mean.transpose()));
                out.push_back({tag + ".bn_mean", bn_mats_.back().get()});
                bn_mats_.push_back(std::make_unique<Mat>(lp.bn_state.running_var.transpose()));
                out.push_back({tag + ".bn_var", bn_mats_.back().get()});
            }
        }
        return out;
    }

    void sync_bn_from_state_entries() {
        std::size_t k = 0;
        for (auto& lp : layers_) {
            if (!lp.bn_g) continue;
            lp.bn_state.running_mean = bn_mats_[k++]->row(0).transpose();
            lp.bn_state.running_var = bn_mats_[k++]->row(0).transpose();
            lp.bn_state.initialized = true;
        }
    }

private:
    struct LayerParams {
        ad::NodePtr w, b, ln_g, ln_b, bn_g, bn_b;
        ad::BatchNormState bn_state;
    };

    MLPConfig cfg_;
    int input_dim_ = 0;
    std::string name_;
    Rng drop_rng_{0};
    std::vector<LayerParams> layers_;
    std::vector<std::unique_ptr<Mat>> bn_mats_;
};

} // namespace pclnet
