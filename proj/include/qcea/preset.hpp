#pragma once

#include <string>
#include <vector>

#include "qcea/common.hpp"
#include "qcea/model.hpp"
#include "qcea/synthetic.hpp"
#include "qcea/training.hpp"

namespace qcea {

// A preset bundles generator, model and training defaults so experiment
// pipelines are one-liners. Explicit flags override preset values.
struct Preset {
    std::string name;
    SyntheticSpec spec;
    int d = 64;
    int rank_s = 4, rank_o = 32, rank_i = 32;
    int gcn_layers = 2;
    TrainConfig train;
};

inline Preset preset_tiny() {
    Preset p;
    p.name = "tiny";
    p.spec.n_tcm = 20;
    p.spec.n_wm = 20;
    p.spec.anchored_concepts = 12;
    p.spec.latent_dim = 4;
    p.spec.d_q = p.spec.d_T = p.spec.d_W = 16;
    p.spec.sigma = 0.0;
    p.spec.edges_per_entity = 2;
    p.d = 16;
    p.rank_s = 2;
    p.rank_o = 4;
    p.rank_i = 4;
    p.train.epochs = 300;
    p.train.batch_size = 16;
    p.train.negatives = 64;
    p.train.lambda_reg = 1e-6;
    p.train.patience = 40;
    p.train.lr = 3e-3;
    p.train.lr_decay_stagnation = 40;
    return p;
}

inline Preset preset_small() {
    Preset p;
    p.name = "small";
    p.spec.n_tcm = 200;
    p.spec.n_wm = 200;
    p.spec.anchored_concepts = 110;
    p.spec.many_to_many_fraction = 0.2;
    p.spec.latent_dim = 16;
    p.spec.d_q = p.spec.d_T = p.spec.d_W = 32;
    p.spec.sigma = 0.05;
    p.spec.edges_per_entity = 2;
    p.d = 64;
    p.rank_s = 4;
    p.rank_o = 32;
    p.rank_i = 32;
    p.train.epochs = 300;
    p.train.batch_size = 64;
    p.train.negatives = 1024;
    p.train.lambda_reg = 1e-6;
    p.train.patience = 30;
    p.train.lr = 3e-3;
    p.train.lr_decay_stagnation = 40;
    return p;
}

// Context-split benchmark: 40 sources with two descriptions each, mapping to
// distinct targets.
inline Preset preset_context() {
    Preset p = preset_small();
    p.name = "context";
    p.spec.anchored_concepts = 120;
    p.spec.many_to_many_fraction = 0.0;
    p.spec.context_split_fraction = 1.0 / 3.0;
    p.spec.sigma = 0.02;
    return p;
}

inline Preset preset_paper_scale() {
    Preset p;
    p.name = "paper-scale-synthetic";
    p.spec.n_tcm = 1048;
    p.spec.n_wm = 3568;
    p.spec.anchored_concepts = 600;
    p.spec.many_to_many_fraction = 0.3;
    p.spec.context_split_fraction = 0.05;
    p.spec.latent_dim = 32;
    p.spec.d_q = p.spec.d_T = p.spec.d_W = 96;
    p.spec.sigma = 0.05;
    p.spec.edges_per_entity = 4;
    p.d = 256;
    p.rank_s = 16;
    p.rank_o = 128;
    p.rank_i = 128;
    p.train.epochs = 300;
    p.train.batch_size = 64;
    p.train.negatives = 1024;
    p.train.lambda_reg = 1e-6;
    p.train.patience = 15;
    return p;
}

inline Preset preset_by_name(const std::string& name) {
    if (name == "tiny") return preset_tiny();
    if (name == "small") return preset_small();
    if (name == "context") return preset_context();
    if (name == "paper-scale-synthetic") return preset_paper_scale();
    fail(errkind::invalid_argument, "unknown preset '" + name + "'");
}

inline std::vector<std::string> preset_names() {
    return {"tiny", "small", "context", "paper-scale-synthetic"};
}

}  // namespace qcea
