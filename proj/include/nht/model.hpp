#pragma once

#include <vector>

#include "nht/harmonic.hpp"
#include "nht/image.hpp"
#include "nht/interp.hpp"
#include "nht/mesh.hpp"
#include "nht/nn.hpp"
#include "nht/splat2d.hpp"

namespace nht {

// Trained mesh-mode model. The decoder consumes the EMA weights; the raw
// weights are kept for resumed training and are not serialized.
struct MeshModel {
    Mesh mesh;
    FeatureField field;
    MlpParams mlp;
    std::vector<double> mlp_ema;
    EncodeMode encoding = EncodeMode::SinCos;
    CtScheme scheme = CtScheme::MacroC1;
    double mu = kDefaultMu;
    double white_level = kDefaultWhiteLevel;
    int width = 0, height = 0;

    MuLawParams mulaw() const { return {mu, white_level}; }
    MlpParams ema_mlp() const {
        MlpParams p = mlp;
        if (mlp_ema.size() == p.theta.size()) p.theta = mlp_ema;
        return p;
    }
};

struct SplatModel {
    SplatSet set;
    MlpParams mlp;
    std::vector<double> mlp_ema;
    double dir_scale = 1.0;
    double focal_scale = 1.0;
    int width = 0, height = 0;

    MlpParams ema_mlp() const {
        MlpParams p = mlp;
        if (mlp_ema.size() == p.theta.size()) p.theta = mlp_ema;
        return p;
    }
};

enum class ModelMode : uint8_t { MeshFit = 0, Splat = 1 };

struct Model {
    ModelMode mode = ModelMode::MeshFit;
    MeshModel mesh;
    SplatModel splat;
};

}  // namespace nht
