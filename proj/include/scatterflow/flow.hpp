#pragma once

#include "scatterflow/grad.hpp"
#include "scatterflow/physics.hpp"
#include "scatterflow/rng.hpp"

#include <memory>
#include <string>
#include <vector>

namespace sf::flow {

using grad::Array;
using grad::Shape;
using grad::Tape;
using grad::Value;

// Channel/height/width bookkeeping between layers.
struct ChanShape {
    int c = 0, h = 0, w = 0;
    int numel() const { return c * h * w; }
};

// A flow layer: builds forward/inverse computations on a caller-supplied
// tape. Parameters live in the layer (raw arrays); bind() mounts them on a
// tape as leaves. logdet pointers, when non-null, accumulate the
// batch-summed log|det J| of the direction being applied.
class Layer {
public:
    virtual ~Layer() = default;
    virtual std::vector<Value> bind(Tape& t, bool trainable);
    virtual Value forward(Tape& t, Value x, const std::vector<Value>& p, Value* logdet) = 0;
    virtual Value inverse(Tape& t, Value y, const std::vector<Value>& p, Value* logdet) = 0;
    virtual std::vector<Array*> params() { return {}; }
    virtual std::vector<std::string> param_names() const { return {}; }
    virtual ChanShape out_shape(ChanShape in) const { return in; }
    // data-dependent init hook; x holds the layer input batch (forward dir)
    virtual void init_from_batch(const Array&, int) {}
    virtual bool is_actnorm() const { return false; }
};

class ActNorm final : public Layer {
public:
    explicit ActNorm(int channels);
    Value forward(Tape& t, Value x, const std::vector<Value>& p, Value* logdet) override;
    Value inverse(Tape& t, Value y, const std::vector<Value>& p, Value* logdet) override;
    std::vector<Array*> params() override { return {&mu_, &log_sigma_}; }
    std::vector<std::string> param_names() const override { return {"mu", "log_sigma"}; }
    void init_from_batch(const Array& x, int bs) override;
    // init in the inverse direction (used inside h_eta, which consumes data
    // through its inverse)
    void init_from_batch_inverse(const Array& x, int bs);
    bool is_actnorm() const override { return true; }

private:
    int c_;
    Array mu_, log_sigma_;
};

class Conv1x1 final : public Layer {
public:
    // bijective: c_out == c_in; injective (dimension-expanding): c_out = 2*c_in
    Conv1x1(int c_in, int c_out, sf::NormalRng& rng);
    Value forward(Tape& t, Value x, const std::vector<Value>& p, Value* logdet) override;
    Value inverse(Tape& t, Value y, const std::vector<Value>& p, Value* logdet) override;
    std::vector<Array*> params() override { return {&w_}; }
    std::vector<std::string> param_names() const override { return {"w"}; }
    ChanShape out_shape(ChanShape in) const override { return {c_out_, in.h, in.w}; }
    bool injective() const { return c_out_ != c_in_; }

private:
    int c_in_, c_out_;
    Array w_;  // (c_in, c_out)
};

// Affine coupling: x1 passthrough, x2' = s(x1) * x2 + b(x1) with
// s = exp(tanh(scale_net(x1))). Subnetworks are 3-layer 3x3 convs with the
// last layer zero-initialized so the layer starts as the identity.
class Coupling final : public Layer {
public:
    Coupling(int channels, int hidden, sf::NormalRng& rng);
    Value forward(Tape& t, Value x, const std::vector<Value>& p, Value* logdet) override;
    Value inverse(Tape& t, Value y, const std::vector<Value>& p, Value* logdet) override;
    std::vector<Array*> params() override;
    std::vector<std::string> param_names() const override;

private:
    Value subnet(Tape& t, Value in, const std::vector<Value>& p, int base) const;
    int c_, half_, hidden_;
    // scale net then shift net, each (w1,b1,w2,b2,w3,b3)
    std::vector<Array> ws_;
};

// (B,4C,H/2,W/2) <-> (B,C,H,W) rearrangement; volume preserving.
class DepthToSpace final : public Layer {
public:
    Value forward(Tape& t, Value x, const std::vector<Value>&, Value*) override {
        return grad::depth_to_space(x);
    }
    Value inverse(Tape& t, Value y, const std::vector<Value>&, Value*) override {
        return grad::space_to_depth(y);
    }
    ChanShape out_shape(ChanShape in) const override { return {in.c / 4, in.h * 2, in.w * 2}; }
};

struct FlowConfig {
    int n = 32;             // data resolution
    int latent = 64;        // latent dimension d (reshaped to 4x4x4)
    int bij_per_inj = 2;    // interleaved bijective revnet blocks
    int h_blocks = 8;       // bijective subnetwork depth
    int hidden = 32;        // coupling subnet width
    double chi_max = 3.0;   // output scale, contrast units
    std::uint64_t seed = 1;
};

// Injective flow f = g_gamma . h_eta. g expands 4x4x4 -> 1xNxN through
// channel-doubling revnet blocks followed by depth-to-space rearrangements;
// h is a bijective stack on the 4x4x4 latent.
class FlowModel {
public:
    explicit FlowModel(const FlowConfig& cfg);

    const FlowConfig& config() const { return cfg_; }
    int latent_dim() const { return cfg_.latent; }
    int data_n() const { return cfg_.n; }
    double chi_max() const { return cfg_.chi_max; }

    struct Binding {
        std::vector<std::vector<Value>> g, h;
        std::vector<Value> trainable;   // flattened, aligned with trainable_params
        std::vector<Array*> trainable_params;
    };
    Binding bind(Tape& t, bool train_g, bool train_h);

    // tape builders; inputs/outputs in network units ([0,1]-scaled data)
    Value g_forward(Tape& t, Value zprime, const Binding& b, Value* logdet) const;
    Value g_pinv(Tape& t, Value x, const Binding& b) const;
    Value h_forward(Tape& t, Value z, const Binding& b, Value* logdet) const;
    Value h_inverse(Tape& t, Value zprime, const Binding& b, Value* logdet_inv) const;
    // full forward with logdet of f accumulated; z shape (B, d)
    Value f_forward(Tape& t, Value z, const Binding& b, Value* logdet) const;

    // eval-mode helpers (no gradients); batch-major flat arrays
    Array g_forward_eval(const Array& zprime, int bs, double* logdet = nullptr) const;
    Array g_pinv_eval(const Array& x, int bs) const;
    Array h_forward_eval(const Array& z, int bs, double* logdet = nullptr) const;
    Array h_inverse_eval(const Array& zprime, int bs, double* logdet_inv = nullptr) const;

    // data-dependent actnorm init from a batch in network units (bs,1,n,n)
    void initialize_actnorms(const Array& batch, int bs);

    std::vector<std::pair<std::string, Array*>> named_params();
    std::vector<Array*> gamma_params();  // injective subnet + interleaved blocks
    std::vector<Array*> eta_params();    // bijective subnetwork h

    const std::vector<std::unique_ptr<Layer>>& g_layers() const { return g_layers_; }
    const std::vector<std::unique_ptr<Layer>>& h_layers() const { return h_layers_; }

private:
    FlowConfig cfg_;
    std::vector<std::unique_ptr<Layer>> g_layers_;  // z' -> x order
    std::vector<std::unique_ptr<Layer>> h_layers_;  // z -> z' order
};

// ---- spec-level operations (contrast units) ---------------------------------

physics::ContrastGrid flow_forward(const FlowModel& model, const Array& z);
Array injective_pseudo_inverse(const FlowModel& model, const physics::ContrastGrid& x);
physics::ContrastGrid project(const FlowModel& model, const physics::ContrastGrid& x);
Array bijective_inverse(const FlowModel& model, const Array& zprime);
double log_prob(const FlowModel& model, const physics::ContrastGrid& x);
std::vector<physics::ContrastGrid> sample(const FlowModel& model, int count, std::uint64_t seed);

}  // namespace sf::flow
