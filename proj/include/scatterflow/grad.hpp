#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace sf::grad {

using Array = Eigen::ArrayXd;
using Shape = std::vector<int>;

int numel(const Shape& shape);

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Value {
    Tape* tape = nullptr;
    int idx = -1;

    const Array& data() const;
    const Shape& shape() const;
    double scalar() const;
};

struct Node {
    Shape shape;
    Array val;
    bool requires_grad = false;  // set on leaves
    bool active = false;         // reaches some requires_grad leaf
    std::vector<int> inputs;
    // accumulates into grads[input] given the output cotangent
    std::function<void(const Array& gout, Tape&, std::vector<Array>& grads)> vjp;
    std::string op;
};

class Tape {
public:
    Value leaf(Array data, Shape shape, bool requires_grad = false);
    Value constant(double v);

    Node& node(int i) { return nodes_[i]; }
    const Node& node(int i) const { return nodes_[i]; }
    int size() const { return static_cast<int>(nodes_.size()); }

    Value make(Shape shape, Array val, std::vector<int> inputs,
               std::function<void(const Array&, Tape&, std::vector<Array>&)> vjp,
               std::string op);

    // Reverse sweep from a scalar root. Returns one gradient slot per node
    // (empty Array = zero / not reached).
    std::vector<Array> backward(Value root);

    static void accumulate(std::vector<Array>& grads, const Node& node, int idx,
                           const Array& add);

private:
    std::vector<Node> nodes_;
};

// ---- primitives ------------------------------------------------------------

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value div(Value a, Value b);
Value scale(Value a, double c);       // c * a
Value offset(Value a, double c);      // a + c
Value neg(Value a);
Value exp(Value a);
Value log(Value a);
Value tanh(Value a);
Value leaky_relu(Value a, double alpha);
Value sum(Value a);                   // scalar
Value mean(Value a);
Value matmul(Value a, Value b);       // (m,k) x (k,n)
Value transpose(Value a);             // 2-D
Value matinv(Value a);                // square
Value logdet_abs(Value a);            // scalar log|det a|
Value reshape(Value a, Shape shape);

// image ops on (B, C, H, W)
Value conv2d(Value x, Value w, Value b);             // 3x3, stride 1, same padding
Value conv1x1(Value x, Value w);                     // w: (Cin, Cout)
Value channel_scale_shift(Value x, Value a, Value b);  // y = a[c]*x + b[c]
Value slice_channels(Value x, int c0, int c1);       // channels [c0, c1)
Value concat_channels(Value a, Value b);
Value space_to_depth(Value x);                       // (B,C,H,W) -> (B,4C,H/2,W/2)
Value depth_to_space(Value x);                       // inverse rearrangement

// Registers an externally computed primitive: the forward value and its VJP
// w.r.t. the single input are supplied by the caller (e.g. the scattering
// misfit, whose gradient comes from an adjoint solve).
Value custom_scalar(Value x, double value, Array grad_x, std::string op);

// serial reference kernel, kept for the benchmark and cross-checks
void conv2d_forward_serial(const Array& x, const Array& w, const Array& b, int bs, int ci,
                           int co, int h, int wdt, Array& out);
void conv2d_forward_omp(const Array& x, const Array& w, const Array& b, int bs, int ci, int co,
                        int h, int wdt, Array& out);

// ---- optimizer -------------------------------------------------------------

struct AdamState {
    std::vector<Array> m, v;
    long step = 0;
};

// standard bias-corrected Adam; state arrays are created lazily on first call
void adam_step(const std::vector<Array*>& params, const std::vector<Array>& grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

}  // namespace sf::grad
