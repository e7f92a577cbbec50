#include "scatterflow/grad.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sf::grad {

namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
    std::ostringstream os;
    os << op << ": shape mismatch (";
    for (int d : a) os << d << " ";
    os << ") vs (";
    for (int d : b) os << d << " ";
    os << ")";
    throw std::invalid_argument(os.str());
}

void check_same_shape(const std::string& op, Value a, Value b) {
    if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

}  // namespace

int numel(const Shape& shape) {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
}

const Array& Value::data() const { return tape->node(idx).val; }
const Shape& Value::shape() const { return tape->node(idx).shape; }
double Value::scalar() const {
    if (numel(shape()) != 1) throw std::logic_error("Value::scalar: not a scalar");
    return data()(0);
}

Value Tape::leaf(Array data, Shape shape, bool requires_grad) {
    if (static_cast<int>(data.size()) != numel(shape))
        throw std::invalid_argument("Tape::leaf: data/shape mismatch");
    Node n;
    n.shape = std::move(shape);
    n.val = std::move(data);
    n.requires_grad = requires_grad;
    n.active = requires_grad;
    n.op = "leaf";
    nodes_.push_back(std::move(n));
    return {this, size() - 1};
}

Value Tape::constant(double v) { return leaf(Array::Constant(1, v), {1}, false); }

Value Tape::make(Shape shape, Array val, std::vector<int> inputs,
                 std::function<void(const Array&, Tape&, std::vector<Array>&)> vjp,
                 std::string op) {
    if (static_cast<int>(val.size()) != numel(shape))
        throw std::logic_error(op + ": value/shape mismatch");
    bool active = false;
    for (int i : inputs) active = active || nodes_[i].active;
    Node n;
    n.shape = std::move(shape);
    n.val = std::move(val);
    n.inputs = std::move(inputs);
    n.active = active;
    if (active) n.vjp = std::move(vjp);
    n.op = std::move(op);
    nodes_.push_back(std::move(n));
    return {this, size() - 1};
}

void Tape::accumulate(std::vector<Array>& grads, const Node& node, int idx, const Array& add) {
    if (!node.active) return;
    if (grads[idx].size() == 0)
        grads[idx] = add;
    else
        grads[idx] += add;
}

std::vector<Array> Tape::backward(Value root) {
    if (root.tape != this) throw std::logic_error("backward: value from another tape");
    if (numel(node(root.idx).shape) != 1)
        throw std::invalid_argument("backward: root must be a scalar");
    std::vector<Array> grads(nodes_.size());
    grads[root.idx] = Array::Constant(1, 1.0);
    for (int i = root.idx; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.active || !n.vjp || grads[i].size() == 0) continue;
        n.vjp(grads[i], *this, grads);
    }
    return grads;
}

// ---- elementwise -----------------------------------------------------------

Value add(Value a, Value b) {
    check_same_shape("add", a, b);
    int ia = a.idx, ib = b.idx;
    return a.tape->make(
        a.shape(), a.data() + b.data(), {ia, ib},
        [ia, ib](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, g);
            Tape::accumulate(gr, t.node(ib), ib, g);
        },
        "add");
}

Value sub(Value a, Value b) {
    check_same_shape("sub", a, b);
    int ia = a.idx, ib = b.idx;
    return a.tape->make(
        a.shape(), a.data() - b.data(), {ia, ib},
        [ia, ib](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, g);
            Tape::accumulate(gr, t.node(ib), ib, Array(-g));
        },
        "sub");
}

Value mul(Value a, Value b) {
    check_same_shape("mul", a, b);
    int ia = a.idx, ib = b.idx;
    return a.tape->make(
        a.shape(), a.data() * b.data(), {ia, ib},
        [ia, ib](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, Array(g * t.node(ib).val));
            Tape::accumulate(gr, t.node(ib), ib, Array(g * t.node(ia).val));
        },
        "mul");
}

Value div(Value a, Value b) {
    check_same_shape("div", a, b);
    int ia = a.idx, ib = b.idx;
    return a.tape->make(
        a.shape(), a.data() / b.data(), {ia, ib},
        [ia, ib](const Array& g, Tape& t, std::vector<Array>& gr) {
            const Array& bv = t.node(ib).val;
            Tape::accumulate(gr, t.node(ia), ia, Array(g / bv));
            Tape::accumulate(gr, t.node(ib), ib, Array(-g * t.node(ia).val / (bv * bv)));
        },
        "div");
}

Value scale(Value a, double c) {
    int ia = a.idx;
    return a.tape->make(
        a.shape(), a.data() * c, {ia},
        [ia, c](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, Array(g * c));
        },
        "scale");
}

Value offset(Value a, double c) {
    int ia = a.idx;
    return a.tape->make(
        a.shape(), a.data() + c, {ia},
        [ia](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, g);
        },
        "offset");
}

Value neg(Value a) { return scale(a, -1.0); }

Value exp(Value a) {
    int ia = a.idx;
    Array v = a.data().exp();
    return a.tape->make(
        a.shape(), v, {ia},
        [ia, v](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, Array(g * v));
        },
        "exp");
}

Value log(Value a) {
    int ia = a.idx;
    return a.tape->make(
        a.shape(), a.data().log(), {ia},
        [ia](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, Array(g / t.node(ia).val));
        },
        "log");
}

Value tanh(Value a) {
    int ia = a.idx;
    Array v = a.data().tanh();
    return a.tape->make(
        a.shape(), v, {ia},
        [ia, v](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, Array(g * (1.0 - v * v)));
        },
        "tanh");
}

Value leaky_relu(Value a, double alpha) {
    int ia = a.idx;
    const Array& x = a.data();
    Array v = (x >= 0.0).select(x, alpha * x);
    return a.tape->make(
        a.shape(), v, {ia},
        [ia, alpha](const Array& g, Tape& t, std::vector<Array>& gr) {
            const Array& x = t.node(ia).val;
            Tape::accumulate(gr, t.node(ia), ia, Array((x >= 0.0).select(g, alpha * g)));
        },
        "leaky_relu");
}

Value sum(Value a) {
    int ia = a.idx;
    return a.tape->make(
        {1}, Array::Constant(1, a.data().sum()), {ia},
        [ia](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia,
                             Array::Constant(t.node(ia).val.size(), g(0)));
        },
        "sum");
}

Value mean(Value a) { return scale(sum(a), 1.0 / numel(a.shape())); }

// ---- small dense linear algebra ---------------------------------------------

namespace {
Eigen::MatrixXd to_mat(const Array& a, int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = a(r * cols + c);
    return m;
}

Array from_mat(const Eigen::MatrixXd& m) {
    Array a(m.rows() * m.cols());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) a(r * m.cols() + c) = m(r, c);
    return a;
}
}  // namespace

Value matmul(Value a, Value b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_error("matmul", sa, sb);
    int m = sa[0], k = sa[1], n = sb[1];
    Eigen::MatrixXd ma = to_mat(a.data(), m, k);
    Eigen::MatrixXd mb = to_mat(b.data(), k, n);
    int ia = a.idx, ib = b.idx;
    return a.tape->make(
        {m, n}, from_mat(ma * mb), {ia, ib},
        [ia, ib, m, k, n](const Array& g, Tape& t, std::vector<Array>& gr) {
            Eigen::MatrixXd mg = to_mat(g, m, n);
            Eigen::MatrixXd ma = to_mat(t.node(ia).val, m, k);
            Eigen::MatrixXd mb = to_mat(t.node(ib).val, k, n);
            Tape::accumulate(gr, t.node(ia), ia, from_mat(mg * mb.transpose()));
            Tape::accumulate(gr, t.node(ib), ib, from_mat(ma.transpose() * mg));
        },
        "matmul");
}

Value transpose(Value a) {
    const Shape& s = a.shape();
    if (s.size() != 2) throw std::invalid_argument("transpose: needs a 2-D tensor");
    int m = s[0], n = s[1];
    int ia = a.idx;
    return a.tape->make(
        {n, m}, from_mat(to_mat(a.data(), m, n).transpose()), {ia},
        [ia, m, n](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, from_mat(to_mat(g, n, m).transpose()));
        },
        "transpose");
}

Value matinv(Value a) {
    const Shape& s = a.shape();
    if (s.size() != 2 || s[0] != s[1]) throw std::invalid_argument("matinv: needs square matrix");
    int n = s[0];
    Eigen::MatrixXd inv = to_mat(a.data(), n, n).inverse();
    int ia = a.idx;
    return a.tape->make(
        s, from_mat(inv), {ia},
        [ia, n, inv](const Array& g, Tape& t, std::vector<Array>& gr) {
            Eigen::MatrixXd mg = to_mat(g, n, n);
            Tape::accumulate(gr, t.node(ia), ia,
                             from_mat((-inv.transpose() * mg * inv.transpose()).eval()));
        },
        "matinv");
}

Value logdet_abs(Value a) {
    const Shape& s = a.shape();
    if (s.size() != 2 || s[0] != s[1])
        throw std::invalid_argument("logdet_abs: needs square matrix");
    int n = s[0];
    Eigen::MatrixXd m = to_mat(a.data(), n, n);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    double ld = 0.0;
    for (int i = 0; i < n; ++i) ld += std::log(std::abs(lu.matrixLU()(i, i)));
    Eigen::MatrixXd inv_t = lu.inverse().transpose();
    int ia = a.idx;
    return a.tape->make(
        {1}, Array::Constant(1, ld), {ia},
        [ia, inv_t](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, Array(from_mat(inv_t) * g(0)));
        },
        "logdet_abs");
}

Value reshape(Value a, Shape shape) {
    if (numel(shape) != numel(a.shape())) shape_error("reshape", a.shape(), shape);
    int ia = a.idx;
    return a.tape->make(
        std::move(shape), a.data(), {ia},
        [ia](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ia), ia, g);
        },
        "reshape");
}

// ---- image ops ---------------------------------------------------------------

namespace {
inline int off4(int b, int c, int h, int w, int C, int H, int W) {
    return ((b * C + c) * H + h) * W + w;
}
}  // namespace

void conv2d_forward_serial(const Array& x, const Array& w, const Array& b, int bs, int ci,
                           int co, int h, int wdt, Array& out) {
    out = Array::Zero(bs * co * h * wdt);
    for (int n = 0; n < bs; ++n)
        for (int o = 0; o < co; ++o)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < wdt; ++xx) {
                    double acc = b(o);
                    for (int i = 0; i < ci; ++i)
                        for (int kh = 0; kh < 3; ++kh) {
                            int yy = y + kh - 1;
                            if (yy < 0 || yy >= h) continue;
                            for (int kw = 0; kw < 3; ++kw) {
                                int xs = xx + kw - 1;
                                if (xs < 0 || xs >= wdt) continue;
                                acc += w(((o * ci + i) * 3 + kh) * 3 + kw) *
                                       x(off4(n, i, yy, xs, ci, h, wdt));
                            }
                        }
                    out(off4(n, o, y, xx, co, h, wdt)) = acc;
                }
}

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// im2col for one (C,H,W) image: rows indexed by (i,kh,kw), cols by pixel
void im2col3x3(const double* x, int ci, int h, int w, Eigen::MatrixXd& cols) {
    cols.setZero(ci * 9, h * w);
    for (int i = 0; i < ci; ++i)
        for (int kh = 0; kh < 3; ++kh)
            for (int kw = 0; kw < 3; ++kw) {
                int row = (i * 3 + kh) * 3 + kw;
                for (int y = 0; y < h; ++y) {
                    int yy = y + kh - 1;
                    if (yy < 0 || yy >= h) continue;
                    for (int xx = 0; xx < w; ++xx) {
                        int xs = xx + kw - 1;
                        if (xs < 0 || xs >= w) continue;
                        cols(row, y * w + xx) = x[(i * h + yy) * w + xs];
                    }
                }
            }
}

void col2im3x3_add(const Eigen::MatrixXd& cols, int ci, int h, int w, double* gx) {
    for (int i = 0; i < ci; ++i)
        for (int kh = 0; kh < 3; ++kh)
            for (int kw = 0; kw < 3; ++kw) {
                int row = (i * 3 + kh) * 3 + kw;
                for (int y = 0; y < h; ++y) {
                    int yy = y + kh - 1;
                    if (yy < 0 || yy >= h) continue;
                    for (int xx = 0; xx < w; ++xx) {
                        int xs = xx + kw - 1;
                        if (xs < 0 || xs >= w) continue;
                        gx[(i * h + yy) * w + xs] += cols(row, y * w + xx);
                    }
                }
            }
}
}  // namespace

void conv2d_forward_omp(const Array& x, const Array& w, const Array& b, int bs, int ci, int co,
                        int h, int wdt, Array& out) {
    // im2col + GEMM; parallel across the batch
    out.resize(bs * co * h * wdt);
    const int hw = h * wdt;
    Eigen::Map<const RowMat> wm(w.data(), co, ci * 9);
#pragma omp parallel
    {
        Eigen::MatrixXd cols;
#pragma omp for schedule(static)
        for (int n = 0; n < bs; ++n) {
            im2col3x3(&x(n * ci * hw), ci, h, wdt, cols);
            Eigen::Map<RowMat> ym(&out(n * co * hw), co, hw);
            ym.noalias() = wm * cols;
            ym.colwise() += Eigen::Map<const Eigen::VectorXd>(b.data(), co);
        }
    }
}

Value conv2d(Value x, Value w, Value b) {
    const Shape& sx = x.shape();
    const Shape& sw = w.shape();
    if (sx.size() != 4 || sw.size() != 4 || sw[2] != 3 || sw[3] != 3 || sw[1] != sx[1])
        shape_error("conv2d", sx, sw);
    if (b.shape() != Shape{sw[0]}) shape_error("conv2d(bias)", b.shape(), {sw[0]});
    int bs = sx[0], ci = sx[1], h = sx[2], wd = sx[3], co = sw[0];
    Array out;
    conv2d_forward_omp(x.data(), w.data(), b.data(), bs, ci, co, h, wd, out);
    int ix = x.idx, iw = w.idx, ib = b.idx;
    return x.tape->make(
        {bs, co, h, wd}, std::move(out), {ix, iw, ib},
        [ix, iw, ib, bs, ci, co, h, wd](const Array& g, Tape& t, std::vector<Array>& gr) {
            const Array& xv = t.node(ix).val;
            const Array& wv = t.node(iw).val;
            const int hw = h * wd;
            Array gx = Array::Zero(xv.size());
            Array gw = Array::Zero(wv.size());
            Array gb = Array::Zero(co);
            Eigen::Map<const RowMat> wm(wv.data(), co, ci * 9);
            Eigen::Map<RowMat> gwm(gw.data(), co, ci * 9);
            Eigen::MatrixXd cols, dcols;
            for (int n = 0; n < bs; ++n) {
                Eigen::Map<const RowMat> gm(&g(n * co * hw), co, hw);
                Eigen::VectorXd rs = gm.rowwise().sum();
                gb += rs.array();
                im2col3x3(&xv(n * ci * hw), ci, h, wd, cols);
                gwm.noalias() += gm * cols.transpose();
                dcols.noalias() = wm.transpose() * gm;
                col2im3x3_add(dcols, ci, h, wd, &gx(n * ci * hw));
            }
            Tape::accumulate(gr, t.node(ix), ix, gx);
            Tape::accumulate(gr, t.node(iw), iw, gw);
            Tape::accumulate(gr, t.node(ib), ib, gb);
        },
        "conv2d");
}

Value conv1x1(Value x, Value w) {
    const Shape& sx = x.shape();
    const Shape& sw = w.shape();
    if (sx.size() != 4 || sw.size() != 2 || sw[0] != sx[1]) shape_error("conv1x1", sx, sw);
    int bs = sx[0], ci = sx[1], h = sx[2], wd = sx[3], co = sw[1];
    const Array& xv = x.data();
    const Array& wv = w.data();
    const int hw = h * wd;
    Array out(bs * co * hw);
    Eigen::Map<const RowMat> wm(wv.data(), ci, co);  // y = w^T x along channels
    for (int n = 0; n < bs; ++n) {
        Eigen::Map<const RowMat> xm(&xv(n * ci * hw), ci, hw);
        Eigen::Map<RowMat> ym(&out(n * co * hw), co, hw);
        ym.noalias() = wm.transpose() * xm;
    }
    int ix = x.idx, iw = w.idx;
    return x.tape->make(
        {bs, co, h, wd}, std::move(out), {ix, iw},
        [ix, iw, bs, ci, co, hw](const Array& g, Tape& t, std::vector<Array>& gr) {
            const Array& xv = t.node(ix).val;
            const Array& wv = t.node(iw).val;
            Array gx(xv.size());
            Array gw = Array::Zero(wv.size());
            Eigen::Map<const RowMat> wm(wv.data(), ci, co);
            Eigen::Map<RowMat> gwm(gw.data(), ci, co);
            for (int n = 0; n < bs; ++n) {
                Eigen::Map<const RowMat> gm(&g(n * co * hw), co, hw);
                Eigen::Map<const RowMat> xm(&xv(n * ci * hw), ci, hw);
                Eigen::Map<RowMat> gxm(&gx(n * ci * hw), ci, hw);
                gxm.noalias() = wm * gm;
                gwm.noalias() += xm * gm.transpose();
            }
            Tape::accumulate(gr, t.node(ix), ix, gx);
            Tape::accumulate(gr, t.node(iw), iw, gw);
        },
        "conv1x1");
}

Value channel_scale_shift(Value x, Value a, Value b) {
    const Shape& sx = x.shape();
    if (sx.size() != 4) throw std::invalid_argument("channel_scale_shift: x must be 4-D");
    int bs = sx[0], c = sx[1], hw = sx[2] * sx[3];
    if (a.shape() != Shape{c} || b.shape() != Shape{c})
        shape_error("channel_scale_shift", a.shape(), {c});
    const Array& xv = x.data();
    const Array& av = a.data();
    const Array& bv = b.data();
    Array out(xv.size());
    for (int n = 0; n < bs; ++n)
        for (int i = 0; i < c; ++i)
            out.segment((n * c + i) * hw, hw) = av(i) * xv.segment((n * c + i) * hw, hw) + bv(i);
    int ix = x.idx, ia = a.idx, ib = b.idx;
    return x.tape->make(
        sx, std::move(out), {ix, ia, ib},
        [ix, ia, ib, bs, c, hw](const Array& g, Tape& t, std::vector<Array>& gr) {
            const Array& xv = t.node(ix).val;
            const Array& av = t.node(ia).val;
            Array gx(xv.size());
            Array ga = Array::Zero(c);
            Array gb = Array::Zero(c);
            for (int n = 0; n < bs; ++n)
                for (int i = 0; i < c; ++i) {
                    auto gs = g.segment((n * c + i) * hw, hw);
                    gx.segment((n * c + i) * hw, hw) = av(i) * gs;
                    ga(i) += (gs * xv.segment((n * c + i) * hw, hw)).sum();
                    gb(i) += gs.sum();
                }
            Tape::accumulate(gr, t.node(ix), ix, gx);
            Tape::accumulate(gr, t.node(ia), ia, ga);
            Tape::accumulate(gr, t.node(ib), ib, gb);
        },
        "channel_scale_shift");
}

Value slice_channels(Value x, int c0, int c1) {
    const Shape& sx = x.shape();
    if (sx.size() != 4 || c0 < 0 || c1 > sx[1] || c0 >= c1)
        throw std::invalid_argument("slice_channels: bad channel range");
    int bs = sx[0], c = sx[1], hw = sx[2] * sx[3];
    int nc = c1 - c0;
    const Array& xv = x.data();
    Array out(bs * nc * hw);
    for (int n = 0; n < bs; ++n)
        out.segment(n * nc * hw, nc * hw) = xv.segment((n * c + c0) * hw, nc * hw);
    int ix = x.idx;
    return x.tape->make(
        {bs, nc, sx[2], sx[3]}, std::move(out), {ix},
        [ix, bs, c, c0, nc, hw](const Array& g, Tape& t, std::vector<Array>& gr) {
            Array gx = Array::Zero(t.node(ix).val.size());
            for (int n = 0; n < bs; ++n)
                gx.segment((n * c + c0) * hw, nc * hw) = g.segment(n * nc * hw, nc * hw);
            Tape::accumulate(gr, t.node(ix), ix, gx);
        },
        "slice_channels");
}

Value concat_channels(Value a, Value b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
        shape_error("concat_channels", sa, sb);
    int bs = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
    int c = ca + cb;
    const Array& av = a.data();
    const Array& bv = b.data();
    Array out(bs * c * hw);
    for (int n = 0; n < bs; ++n) {
        out.segment(n * c * hw, ca * hw) = av.segment(n * ca * hw, ca * hw);
        out.segment((n * c + ca) * hw, cb * hw) = bv.segment(n * cb * hw, cb * hw);
    }
    int ia = a.idx, ib = b.idx;
    return a.tape->make(
        {bs, c, sa[2], sa[3]}, std::move(out), {ia, ib},
        [ia, ib, bs, ca, cb, c, hw](const Array& g, Tape& t, std::vector<Array>& gr) {
            Array ga(bs * ca * hw), gb(bs * cb * hw);
            for (int n = 0; n < bs; ++n) {
                ga.segment(n * ca * hw, ca * hw) = g.segment(n * c * hw, ca * hw);
                gb.segment(n * cb * hw, cb * hw) = g.segment((n * c + ca) * hw, cb * hw);
            }
            Tape::accumulate(gr, t.node(ia), ia, ga);
            Tape::accumulate(gr, t.node(ib), ib, gb);
        },
        "concat_channels");
}

namespace {
// index permutation for space_to_depth: out[b, 4c..., h/2, w/2]
std::vector<int> s2d_perm(int bs, int c, int h, int w) {
    int h2 = h / 2, w2 = w / 2;
    std::vector<int> perm(bs * c * h * w);
    int k = 0;
    for (int n = 0; n < bs; ++n)
        for (int sub = 0; sub < 4; ++sub)  // (dy, dx) subcell
            for (int i = 0; i < c; ++i)
                for (int y = 0; y < h2; ++y)
                    for (int x = 0; x < w2; ++x) {
                        int dy = sub / 2, dx = sub % 2;
                        perm[k++] = off4(n, i, 2 * y + dy, 2 * x + dx, c, h, w);
                    }
    return perm;
}
}  // namespace

Value space_to_depth(Value x) {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[2] % 2 || s[3] % 2)
        throw std::invalid_argument("space_to_depth: H and W must be even");
    int bs = s[0], c = s[1], h = s[2], w = s[3];
    auto perm = s2d_perm(bs, c, h, w);
    const Array& xv = x.data();
    Array out(xv.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out(i) = xv(perm[i]);
    int ix = x.idx;
    return x.tape->make(
        {bs, 4 * c, h / 2, w / 2}, std::move(out), {ix},
        [ix, perm](const Array& g, Tape& t, std::vector<Array>& gr) {
            Array gx(g.size());
            for (std::size_t i = 0; i < perm.size(); ++i) gx(perm[i]) = g(i);
            Tape::accumulate(gr, t.node(ix), ix, gx);
        },
        "space_to_depth");
}

Value depth_to_space(Value x) {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] % 4)
        throw std::invalid_argument("depth_to_space: channels must be divisible by 4");
    int bs = s[0], c = s[1] / 4, h = s[2] * 2, w = s[3] * 2;
    auto perm = s2d_perm(bs, c, h, w);  // maps spatial index -> depth index
    const Array& xv = x.data();
    Array out(xv.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out(perm[i]) = xv(i);
    int ix = x.idx;
    return x.tape->make(
        {bs, c, h, w}, std::move(out), {ix},
        [ix, perm](const Array& g, Tape& t, std::vector<Array>& gr) {
            Array gx(g.size());
            for (std::size_t i = 0; i < perm.size(); ++i) gx(i) = g(perm[i]);
            Tape::accumulate(gr, t.node(ix), ix, gx);
        },
        "depth_to_space");
}

Value custom_scalar(Value x, double value, Array grad_x, std::string op) {
    if (static_cast<int>(grad_x.size()) != numel(x.shape()))
        throw std::invalid_argument(op + ": gradient size mismatch");
    int ix = x.idx;
    return x.tape->make(
        {1}, Array::Constant(1, value), {ix},
        [ix, grad_x](const Array& g, Tape& t, std::vector<Array>& gr) {
            Tape::accumulate(gr, t.node(ix), ix, Array(grad_x * g(0)));
        },
        std::move(op));
}

void adam_step(const std::vector<Array*>& params, const std::vector<Array>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: params/grads size mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i] = Array::Zero(params[i]->size());
            state.v[i] = Array::Zero(params[i]->size());
        }
    }
    state.step += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Array g = grads[i].size() ? grads[i] : Array::Zero(params[i]->size());
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        Array mhat = state.m[i] / bc1;
        Array vhat = state.v[i] / bc2;
        *params[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

}  // namespace sf::grad
