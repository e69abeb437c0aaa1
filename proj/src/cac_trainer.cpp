#include "poolrank/cac_trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "poolrank/io_util.hpp"
#include "poolrank/random.hpp"

namespace poolrank {

namespace {

using json = nlohmann::json;
using Eigen::Index;

constexpr double kInitStd = 0.1;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// conv0 column multiplied by a pixel: identity channel for 1, negation for 0.
int column_of(std::uint8_t pixel) { return pixel ? 0 : 1; }

double sign_of(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

struct Offsets {
    std::vector<Index> conv;
    Index out = 0;
    std::vector<Index> bias;
    Index bias_out = 0;
};

Offsets offsets_of(const Model& m) {
    Offsets o;
    const int convs = m.config().arch == Arch::shallow_cac ? 1 : m.depth();
    for (int l = 0; l < convs; ++l) o.conv.push_back(m.block_info("conv" + std::to_string(l)).offset);
    o.out = m.block_info("out").offset;
    if (!is_arithmetic(m.config().arch)) {
        for (int l = 0; l < m.depth(); ++l) o.bias.push_back(m.block_info("bias" + std::to_string(l)).offset);
        o.bias_out = m.block_info("bias_out").offset;
    }
    return o;
}

Eigen::Map<const Matrix> cmap(const Eigen::VectorXd& v, Index off, Index rows, Index cols) {
    return {v.data() + off, rows, cols};
}
Eigen::Map<Matrix> mmap(Eigen::VectorXd& v, Index off, Index rows, Index cols) {
    return {v.data() + off, rows, cols};
}

struct LossGrad {
    double loss;
    std::array<double, kOutputs> dlogit;
};

LossGrad cross_entropy(const std::array<double, kOutputs>& logit, int label, std::size_t id) {
    const double top = std::max(logit[0], logit[1]);
    double sum = 0.0;
    for (double l : logit) sum += std::exp(l - top);
    const double lse = top + std::log(sum);
    LossGrad r{lse - logit[label], {}};
    if (!std::isfinite(r.loss)) throw NonFiniteLossError(id, r.loss);
    for (int y = 0; y < kOutputs; ++y) r.dlogit[y] = std::exp(logit[y] - lse) - (y == label ? 1.0 : 0.0);
    return r;
}

void check_image(const ModelConfig& cfg, const BinaryImage& img) {
    if (img.side() != cfg.side)
        throw std::invalid_argument("image side " + std::to_string(img.side()) + " does not match model side " +
                                    std::to_string(cfg.side));
}

}  // namespace

std::string to_string(Arch arch) {
    switch (arch) {
        case Arch::deep_cac: return "deep_cac";
        case Arch::shallow_cac: return "shallow_cac";
        case Arch::deep_relu_max: return "deep_relu_max";
        case Arch::deep_relu_avg: return "deep_relu_avg";
    }
    return "?";
}

Arch arch_from_string(const std::string& name) {
    for (Arch a : {Arch::deep_cac, Arch::shallow_cac, Arch::deep_relu_max, Arch::deep_relu_avg})
        if (to_string(a) == name) return a;
    if (name == "relu_max") return Arch::deep_relu_max;
    if (name == "relu_avg") return Arch::deep_relu_avg;
    throw std::invalid_argument("unknown architecture '" + name + "'");
}

bool is_arithmetic(Arch arch) { return arch == Arch::deep_cac || arch == Arch::shallow_cac; }

NonFiniteLossError::NonFiniteLossError(std::size_t sample_id, double loss)
    : std::runtime_error("non-finite loss " + std::to_string(loss) + " on sample " + std::to_string(sample_id)),
      sample_id_(sample_id) {}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig cfg) : cfg_(cfg) {
    if (cfg.channels < 1) throw std::invalid_argument("channels must be positive");
    if (cfg.geometry == GeometryKind::custom)
        throw std::invalid_argument("training supports square and mirror geometries only");
    geometry_ = std::make_shared<const PoolingGeometry>(build_geometry(cfg.geometry, cfg.side));
    depth_ = geometry_->depth();

    Index off = 0;
    auto add = [&](std::string name, Index rows, Index cols) {
        layout_.push_back({std::move(name), off, rows, cols});
        off += rows * cols;
    };
    const Index r = cfg.channels;
    add("conv0", r, kRepresentationChannels);
    if (cfg.arch != Arch::shallow_cac)
        for (int l = 1; l < depth_; ++l) add("conv" + std::to_string(l), r, r);
    add("out", kOutputs, r);
    if (!is_arithmetic(cfg.arch)) {
        for (int l = 0; l < depth_; ++l) add("bias" + std::to_string(l), r, 1);
        add("bias_out", kOutputs, 1);
    }
    params_ = Eigen::VectorXd::Zero(off);
}

Model Model::initialized(ModelConfig cfg, std::uint64_t seed) {
    Model m(cfg);
    std::mt19937_64 rng(splitmix64(seed));
    for (const auto& b : m.layout_) {
        if (b.name.rfind("bias", 0) == 0) continue;
        for (Index i = 0; i < b.size(); ++i) m.params_[b.offset + i] = kInitStd * standard_normal(rng);
    }
    return m;
}

const ParamBlock& Model::block_info(const std::string& name) const {
    for (const auto& b : layout_)
        if (b.name == name) return b;
    throw std::out_of_range("no parameter block '" + name + "'");
}

Model::ConstBlock Model::block(const std::string& name) const {
    const auto& b = block_info(name);
    return cmap(params_, b.offset, b.rows, b.cols);
}

Model::MutableBlock Model::block(const std::string& name) {
    const auto& b = block_info(name);
    return mmap(params_, b.offset, b.rows, b.cols);
}

// ---------------------------------------------------------------------------
// Evaluator

struct Evaluator::Impl {
    ModelConfig cfg;
    int depth = 0;
    Index r = 0;
    std::vector<std::uint8_t> column;  // per pixel

    // Arithmetic circuits: pooled log-magnitudes and signs per level (index
    // l holds level-l nodes, l >= 1), shifted conv inputs and raw conv outputs.
    std::vector<Matrix> mag, sgn, u, z;
    Eigen::RowVectorXd u_out;
    std::array<double, kOutputs> z_out{};
    Matrix log_w0, sgn_w0;
    int ones = 0;

    // Rectifier networks: conv inputs, pre-activations, pooled outputs, argmax.
    std::vector<Matrix> act_in, pre, pooled;
    std::vector<Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> argmax;

    explicit Impl(const ModelConfig& c) : cfg(c) {
        const Model shape(c);
        depth = shape.depth();
        r = c.channels;
        mag.resize(depth + 1);
        sgn.resize(depth + 1);
        u.resize(depth + 1);
        z.resize(depth + 1);
        act_in.resize(depth + 1);
        pre.resize(depth + 1);
        pooled.resize(depth + 1);
        argmax.resize(depth + 1);
    }

    void load_columns(const BinaryImage& img) {
        const auto n = static_cast<std::size_t>(img.side()) * img.side();
        column.resize(n);
        ones = 0;
        for (int row = 0; row < img.side(); ++row)
            for (int col = 0; col < img.side(); ++col) {
                const auto px = img(row, col);
                column[static_cast<std::size_t>(row * img.side() + col)] = static_cast<std::uint8_t>(column_of(px));
                ones += px;
            }
    }

    // Shifted sign-aware log-sum-exp for every row of (m, s) against W^T:
    // out = c + log|U W^T| with U = s * exp(m - c), c the row maximum.
    static void log_conv(const Matrix& m, const Matrix& s, Eigen::Map<const Matrix> w, Matrix& u_ws, Matrix& z_ws,
                         Matrix& out_m, Matrix& out_s) {
        const Index rows = m.rows(), cols = m.cols();
        u_ws.resize(rows, cols);
        Eigen::VectorXd shift(rows);
        for (Index i = 0; i < rows; ++i) {
            double c = kNegInf;
            for (Index a = 0; a < cols; ++a)
                if (s(i, a) != 0.0 && m(i, a) > c) c = m(i, a);
            shift[i] = c;
            for (Index a = 0; a < cols; ++a)
                u_ws(i, a) = s(i, a) == 0.0 ? 0.0 : s(i, a) * std::exp(m(i, a) - c);
        }
        z_ws.noalias() = u_ws * w.transpose();
        out_m.resize(rows, z_ws.cols());
        out_s.resize(rows, z_ws.cols());
        for (Index i = 0; i < rows; ++i)
            for (Index g = 0; g < z_ws.cols(); ++g) {
                const double v = z_ws(i, g);
                out_s(i, g) = sign_of(v);
                out_m(i, g) = v == 0.0 ? kNegInf : shift[i] + std::log(std::abs(v));
            }
    }

    // Product pooling: sum log-magnitudes, multiply signs.
    static void product_pool(const std::vector<PoolGroup>& groups, const Matrix& m, const Matrix& s, Matrix& pm,
                             Matrix& ps) {
        const auto n = static_cast<Index>(groups.size());
        pm.setZero(n, m.cols());
        ps.setOnes(n, m.cols());
        for (Index k = 0; k < n; ++k)
            for (int child : groups[static_cast<std::size_t>(k)]) {
                pm.row(k) += m.row(child);
                ps.row(k) = ps.row(k).cwiseProduct(s.row(child));
            }
        for (Index k = 0; k < n; ++k)
            for (Index g = 0; g < pm.cols(); ++g)
                if (ps(k, g) == 0.0) pm(k, g) = kNegInf;
    }

    OutputScores output_layer(const Model& model, const Offsets& o, const Eigen::RowVectorXd& m,
                              const Eigen::RowVectorXd& s) {
        const auto w = cmap(model.params(), o.out, kOutputs, r);
        double c = kNegInf;
        for (Index a = 0; a < r; ++a)
            if (s[a] != 0.0 && m[a] > c) c = m[a];
        u_out.resize(r);
        for (Index a = 0; a < r; ++a) u_out[a] = s[a] == 0.0 ? 0.0 : s[a] * std::exp(m[a] - c);
        OutputScores out;
        for (int y = 0; y < kOutputs; ++y) {
            z_out[y] = w.row(y).dot(u_out);
            out.value[y] = z_out[y] == 0.0
                               ? SignedLog::zero()
                               : SignedLog{static_cast<std::int8_t>(z_out[y] > 0 ? 1 : -1), c + std::log(std::abs(z_out[y]))};
            out.logit[y] = out.value[y].magnitude;
        }
        return out;
    }

    OutputScores forward_deep_cac(const Model& model, const Offsets& o) {
        const auto& geo = model.geometry();
        const auto w0 = cmap(model.params(), o.conv[0], r, kRepresentationChannels);
        log_w0 = w0.array().abs().log().matrix();
        sgn_w0 = w0.unaryExpr([](double v) { return sign_of(v); });

        const auto& g1 = geo.levels[0];
        const auto n1 = static_cast<Index>(g1.size());
        mag[1].setZero(n1, r);
        sgn[1].setOnes(n1, r);
        for (Index k = 0; k < n1; ++k)
            for (int px : g1[static_cast<std::size_t>(k)]) {
                const int c = column[static_cast<std::size_t>(px)];
                mag[1].row(k) += log_w0.col(c).transpose();
                sgn[1].row(k) = sgn[1].row(k).cwiseProduct(sgn_w0.col(c).transpose());
            }
        for (Index k = 0; k < n1; ++k)
            for (Index g = 0; g < r; ++g)
                if (sgn[1](k, g) == 0.0) mag[1](k, g) = kNegInf;

        Matrix conv_m, conv_s;
        for (int l = 1; l < depth; ++l) {
            log_conv(mag[l], sgn[l], cmap(model.params(), o.conv[l], r, r), u[l], z[l], conv_m, conv_s);
            product_pool(geo.levels[l], conv_m, conv_s, mag[l + 1], sgn[l + 1]);
        }
        return output_layer(model, o, mag[depth].row(0), sgn[depth].row(0));
    }

    OutputScores forward_shallow_cac(const Model& model, const Offsets& o) {
        const auto w0 = cmap(model.params(), o.conv[0], r, kRepresentationChannels);
        const int zeros = static_cast<int>(column.size()) - ones;
        Eigen::RowVectorXd m(r), s(r);
        for (Index g = 0; g < r; ++g) {
            double mg = 0.0, sg = 1.0;
            for (auto [count, c] : {std::pair{ones, 0}, std::pair{zeros, 1}}) {
                if (count == 0) continue;
                const double w = w0(g, c);
                if (w == 0.0) {
                    sg = 0.0;
                    continue;
                }
                mg += count * std::log(std::abs(w));
                if (w < 0 && count % 2 == 1) sg = -sg;
            }
            m[g] = sg == 0.0 ? kNegInf : mg;
            s[g] = sg;
        }
        mag[1] = m;
        sgn[1] = s;
        return output_layer(model, o, m, s);
    }

    void pool_relu(const std::vector<PoolGroup>& groups, const Matrix& a, int level) {
        const auto n = static_cast<Index>(groups.size());
        auto& out = pooled[level + 1];
        out.resize(n, r);
        if (cfg.arch == Arch::deep_relu_max) {
            auto& am = argmax[level + 1];
            am.resize(n, r);
            for (Index k = 0; k < n; ++k) {
                const auto& grp = groups[static_cast<std::size_t>(k)];
                for (Index g = 0; g < r; ++g) {
                    int best = 0;
                    for (int t = 1; t < 4; ++t)
                        if (a(grp[t], g) > a(grp[best], g)) best = t;
                    am(k, g) = best;
                    out(k, g) = a(grp[best], g);
                }
            }
        } else {
            for (Index k = 0; k < n; ++k) {
                const auto& grp = groups[static_cast<std::size_t>(k)];
                out.row(k) = 0.25 * (a.row(grp[0]) + a.row(grp[1]) + a.row(grp[2]) + a.row(grp[3]));
            }
        }
    }

    OutputScores forward_relu(const Model& model, const Offsets& o) {
        const auto& geo = model.geometry();
        const auto w0 = cmap(model.params(), o.conv[0], r, kRepresentationChannels);
        const auto b0 = cmap(model.params(), o.bias[0], r, 1);
        const auto n = static_cast<Index>(column.size());
        pre[0].resize(n, r);
        for (Index p = 0; p < n; ++p) pre[0].row(p) = (w0.col(column[static_cast<std::size_t>(p)]) + b0).transpose();
        Matrix act = pre[0].cwiseMax(0.0);
        pool_relu(geo.levels[0], act, 0);
        for (int l = 1; l < depth; ++l) {
            const auto w = cmap(model.params(), o.conv[l], r, r);
            const auto b = cmap(model.params(), o.bias[l], r, 1);
            act_in[l] = pooled[l];
            pre[l].noalias() = act_in[l] * w.transpose();
            pre[l].rowwise() += b.transpose().row(0);
            act = pre[l].cwiseMax(0.0);
            pool_relu(geo.levels[l], act, l);
        }
        const auto wo = cmap(model.params(), o.out, kOutputs, r);
        const auto bo = cmap(model.params(), o.bias_out, kOutputs, 1);
        OutputScores out;
        for (int y = 0; y < kOutputs; ++y) {
            out.logit[y] = wo.row(y).dot(pooled[depth].row(0)) + bo(y, 0);
            out.value[y] = SignedLog::from_double(out.logit[y]);
        }
        return out;
    }

    OutputScores forward(const Model& model, const Offsets& o, const BinaryImage& img) {
        if (!(model.config() == cfg)) throw std::invalid_argument("model config does not match evaluator");
        check_image(cfg, img);
        load_columns(img);
        switch (cfg.arch) {
            case Arch::deep_cac: return forward_deep_cac(model, o);
            case Arch::shallow_cac: return forward_shallow_cac(model, o);
            default: return forward_relu(model, o);
        }
    }

    // Gradient of the loss w.r.t. the log-magnitudes feeding the output layer.
    Eigen::RowVectorXd backward_output(const Model& model, const Offsets& o, const LossGrad& lg,
                                       Eigen::VectorXd& grad) {
        const auto w = cmap(model.params(), o.out, kOutputs, r);
        auto gw = mmap(grad, o.out, kOutputs, r);
        Eigen::RowVectorXd q_w = Eigen::RowVectorXd::Zero(r);
        for (int y = 0; y < kOutputs; ++y) {
            if (z_out[y] == 0.0) continue;
            const double q = lg.dlogit[y] / z_out[y];
            gw.row(y) += q * u_out;
            q_w += q * w.row(y);
        }
        return u_out.cwiseProduct(q_w);
    }

    void backward_deep_cac(const Model& model, const Offsets& o, const LossGrad& lg, Eigen::VectorXd& grad) {
        const auto& geo = model.geometry();
        Matrix g = backward_output(model, o, lg, grad);
        Matrix g_out, q;
        for (int l = depth - 1; l >= 1; --l) {
            const auto& groups = geo.levels[l];
            g_out.resize(u[l].rows(), r);
            for (std::size_t k = 0; k < groups.size(); ++k)
                for (int child : groups[k]) g_out.row(child) = g.row(static_cast<Index>(k));
            q = g_out.binaryExpr(z[l], [](double a, double b) { return b == 0.0 ? 0.0 : a / b; });
            const auto w = cmap(model.params(), o.conv[l], r, r);
            mmap(grad, o.conv[l], r, r).noalias() += q.transpose() * u[l];
            g = u[l].cwiseProduct(q * w);
        }
        const auto w0 = cmap(model.params(), o.conv[0], r, kRepresentationChannels);
        Matrix acc = Matrix::Zero(r, kRepresentationChannels);
        const auto& g1 = geo.levels[0];
        for (std::size_t k = 0; k < g1.size(); ++k)
            for (int px : g1[k]) acc.col(column[static_cast<std::size_t>(px)]) += g.row(static_cast<Index>(k)).transpose();
        auto gw0 = mmap(grad, o.conv[0], r, kRepresentationChannels);
        for (Index a = 0; a < r; ++a)
            for (Index c = 0; c < kRepresentationChannels; ++c)
                if (w0(a, c) != 0.0) gw0(a, c) += acc(a, c) / w0(a, c);
    }

    void backward_shallow_cac(const Model& model, const Offsets& o, const LossGrad& lg, Eigen::VectorXd& grad) {
        const Eigen::RowVectorXd g = backward_output(model, o, lg, grad);
        const auto w0 = cmap(model.params(), o.conv[0], r, kRepresentationChannels);
        auto gw0 = mmap(grad, o.conv[0], r, kRepresentationChannels);
        const int counts[2] = {ones, static_cast<int>(column.size()) - ones};
        for (Index a = 0; a < r; ++a)
            for (int c = 0; c < kRepresentationChannels; ++c)
                if (w0(a, c) != 0.0) gw0(a, c) += g[a] * counts[c] / w0(a, c);
    }

    void unpool_relu(const std::vector<PoolGroup>& groups, const Matrix& g, int level, Matrix& g_act) {
        g_act.setZero(pre[level].rows(), r);
        for (std::size_t k = 0; k < groups.size(); ++k) {
            const auto& grp = groups[k];
            const auto ki = static_cast<Index>(k);
            if (cfg.arch == Arch::deep_relu_max) {
                for (Index c = 0; c < r; ++c) g_act(grp[argmax[level + 1](ki, c)], c) += g(ki, c);
            } else {
                for (int child : grp) g_act.row(child) += 0.25 * g.row(ki);
            }
        }
    }

    void backward_relu(const Model& model, const Offsets& o, const LossGrad& lg, Eigen::VectorXd& grad) {
        const auto& geo = model.geometry();
        const auto wo = cmap(model.params(), o.out, kOutputs, r);
        auto gwo = mmap(grad, o.out, kOutputs, r);
        Matrix g = Matrix::Zero(1, r);
        for (int y = 0; y < kOutputs; ++y) {
            gwo.row(y) += lg.dlogit[y] * pooled[depth].row(0);
            grad[o.bias_out + y] += lg.dlogit[y];
            g.row(0) += lg.dlogit[y] * wo.row(y);
        }
        Matrix g_act, g_pre;
        for (int l = depth - 1; l >= 0; --l) {
            unpool_relu(geo.levels[l], g, l, g_act);
            g_pre = g_act.binaryExpr(pre[l], [](double a, double p) { return p > 0.0 ? a : 0.0; });
            mmap(grad, o.bias[l], r, 1) += g_pre.colwise().sum().transpose();
            if (l >= 1) {
                const auto w = cmap(model.params(), o.conv[l], r, r);
                mmap(grad, o.conv[l], r, r).noalias() += g_pre.transpose() * act_in[l];
                g = g_pre * w;
            } else {
                auto gw0 = mmap(grad, o.conv[0], r, kRepresentationChannels);
                for (Index p = 0; p < g_pre.rows(); ++p)
                    gw0.col(column[static_cast<std::size_t>(p)]) += g_pre.row(p).transpose();
            }
        }
    }

    double accumulate(const Model& model, const Offsets& o, const Sample& s, Eigen::VectorXd& grad) {
        const OutputScores out = forward(model, o, *s.image);
        const LossGrad lg = cross_entropy(out.logit, s.label, s.id);
        switch (cfg.arch) {
            case Arch::deep_cac: backward_deep_cac(model, o, lg, grad); break;
            case Arch::shallow_cac: backward_shallow_cac(model, o, lg, grad); break;
            default: backward_relu(model, o, lg, grad); break;
        }
        return lg.loss;
    }
};

Evaluator::Evaluator(const ModelConfig& cfg) : impl_(std::make_unique<Impl>(cfg)) {}
Evaluator::~Evaluator() = default;
Evaluator::Evaluator(Evaluator&&) noexcept = default;
Evaluator& Evaluator::operator=(Evaluator&&) noexcept = default;

OutputScores Evaluator::forward(const Model& model, const BinaryImage& image) {
    return impl_->forward(model, offsets_of(model), image);
}

double Evaluator::accumulate(const Model& model, const Sample& sample, Eigen::VectorXd& grad) {
    if (grad.size() != model.params().size()) throw std::invalid_argument("gradient size mismatch");
    return impl_->accumulate(model, offsets_of(model), sample, grad);
}

BatchGradient Evaluator::backward(const Model& model, std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("backward: empty batch");
    const Offsets o = offsets_of(model);
    BatchGradient bg{0.0, Eigen::VectorXd::Zero(model.params().size())};
    for (const auto& s : batch) bg.loss += impl_->accumulate(model, o, s, bg.grad);
    const double inv = 1.0 / static_cast<double>(batch.size());
    bg.loss *= inv;
    bg.grad *= inv;
    return bg;
}

OutputScores forward(const Model& model, const BinaryImage& image) {
    Evaluator ev(model.config());
    return ev.forward(model, image);
}

BatchGradient backward(const Model& model, std::span<const Sample> batch) {
    Evaluator ev(model.config());
    return ev.backward(model, batch);
}

std::array<double, kOutputs> forward_direct(const Model& model, const BinaryImage& image) {
    const auto& cfg = model.config();
    check_image(cfg, image);
    const int r = cfg.channels;
    const auto& p = model.params();
    const Offsets o = offsets_of(model);
    const bool relu = !is_arithmetic(cfg.arch);
    const int n = image.side() * image.side();

    auto w0 = [&](int g, int c) { return p[o.conv[0] + g * kRepresentationChannels + c]; };
    auto pixel_col = [&](int pos) { return column_of(image(pos / image.side(), pos % image.side())); };

    std::vector<double> top(static_cast<std::size_t>(r));
    if (cfg.arch == Arch::shallow_cac) {
        for (int g = 0; g < r; ++g) {
            double v = 1.0;
            for (int pos = 0; pos < n; ++pos) v *= w0(g, pixel_col(pos));
            top[static_cast<std::size_t>(g)] = v;
        }
    } else {
        // nodes[i * r + g]: channel g of node i at the current level, after the conv.
        std::vector<double> nodes(static_cast<std::size_t>(n) * r);
        for (int pos = 0; pos < n; ++pos)
            for (int g = 0; g < r; ++g) {
                double v = w0(g, pixel_col(pos));
                if (relu) v = std::max(0.0, v + p[o.bias[0] + g]);
                nodes[static_cast<std::size_t>(pos * r + g)] = v;
            }
        const auto& geo = model.geometry();
        for (int l = 0; l < geo.depth(); ++l) {
            const auto& groups = geo.levels[l];
            std::vector<double> pooled(groups.size() * r);
            for (std::size_t k = 0; k < groups.size(); ++k)
                for (int g = 0; g < r; ++g) {
                    double acc = cfg.arch == Arch::deep_cac ? 1.0 : 0.0;
                    if (cfg.arch == Arch::deep_relu_max) acc = -std::numeric_limits<double>::infinity();
                    for (int child : groups[k]) {
                        const double v = nodes[static_cast<std::size_t>(child * r + g)];
                        if (cfg.arch == Arch::deep_cac) acc *= v;
                        else if (cfg.arch == Arch::deep_relu_max) acc = std::max(acc, v);
                        else acc += 0.25 * v;
                    }
                    pooled[k * r + g] = acc;
                }
            if (l + 1 == geo.depth()) {
                top = pooled;
                break;
            }
            nodes.assign(pooled.size(), 0.0);
            for (std::size_t k = 0; k < groups.size(); ++k)
                for (int g = 0; g < r; ++g) {
                    double v = relu ? p[o.bias[l + 1] + g] : 0.0;
                    for (int a = 0; a < r; ++a) v += p[o.conv[l + 1] + g * r + a] * pooled[k * r + a];
                    nodes[k * r + g] = relu ? std::max(0.0, v) : v;
                }
        }
    }
    std::array<double, kOutputs> out{};
    for (int y = 0; y < kOutputs; ++y) {
        double v = relu ? p[o.bias_out + y] : 0.0;
        for (int a = 0; a < r; ++a) v += p[o.out + y * r + a] * top[static_cast<std::size_t>(a)];
        out[static_cast<std::size_t>(y)] = v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer

AdamHyper AdamHyper::arithmetic() { return {0.003, 0.9, 0.9, 1e-8, 0.0}; }
AdamHyper AdamHyper::rectifier() { return {0.001, 0.9, 0.999, 1e-8, 1e-4}; }
AdamHyper AdamHyper::for_arch(Arch arch) { return is_arithmetic(arch) ? arithmetic() : rectifier(); }

OptimizerState::OptimizerState(Eigen::Index n, AdamHyper h)
    : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), hyper(h) {}

void adam_step(OptimizerState& s, Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr_scale) {
    if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    const auto& h = s.hyper;
    ++s.step;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.step));
    const double lr = h.alpha * lr_scale;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double g = grads[i] + h.weight_decay * params[i];
        s.m[i] = h.beta1 * s.m[i] + (1.0 - h.beta1) * g;
        s.v[i] = h.beta2 * s.v[i] + (1.0 - h.beta2) * g * g;
        const double mhat = s.m[i] / c1;
        const double vhat = s.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + h.eps);
    }
}

// ---------------------------------------------------------------------------
// Training

TrainSchedule TrainSchedule::desk() { return {}; }

TrainSchedule TrainSchedule::paper() {
    TrainSchedule s;
    s.iterations = 15000;
    s.decay_at = 12000;
    s.eval_every = 1000;
    return s;
}

std::vector<Sample> task_samples(const LabeledDataset& ds, Task task, Split split) {
    std::vector<Sample> out;
    for (std::size_t id = 0; id < ds.size(); ++id) {
        if (ds.split[id] != split) continue;
        const ScoreLabel l = ds.label(task, id);
        if (l == ScoreLabel::excluded) continue;
        out.push_back({&ds.images[id], l == ScoreLabel::high ? 1 : 0, id});
    }
    return out;
}

namespace {

double accuracy_with(Evaluator& ev, const Model& model, std::span<const Sample> samples) {
    if (samples.empty()) throw EmptySplitError("accuracy over an empty sample set");
    std::size_t correct = 0;
    for (const auto& s : samples)
        if (ev.forward(model, *s.image).predicted() == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::size_t count_excluded(const LabeledDataset& ds, Task task, std::span<const Sample> samples) {
    std::size_t n = 0;
    for (const auto& s : samples)
        if (ds.label(task, s.id) == ScoreLabel::excluded) ++n;
    return n;
}

}  // namespace

double accuracy(const Model& model, std::span<const Sample> samples) {
    Evaluator ev(model.config());
    return accuracy_with(ev, model, samples);
}

double evaluate(const Model& model, const LabeledDataset& ds, Task task) {
    const auto test = task_samples(ds, task, Split::test);
    if (test.empty()) throw EmptySplitError("no test samples for task " + to_string(task));
    return accuracy(model, test);
}

TrainResult train(const ModelConfig& cfg, const LabeledDataset& ds, Task task, const TrainSchedule& schedule,
                  std::uint64_t seed) {
    if (schedule.batch_size < 1 || schedule.iterations < 0 || schedule.eval_every < 1)
        throw std::invalid_argument("invalid training schedule");
    const auto train_set = task_samples(ds, task, Split::train);
    const auto test_set = task_samples(ds, task, Split::test);
    if (train_set.empty()) throw EmptySplitError("no training samples for task " + to_string(task));
    if (test_set.empty()) throw EmptySplitError("no test samples for task " + to_string(task));
    for (const auto& s : train_set)
        if (s.image->side() != cfg.side) throw std::invalid_argument("dataset side does not match model side");

    TrainResult res{Model::initialized(cfg, seed), {}, 0};
    OptimizerState opt(res.model.params().size(), AdamHyper::for_arch(cfg.arch));
    Evaluator ev(cfg);

    const std::span<const Sample> train_eval(train_set.data(), std::min(train_set.size(), schedule.train_eval_limit));
    auto record = [&](int step, double loss) {
        res.excluded_touched += count_excluded(ds, task, train_eval) + count_excluded(ds, task, test_set);
        res.curve.push_back({step, loss, accuracy_with(ev, res.model, train_eval), accuracy_with(ev, res.model, test_set)});
    };

    {
        double loss0 = 0.0;
        for (const auto& s : train_eval) loss0 += cross_entropy(ev.forward(res.model, *s.image).logit, s.label, s.id).loss;
        record(0, loss0 / static_cast<double>(train_eval.size()));
    }

    std::mt19937_64 rng(splitmix64(seed ^ 0x5bd1e995ULL));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    std::vector<Sample> batch(static_cast<std::size_t>(schedule.batch_size));

    double loss_sum = 0.0;
    int loss_count = 0;
    for (int step = 0; step < schedule.iterations; ++step) {
        for (auto& b : batch) {
            if (cursor == order.size()) {
                for (std::size_t i = order.size() - 1; i > 0; --i)
                    std::swap(order[i], order[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i)))]);
                cursor = 0;
            }
            b = train_set[order[cursor++]];
        }
        res.excluded_touched += count_excluded(ds, task, batch);
        const BatchGradient bg = ev.backward(res.model, batch);
        const double scale = step < schedule.decay_at ? 1.0 : schedule.decay_factor;
        adam_step(opt, res.model.params(), bg.grad, scale);
        loss_sum += bg.loss;
        ++loss_count;
        const int done = step + 1;
        if (done % schedule.eval_every == 0 || done == schedule.iterations) {
            record(done, loss_sum / loss_count);
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json config_to_json(const ModelConfig& c) {
    return {{"arch", to_string(c.arch)}, {"geometry", to_string(c.geometry)}, {"side", c.side}, {"channels", c.channels}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.arch = arch_from_string(j.at("arch").get<std::string>());
    c.geometry = geometry_kind_from_string(j.at("geometry").get<std::string>());
    c.side = j.at("side").get<int>();
    c.channels = j.at("channels").get<int>();
    return c;
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
    std::filesystem::path p = stem;
    p += ext;
    return p;
}

}  // namespace

void save_checkpoint(const Model& model, std::int64_t step, const std::filesystem::path& stem) {
    const auto bin = with_suffix(stem, ".bin");
    const auto& p = model.params();
    write_file_atomic(bin, encode_f64_le(std::span<const double>(p.data(), static_cast<std::size_t>(p.size()))));
    json layout = json::array();
    for (const auto& b : model.layout())
        layout.push_back({{"name", b.name}, {"offset", b.offset}, {"rows", b.rows}, {"cols", b.cols}});
    const json header = {{"format", "poolrank-checkpoint"},
                         {"version", 1},
                         {"config", config_to_json(model.config())},
                         {"step", step},
                         {"params", {{"file", bin.filename().string()}, {"count", p.size()}, {"dtype", "float64-le"}}},
                         {"layout", layout}};
    write_file_atomic(with_suffix(stem, ".json"), header.dump(2) + "\n");
}

Model load_checkpoint(const std::filesystem::path& stem, std::int64_t* step) {
    auto json_path = stem;
    if (json_path.extension() != ".json") json_path = with_suffix(stem, ".json");
    const json header = json::parse(read_file(json_path));
    if (header.value("format", "") != "poolrank-checkpoint")
        throw std::runtime_error(json_path.string() + " is not a checkpoint header");
    Model model(config_from_json(header.at("config")));
    const auto& layout = header.at("layout");
    if (layout.size() != model.layout().size()) throw std::runtime_error("checkpoint layout mismatch");
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& b = model.layout()[i];
        if (layout[i].at("name") != b.name || layout[i].at("offset").get<Index>() != b.offset ||
            layout[i].at("rows").get<Index>() != b.rows || layout[i].at("cols").get<Index>() != b.cols)
            throw std::runtime_error("checkpoint layout mismatch at block " + b.name);
    }
    const auto bin = json_path.parent_path() / header.at("params").at("file").get<std::string>();
    const auto values = decode_f64_le(read_file(bin));
    if (static_cast<Index>(values.size()) != model.params().size())
        throw std::runtime_error("checkpoint parameter count mismatch");
    model.params() = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
    if (step) *step = header.at("step").get<std::int64_t>();
    return model;
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "step,loss,train_acc,test_acc\n";
    char buf[128];
    for (const auto& c : curve) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", c.step, c.loss, c.train_acc, c.test_acc);
        out << buf;
    }
    write_file_atomic(path, out.str());
}

}  // namespace poolrank
