#include "bssr/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bssr/errors.hpp"

namespace bssr {

std::size_t MlpParams::input_dim() const {
    return layers.empty() ? 0 : layers.front().weights.rows();
}

std::size_t MlpParams::output_dim() const {
    return layers.empty() ? 0 : layers.back().weights.cols();
}

std::size_t MlpParams::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
}

std::vector<double> MlpParams::flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (const auto& l : layers) {
        out.insert(out.end(), l.weights.data().begin(), l.weights.data().end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
}

void MlpParams::unflatten(std::span<const double> flat) {
    if (flat.size() != param_count())
        throw ShapeError("MlpParams::unflatten: got " + std::to_string(flat.size()) +
                         " values, need " + std::to_string(param_count()));
    std::size_t pos = 0;
    for (auto& l : layers) {
        std::copy_n(flat.begin() + pos, l.weights.size(), l.weights.data().begin());
        pos += l.weights.size();
        std::copy_n(flat.begin() + pos, l.bias.size(), l.bias.begin());
        pos += l.bias.size();
    }
}

void MlpParams::add_scaled(const MlpParams& other, double scale) {
    if (other.layers.size() != layers.size())
        throw ShapeError("MlpParams::add_scaled: layer count mismatch");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        auto& l = layers[k];
        const auto& o = other.layers[k];
        if (l.weights.rows() != o.weights.rows() || l.weights.cols() != o.weights.cols())
            throw ShapeError("MlpParams::add_scaled: layer " + std::to_string(k) + " shape mismatch");
        for (std::size_t i = 0; i < l.weights.size(); ++i)
            l.weights.data()[i] += scale * o.weights.data()[i];
        for (std::size_t i = 0; i < l.bias.size(); ++i)
            l.bias[i] += scale * o.bias[i];
    }
}

MlpParams MlpParams::zeros_like() const {
    MlpParams z = *this;
    for (auto& l : z.layers) {
        std::fill(l.weights.data().begin(), l.weights.data().end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    return z;
}

void MlpParams::validate() const {
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& l = layers[k];
        if (l.bias.size() != l.weights.cols())
            throw ShapeError("layer " + std::to_string(k) + ": bias length " +
                             std::to_string(l.bias.size()) + " vs output dim " +
                             std::to_string(l.weights.cols()));
        if (k + 1 < layers.size() && l.weights.cols() != layers[k + 1].weights.rows())
            throw ShapeError("layer dims do not chain at layer " + std::to_string(k));
    }
}

Matrix mlp_forward(const MlpParams& params, const Matrix& x, MlpCache* cache) {
    if (x.cols() != params.input_dim())
        throw ShapeError("mlp_forward: input has " + std::to_string(x.cols()) +
                         " cols, net expects " + std::to_string(params.input_dim()));
    if (cache) {
        cache->input = x;
        cache->pre.clear();
        cache->post.clear();
    }
    Matrix a = x;
    for (const auto& l : params.layers) {
        Matrix z = matmul(a, l.weights);
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j)
                z(i, j) += l.bias[j];
        Matrix act = l.act == Activation::Relu ? elem_map(z, MapFn::Relu) : z;
        if (cache) {
            cache->pre.push_back(z);
            cache->post.push_back(act);
        }
        a = std::move(act);
    }
    return a;
}

MlpParams mlp_backward(const MlpParams& params, const MlpCache& cache,
                       const Matrix& output_grads, Matrix* input_grads) {
    const std::size_t L = params.layers.size();
    if (cache.pre.size() != L || cache.post.size() != L)
        throw ShapeError("mlp_backward: cache does not match network depth");
    if (output_grads.rows() != cache.input.rows() ||
        output_grads.cols() != params.output_dim())
        throw ShapeError("mlp_backward: output grad shape mismatch");

    MlpParams grads = params.zeros_like();
    Matrix delta = output_grads;
    for (std::size_t k = L; k-- > 0;) {
        const auto& l = params.layers[k];
        if (l.act == Activation::Relu) {
            const Matrix mask = elem_map(cache.pre[k], MapFn::ReluDerivative);
            for (std::size_t i = 0; i < delta.size(); ++i)
                delta.data()[i] *= mask.data()[i];
        }
        const Matrix& a_prev = k == 0 ? cache.input : cache.post[k - 1];
        grads.layers[k].weights = matmul(transpose(a_prev), delta);
        for (std::size_t j = 0; j < l.bias.size(); ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < delta.rows(); ++i) s += delta(i, j);
            grads.layers[k].bias[j] = s;
        }
        if (k > 0 || input_grads)
            delta = matmul(delta, transpose(l.weights));
    }
    if (input_grads) *input_grads = std::move(delta);
    return grads;
}

std::size_t RegressionNet::param_count() const {
    return extractor.param_count() + head_weights.size() + 1;
}

std::vector<double> RegressionNet::flatten() const {
    std::vector<double> out = extractor.flatten();
    out.insert(out.end(), head_weights.begin(), head_weights.end());
    out.push_back(head_bias);
    return out;
}

void RegressionNet::unflatten(std::span<const double> flat) {
    if (flat.size() != param_count())
        throw ShapeError("RegressionNet::unflatten: length mismatch");
    extractor.unflatten(flat.subspan(0, extractor.param_count()));
    const auto head = flat.subspan(extractor.param_count());
    std::copy_n(head.begin(), head_weights.size(), head_weights.begin());
    head_bias = head.back();
}

std::vector<double> NetGrad::flatten() const {
    std::vector<double> out = extractor.flatten();
    out.insert(out.end(), head_weights.begin(), head_weights.end());
    out.push_back(head_bias);
    return out;
}

void NetGrad::add_scaled(const NetGrad& other, double scale) {
    extractor.add_scaled(other.extractor, scale);
    if (other.head_weights.size() != head_weights.size())
        throw ShapeError("NetGrad::add_scaled: head size mismatch");
    for (std::size_t i = 0; i < head_weights.size(); ++i)
        head_weights[i] += scale * other.head_weights[i];
    head_bias += scale * other.head_bias;
}

bool NetGrad::all_finite() const {
    for (const auto& l : extractor.layers) {
        if (!l.weights.all_finite()) return false;
        for (double b : l.bias)
            if (!std::isfinite(b)) return false;
    }
    for (double w : head_weights)
        if (!std::isfinite(w)) return false;
    return std::isfinite(head_bias);
}

NetGrad zero_grad_like(const RegressionNet& net) {
    NetGrad g;
    g.extractor = net.extractor.zeros_like();
    g.head_weights.assign(net.head_weights.size(), 0.0);
    g.head_bias = 0.0;
    return g;
}

RegressionNet apply_update(const RegressionNet& net, const NetGrad& grad,
                           double alpha, double alpha_head) {
    RegressionNet out = net;
    out.extractor.add_scaled(grad.extractor, -alpha);
    for (std::size_t i = 0; i < out.head_weights.size(); ++i)
        out.head_weights[i] -= alpha_head * grad.head_weights[i];
    out.head_bias -= alpha_head * grad.head_bias;
    return out;
}

RegressionForward forward_regression(const RegressionNet& net, const Matrix& x_batch) {
    RegressionForward fwd;
    fwd.features = mlp_forward(net.extractor, x_batch, &fwd.cache);
    fwd.predictions.resize(x_batch.rows());
    for (std::size_t i = 0; i < x_batch.rows(); ++i)
        fwd.predictions[i] = dot(fwd.features.row(i), net.head_weights) + net.head_bias;
    return fwd;
}

NetGrad backward_regression(const RegressionNet& net, const RegressionForward& fwd,
                            std::span<const double> output_grads) {
    const std::size_t batch = fwd.features.rows();
    if (output_grads.size() != batch)
        throw ShapeError("backward_regression: " + std::to_string(output_grads.size()) +
                         " output grads for batch " + std::to_string(batch));
    NetGrad g = zero_grad_like(net);
    Matrix feature_grads(batch, net.feature_dim());
    for (std::size_t i = 0; i < batch; ++i) {
        const double gi = output_grads[i];
        g.head_bias += gi;
        for (std::size_t j = 0; j < net.feature_dim(); ++j) {
            g.head_weights[j] += gi * fwd.features(i, j);
            feature_grads(i, j) = gi * net.head_weights[j];
        }
    }
    g.extractor = mlp_backward(net.extractor, fwd.cache, feature_grads);
    return g;
}

RegressionNet init_regression_net(SeededRng& rng, std::size_t input_dim,
                                  const std::vector<std::size_t>& hidden_dims,
                                  std::size_t feature_dim) {
    if (input_dim == 0 || feature_dim == 0)
        throw ParamError("init_regression_net: dims must be >= 1");
    if (hidden_dims.empty())
        throw ParamError("init_regression_net: at least one hidden layer required");
    for (std::size_t h : hidden_dims)
        if (h == 0) throw ParamError("init_regression_net: zero hidden dim");

    RegressionNet net;
    std::size_t in = input_dim;
    for (std::size_t h : hidden_dims) {
        MlpLayer l;
        l.weights = gauss_sample(rng, in, h, 0.0, std::sqrt(2.0 / static_cast<double>(in)));
        l.bias.assign(h, 0.0);
        l.act = Activation::Relu;
        net.extractor.layers.push_back(std::move(l));
        in = h;
    }
    MlpLayer out;
    out.weights = gauss_sample(rng, in, feature_dim, 0.0, std::sqrt(2.0 / static_cast<double>(in)));
    out.bias.assign(feature_dim, 0.0);
    out.act = Activation::Identity;
    net.extractor.layers.push_back(std::move(out));

    const Matrix hw = gauss_sample(rng, 1, feature_dim, 0.0,
                                   std::sqrt(2.0 / static_cast<double>(feature_dim)));
    net.head_weights.assign(hw.data().begin(), hw.data().end());
    net.head_bias = 0.0;
    return net;
}

UncertaintyForward forward_uncertainty(const UncertaintyLearner& ul,
                                       std::span<const double> predictions,
                                       std::span<const double> pseudo_labels,
                                       double target_mean, double target_std) {
    if (predictions.size() != pseudo_labels.size())
        throw ShapeError("forward_uncertainty: prediction/pseudo-label length mismatch");
    if (target_std <= 0.0)
        throw ParamError("forward_uncertainty: target_std must be > 0");
    const std::size_t m = predictions.size();
    Matrix x(m, 2);
    for (std::size_t j = 0; j < m; ++j) {
        x(j, 0) = (predictions[j] - target_mean) / target_std;
        x(j, 1) = (pseudo_labels[j] - target_mean) / target_std;
    }
    UncertaintyForward fwd;
    const Matrix raw = mlp_forward(ul.mlp, x, &fwd.cache);
    fwd.z.resize(m);
    fwd.pass_mask.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        const double zr = raw(j, 0);
        fwd.z[j] = std::clamp(zr, -ul.z_max, ul.z_max);
        fwd.pass_mask[j] = std::fabs(zr) < ul.z_max ? 1 : 0;
    }
    return fwd;
}

MlpParams backward_uncertainty(const UncertaintyLearner& ul, const UncertaintyForward& fwd,
                               std::span<const double> z_grads) {
    if (z_grads.size() != fwd.z.size())
        throw ShapeError("backward_uncertainty: z grad length mismatch");
    Matrix out_grads(fwd.z.size(), 1);
    for (std::size_t j = 0; j < fwd.z.size(); ++j)
        out_grads(j, 0) = fwd.pass_mask[j] ? z_grads[j] : 0.0;
    return mlp_backward(ul.mlp, fwd.cache, out_grads);
}

UncertaintyLearner init_uncertainty_learner(SeededRng& rng, std::size_t hidden,
                                            double z_max) {
    if (hidden == 0) throw ParamError("init_uncertainty_learner: hidden must be >= 1");
    if (z_max <= 0.0) throw ParamError("init_uncertainty_learner: z_max must be > 0");

    UncertaintyLearner ul;
    ul.z_max = z_max;
    MlpLayer l0;
    l0.weights = gauss_sample(rng, 2, hidden, 0.0, 0.01);
    l0.bias.assign(hidden, 0.0);
    l0.act = Activation::Relu;
    // Output layer all zero: z == 0 at init, so sigma^2 == 1 and the
    // unsupervised loss starts out as plain MSE.
    MlpLayer l1;
    l1.weights = Matrix(hidden, 1, 0.0);
    l1.bias.assign(1, 0.0);
    l1.act = Activation::Identity;
    ul.mlp.layers = {std::move(l0), std::move(l1)};
    return ul;
}

}  // namespace bssr
