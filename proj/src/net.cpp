#include "mah/net.hpp"

#include <cmath>
#include <random>

namespace mah {

namespace {

AffineLayer glorot_layer(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    AffineLayer layer;
    layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    }
    layer.bias = Vector::Zero(static_cast<Eigen::Index>(out));
    return layer;
}

Matrix apply(const AffineLayer& layer, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != layer.in_dim()) {
        throw ValidationError("shape mismatch: layer expects width " + std::to_string(layer.in_dim()) +
                              ", got " + std::to_string(x.cols()));
    }
    Matrix y = x * layer.weight.transpose();
    y.rowwise() += layer.bias.transpose();
    return y;
}

// Accumulates gradients of one affine layer and returns d(input).
Matrix affine_backward(const AffineLayer& layer, const Matrix& input, const Matrix& grad_out,
                       AffineLayer& grad, bool use_bias) {
    grad.weight.noalias() += grad_out.transpose() * input;
    if (use_bias) grad.bias.noalias() += grad_out.colwise().sum().transpose();
    return grad_out * layer.weight;
}

Branch head_input_of(Branch b) {
    // Cascaded chain: plus reads the latent, mid reads plus, minus reads mid.
    return b == Branch::minus ? Branch::mid : Branch::plus;
}

}  // namespace

std::size_t ModelParams::input_dim() const {
    return encoder.empty() ? head(Branch::plus).in_dim() : encoder.front().in_dim();
}

std::size_t ModelParams::latent_dim() const {
    return encoder.empty() ? head(Branch::plus).in_dim() : encoder.back().out_dim();
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    z.for_each_tensor([](const std::string&, Matrix& w) { w.setZero(); },
                      [](const std::string&, Vector& b) { b.setZero(); });
    return z;
}

void ModelParams::for_each_tensor(const std::function<void(const std::string&, Matrix&)>& weight_fn,
                                  const std::function<void(const std::string&, Vector&)>& bias_fn) {
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        const std::string prefix = "encoder." + std::to_string(l);
        weight_fn(prefix + ".weight", encoder[l].weight);
        bias_fn(prefix + ".bias", encoder[l].bias);
    }
    for (Branch b : {Branch::plus, Branch::mid, Branch::minus}) {
        const std::string prefix = "head." + std::string(branch_name(b));
        weight_fn(prefix + ".weight", head(b).weight);
        bias_fn(prefix + ".bias", head(b).bias);
    }
}

void ModelParams::for_each_tensor(const std::function<void(const std::string&, const Matrix&)>& weight_fn,
                                  const std::function<void(const std::string&, const Vector&)>& bias_fn) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const std::string& n, Matrix& w) { weight_fn(n, w); },
        [&](const std::string& n, Vector& b) { bias_fn(n, b); });
}

bool ModelParams::operator==(const ModelParams& other) const {
    if (variant != other.variant || use_bias != other.use_bias || encoder.size() != other.encoder.size()) {
        return false;
    }
    auto same = [](const AffineLayer& a, const AffineLayer& b) {
        return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
               a.bias.size() == b.bias.size() && a.weight == b.weight && a.bias == b.bias;
    };
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        if (!same(encoder[l], other.encoder[l])) return false;
    }
    for (std::size_t h = 0; h < heads.size(); ++h) {
        if (!same(heads[h], other.heads[h])) return false;
    }
    return true;
}

void validate_params(const ModelParams& params) {
    for (std::size_t l = 1; l < params.encoder.size(); ++l) {
        if (params.encoder[l].in_dim() != params.encoder[l - 1].out_dim()) {
            throw ValidationError("encoder layer " + std::to_string(l) + " input width mismatch");
        }
    }
    const std::size_t latent = params.latent_dim();
    const auto& plus = params.head(Branch::plus);
    const auto& mid = params.head(Branch::mid);
    const auto& minus = params.head(Branch::minus);
    bool ok = plus.in_dim() == latent;
    if (params.variant == HeadVariant::flat) {
        ok = ok && mid.in_dim() == latent && minus.in_dim() == latent;
    } else {
        ok = ok && mid.in_dim() == plus.out_dim() && minus.in_dim() == mid.out_dim();
    }
    if (!ok) throw ValidationError("head input widths do not match the head variant");
    CodeLengthGroup{minus.out_dim(), mid.out_dim(), plus.out_dim()}.validate();
}

ModelParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
    if (spec.input_dim < 1) throw ValidationError("network input_dim must be >= 1");
    spec.lengths.validate();
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.variant = spec.variant;
    p.use_bias = spec.use_bias;
    std::size_t width = spec.input_dim;
    if (!spec.encoder.identity) {
        for (std::size_t h : spec.encoder.hidden) {
            if (h < 1) throw ValidationError("hidden layer width must be >= 1");
            p.encoder.push_back(glorot_layer(width, h, rng));
            width = h;
        }
        if (spec.encoder.latent_dim < 1) throw ValidationError("latent_dim must be >= 1");
        p.encoder.push_back(glorot_layer(width, spec.encoder.latent_dim, rng));
        width = spec.encoder.latent_dim;
    }
    const auto& c = spec.lengths;
    if (spec.variant == HeadVariant::flat) {
        p.head(Branch::plus) = glorot_layer(width, c.c_plus, rng);
        p.head(Branch::mid) = glorot_layer(width, c.c_mid, rng);
        p.head(Branch::minus) = glorot_layer(width, c.c_minus, rng);
    } else {
        p.head(Branch::plus) = glorot_layer(width, c.c_plus, rng);
        p.head(Branch::mid) = glorot_layer(c.c_plus, c.c_mid, rng);
        p.head(Branch::minus) = glorot_layer(c.c_mid, c.c_minus, rng);
    }
    return p;
}

ForwardPass encoder_forward(const ModelParams& params, const Matrix& batch) {
    if (static_cast<std::size_t>(batch.cols()) != params.input_dim()) {
        throw ValidationError("shape mismatch: encoder expects width " + std::to_string(params.input_dim()) +
                              ", batch has " + std::to_string(batch.cols()));
    }
    ForwardPass pass;
    pass.activations.reserve(params.encoder.size() + 1);
    pass.activations.push_back(batch);
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        Matrix y = apply(params.encoder[l], pass.activations.back());
        if (l + 1 < params.encoder.size()) y = y.array().tanh().matrix();
        pass.activations.push_back(std::move(y));
    }
    return pass;
}

HeadOutputs heads_forward(const ModelParams& params, const Matrix& latent) {
    HeadOutputs out;
    out[Branch::plus] = apply(params.head(Branch::plus), latent);
    if (params.variant == HeadVariant::flat) {
        out[Branch::mid] = apply(params.head(Branch::mid), latent);
        out[Branch::minus] = apply(params.head(Branch::minus), latent);
    } else {
        out[Branch::mid] = apply(params.head(Branch::mid), out[Branch::plus]);
        out[Branch::minus] = apply(params.head(Branch::minus), out[Branch::mid]);
    }
    return out;
}

ForwardPass forward(const ModelParams& params, const Matrix& batch) {
    ForwardPass pass = encoder_forward(params, batch);
    pass.heads = heads_forward(params, pass.latent());
    return pass;
}

ParamGrads backward(const ModelParams& params, const ForwardPass& pass, const HeadOutputs& output_grads) {
    if (pass.activations.size() != params.encoder.size() + 1) {
        throw ValidationError("backward called without a matching forward pass");
    }
    const auto m = static_cast<Eigen::Index>(pass.batch_size());
    for (Branch b : kAllBranches) {
        if (output_grads[b].rows() != m || output_grads[b].cols() != pass.heads[b].cols()) {
            throw ValidationError("backward called without a matching forward pass: gradient for head " +
                                  std::string(branch_name(b)) + " has the wrong shape");
        }
    }
    ParamGrads grads = params.zeros_like();
    const Matrix& latent = pass.latent();
    Matrix d_latent;
    if (params.variant == HeadVariant::flat) {
        d_latent = Matrix::Zero(latent.rows(), latent.cols());
        for (Branch b : {Branch::plus, Branch::mid, Branch::minus}) {
            d_latent += affine_backward(params.head(b), latent, output_grads[b], grads.head(b), params.use_bias);
        }
    } else {
        Matrix d_mid = output_grads[Branch::mid];
        d_mid += affine_backward(params.head(Branch::minus), pass.heads[head_input_of(Branch::minus)],
                                 output_grads[Branch::minus], grads.head(Branch::minus), params.use_bias);
        Matrix d_plus = output_grads[Branch::plus];
        d_plus += affine_backward(params.head(Branch::mid), pass.heads[head_input_of(Branch::mid)], d_mid,
                                  grads.head(Branch::mid), params.use_bias);
        d_latent = affine_backward(params.head(Branch::plus), latent, d_plus, grads.head(Branch::plus),
                                   params.use_bias);
    }
    Matrix d_out = std::move(d_latent);
    for (std::size_t l = params.encoder.size(); l-- > 0;) {
        if (l + 1 < params.encoder.size()) {
            // tanh sits between this layer and the next one.
            const Matrix& a = pass.activations[l + 1];
            d_out = d_out.cwiseProduct((1.0 - a.array().square()).matrix());
        }
        d_out = affine_backward(params.encoder[l], pass.activations[l], d_out, grads.encoder[l], params.use_bias);
    }
    return grads;
}

OptimizerState make_optimizer(const ModelParams& params, double learning_rate, double momentum,
                              double weight_decay) {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ValidationError("learning rate must be finite and >= 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw ValidationError("weight decay must be finite and >= 0");
    }
    return OptimizerState{params.zeros_like(), learning_rate, momentum, weight_decay};
}

void sgd_step(ModelParams& params, const ParamGrads& grads, OptimizerState& state) {
    // Validate every gradient before touching any parameter.
    grads.for_each_tensor(
        [](const std::string& name, const Matrix& g) {
            if (!g.allFinite()) throw NumericError("non-finite gradient in " + name);
        },
        [](const std::string& name, const Vector& g) {
            if (!g.allFinite()) throw NumericError("non-finite gradient in " + name);
        });

    std::vector<const Matrix*> gw;
    std::vector<const Vector*> gb;
    grads.for_each_tensor([&](const std::string&, const Matrix& g) { gw.push_back(&g); },
                          [&](const std::string&, const Vector& g) { gb.push_back(&g); });
    std::vector<Matrix*> vw;
    std::vector<Vector*> vb;
    state.velocity.for_each_tensor([&](const std::string&, Matrix& v) { vw.push_back(&v); },
                                   [&](const std::string&, Vector& v) { vb.push_back(&v); });
    std::size_t wi = 0;
    std::size_t bi = 0;
    const bool use_bias = params.use_bias;
    params.for_each_tensor(
        [&](const std::string& name, Matrix& p) {
            const Matrix& g = *gw.at(wi);
            Matrix& v = *vw.at(wi);
            ++wi;
            if (g.rows() != p.rows() || g.cols() != p.cols() || v.rows() != p.rows() || v.cols() != p.cols()) {
                throw ValidationError("shape mismatch for " + name);
            }
            v = state.momentum * v + g + state.weight_decay * p;
            p -= state.learning_rate * v;
        },
        [&](const std::string& name, Vector& p) {
            const Vector& g = *gb.at(bi);
            Vector& v = *vb.at(bi);
            ++bi;
            if (g.size() != p.size() || v.size() != p.size()) throw ValidationError("shape mismatch for " + name);
            if (!use_bias) return;
            v = state.momentum * v + g + state.weight_decay * p;
            p -= state.learning_rate * v;
        });
}

}  // namespace mah
