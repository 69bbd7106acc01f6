#include "tscf/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "tscf/errors.hpp"
#include "tscf/rng.hpp"

namespace tscf {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

/// Batched activations, shape (batch, channels, length), channel-major per sample.
struct Tensor {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t b, std::size_t c, std::size_t l) : batch(b), channels(c), length(l), data(b * c * l, 0.0) {}

  std::size_t sample_size() const { return channels * length; }
  double* sample(std::size_t b) { return data.data() + b * sample_size(); }
  const double* sample(std::size_t b) const { return data.data() + b * sample_size(); }
};

enum class Mode { inference, training };

/// Per-layer intermediate state kept for the backward pass.
struct Trace {
  std::vector<Tensor> inputs;  ///< inputs[i] feeds layer i; inputs.back() is the output
  std::vector<Tensor> normalized;             ///< batchnorm x-hat (training)
  std::vector<std::vector<double>> aux;       ///< batchnorm inv-std / dropout mask
  std::vector<std::vector<double>> batch_mean;
  std::vector<std::vector<double>> batch_var;
};

struct LayerGrads {
  std::vector<double> first;   ///< weight / kernel / gamma
  std::vector<double> second;  ///< bias / beta
};

std::size_t same_pad_left(std::size_t width) { return (width - 1) / 2; }

Tensor forward_dense(const DenseLayer& l, const Tensor& in) {
  if (in.sample_size() != l.inputs) {
    throw ContractError("dense layer expects " + std::to_string(l.inputs) + " inputs, got " +
                        std::to_string(in.sample_size()));
  }
  Tensor out(in.batch, l.outputs, 1);
  for (std::size_t b = 0; b < in.batch; ++b) {
    const double* x = in.sample(b);
    double* y = out.sample(b);
    for (std::size_t o = 0; o < l.outputs; ++o) {
      const double* w = l.weight.data() + o * l.inputs;
      double acc = l.bias[o];
      for (std::size_t i = 0; i < l.inputs; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
  }
  return out;
}

Tensor backward_dense(const DenseLayer& l, const Tensor& in, const Tensor& grad, LayerGrads* g) {
  Tensor dx(in.batch, in.channels, in.length);
  for (std::size_t b = 0; b < in.batch; ++b) {
    const double* x = in.sample(b);
    const double* gy = grad.sample(b);
    double* gx = dx.sample(b);
    for (std::size_t o = 0; o < l.outputs; ++o) {
      const double go = gy[o];
      if (go == 0.0) continue;
      const double* w = l.weight.data() + o * l.inputs;
      for (std::size_t i = 0; i < l.inputs; ++i) gx[i] += w[i] * go;
      if (g) {
        double* gw = g->first.data() + o * l.inputs;
        for (std::size_t i = 0; i < l.inputs; ++i) gw[i] += go * x[i];
        g->second[o] += go;
      }
    }
  }
  return dx;
}

Tensor forward_conv(const Conv1dLayer& l, const Tensor& in) {
  if (in.channels != l.in_channels) {
    throw ContractError("conv layer expects " + std::to_string(l.in_channels) +
                        " channels, got " + std::to_string(in.channels));
  }
  const std::size_t len = in.length;
  const auto left = static_cast<std::ptrdiff_t>(same_pad_left(l.width));
  Tensor out(in.batch, l.filters, len);
  for (std::size_t b = 0; b < in.batch; ++b) {
    const double* x = in.sample(b);
    double* y = out.sample(b);
    for (std::size_t f = 0; f < l.filters; ++f) {
      double* yf = y + f * len;
      std::fill(yf, yf + len, l.bias[f]);
      for (std::size_t i = 0; i < l.in_channels; ++i) {
        const double* xi = x + i * len;
        const double* k = l.kernel.data() + (f * l.in_channels + i) * l.width;
        for (std::size_t j = 0; j < l.width; ++j) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - left;
          const double kv = k[j];
          const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          const std::size_t t1 = shift > 0 ? len - std::min(len, static_cast<std::size_t>(shift)) : len;
          for (std::size_t t = t0; t < t1; ++t) yf[t] += kv * xi[static_cast<std::ptrdiff_t>(t) + shift];
        }
      }
    }
  }
  return out;
}

Tensor backward_conv(const Conv1dLayer& l, const Tensor& in, const Tensor& grad, LayerGrads* g) {
  const std::size_t len = in.length;
  const auto left = static_cast<std::ptrdiff_t>(same_pad_left(l.width));
  Tensor dx(in.batch, in.channels, len);
  for (std::size_t b = 0; b < in.batch; ++b) {
    const double* x = in.sample(b);
    const double* gy = grad.sample(b);
    double* gx = dx.sample(b);
    for (std::size_t f = 0; f < l.filters; ++f) {
      const double* gf = gy + f * len;
      if (g) {
        double s = 0.0;
        for (std::size_t t = 0; t < len; ++t) s += gf[t];
        g->second[f] += s;
      }
      for (std::size_t i = 0; i < l.in_channels; ++i) {
        const double* xi = x + i * len;
        double* gxi = gx + i * len;
        const std::size_t base = (f * l.in_channels + i) * l.width;
        const double* k = l.kernel.data() + base;
        for (std::size_t j = 0; j < l.width; ++j) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - left;
          const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          const std::size_t t1 = shift > 0 ? len - std::min(len, static_cast<std::size_t>(shift)) : len;
          const double kv = k[j];
          double acc = 0.0;
          for (std::size_t t = t0; t < t1; ++t) {
            const auto s = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + shift);
            gxi[s] += kv * gf[t];
            acc += gf[t] * xi[s];
          }
          if (g) g->first[base + j] += acc;
        }
      }
    }
  }
  return dx;
}

Tensor forward_batchnorm(const BatchNormLayer& l, const Tensor& in, Mode mode, Trace& trace,
                         std::size_t index) {
  if (in.channels != l.channels) {
    throw ContractError("batchnorm expects " + std::to_string(l.channels) + " channels, got " +
                        std::to_string(in.channels));
  }
  Tensor out(in.batch, in.channels, in.length);
  std::vector<double> mean(l.channels), var(l.channels), inv_std(l.channels);
  if (mode == Mode::training) {
    const double count = static_cast<double>(in.batch * in.length);
    for (std::size_t c = 0; c < l.channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < in.batch; ++b) {
        const double* x = in.sample(b) + c * in.length;
        for (std::size_t t = 0; t < in.length; ++t) s += x[t];
      }
      mean[c] = s / count;
      double v = 0.0;
      for (std::size_t b = 0; b < in.batch; ++b) {
        const double* x = in.sample(b) + c * in.length;
        for (std::size_t t = 0; t < in.length; ++t) v += (x[t] - mean[c]) * (x[t] - mean[c]);
      }
      var[c] = v / count;
    }
  } else {
    mean = l.running_mean;
    var = l.running_var;
  }
  Tensor xhat(in.batch, in.channels, in.length);
  for (std::size_t c = 0; c < l.channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + l.epsilon);
  for (std::size_t b = 0; b < in.batch; ++b) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const double* x = in.sample(b) + c * in.length;
      double* xh = xhat.sample(b) + c * in.length;
      double* y = out.sample(b) + c * in.length;
      for (std::size_t t = 0; t < in.length; ++t) {
        xh[t] = (x[t] - mean[c]) * inv_std[c];
        y[t] = l.gamma[c] * xh[t] + l.beta[c];
      }
    }
  }
  trace.aux[index] = std::move(inv_std);
  if (mode == Mode::training) {
    trace.normalized[index] = std::move(xhat);
    trace.batch_mean[index] = std::move(mean);
    trace.batch_var[index] = std::move(var);
  }
  return out;
}

Tensor backward_batchnorm(const BatchNormLayer& l, const Tensor& grad, Mode mode,
                          const Trace& trace, std::size_t index, LayerGrads* g) {
  Tensor dx(grad.batch, grad.channels, grad.length);
  const auto& inv_std = trace.aux[index];
  if (mode == Mode::inference) {
    for (std::size_t b = 0; b < grad.batch; ++b) {
      for (std::size_t c = 0; c < l.channels; ++c) {
        const double* gy = grad.sample(b) + c * grad.length;
        double* gx = dx.sample(b) + c * grad.length;
        const double s = l.gamma[c] * inv_std[c];
        for (std::size_t t = 0; t < grad.length; ++t) gx[t] = gy[t] * s;
      }
    }
    return dx;
  }
  const Tensor& xhat = trace.normalized[index];
  const double count = static_cast<double>(grad.batch * grad.length);
  for (std::size_t c = 0; c < l.channels; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < grad.batch; ++b) {
      const double* gy = grad.sample(b) + c * grad.length;
      const double* xh = xhat.sample(b) + c * grad.length;
      for (std::size_t t = 0; t < grad.length; ++t) {
        sum_g += gy[t];
        sum_gx += gy[t] * xh[t];
      }
    }
    if (g) {
      g->first[c] += sum_gx;
      g->second[c] += sum_g;
    }
    // dx = gamma * inv_std / n * (n * g - sum(g) - xhat * sum(g * xhat))
    const double scale = l.gamma[c] * inv_std[c] / count;
    for (std::size_t b = 0; b < grad.batch; ++b) {
      const double* gy = grad.sample(b) + c * grad.length;
      const double* xh = xhat.sample(b) + c * grad.length;
      double* gx = dx.sample(b) + c * grad.length;
      for (std::size_t t = 0; t < grad.length; ++t) {
        gx[t] = scale * (count * gy[t] - sum_g - xh[t] * sum_gx);
      }
    }
  }
  return dx;
}

Trace run_forward(const ClassifierModel& model, Tensor input, Mode mode, Rng* rng,
                  std::size_t stop_before = std::numeric_limits<std::size_t>::max()) {
  const std::size_t count = std::min(stop_before, model.layers.size());
  Trace trace;
  trace.inputs.reserve(count + 1);
  trace.inputs.push_back(std::move(input));
  trace.normalized.resize(count);
  trace.aux.resize(count);
  trace.batch_mean.resize(count);
  trace.batch_var.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor& in = trace.inputs.back();
    Tensor out = std::visit(
        overloaded{
            [&](const DenseLayer& l) { return forward_dense(l, in); },
            [&](const Conv1dLayer& l) { return forward_conv(l, in); },
            [&](const BatchNormLayer& l) { return forward_batchnorm(l, in, mode, trace, i); },
            [&](const ReluLayer&) {
              Tensor o = in;
              for (double& v : o.data) v = v > 0.0 ? v : 0.0;
              return o;
            },
            [&](const GlobalAvgPoolLayer&) {
              Tensor o(in.batch, in.channels, 1);
              for (std::size_t b = 0; b < in.batch; ++b) {
                for (std::size_t c = 0; c < in.channels; ++c) {
                  const double* x = in.sample(b) + c * in.length;
                  double s = 0.0;
                  for (std::size_t t = 0; t < in.length; ++t) s += x[t];
                  o.sample(b)[c] = s / static_cast<double>(in.length);
                }
              }
              return o;
            },
            [&](const DropoutLayer& l) {
              if (mode == Mode::inference || l.rate <= 0.0 || rng == nullptr) {
                trace.aux[i].clear();
                return in;
              }
              Tensor o = in;
              auto& mask = trace.aux[i];
              mask.resize(o.data.size());
              const double keep = 1.0 - l.rate;
              for (std::size_t j = 0; j < mask.size(); ++j) {
                mask[j] = rng->uniform() < keep ? 1.0 / keep : 0.0;
                o.data[j] *= mask[j];
              }
              return o;
            },
        },
        model.layers[i]);
    trace.inputs.push_back(std::move(out));
  }
  return trace;
}

/// Propagates `grad` (w.r.t. the trace output) back to the network input.
Tensor run_backward(const ClassifierModel& model, const Trace& trace, Tensor grad, Mode mode,
                    std::vector<LayerGrads>* grads) {
  const std::size_t count = trace.inputs.size() - 1;
  for (std::size_t i = count; i-- > 0;) {
    const Tensor& in = trace.inputs[i];
    LayerGrads* g = grads ? &(*grads)[i] : nullptr;
    grad = std::visit(
        overloaded{
            [&](const DenseLayer& l) { return backward_dense(l, in, grad, g); },
            [&](const Conv1dLayer& l) { return backward_conv(l, in, grad, g); },
            [&](const BatchNormLayer& l) { return backward_batchnorm(l, grad, mode, trace, i, g); },
            [&](const ReluLayer&) {
              Tensor d = std::move(grad);
              for (std::size_t j = 0; j < d.data.size(); ++j) {
                if (!(in.data[j] > 0.0)) d.data[j] = 0.0;
              }
              return d;
            },
            [&](const GlobalAvgPoolLayer&) {
              Tensor d(in.batch, in.channels, in.length);
              const double inv = 1.0 / static_cast<double>(in.length);
              for (std::size_t b = 0; b < in.batch; ++b) {
                for (std::size_t c = 0; c < in.channels; ++c) {
                  const double gv = grad.sample(b)[c] * inv;
                  double* x = d.sample(b) + c * in.length;
                  for (std::size_t t = 0; t < in.length; ++t) x[t] = gv;
                }
              }
              return d;
            },
            [&](const DropoutLayer&) {
              Tensor d = std::move(grad);
              const auto& mask = trace.aux[i];
              if (!mask.empty()) {
                for (std::size_t j = 0; j < d.data.size(); ++j) d.data[j] *= mask[j];
              }
              return d;
            },
        },
        model.layers[i]);
    // Dense flattens (C, L) -> features; restore the input shape for upstream layers.
    grad.channels = in.channels;
    grad.length = in.length;
  }
  return grad;
}

Tensor as_batch(const ClassifierModel& model, const TimeSeries& x) {
  if (x.channels() != model.channels || x.steps() != model.steps) {
    throw ContractError("input shape " + std::to_string(x.channels()) + "x" +
                        std::to_string(x.steps()) + " does not match model input " +
                        std::to_string(model.channels) + "x" + std::to_string(model.steps));
  }
  Tensor t(1, x.channels(), x.steps());
  std::copy(x.flat().begin(), x.flat().end(), t.data.begin());
  return t;
}

void glorot(std::vector<double>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w) v = rng.uniform(-limit, limit);
}

DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng) {
  DenseLayer l{in, out, std::vector<double>(in * out), std::vector<double>(out, 0.0)};
  glorot(l.weight, in, out, rng);
  return l;
}

Conv1dLayer make_conv(std::size_t in, std::size_t filters, std::size_t width, Rng& rng) {
  Conv1dLayer l{in, filters, width, std::vector<double>(filters * in * width),
                std::vector<double>(filters, 0.0)};
  glorot(l.kernel, in * width, filters * width, rng);
  return l;
}

BatchNormLayer make_batchnorm(std::size_t channels) {
  BatchNormLayer l;
  l.channels = channels;
  l.gamma.assign(channels, 1.0);
  l.beta.assign(channels, 0.0);
  l.running_mean.assign(channels, 0.0);
  l.running_var.assign(channels, 1.0);
  return l;
}

std::vector<LayerGrads> zero_grads(const ClassifierModel& model) {
  std::vector<LayerGrads> out(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    std::visit(overloaded{
                   [&](const DenseLayer& l) {
                     out[i].first.assign(l.weight.size(), 0.0);
                     out[i].second.assign(l.bias.size(), 0.0);
                   },
                   [&](const Conv1dLayer& l) {
                     out[i].first.assign(l.kernel.size(), 0.0);
                     out[i].second.assign(l.bias.size(), 0.0);
                   },
                   [&](const BatchNormLayer& l) {
                     out[i].first.assign(l.gamma.size(), 0.0);
                     out[i].second.assign(l.beta.size(), 0.0);
                   },
                   [](const auto&) {},
               },
               model.layers[i]);
  }
  return out;
}

/// Trainable parameter blocks in a fixed order, matching zero_grads().
std::vector<std::pair<std::vector<double>*, const std::vector<double>*>> pair_params(
    ClassifierModel& model, const std::vector<LayerGrads>& grads) {
  std::vector<std::pair<std::vector<double>*, const std::vector<double>*>> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    std::visit(overloaded{
                   [&](DenseLayer& l) {
                     out.emplace_back(&l.weight, &grads[i].first);
                     out.emplace_back(&l.bias, &grads[i].second);
                   },
                   [&](Conv1dLayer& l) {
                     out.emplace_back(&l.kernel, &grads[i].first);
                     out.emplace_back(&l.bias, &grads[i].second);
                   },
                   [&](BatchNormLayer& l) {
                     out.emplace_back(&l.gamma, &grads[i].first);
                     out.emplace_back(&l.beta, &grads[i].second);
                   },
                   [](auto&) {},
               },
               model.layers[i]);
  }
  return out;
}

}  // namespace

std::string to_string(Architecture arch) { return arch == Architecture::fcn ? "fcn" : "mlp"; }

Architecture parse_architecture(const std::string& name) {
  if (name == "mlp") return Architecture::mlp;
  if (name == "fcn") return Architecture::fcn;
  throw ConfigError("unknown architecture '" + name + "' (expected mlp or fcn)");
}

void ClassifierModel::validate() const {
  if (channels < 1 || steps < 1) throw ContractError("model input shape must be positive");
  if (layers.empty()) throw ContractError("model has no layers");
  std::size_t c = channels, len = steps;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto fail = [&](const std::string& what) {
      throw ContractError("layer " + std::to_string(i) + ": " + what);
    };
    std::visit(overloaded{
                   [&](const DenseLayer& l) {
                     if (l.inputs != c * len) fail("dense input size mismatch");
                     if (l.weight.size() != l.inputs * l.outputs || l.bias.size() != l.outputs) {
                       fail("dense weight blob has the wrong size");
                     }
                     c = l.outputs;
                     len = 1;
                   },
                   [&](const Conv1dLayer& l) {
                     if (l.in_channels != c) fail("conv channel mismatch");
                     if (l.width < 1) fail("conv width must be positive");
                     if (l.kernel.size() != l.filters * l.in_channels * l.width ||
                         l.bias.size() != l.filters) {
                       fail("conv kernel blob has the wrong size");
                     }
                     c = l.filters;
                   },
                   [&](const BatchNormLayer& l) {
                     if (l.channels != c) fail("batchnorm channel mismatch");
                     if (l.gamma.size() != c || l.beta.size() != c || l.running_mean.size() != c ||
                         l.running_var.size() != c) {
                       fail("batchnorm blob has the wrong size");
                     }
                   },
                   [&](const GlobalAvgPoolLayer&) { len = 1; },
                   [&](const DropoutLayer& l) {
                     if (l.rate < 0.0 || l.rate >= 1.0) fail("dropout rate outside [0, 1)");
                   },
                   [](const ReluLayer&) {},
               },
               layers[i]);
  }
  if (!std::holds_alternative<DenseLayer>(layers.back())) {
    throw ContractError("final layer must be dense");
  }
  if (c * len != num_classes || num_classes < 2) {
    throw ContractError("final layer must output num_classes (>= 2) logits");
  }
  if (architecture == Architecture::fcn) {
    if (layers.size() < 2 || !std::holds_alternative<GlobalAvgPoolLayer>(layers[layers.size() - 2])) {
      throw ContractError("fcn must end with global average pooling followed by one dense layer");
    }
  }
}

std::size_t ClassifierModel::head_index() const {
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (std::holds_alternative<DenseLayer>(layers[i])) return i;
  }
  throw ContractError("model has no dense head");
}

std::size_t ClassifierModel::latent_dim() const {
  return std::get<DenseLayer>(layers[head_index()]).inputs;
}

ClassifierModel build_mlp(std::size_t channels, std::size_t steps, std::size_t classes,
                          const MlpShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  ClassifierModel m;
  m.architecture = Architecture::mlp;
  m.channels = channels;
  m.steps = steps;
  m.num_classes = classes;
  auto dropout_at = [&](std::size_t i) { return i < shape.dropout.size() ? shape.dropout[i] : 0.0; };
  std::size_t width = channels * steps;
  for (std::size_t i = 0; i < shape.hidden.size(); ++i) {
    if (dropout_at(i) > 0) m.layers.emplace_back(DropoutLayer{dropout_at(i)});
    m.layers.emplace_back(make_dense(width, shape.hidden[i], rng));
    m.layers.emplace_back(ReluLayer{});
    width = shape.hidden[i];
  }
  if (dropout_at(shape.hidden.size()) > 0) {
    m.layers.emplace_back(DropoutLayer{dropout_at(shape.hidden.size())});
  }
  m.layers.emplace_back(make_dense(width, classes, rng));
  m.validate();
  return m;
}

ClassifierModel build_fcn(std::size_t channels, std::size_t steps, std::size_t classes,
                          const FcnShape& shape, std::uint64_t seed) {
  if (shape.filters.size() != shape.widths.size() || shape.filters.empty()) {
    throw ConfigError("fcn needs one width per convolution block");
  }
  Rng rng(seed);
  ClassifierModel m;
  m.architecture = Architecture::fcn;
  m.channels = channels;
  m.steps = steps;
  m.num_classes = classes;
  std::size_t in = channels;
  for (std::size_t i = 0; i < shape.filters.size(); ++i) {
    m.layers.emplace_back(make_conv(in, shape.filters[i], shape.widths[i], rng));
    m.layers.emplace_back(make_batchnorm(shape.filters[i]));
    m.layers.emplace_back(ReluLayer{});
    in = shape.filters[i];
  }
  m.layers.emplace_back(GlobalAvgPoolLayer{});
  m.layers.emplace_back(make_dense(in, classes, rng));
  m.validate();
  return m;
}

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.begin(), z.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double s = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : p) v /= s;
  return p;
}

ClassifierModel train(Architecture arch, const Dataset& data, const TrainConfig& cfg) {
  if (data.train.empty()) throw TrainingError("training split is empty");
  if (data.num_classes < 2) throw TrainingError("training needs at least two classes");
  std::size_t present = 0;
  for (auto count : data.class_counts()) present += count > 0;
  if (present < 2) throw TrainingError("training split contains a single class");
  if (cfg.batch < 1 || cfg.learning_rate <= 0) throw ConfigError("batch and learning rate must be positive");

  const std::size_t n = data.channels(), t = data.steps();
  ClassifierModel model = arch == Architecture::fcn
                              ? build_fcn(n, t, data.num_classes, cfg.fcn, mix_seed(cfg.seed, 1))
                              : build_mlp(n, t, data.num_classes, cfg.mlp, mix_seed(cfg.seed, 1));
  Rng rng(mix_seed(cfg.seed, 2));

  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  auto grads = zero_grads(model);
  auto params = pair_params(model, grads);
  std::vector<std::vector<double>> m1, m2;
  for (auto& [p, g] : params) {
    m1.emplace_back(p->size(), 0.0);
    m2.emplace_back(p->size(), 0.0);
  }
  std::size_t step = 0;

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::min(cfg.batch, order.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const std::size_t b = end - start;
      Tensor input(b, n, t);
      for (std::size_t i = 0; i < b; ++i) {
        const auto& x = data.train[order[start + i]].series.flat();
        std::copy(x.begin(), x.end(), input.sample(i));
      }
      Trace trace = run_forward(model, std::move(input), Mode::training, &rng);
      const Tensor& out = trace.inputs.back();
      Tensor dlogits(b, data.num_classes, 1);
      for (std::size_t i = 0; i < b; ++i) {
        auto p = softmax({out.sample(i), data.num_classes});
        const std::size_t y = data.train[order[start + i]].label;
        epoch_loss -= std::log(std::max(p[y], 1e-300));
        p[y] -= 1.0;
        for (std::size_t c = 0; c < data.num_classes; ++c) {
          dlogits.sample(i)[c] = p[c] / static_cast<double>(b);
        }
      }
      if (!std::isfinite(epoch_loss)) {
        throw TrainingError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch) + "; try a lower learning rate");
      }
      for (auto& g : grads) {
        std::fill(g.first.begin(), g.first.end(), 0.0);
        std::fill(g.second.begin(), g.second.end(), 0.0);
      }
      run_backward(model, trace, std::move(dlogits), Mode::training, &grads);

      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k].first;
        const auto& g = *params[k].second;
        for (std::size_t j = 0; j < p.size(); ++j) {
          m1[k][j] = beta1 * m1[k][j] + (1 - beta1) * g[j];
          m2[k][j] = beta2 * m2[k][j] + (1 - beta2) * g[j] * g[j];
          p[j] -= cfg.learning_rate * (m1[k][j] / c1) / (std::sqrt(m2[k][j] / c2) + adam_eps);
        }
      }
      for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (auto* bn = std::get_if<BatchNormLayer>(&model.layers[i])) {
          for (std::size_t c = 0; c < bn->channels; ++c) {
            bn->running_mean[c] = bn->momentum * bn->running_mean[c] +
                                  (1 - bn->momentum) * trace.batch_mean[i][c];
            bn->running_var[c] = bn->momentum * bn->running_var[c] +
                                 (1 - bn->momentum) * trace.batch_var[i][c];
          }
        }
      }
    }
    for (const auto& [p, g] : params) {
      for (double v : *p) {
        if (!std::isfinite(v)) {
          throw TrainingError("training diverged (non-finite weights) at epoch " +
                              std::to_string(epoch) + "; try a lower learning rate");
        }
      }
    }
  }
  model.train_accuracy = accuracy(model, data.train);
  if (!data.test.empty()) model.test_accuracy = accuracy(model, data.test);
  return model;
}

std::vector<double> logits(const ClassifierModel& model, const TimeSeries& x) {
  Trace trace = run_forward(model, as_batch(model, x), Mode::inference, nullptr);
  return std::move(trace.inputs.back().data);
}

Prediction predict(const ClassifierModel& model, const TimeSeries& x) {
  Prediction p;
  p.probs = softmax(logits(model, x));
  p.predicted = static_cast<std::size_t>(
      std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
  return p;
}

std::vector<std::size_t> predict_labels(const ClassifierModel& model,
                                        std::span<const LabeledInstance> instances) {
  std::vector<std::size_t> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(predict(model, inst.series).predicted);
  return out;
}

double accuracy(const ClassifierModel& model, std::span<const LabeledInstance> instances) {
  if (instances.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& inst : instances) correct += predict(model, inst.series).predicted == inst.label;
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

GradientResult input_gradient(const ClassifierModel& model, const TimeSeries& x,
                              const GradientObjective& objective) {
  if (objective.target >= model.num_classes) {
    throw ContractError("gradient target class out of range");
  }
  if (objective.reference) require_same_shape(x, *objective.reference, "input_gradient");
  if (!objective.scale.empty() && objective.scale.size() != x.size()) {
    throw ContractError("input_gradient: scale must have one entry per feature point");
  }
  Trace trace = run_forward(model, as_batch(model, x), Mode::inference, nullptr);
  const auto p = softmax(trace.inputs.back().data);
  const std::size_t tgt = objective.target;
  const double diff = p[tgt] - objective.target_prob;

  GradientResult result;
  result.target_prob = p[tgt];
  result.loss = objective.weight * diff * diff;

  // d/dz_j of weight * (p_t - y)^2 = 2 * weight * diff * p_t * (delta_tj - p_j)
  Tensor dz(1, model.num_classes, 1);
  const double outer = 2.0 * objective.weight * diff * p[tgt];
  for (std::size_t j = 0; j < model.num_classes; ++j) {
    dz.data[j] = outer * ((j == tgt ? 1.0 : 0.0) - p[j]);
  }
  Tensor dx = run_backward(model, trace, std::move(dz), Mode::inference, nullptr);
  result.gradient = TimeSeries(x.channels(), x.steps(), std::move(dx.data));

  if (objective.reference) {
    const auto xs = x.flat();
    const auto rs = objective.reference->flat();
    auto g = result.gradient.flat();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double s = objective.scale.empty() ? 1.0 : objective.scale[i];
      const double d = xs[i] - rs[i];
      result.loss += std::abs(d) / s;
      if (d > 0) {
        g[i] += 1.0 / s;
      } else if (d < 0) {
        g[i] -= 1.0 / s;
      }
    }
  }
  return result;
}

LatentRep latent(const ClassifierModel& model, const TimeSeries& x) {
  Trace trace = run_forward(model, as_batch(model, x), Mode::inference, nullptr, model.head_index());
  return std::move(trace.inputs.back().data);
}

std::vector<double> class_activation_map(const ClassifierModel& model, const TimeSeries& x,
                                         std::size_t cls) {
  const std::size_t n = model.layers.size();
  if (model.architecture != Architecture::fcn || n < 2 ||
      !std::holds_alternative<GlobalAvgPoolLayer>(model.layers[n - 2])) {
    throw UnsupportedError("class activation maps need an fcn model (global pooling + dense head)");
  }
  if (cls >= model.num_classes) throw ContractError("CAM class out of range");
  Trace trace = run_forward(model, as_batch(model, x), Mode::inference, nullptr, n - 2);
  const Tensor& maps = trace.inputs.back();
  const auto& head = std::get<DenseLayer>(model.layers[n - 1]);
  std::vector<double> cam(maps.length, 0.0);
  for (std::size_t k = 0; k < maps.channels; ++k) {
    const double w = head.weight[cls * head.inputs + k];
    const double* a = maps.sample(0) + k * maps.length;
    for (std::size_t t = 0; t < maps.length; ++t) cam[t] += w * a[t];
  }
  return cam;
}

std::vector<std::uint8_t> relu_pattern(const ClassifierModel& model, const TimeSeries& x) {
  Trace trace = run_forward(model, as_batch(model, x), Mode::inference, nullptr);
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (!std::holds_alternative<ReluLayer>(model.layers[i])) continue;
    for (double v : trace.inputs[i].data) out.push_back(v > 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model container: little-endian binary.
//   "TSCFMODL" | u32 version | u32 arch | u64 classes, channels, steps
//   | u8 has_train f64 train_acc | u8 has_test f64 test_acc | u64 layer count
//   | per layer: u32 tag, u64 dims..., f64 blobs (row-major)

namespace {

constexpr char kMagic[8] = {'T', 'S', 'C', 'F', 'M', 'O', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "model container assumes little-endian");

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void blob(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : buf_(std::move(bytes)) {}
  void raw(void* p, std::size_t n) {
    if (n > buf_.size() - pos_) throw CorruptFileError("model file is truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  std::vector<double> blob() {
    const std::uint64_t n = u64();
    if (n > (buf_.size() - pos_) / sizeof(double)) throw CorruptFileError("model file is truncated");
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

enum Tag : std::uint32_t { kDense = 1, kConv = 2, kBatchNorm = 3, kRelu = 4, kGap = 5, kDropout = 6 };

}  // namespace

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.u32(model.architecture == Architecture::fcn ? 1 : 0);
  w.u64(model.num_classes);
  w.u64(model.channels);
  w.u64(model.steps);
  w.u8(model.train_accuracy.has_value());
  w.f64(model.train_accuracy.value_or(0.0));
  w.u8(model.test_accuracy.has_value());
  w.f64(model.test_accuracy.value_or(0.0));
  w.u64(model.layers.size());
  for (const auto& layer : model.layers) {
    std::visit(overloaded{
                   [&](const DenseLayer& l) {
                     w.u32(kDense);
                     w.u64(l.inputs);
                     w.u64(l.outputs);
                     w.blob(l.weight);
                     w.blob(l.bias);
                   },
                   [&](const Conv1dLayer& l) {
                     w.u32(kConv);
                     w.u64(l.in_channels);
                     w.u64(l.filters);
                     w.u64(l.width);
                     w.blob(l.kernel);
                     w.blob(l.bias);
                   },
                   [&](const BatchNormLayer& l) {
                     w.u32(kBatchNorm);
                     w.u64(l.channels);
                     w.f64(l.epsilon);
                     w.f64(l.momentum);
                     w.blob(l.gamma);
                     w.blob(l.beta);
                     w.blob(l.running_mean);
                     w.blob(l.running_var);
                   },
                   [&](const ReluLayer&) { w.u32(kRelu); },
                   [&](const GlobalAvgPoolLayer&) { w.u32(kGap); },
                   [&](const DropoutLayer& l) {
                     w.u32(kDropout);
                     w.f64(l.rate);
                   },
               },
               layer);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file '" + path.string() + "'");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error("failed writing model file '" + path.string() + "'");
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CorruptFileError("'" + path.string() + "' is not a model file");
  }
  const auto version = r.u32();
  if (version != kVersion) {
    throw CorruptFileError("unsupported model file version " + std::to_string(version) +
                           " (expected " + std::to_string(kVersion) + ")");
  }
  ClassifierModel m;
  const auto arch = r.u32();
  if (arch > 1) throw CorruptFileError("unknown architecture tag in model file");
  m.architecture = arch == 1 ? Architecture::fcn : Architecture::mlp;
  m.num_classes = r.u64();
  m.channels = r.u64();
  m.steps = r.u64();
  const bool has_train = r.u8();
  const double train_acc = r.f64();
  const bool has_test = r.u8();
  const double test_acc = r.f64();
  if (has_train) m.train_accuracy = train_acc;
  if (has_test) m.test_accuracy = test_acc;
  const auto count = r.u64();
  if (count > 4096) throw CorruptFileError("implausible layer count in model file");
  for (std::uint64_t i = 0; i < count; ++i) {
    switch (r.u32()) {
      case kDense: {
        DenseLayer l;
        l.inputs = r.u64();
        l.outputs = r.u64();
        l.weight = r.blob();
        l.bias = r.blob();
        m.layers.emplace_back(std::move(l));
        break;
      }
      case kConv: {
        Conv1dLayer l;
        l.in_channels = r.u64();
        l.filters = r.u64();
        l.width = r.u64();
        l.kernel = r.blob();
        l.bias = r.blob();
        m.layers.emplace_back(std::move(l));
        break;
      }
      case kBatchNorm: {
        BatchNormLayer l;
        l.channels = r.u64();
        l.epsilon = r.f64();
        l.momentum = r.f64();
        l.gamma = r.blob();
        l.beta = r.blob();
        l.running_mean = r.blob();
        l.running_var = r.blob();
        m.layers.emplace_back(std::move(l));
        break;
      }
      case kRelu:
        m.layers.emplace_back(ReluLayer{});
        break;
      case kGap:
        m.layers.emplace_back(GlobalAvgPoolLayer{});
        break;
      case kDropout:
        m.layers.emplace_back(DropoutLayer{r.f64()});
        break;
      default:
        throw CorruptFileError("unknown layer tag in model file");
    }
  }
  if (!r.done()) throw CorruptFileError("trailing bytes after model payload");
  try {
    m.validate();
  } catch (const ContractError& e) {
    throw CorruptFileError(std::string("inconsistent model file: ") + e.what());
  }
  return m;
}

}  // namespace tscf
