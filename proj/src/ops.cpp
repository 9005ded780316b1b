#include "fragnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>

namespace fragnet {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
using BackwardFn = std::function<void(detail::Node<T>&)>;

[[noreturn]] void contract(const std::string& op, const std::string& message) {
  throw ContractError(op + ": " + message);
}

std::string dim_message(const char* what, std::size_t expected, std::size_t got) {
  return std::string(what) + " is " + std::to_string(got) + ", expected " +
         std::to_string(expected);
}

template <typename T>
const detail::Node<T>& node_of(const BasicTensor<T>& t) {
  return *t.node();
}

// Gradient buffer of an input, or nullptr if the input does not take part.
template <typename T>
T* grad_target(detail::Node<T>* n) {
  return (n != nullptr && n->requires_grad) ? n->ensure_grad().data() : nullptr;
}

template <typename T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                           std::vector<const BasicTensor<T>*> inputs, BackwardFn<T> backward) {
  for (T v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool track = false;
  if (GradMode::enabled()) {
    for (const BasicTensor<T>* in : inputs) {
      if (in != nullptr && in->defined() && in->requires_grad()) track = true;
    }
  }
  if (track) {
    node->requires_grad = true;
    for (const BasicTensor<T>* in : inputs) {
      if (in != nullptr && in->defined()) node->inputs.push_back(in->node());
    }
    node->backward = std::move(backward);
  }
  return BasicTensor<T>::from_node(std::move(node));
}

template <typename T>
detail::Node<T>* raw(const BasicTensor<T>& t) {
  return t.defined() ? t.node().get() : nullptr;
}

void require_defined(const char* op, bool defined, const char* name) {
  if (!defined) contract(op, std::string(name) + " is undefined");
}

// Splits [H, W, C] / [N, H, W, C] into (N, H, W, C).
struct ImageDims {
  std::size_t n, h, w, c;
};

template <typename T>
ImageDims image_dims(const char* op, const BasicTensor<T>& input) {
  require_defined(op, input.defined(), "input");
  const Shape& s = input.shape();
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  contract(op, "input rank is " + std::to_string(s.size()) + ", expected 3 (HxWxC) or 4 (NxHxWxC)");
}

template <typename T>
Shape image_shape(const BasicTensor<T>& like, std::size_t h, std::size_t w, std::size_t c) {
  if (like.rank() == 3) return {h, w, c};
  return {like.dim(0), h, w, c};
}

}  // namespace

template <std::floating_point T>
BatchNormState<T> BatchNormState<T>::create(std::size_t features) {
  BatchNormState state;
  state.running_mean = BasicTensor<T>::zeros({features});
  state.running_var = BasicTensor<T>::full({features}, T(1));
  return state;
}

template <std::floating_point T>
BasicTensor<T> conv3x3(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       const BasicTensor<T>& bias) {
  static constexpr const char* op = "conv3x3";
  const ImageDims d = image_dims(op, input);
  require_defined(op, weight.defined(), "weight");
  const Shape& ws = weight.shape();
  if (ws.size() != 4) contract(op, "weight rank is " + std::to_string(ws.size()) + ", expected 4");
  if (ws[0] != 3) contract(op, dim_message("weight dimension 0 (kernel height)", 3, ws[0]));
  if (ws[1] != 3) contract(op, dim_message("weight dimension 1 (kernel width)", 3, ws[1]));
  if (ws[2] != d.c) contract(op, dim_message("weight dimension 2 (input channels)", d.c, ws[2]));
  const std::size_t co = ws[3];
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) {
    contract(op, "bias shape " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(co) + " output channels");
  }

  const T* x = input.values().data();
  const T* w = weight.values().data();
  std::vector<T> out(d.n * d.h * d.w * co, T(0));
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t xx = 0; xx < d.w; ++xx) {
        T* o = out.data() + ((n * d.h + y) * d.w + xx) * co;
        if (bias.defined()) std::copy_n(bias.values().data(), co, o);
        for (std::size_t dy = 0; dy < 3; ++dy) {
          if (y + dy < 1 || y + dy - 1 >= d.h) continue;
          for (std::size_t dx = 0; dx < 3; ++dx) {
            if (xx + dx < 1 || xx + dx - 1 >= d.w) continue;
            const T* in = x + ((n * d.h + y + dy - 1) * d.w + xx + dx - 1) * d.c;
            const T* wk = w + (dy * 3 + dx) * d.c * co;
            for (std::size_t i = 0; i < d.c; ++i) {
              const T v = in[i];
              const T* wrow = wk + i * co;
              for (std::size_t oc = 0; oc < co; ++oc) o[oc] += v * wrow[oc];
            }
          }
        }
      }
    }
  }

  detail::Node<T>* in_node = raw(input);
  detail::Node<T>* w_node = raw(weight);
  detail::Node<T>* b_node = raw(bias);
  auto backward = [d, co, in_node, w_node, b_node](detail::Node<T>& self) {
    const T* g = self.grad.data();
    const T* x = in_node->data.data();
    const T* w = w_node->data.data();
    T* gx = grad_target(in_node);
    T* gw = grad_target(w_node);
    T* gb = grad_target(b_node);
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t y = 0; y < d.h; ++y) {
        for (std::size_t xx = 0; xx < d.w; ++xx) {
          const T* go = g + ((n * d.h + y) * d.w + xx) * co;
          if (gb) {
            for (std::size_t oc = 0; oc < co; ++oc) gb[oc] += go[oc];
          }
          for (std::size_t dy = 0; dy < 3; ++dy) {
            if (y + dy < 1 || y + dy - 1 >= d.h) continue;
            for (std::size_t dx = 0; dx < 3; ++dx) {
              if (xx + dx < 1 || xx + dx - 1 >= d.w) continue;
              const std::size_t in_off = ((n * d.h + y + dy - 1) * d.w + xx + dx - 1) * d.c;
              const std::size_t w_off = (dy * 3 + dx) * d.c * co;
              for (std::size_t i = 0; i < d.c; ++i) {
                if (gx) {
                  const T* wrow = w + w_off + i * co;
                  T acc = 0;
                  for (std::size_t oc = 0; oc < co; ++oc) acc += go[oc] * wrow[oc];
                  gx[in_off + i] += acc;
                }
                if (gw) {
                  const T v = x[in_off + i];
                  T* gwrow = gw + w_off + i * co;
                  for (std::size_t oc = 0; oc < co; ++oc) gwrow[oc] += v * go[oc];
                }
              }
            }
          }
        }
      }
    }
  };
  return make_result<T>(op, image_shape(input, d.h, d.w, co), std::move(out),
                        {&input, &weight, &bias}, backward);
}

template <std::floating_point T>
BasicTensor<T> maxpool2(const BasicTensor<T>& input) {
  static constexpr const char* op = "maxpool2";
  const ImageDims d = image_dims(op, input);
  if (d.h % 2 != 0) contract(op, "height " + std::to_string(d.h) + " is odd");
  if (d.w % 2 != 0) contract(op, "width " + std::to_string(d.w) + " is odd");
  const std::size_t oh = d.h / 2, ow = d.w / 2;
  const T* x = input.values().data();
  std::vector<T> out(d.n * oh * ow * d.c);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        for (std::size_t c = 0; c < d.c; ++c) {
          std::size_t best = ((n * d.h + 2 * y) * d.w + 2 * xx) * d.c + c;
          for (std::size_t k = 1; k < 4; ++k) {
            const std::size_t idx =
                ((n * d.h + 2 * y + k / 2) * d.w + 2 * xx + k % 2) * d.c + c;
            if (x[idx] > x[best]) best = idx;
          }
          const std::size_t o = ((n * oh + y) * ow + xx) * d.c + c;
          out[o] = x[best];
          argmax[o] = best;
        }
      }
    }
  }
  detail::Node<T>* in_node = raw(input);
  auto backward = [in_node, argmax = std::move(argmax)](detail::Node<T>& self) {
    T* gx = grad_target(in_node);
    if (!gx) return;
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
  };
  return make_result<T>(op, image_shape(input, oh, ow, d.c), std::move(out), {&input}, backward);
}

template <std::floating_point T>
BasicTensor<T> upsample2(const BasicTensor<T>& input) {
  static constexpr const char* op = "upsample2";
  const ImageDims d = image_dims(op, input);
  const std::size_t oh = d.h * 2, ow = d.w * 2;
  const T* x = input.values().data();
  std::vector<T> out(d.n * oh * ow * d.c);
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        std::copy_n(x + ((n * d.h + y / 2) * d.w + xx / 2) * d.c, d.c,
                    out.data() + ((n * oh + y) * ow + xx) * d.c);
  detail::Node<T>* in_node = raw(input);
  auto backward = [d, oh, ow, in_node](detail::Node<T>& self) {
    T* gx = grad_target(in_node);
    if (!gx) return;
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx)
          for (std::size_t c = 0; c < d.c; ++c)
            gx[((n * d.h + y / 2) * d.w + xx / 2) * d.c + c] +=
                self.grad[((n * oh + y) * ow + xx) * d.c + c];
  };
  return make_result<T>(op, image_shape(input, oh, ow, d.c), std::move(out), {&input}, backward);
}

template <std::floating_point T>
BasicTensor<T> batchnorm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, BatchNormState<T>& state, Mode mode) {
  static constexpr const char* op = "batchnorm";
  require_defined(op, input.defined(), "input");
  require_defined(op, gamma.defined(), "gamma");
  require_defined(op, beta.defined(), "beta");
  const Shape& s = input.shape();
  if (s.size() != 2 && s.size() != 4) {
    contract(op, "input rank is " + std::to_string(s.size()) + ", expected 2 (NxF) or 4 (NxHxWxC)");
  }
  const std::size_t f = s.back();
  const std::size_t m = input.numel() / f;
  if (gamma.numel() != f) contract(op, dim_message("gamma length", f, gamma.numel()));
  if (beta.numel() != f) contract(op, dim_message("beta length", f, beta.numel()));
  if (state.running_mean.numel() != f || state.running_var.numel() != f) {
    contract(op, dim_message("running statistics length", f, state.running_mean.numel()));
  }
  if (mode == Mode::Train && s[0] < 2) {
    contract(op, "train mode needs a batch of at least 2, got " + std::to_string(s[0]));
  }

  const T* x = input.values().data();
  std::vector<T> mean(f), inv_std(f);
  if (mode == Mode::Train) {
    std::vector<double> acc(f, 0.0), acc2(f, 0.0);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < f; ++j) acc[j] += x[r * f + j];
    for (std::size_t j = 0; j < f; ++j) acc[j] /= static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < f; ++j) {
        const double dv = x[r * f + j] - acc[j];
        acc2[j] += dv * dv;
      }
    std::span<T> rm = state.running_mean.mutable_values();
    std::span<T> rv = state.running_var.mutable_values();
    for (std::size_t j = 0; j < f; ++j) {
      const double var = acc2[j] / static_cast<double>(m);
      mean[j] = static_cast<T>(acc[j]);
      inv_std[j] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(state.epsilon)));
      rm[j] = state.momentum * rm[j] + (T(1) - state.momentum) * static_cast<T>(acc[j]);
      rv[j] = state.momentum * rv[j] + (T(1) - state.momentum) * static_cast<T>(var);
    }
  } else {
    std::span<const T> rm = state.running_mean.values();
    std::span<const T> rv = state.running_var.values();
    for (std::size_t j = 0; j < f; ++j) {
      mean[j] = rm[j];
      inv_std[j] = T(1) / std::sqrt(rv[j] + state.epsilon);
    }
  }

  const T* gm = gamma.values().data();
  const T* bt = beta.values().data();
  std::vector<T> xhat(input.numel()), out(input.numel());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      const std::size_t k = r * f + j;
      xhat[k] = (x[k] - mean[j]) * inv_std[j];
      out[k] = gm[j] * xhat[k] + bt[j];
    }

  detail::Node<T>* in_node = raw(input);
  detail::Node<T>* g_node = raw(gamma);
  detail::Node<T>* b_node = raw(beta);
  auto backward = [m, f, mode, in_node, g_node, b_node, xhat = std::move(xhat),
                   inv_std = std::move(inv_std)](detail::Node<T>& self) {
    const T* g = self.grad.data();
    const T* gm = g_node->data.data();
    T* gx = grad_target(in_node);
    T* ggamma = grad_target(g_node);
    T* gbeta = grad_target(b_node);
    std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < f; ++j) {
        sum_g[j] += g[r * f + j];
        sum_gx[j] += static_cast<double>(g[r * f + j]) * xhat[r * f + j];
      }
    for (std::size_t j = 0; j < f; ++j) {
      if (ggamma) ggamma[j] += static_cast<T>(sum_gx[j]);
      if (gbeta) gbeta[j] += static_cast<T>(sum_g[j]);
    }
    if (!gx) return;
    const double md = static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < f; ++j) {
        const std::size_t k = r * f + j;
        if (mode == Mode::Train) {
          gx[k] += static_cast<T>(static_cast<double>(gm[j]) * inv_std[j] / md *
                                  (md * g[k] - sum_g[j] - xhat[k] * sum_gx[j]));
        } else {
          gx[k] += gm[j] * inv_std[j] * g[k];
        }
      }
  };
  return make_result<T>(op, s, std::move(out), {&input, &gamma, &beta}, backward);
}

template <std::floating_point T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias) {
  static constexpr const char* op = "dense";
  require_defined(op, input.defined(), "input");
  require_defined(op, weight.defined(), "weight");
  const Shape& s = input.shape();
  if (s.size() != 1 && s.size() != 2) {
    contract(op, "input rank is " + std::to_string(s.size()) + ", expected 1 or 2");
  }
  const std::size_t n = s.size() == 2 ? s[0] : 1;
  const std::size_t fin = s.back();
  if (weight.rank() != 2) contract(op, "weight rank is " + std::to_string(weight.rank()) + ", expected 2");
  if (weight.dim(0) != fin) contract(op, dim_message("weight dimension 0 (input features)", fin, weight.dim(0)));
  const std::size_t fout = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != fout)) {
    contract(op, "bias shape " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(fout) + " outputs");
  }

  const T* x = input.values().data();
  const T* w = weight.values().data();
  std::vector<T> out(n * fout, T(0));
  for (std::size_t r = 0; r < n; ++r) {
    T* o = out.data() + r * fout;
    if (bias.defined()) std::copy_n(bias.values().data(), fout, o);
    for (std::size_t i = 0; i < fin; ++i) {
      const T v = x[r * fin + i];
      const T* wrow = w + i * fout;
      for (std::size_t j = 0; j < fout; ++j) o[j] += v * wrow[j];
    }
  }

  detail::Node<T>* in_node = raw(input);
  detail::Node<T>* w_node = raw(weight);
  detail::Node<T>* b_node = raw(bias);
  auto backward = [n, fin, fout, in_node, w_node, b_node](detail::Node<T>& self) {
    const T* g = self.grad.data();
    const T* x = in_node->data.data();
    const T* w = w_node->data.data();
    T* gx = grad_target(in_node);
    T* gw = grad_target(w_node);
    T* gb = grad_target(b_node);
    for (std::size_t r = 0; r < n; ++r) {
      const T* go = g + r * fout;
      if (gb) {
        for (std::size_t j = 0; j < fout; ++j) gb[j] += go[j];
      }
      for (std::size_t i = 0; i < fin; ++i) {
        if (gx) {
          const T* wrow = w + i * fout;
          T acc = 0;
          for (std::size_t j = 0; j < fout; ++j) acc += go[j] * wrow[j];
          gx[r * fin + i] += acc;
        }
        if (gw) {
          const T v = x[r * fin + i];
          T* gwrow = gw + i * fout;
          for (std::size_t j = 0; j < fout; ++j) gwrow[j] += v * go[j];
        }
      }
    }
  };
  Shape out_shape = s.size() == 2 ? Shape{n, fout} : Shape{fout};
  return make_result<T>(op, std::move(out_shape), std::move(out), {&input, &weight, &bias}, backward);
}

template <std::floating_point T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  require_defined("relu", input.defined(), "input");
  std::vector<T> out(input.values().begin(), input.values().end());
  for (T& v : out) v = v > T(0) ? v : T(0);
  detail::Node<T>* in_node = raw(input);
  auto backward = [in_node](detail::Node<T>& self) {
    T* gx = grad_target(in_node);
    if (!gx) return;
    for (std::size_t k = 0; k < self.grad.size(); ++k) {
      if (in_node->data[k] > T(0)) gx[k] += self.grad[k];
    }
  };
  return make_result<T>("relu", input.shape(), std::move(out), {&input}, backward);
}

template <std::floating_point T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  static constexpr const char* op = "softmax";
  require_defined(op, logits.defined(), "logits");
  if (logits.rank() != 1 && logits.rank() != 2) {
    contract(op, "logits rank is " + std::to_string(logits.rank()) + ", expected 1 or 2");
  }
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.numel() / k;
  const T* z = logits.values().data();
  std::vector<T> out(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* zr = z + r * k;
    const T mx = *std::max_element(zr, zr + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(zr[j] - mx));
    for (std::size_t j = 0; j < k; ++j)
      out[r * k + j] = static_cast<T>(std::exp(static_cast<double>(zr[j] - mx)) / total);
  }
  detail::Node<T>* in_node = raw(logits);
  auto backward = [rows, k, in_node](detail::Node<T>& self) {
    T* gz = grad_target(in_node);
    if (!gz) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* p = self.data.data() + r * k;
      const T* g = self.grad.data() + r * k;
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += static_cast<double>(g[j]) * p[j];
      for (std::size_t j = 0; j < k; ++j) gz[r * k + j] += static_cast<T>(p[j] * (g[j] - dot));
    }
  };
  BasicTensor<T> result = make_result<T>(op, logits.shape(), std::move(out), {&logits}, backward);
  result.node()->softmax_logits = logits.node();
  return result;
}

template <std::floating_point T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, std::span<const std::size_t> labels) {
  static constexpr const char* op = "cross_entropy";
  require_defined(op, probs.defined(), "probs");
  if (probs.rank() != 1 && probs.rank() != 2) {
    contract(op, "probs rank is " + std::to_string(probs.rank()) + ", expected 1 or 2");
  }
  const std::size_t k = probs.shape().back();
  const std::size_t rows = probs.numel() / k;
  if (labels.size() != rows) contract(op, dim_message("label count", rows, labels.size()));
  for (std::size_t label : labels) {
    if (label >= k) {
      contract(op, "label " + std::to_string(label) + " out of range [0, " + std::to_string(k) + ")");
    }
  }
  std::vector<std::size_t> y(labels.begin(), labels.end());
  const auto& logits_node = probs.node()->softmax_logits;
  const double inv_rows = 1.0 / static_cast<double>(rows);

  if (logits_node) {
    const BasicTensor<T> logits = BasicTensor<T>::from_node(logits_node);
    const T* z = logits_node->data.data();
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* zr = z + r * k;
      const double mx = *std::max_element(zr, zr + k);
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) total += std::exp(zr[j] - mx);
      loss += mx + std::log(total) - zr[y[r]];
    }
    auto probs_node = probs.node();
    auto backward = [rows, k, inv_rows, y = std::move(y), probs_node,
                     in_node = logits_node.get()](detail::Node<T>& self) {
      T* gz = grad_target(in_node);
      if (!gz) return;
      const double g = self.grad[0] * inv_rows;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < k; ++j) {
          const double target = j == y[r] ? 1.0 : 0.0;
          gz[r * k + j] += static_cast<T>(g * (probs_node->data[r * k + j] - target));
        }
    };
    return make_result<T>(op, Shape{1}, {static_cast<T>(loss * inv_rows)}, {&logits}, backward);
  }

  const T* p = probs.values().data();
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) loss -= std::log(static_cast<double>(p[r * k + y[r]]));
  detail::Node<T>* in_node = raw(probs);
  auto backward = [k, inv_rows, y = std::move(y), in_node](detail::Node<T>& self) {
    T* gp = grad_target(in_node);
    if (!gp) return;
    for (std::size_t r = 0; r < y.size(); ++r) {
      const std::size_t idx = r * k + y[r];
      gp[idx] -= static_cast<T>(self.grad[0] * inv_rows / in_node->data[idx]);
    }
  };
  return make_result<T>(op, Shape{1}, {static_cast<T>(loss * inv_rows)}, {&probs}, backward);
}

namespace {

// Rows and row width of a feature tensor ([D] or [N, D]).
template <typename T>
std::pair<std::size_t, std::size_t> feature_dims(const char* op, const BasicTensor<T>& a,
                                                 const BasicTensor<T>& b) {
  require_defined(op, a.defined(), "first operand");
  require_defined(op, b.defined(), "second operand");
  if (a.rank() != b.rank() || (a.rank() != 1 && a.rank() != 2)) {
    contract(op, "operands must both be rank 1 or both rank 2, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  if (a.rank() == 2 && a.dim(0) != b.dim(0)) {
    contract(op, dim_message("second operand batch size", a.dim(0), b.dim(0)));
  }
  if (a.shape().back() != b.shape().back()) {
    contract(op, dim_message("second operand feature dimension", a.shape().back(), b.shape().back()));
  }
  return {a.rank() == 2 ? a.dim(0) : 1, a.shape().back()};
}

}  // namespace

template <std::floating_point T>
BasicTensor<T> concat_features(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  static constexpr const char* op = "concat_features";
  const auto [n, dd] = feature_dims(op, a, b);
  std::vector<T> out(n * 2 * dd);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.values().data() + r * dd, dd, out.data() + r * 2 * dd);
    std::copy_n(b.values().data() + r * dd, dd, out.data() + r * 2 * dd + dd);
  }
  detail::Node<T>* a_node = raw(a);
  detail::Node<T>* b_node = raw(b);
  auto backward = [n, dd, a_node, b_node](detail::Node<T>& self) {
    T* ga = grad_target(a_node);
    T* gb = grad_target(b_node);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < dd; ++j) {
        if (ga) ga[r * dd + j] += self.grad[r * 2 * dd + j];
        if (gb) gb[r * dd + j] += self.grad[r * 2 * dd + dd + j];
      }
  };
  Shape shape = a.rank() == 2 ? Shape{n, 2 * dd} : Shape{2 * dd};
  return make_result<T>(op, std::move(shape), std::move(out), {&a, &b}, backward);
}

template <std::floating_point T>
BasicTensor<T> kronecker_features(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  static constexpr const char* op = "kronecker_features";
  const auto [n, dd] = feature_dims(op, a, b);
  const T* av = a.values().data();
  const T* bv = b.values().data();
  std::vector<T> out(n * dd * dd);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < dd; ++i)
      for (std::size_t j = 0; j < dd; ++j)
        out[(r * dd + i) * dd + j] = av[r * dd + i] * bv[r * dd + j];
  detail::Node<T>* a_node = raw(a);
  detail::Node<T>* b_node = raw(b);
  auto backward = [n, dd, a_node, b_node](detail::Node<T>& self) {
    T* ga = grad_target(a_node);
    T* gb = grad_target(b_node);
    const T* av = a_node->data.data();
    const T* bv = b_node->data.data();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < dd; ++i) {
        const T* g = self.grad.data() + (r * dd + i) * dd;
        if (ga) {
          T acc = 0;
          for (std::size_t j = 0; j < dd; ++j) acc += g[j] * bv[r * dd + j];
          ga[r * dd + i] += acc;
        }
        if (gb) {
          const T ai = av[r * dd + i];
          for (std::size_t j = 0; j < dd; ++j) gb[r * dd + j] += g[j] * ai;
        }
      }
  };
  Shape shape = a.rank() == 2 ? Shape{n, dd * dd} : Shape{dd * dd};
  return make_result<T>(op, std::move(shape), std::move(out), {&a, &b}, backward);
}

namespace {

template <typename T>
BasicTensor<T> copy_with_shape(const char* op, const BasicTensor<T>& input, Shape shape) {
  std::vector<T> out(input.values().begin(), input.values().end());
  detail::Node<T>* in_node = raw(input);
  auto backward = [in_node](detail::Node<T>& self) {
    T* gx = grad_target(in_node);
    if (!gx) return;
    for (std::size_t k = 0; k < self.grad.size(); ++k) gx[k] += self.grad[k];
  };
  return make_result<T>(op, std::move(shape), std::move(out), {&input}, backward);
}

}  // namespace

template <std::floating_point T>
BasicTensor<T> flatten(const BasicTensor<T>& input) {
  require_defined("flatten", input.defined(), "input");
  if (input.rank() < 2) contract("flatten", "input rank must be at least 2");
  return copy_with_shape("flatten", input, Shape{input.dim(0), input.numel() / input.dim(0)});
}

template <std::floating_point T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape) {
  require_defined("reshape", input.defined(), "input");
  if (shape_numel(shape) != input.numel()) {
    contract("reshape", "cannot view " + shape_str(input.shape()) + " as " + shape_str(shape));
  }
  return copy_with_shape("reshape", input, std::move(shape));
}

template <std::floating_point T>
BasicTensor<T> stack(std::span<const BasicTensor<T>> items) {
  static constexpr const char* op = "stack";
  if (items.empty()) contract(op, "nothing to stack");
  const Shape& first = items[0].shape();
  const std::size_t each = items[0].numel();
  std::vector<T> out;
  out.reserve(each * items.size());
  std::vector<const BasicTensor<T>*> inputs;
  std::vector<detail::Node<T>*> nodes;
  for (const BasicTensor<T>& item : items) {
    if (item.shape() != first) {
      contract(op, "item shape " + shape_str(item.shape()) + " differs from " + shape_str(first));
    }
    out.insert(out.end(), item.values().begin(), item.values().end());
    inputs.push_back(&item);
    nodes.push_back(raw(item));
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), first.begin(), first.end());
  auto backward = [each, nodes = std::move(nodes)](detail::Node<T>& self) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      T* gx = grad_target(nodes[i]);
      if (!gx) continue;
      for (std::size_t k = 0; k < each; ++k) gx[k] += self.grad[i * each + k];
    }
  };
  return make_result<T>(op, std::move(shape), std::move(out), std::move(inputs), backward);
}

template <std::floating_point T>
BasicTensor<T> concat_batch(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  static constexpr const char* op = "concat_batch";
  require_defined(op, a.defined(), "first operand");
  require_defined(op, b.defined(), "second operand");
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    contract(op, "trailing shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  const std::size_t na = a.numel();
  detail::Node<T>* a_node = raw(a);
  detail::Node<T>* b_node = raw(b);
  auto backward = [na, a_node, b_node](detail::Node<T>& self) {
    T* ga = grad_target(a_node);
    T* gb = grad_target(b_node);
    for (std::size_t k = 0; k < self.grad.size(); ++k) {
      if (k < na) {
        if (ga) ga[k] += self.grad[k];
      } else if (gb) {
        gb[k - na] += self.grad[k];
      }
    }
  };
  return make_result<T>(op, std::move(shape), std::move(out), {&a, &b}, backward);
}

template <std::floating_point T>
BasicTensor<T> slice_batch(const BasicTensor<T>& input, std::size_t begin, std::size_t end) {
  static constexpr const char* op = "slice_batch";
  require_defined(op, input.defined(), "input");
  if (input.rank() < 1 || begin >= end || end > input.dim(0)) {
    contract(op, "rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + shape_str(input.shape()));
  }
  const std::size_t row = input.numel() / input.dim(0);
  std::vector<T> out(input.values().begin() + begin * row, input.values().begin() + end * row);
  Shape shape = input.shape();
  shape[0] = end - begin;
  detail::Node<T>* in_node = raw(input);
  auto backward = [offset = begin * row, in_node](detail::Node<T>& self) {
    T* gx = grad_target(in_node);
    if (!gx) return;
    for (std::size_t k = 0; k < self.grad.size(); ++k) gx[offset + k] += self.grad[k];
  };
  return make_result<T>(op, std::move(shape), std::move(out), {&input}, backward);
}

template <std::floating_point T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
  require_defined("sum", input.defined(), "input");
  double total = 0.0;
  for (T v : input.values()) total += v;
  detail::Node<T>* in_node = raw(input);
  auto backward = [in_node](detail::Node<T>& self) {
    T* gx = grad_target(in_node);
    if (!gx) return;
    for (std::size_t k = 0; k < in_node->data.size(); ++k) gx[k] += self.grad[0];
  };
  return make_result<T>("sum", Shape{1}, {static_cast<T>(total)}, {&input}, backward);
}

template <std::floating_point T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_defined("mul", a.defined(), "first operand");
  require_defined("mul", b.defined(), "second operand");
  if (a.shape() != b.shape()) {
    contract("mul", "shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(a.numel());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] * b[k];
  detail::Node<T>* a_node = raw(a);
  detail::Node<T>* b_node = raw(b);
  auto backward = [a_node, b_node](detail::Node<T>& self) {
    T* ga = grad_target(a_node);
    T* gb = grad_target(b_node);
    for (std::size_t k = 0; k < self.grad.size(); ++k) {
      if (ga) ga[k] += self.grad[k] * b_node->data[k];
      if (gb) gb[k] += self.grad[k] * a_node->data[k];
    }
  };
  return make_result<T>("mul", a.shape(), std::move(out), {&a, &b}, backward);
}

template <std::floating_point T>
BasicTensor<T> square(const BasicTensor<T>& input) {
  return mul(input, input);
}

template <std::floating_point T>
BasicTensor<T> scale(const BasicTensor<T>& input, T factor) {
  require_defined("scale", input.defined(), "input");
  std::vector<T> out(input.values().begin(), input.values().end());
  for (T& v : out) v *= factor;
  detail::Node<T>* in_node = raw(input);
  auto backward = [factor, in_node](detail::Node<T>& self) {
    T* gx = grad_target(in_node);
    if (!gx) return;
    for (std::size_t k = 0; k < self.grad.size(); ++k) gx[k] += factor * self.grad[k];
  };
  return make_result<T>("scale", input.shape(), std::move(out), {&input}, backward);
}

#define FRAGNET_INSTANTIATE_OPS(T)                                                            \
  template struct BatchNormState<T>;                                                          \
  template BasicTensor<T> conv3x3(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                  const BasicTensor<T>&);                                     \
  template BasicTensor<T> maxpool2(const BasicTensor<T>&);                                    \
  template BasicTensor<T> upsample2(const BasicTensor<T>&);                                   \
  template BasicTensor<T> batchnorm(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                    const BasicTensor<T>&, BatchNormState<T>&, Mode);         \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                const BasicTensor<T>&);                                       \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                        \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                     \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const std::size_t>); \
  template BasicTensor<T> concat_features(const BasicTensor<T>&, const BasicTensor<T>&);      \
  template BasicTensor<T> kronecker_features(const BasicTensor<T>&, const BasicTensor<T>&);   \
  template BasicTensor<T> flatten(const BasicTensor<T>&);                                     \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                              \
  template BasicTensor<T> stack(std::span<const BasicTensor<T>>);                             \
  template BasicTensor<T> concat_batch(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> slice_batch(const BasicTensor<T>&, std::size_t, std::size_t);       \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                         \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template BasicTensor<T> square(const BasicTensor<T>&);                                      \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);

FRAGNET_INSTANTIATE_OPS(float)
FRAGNET_INSTANTIATE_OPS(double)

#undef FRAGNET_INSTANTIATE_OPS

}  // namespace fragnet
