#include "tergan/kernels.hpp"

#include <cstddef>
#include <string>

namespace tergan::kernels {
namespace {

using Index = std::ptrdiff_t;

void require(bool ok, const char* kernel, const std::string& what) {
  if (!ok) throw ValidationError(std::string(kernel) + ": " + what);
}

template <class T>
void check_conv(const BasicTensor<T>& x, const BasicTensor<T>& w, const char* name) {
  require(x.rank() == 4, name, "input must be NHWC, got " + shape_string(x.shape()));
  require(w.rank() == 4 && w.dim(0) == 3 && w.dim(1) == 3 && w.dim(2) == x.dim(3), name,
          "weight " + shape_string(w.shape()) + " incompatible with input " + shape_string(x.shape()));
}

}  // namespace

template <class T>
BasicTensor<T> conv3x3_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  check_conv(x, w, "conv3x3_forward");
  const Index n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), co = w.dim(3);
  require(b.size() == static_cast<std::size_t>(co), "conv3x3_forward", "bias size mismatch");
  BasicTensor<T> y({x.dim(0), x.dim(1), x.dim(2), w.dim(3)});
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  const T* bp = b.ptr();
  T* yp = y.ptr();

#pragma omp parallel for schedule(static)
  for (Index row = 0; row < n * h; ++row) {
    const Index img = row / h, yy = row % h;
    for (Index xx = 0; xx < wd; ++xx) {
      T* out = yp + ((img * h + yy) * wd + xx) * co;
      for (Index o = 0; o < co; ++o) out[o] = bp[o];
      for (Index ky = 0; ky < 3; ++ky) {
        const Index sy = yy + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (Index kx = 0; kx < 3; ++kx) {
          const Index sx = xx + kx - 1;
          if (sx < 0 || sx >= wd) continue;
          const T* in = xp + ((img * h + sy) * wd + sx) * ci;
          const T* wk = wp + (ky * 3 + kx) * ci * co;
          for (Index c = 0; c < ci; ++c) {
            const T a = in[c];
            const T* wrow = wk + c * co;
            for (Index o = 0; o < co; ++o) out[o] += a * wrow[o];
          }
        }
      }
    }
  }
  return y;
}

template <class T>
BasicTensor<T> conv3x3_backward_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& w) {
  require(grad_out.rank() == 4 && w.rank() == 4 && w.dim(3) == grad_out.dim(3), "conv3x3_backward_input",
          "shape mismatch " + shape_string(grad_out.shape()) + " vs " + shape_string(w.shape()));
  const Index n = grad_out.dim(0), h = grad_out.dim(1), wd = grad_out.dim(2), co = grad_out.dim(3),
              ci = w.dim(2);

  // Transposed weights [3,3,Co,Ci] so the inner loop runs over contiguous Ci.
  std::vector<T> wt(w.size());
  for (Index k = 0; k < 9; ++k)
    for (Index c = 0; c < ci; ++c)
      for (Index o = 0; o < co; ++o) wt[(k * co + o) * ci + c] = w[(k * ci + c) * co + o];

  BasicTensor<T> gx({grad_out.dim(0), grad_out.dim(1), grad_out.dim(2), w.dim(2)});
  const T* gp = grad_out.ptr();
  T* gxp = gx.ptr();

#pragma omp parallel for schedule(static)
  for (Index row = 0; row < n * h; ++row) {
    const Index img = row / h, yy = row % h;
    for (Index xx = 0; xx < wd; ++xx) {
      T* out = gxp + ((img * h + yy) * wd + xx) * ci;
      for (Index ky = 0; ky < 3; ++ky) {
        const Index oy = yy - ky + 1;
        if (oy < 0 || oy >= h) continue;
        for (Index kx = 0; kx < 3; ++kx) {
          const Index ox = xx - kx + 1;
          if (ox < 0 || ox >= wd) continue;
          const T* g = gp + ((img * h + oy) * wd + ox) * co;
          const T* wk = wt.data() + (ky * 3 + kx) * co * ci;
          for (Index o = 0; o < co; ++o) {
            const T a = g[o];
            const T* wrow = wk + o * ci;
            for (Index c = 0; c < ci; ++c) out[c] += a * wrow[c];
          }
        }
      }
    }
  }
  return gx;
}

template <class T>
void conv3x3_backward_params(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, BasicTensor<T>& gw,
                             BasicTensor<T>& gb) {
  check_conv(x, gw, "conv3x3_backward_params");
  require(grad_out.rank() == 4 && grad_out.dim(3) == gw.dim(3) && grad_out.dim(0) == x.dim(0),
          "conv3x3_backward_params", "gradient shape mismatch");
  const Index n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), co = gw.dim(3);
  const T* xp = x.ptr();
  const T* gp = grad_out.ptr();
  T* gwp = gw.ptr();

  // One thread owns one (ky, kx, ci) row of the weight gradient.
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < 9 * ci; ++r) {
    const Index k = r / ci, c = r % ci, ky = k / 3, kx = k % 3;
    T* acc = gwp + r * co;
    for (Index img = 0; img < n; ++img) {
      for (Index yy = 0; yy < h; ++yy) {
        const Index sy = yy + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (Index xx = 0; xx < wd; ++xx) {
          const Index sx = xx + kx - 1;
          if (sx < 0 || sx >= wd) continue;
          const T a = xp[((img * h + sy) * wd + sx) * ci + c];
          const T* g = gp + ((img * h + yy) * wd + xx) * co;
          for (Index o = 0; o < co; ++o) acc[o] += a * g[o];
        }
      }
    }
  }

  T* gbp = gb.ptr();
  const Index pixels = n * h * wd;
  for (Index p = 0; p < pixels; ++p) {
    const T* g = gp + p * co;
    for (Index o = 0; o < co; ++o) gbp[o] += g[o];
  }
}

template <class T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  require(x.rank() == 2 && w.rank() == 2 && w.dim(0) == x.dim(1) && b.size() == w.dim(1), "linear_forward",
          "input " + shape_string(x.shape()) + " incompatible with weight " + shape_string(w.shape()));
  const Index n = x.dim(0), in = x.dim(1), out = w.dim(1);
  BasicTensor<T> y({x.dim(0), w.dim(1)});
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  T* yp = y.ptr();

#pragma omp parallel for schedule(static)
  for (Index r = 0; r < n; ++r) {
    T* yr = yp + r * out;
    for (Index o = 0; o < out; ++o) yr[o] = b[o];
    const T* xr = xp + r * in;
    for (Index i = 0; i < in; ++i) {
      const T a = xr[i];
      const T* wr = wp + i * out;
      for (Index o = 0; o < out; ++o) yr[o] += a * wr[o];
    }
  }
  return y;
}

template <class T>
BasicTensor<T> linear_backward_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& w) {
  require(grad_out.rank() == 2 && w.rank() == 2 && grad_out.dim(1) == w.dim(1), "linear_backward_input",
          "shape mismatch");
  const Index n = grad_out.dim(0), in = w.dim(0), out = w.dim(1);
  BasicTensor<T> gx({grad_out.dim(0), w.dim(0)});
  const T* gp = grad_out.ptr();
  const T* wp = w.ptr();
  T* gxp = gx.ptr();

#pragma omp parallel for schedule(static)
  for (Index r = 0; r < n; ++r) {
    const T* g = gp + r * out;
    for (Index i = 0; i < in; ++i) {
      const T* wr = wp + i * out;
      T s{0};
      for (Index o = 0; o < out; ++o) s += g[o] * wr[o];
      gxp[r * in + i] = s;
    }
  }
  return gx;
}

template <class T>
void linear_backward_params(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, BasicTensor<T>& gw,
                            BasicTensor<T>& gb) {
  require(x.rank() == 2 && grad_out.rank() == 2 && gw.dim(0) == x.dim(1) && gw.dim(1) == grad_out.dim(1),
          "linear_backward_params", "shape mismatch");
  const Index n = x.dim(0), in = x.dim(1), out = grad_out.dim(1);
  const T* xp = x.ptr();
  const T* gp = grad_out.ptr();
  T* gwp = gw.ptr();

#pragma omp parallel for schedule(static)
  for (Index i = 0; i < in; ++i) {
    T* acc = gwp + i * out;
    for (Index r = 0; r < n; ++r) {
      const T a = xp[r * in + i];
      const T* g = gp + r * out;
      for (Index o = 0; o < out; ++o) acc[o] += a * g[o];
    }
  }
  for (Index r = 0; r < n; ++r)
    for (Index o = 0; o < out; ++o) gb[o] += gp[r * out + o];
}

template <class T>
BasicTensor<T> avgpool2_forward(const BasicTensor<T>& x) {
  require(x.rank() == 4 && x.dim(1) % 2 == 0 && x.dim(2) % 2 == 0, "avgpool2_forward",
          "needs NHWC with even spatial dims, got " + shape_string(x.shape()));
  const Index n = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2, c = x.dim(3), iw = x.dim(2);
  BasicTensor<T> y({x.dim(0), x.dim(1) / 2, x.dim(2) / 2, x.dim(3)});
  const T* xp = x.ptr();
  T* yp = y.ptr();

#pragma omp parallel for schedule(static)
  for (Index row = 0; row < n * h; ++row) {
    const Index img = row / h, yy = row % h;
    for (Index xx = 0; xx < w; ++xx) {
      const T* a = xp + ((img * 2 * h + 2 * yy) * iw + 2 * xx) * c;
      const T* b = a + c;
      const T* d = a + iw * c;
      const T* e = d + c;
      T* out = yp + ((img * h + yy) * w + xx) * c;
      for (Index k = 0; k < c; ++k) out[k] = T(0.25) * (a[k] + b[k] + d[k] + e[k]);
    }
  }
  return y;
}

template <class T>
BasicTensor<T> avgpool2_backward(const BasicTensor<T>& grad_out) {
  require(grad_out.rank() == 4, "avgpool2_backward", "needs NHWC");
  const Index n = grad_out.dim(0), h = grad_out.dim(1), w = grad_out.dim(2), c = grad_out.dim(3);
  const Index ow = 2 * w;
  BasicTensor<T> gx({grad_out.dim(0), 2 * grad_out.dim(1), 2 * grad_out.dim(2), grad_out.dim(3)});
  const T* gp = grad_out.ptr();
  T* gxp = gx.ptr();

#pragma omp parallel for schedule(static)
  for (Index row = 0; row < n * 2 * h; ++row) {
    const Index img = row / (2 * h), yy = row % (2 * h);
    for (Index xx = 0; xx < ow; ++xx) {
      const T* g = gp + ((img * h + yy / 2) * w + xx / 2) * c;
      T* out = gxp + ((img * 2 * h + yy) * ow + xx) * c;
      for (Index k = 0; k < c; ++k) out[k] = T(0.25) * g[k];
    }
  }
  return gx;
}

template <class T>
BasicTensor<T> upsample2_forward(const BasicTensor<T>& x) {
  require(x.rank() == 4, "upsample2_forward", "needs NHWC");
  const Index n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const Index ow = 2 * w;
  BasicTensor<T> y({x.dim(0), 2 * x.dim(1), 2 * x.dim(2), x.dim(3)});
  const T* xp = x.ptr();
  T* yp = y.ptr();

#pragma omp parallel for schedule(static)
  for (Index row = 0; row < n * 2 * h; ++row) {
    const Index img = row / (2 * h), yy = row % (2 * h);
    for (Index xx = 0; xx < ow; ++xx) {
      const T* s = xp + ((img * h + yy / 2) * w + xx / 2) * c;
      T* out = yp + ((img * 2 * h + yy) * ow + xx) * c;
      for (Index k = 0; k < c; ++k) out[k] = s[k];
    }
  }
  return y;
}

template <class T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& grad_out) {
  require(grad_out.rank() == 4 && grad_out.dim(1) % 2 == 0 && grad_out.dim(2) % 2 == 0, "upsample2_backward",
          "needs NHWC with even spatial dims");
  const Index n = grad_out.dim(0), h = grad_out.dim(1) / 2, w = grad_out.dim(2) / 2, c = grad_out.dim(3);
  const Index iw = 2 * w;
  BasicTensor<T> gx({grad_out.dim(0), grad_out.dim(1) / 2, grad_out.dim(2) / 2, grad_out.dim(3)});
  const T* gp = grad_out.ptr();
  T* gxp = gx.ptr();

#pragma omp parallel for schedule(static)
  for (Index row = 0; row < n * h; ++row) {
    const Index img = row / h, yy = row % h;
    for (Index xx = 0; xx < w; ++xx) {
      const T* a = gp + ((img * 2 * h + 2 * yy) * iw + 2 * xx) * c;
      const T* b = a + c;
      const T* d = a + iw * c;
      const T* e = d + c;
      T* out = gxp + ((img * h + yy) * w + xx) * c;
      for (Index k = 0; k < c; ++k) out[k] = a[k] + b[k] + d[k] + e[k];
    }
  }
  return gx;
}

template <class T>
void channel_moments(const BasicTensor<T>& x, std::vector<T>& mean, std::vector<T>& var) {
  require(x.rank() >= 2, "channel_moments", "needs at least 2 dims");
  const Index c = x.shape().back();
  const Index rows = x.size() / c;
  mean.assign(c, T{0});
  var.assign(c, T{0});
  const T* xp = x.ptr();

#pragma omp parallel for schedule(static)
  for (Index k = 0; k < c; ++k) {
    double s = 0.0;
    for (Index r = 0; r < rows; ++r) s += xp[r * c + k];
    const double m = s / static_cast<double>(rows);
    double q = 0.0;
    for (Index r = 0; r < rows; ++r) {
      const double d = xp[r * c + k] - m;
      q += d * d;
    }
    mean[k] = static_cast<T>(m);
    var[k] = static_cast<T>(q / static_cast<double>(rows));
  }
}

#define TERGAN_INSTANTIATE_KERNELS(T)                                                                      \
  template BasicTensor<T> conv3x3_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> conv3x3_backward_input(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template void conv3x3_backward_params(const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>&,       \
                                        BasicTensor<T>&);                                                    \
  template BasicTensor<T> linear_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> linear_backward_input(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template void linear_backward_params(const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>&,        \
                                       BasicTensor<T>&);                                                     \
  template BasicTensor<T> avgpool2_forward(const BasicTensor<T>&);                                            \
  template BasicTensor<T> avgpool2_backward(const BasicTensor<T>&);                                           \
  template BasicTensor<T> upsample2_forward(const BasicTensor<T>&);                                           \
  template BasicTensor<T> upsample2_backward(const BasicTensor<T>&);                                          \
  template void channel_moments(const BasicTensor<T>&, std::vector<T>&, std::vector<T>&);

TERGAN_INSTANTIATE_KERNELS(float)
TERGAN_INSTANTIATE_KERNELS(double)

}  // namespace tergan::kernels
