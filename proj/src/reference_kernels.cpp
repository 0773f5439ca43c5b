#include "tergan/reference_kernels.hpp"

namespace tergan::kernels::reference {

template <class T>
BasicTensor<T> conv3x3_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  const long n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), co = w.dim(3);
  BasicTensor<T> y({x.dim(0), x.dim(1), x.dim(2), w.dim(3)});
  for (long i = 0; i < n; ++i)
    for (long yy = 0; yy < h; ++yy)
      for (long xx = 0; xx < wd; ++xx)
        for (long o = 0; o < co; ++o) {
          T s = b[o];
          for (long ky = 0; ky < 3; ++ky)
            for (long kx = 0; kx < 3; ++kx)
              for (long c = 0; c < ci; ++c) {
                const long sy = yy + ky - 1, sx = xx + kx - 1;
                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                s += x[((i * h + sy) * wd + sx) * ci + c] * w[((ky * 3 + kx) * ci + c) * co + o];
              }
          y[((i * h + yy) * wd + xx) * co + o] = s;
        }
  return y;
}

template <class T>
BasicTensor<T> conv3x3_backward_input(const BasicTensor<T>& g, const BasicTensor<T>& w) {
  const long n = g.dim(0), h = g.dim(1), wd = g.dim(2), co = g.dim(3), ci = w.dim(2);
  BasicTensor<T> gx({g.dim(0), g.dim(1), g.dim(2), w.dim(2)});
  // Scatter form: every output gradient pushes into the inputs it read.
  for (long i = 0; i < n; ++i)
    for (long yy = 0; yy < h; ++yy)
      for (long xx = 0; xx < wd; ++xx)
        for (long o = 0; o < co; ++o)
          for (long ky = 0; ky < 3; ++ky)
            for (long kx = 0; kx < 3; ++kx)
              for (long c = 0; c < ci; ++c) {
                const long sy = yy + ky - 1, sx = xx + kx - 1;
                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                gx[((i * h + sy) * wd + sx) * ci + c] +=
                    g[((i * h + yy) * wd + xx) * co + o] * w[((ky * 3 + kx) * ci + c) * co + o];
              }
  return gx;
}

template <class T>
void conv3x3_backward_params(const BasicTensor<T>& x, const BasicTensor<T>& g, BasicTensor<T>& gw,
                             BasicTensor<T>& gb) {
  const long n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), co = g.dim(3);
  for (long i = 0; i < n; ++i)
    for (long yy = 0; yy < h; ++yy)
      for (long xx = 0; xx < wd; ++xx)
        for (long o = 0; o < co; ++o) {
          const T go = g[((i * h + yy) * wd + xx) * co + o];
          gb[o] += go;
          for (long ky = 0; ky < 3; ++ky)
            for (long kx = 0; kx < 3; ++kx)
              for (long c = 0; c < ci; ++c) {
                const long sy = yy + ky - 1, sx = xx + kx - 1;
                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                gw[((ky * 3 + kx) * ci + c) * co + o] += x[((i * h + sy) * wd + sx) * ci + c] * go;
              }
        }
}

template <class T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  const std::size_t n = x.dim(0), in = x.dim(1), out = w.dim(1);
  BasicTensor<T> y({n, out});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      T s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * w[i * out + o];
      y[r * out + o] = s;
    }
  return y;
}

template <class T>
BasicTensor<T> linear_backward_input(const BasicTensor<T>& g, const BasicTensor<T>& w) {
  const std::size_t n = g.dim(0), in = w.dim(0), out = w.dim(1);
  BasicTensor<T> gx({n, in});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t o = 0; o < out; ++o) gx[r * in + i] += g[r * out + o] * w[i * out + o];
  return gx;
}

template <class T>
void linear_backward_params(const BasicTensor<T>& x, const BasicTensor<T>& g, BasicTensor<T>& gw,
                            BasicTensor<T>& gb) {
  const std::size_t n = x.dim(0), in = x.dim(1), out = g.dim(1);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      gb[o] += g[r * out + o];
      for (std::size_t i = 0; i < in; ++i) gw[i * out + o] += x[r * in + i] * g[r * out + o];
    }
}

template <class T>
BasicTensor<T> avgpool2_forward(const BasicTensor<T>& x) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  BasicTensor<T> y({n, h / 2, w / 2, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t yy = 0; yy < h; ++yy)
      for (std::size_t xx = 0; xx < w; ++xx)
        for (std::size_t k = 0; k < c; ++k)
          y[((i * (h / 2) + yy / 2) * (w / 2) + xx / 2) * c + k] += T(0.25) * x[((i * h + yy) * w + xx) * c + k];
  return y;
}

template <class T>
BasicTensor<T> avgpool2_backward(const BasicTensor<T>& g) {
  const std::size_t n = g.dim(0), h = g.dim(1), w = g.dim(2), c = g.dim(3);
  BasicTensor<T> gx({n, 2 * h, 2 * w, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t yy = 0; yy < 2 * h; ++yy)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        for (std::size_t k = 0; k < c; ++k)
          gx[((i * 2 * h + yy) * 2 * w + xx) * c + k] = T(0.25) * g[((i * h + yy / 2) * w + xx / 2) * c + k];
  return gx;
}

template <class T>
BasicTensor<T> upsample2_forward(const BasicTensor<T>& x) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  BasicTensor<T> y({n, 2 * h, 2 * w, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t yy = 0; yy < 2 * h; ++yy)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        for (std::size_t k = 0; k < c; ++k)
          y[((i * 2 * h + yy) * 2 * w + xx) * c + k] = x[((i * h + yy / 2) * w + xx / 2) * c + k];
  return y;
}

template <class T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& g) {
  const std::size_t n = g.dim(0), h = g.dim(1), w = g.dim(2), c = g.dim(3);
  BasicTensor<T> gx({n, h / 2, w / 2, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t yy = 0; yy < h; ++yy)
      for (std::size_t xx = 0; xx < w; ++xx)
        for (std::size_t k = 0; k < c; ++k)
          gx[((i * (h / 2) + yy / 2) * (w / 2) + xx / 2) * c + k] += g[((i * h + yy) * w + xx) * c + k];
  return gx;
}

template <class T>
void channel_moments(const BasicTensor<T>& x, std::vector<T>& mean, std::vector<T>& var) {
  const std::size_t c = x.shape().back(), rows = x.size() / c;
  std::vector<long double> s(c, 0.0L), q(c, 0.0L);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < c; ++k) s[k] += x[r * c + k];
  mean.resize(c);
  var.resize(c);
  for (std::size_t k = 0; k < c; ++k) mean[k] = static_cast<T>(s[k] / rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < c; ++k) {
      const long double d = x[r * c + k] - s[k] / rows;
      q[k] += d * d;
    }
  for (std::size_t k = 0; k < c; ++k) var[k] = static_cast<T>(q[k] / rows);
}

#define TERGAN_INSTANTIATE_REFERENCE(T)                                                                    \
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

TERGAN_INSTANTIATE_REFERENCE(float)
TERGAN_INSTANTIATE_REFERENCE(double)

}  // namespace tergan::kernels::reference
